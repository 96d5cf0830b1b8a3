"""avalanche-lab: threshold avalanches, their site-percolation coupling, and
branching comparators on lazy transitive graphs, with a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .avalanche import (
    AvalancheOutcome,
    AvalancheState,
    StepEvent,
    init_avalanche,
    run_avalanche,
    run_classic_avalanche,
    run_classic_bs,
    step_classic,
    step_forgetful,
)
from .coupling import (
    CoupledState,
    CouplingInvariantError,
    GEstimate,
    coupled_step,
    estimate_g,
    finalize,
    init_coupled,
    run_coupled,
)
from .graph import Cycle, GraphKind, InvalidVertexError, LatticeZd, RegularTree, RootedTreeStar
from .percolation import (
    BranchingOutcome,
    PercOutcome,
    branching_total_progeny,
    cluster_size_pmf_Z,
    extinction_prob,
    grow_cluster,
)
from .stats import (
    SurvivalPoint,
    TestReport,
    dominance_test,
    equivalence_test,
    estimate_survival,
    sweep,
    uniformity_test,
    wilson_interval,
)

__all__ = [
    "AvalancheOutcome",
    "AvalancheState",
    "BranchingOutcome",
    "CoupledState",
    "CouplingInvariantError",
    "Cycle",
    "GEstimate",
    "GraphKind",
    "InvalidVertexError",
    "LatticeZd",
    "PercOutcome",
    "RegularTree",
    "RootedTreeStar",
    "StepEvent",
    "SurvivalPoint",
    "TestReport",
    "branching_total_progeny",
    "cluster_size_pmf_Z",
    "coupled_step",
    "dominance_test",
    "equivalence_test",
    "estimate_g",
    "estimate_survival",
    "extinction_prob",
    "finalize",
    "grow_cluster",
    "init_avalanche",
    "init_coupled",
    "run_avalanche",
    "run_classic_avalanche",
    "run_classic_bs",
    "run_coupled",
    "step_classic",
    "step_forgetful",
    "sweep",
    "uniformity_test",
    "wilson_interval",
]
