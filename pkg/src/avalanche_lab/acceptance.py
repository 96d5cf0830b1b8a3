"""The bundled verification suite behind the `verify` subcommand.

Each criterion is a deterministic Monte Carlo check at a pinned trial count,
seeded from (master seed, criterion id).  The emitted report is pure data:
no timings, worker counts, or paths, so reports from runs at different
parallelism levels are byte-identical.
"""

from __future__ import annotations

import json
from fractions import Fraction

import numpy as np

from . import __version__
from .coupling import CouplingInvariantError, estimate_g
from .graph import Cycle, LatticeZd, RegularTree
from .percolation import cluster_size_pmf_Z, extinction_prob
from .rng import stream_seed
from .stats import (
    CODE_DIED,
    CODE_RANGE_CAP,
    dominance_test,
    equivalence_test,
    estimate_survival,
    sample_avalanche,
    sample_branching,
    sample_coupled,
    sample_percolation,
    uniformity_test,
)

Z = LatticeZd(1)


def _crit(cid, name, passed, observed, target, tolerance=None, details=None):
    out = {
        "id": cid,
        "name": name,
        "passed": bool(passed),
        "observed": observed,
        "target": target,
    }
    if tolerance is not None:
        out["tolerance"] = tolerance
    if details:
        out["details"] = details
    return out


def criterion_g_x0(seed: int, jobs: int = 1) -> dict:
    """Both-neighbours-closed frequency on Z at p=0.5, x=0 vs (1-p)^2."""
    est = estimate_g(0.0, 0.5, 100_000, master_seed=stream_seed(seed, 1), jobs=jobs)
    return _crit(
        1,
        "g_closed_form_x0",
        abs(est.frequency - 0.25) <= 0.005,
        est.frequency,
        0.25,
        0.005,
        {"ci": [est.ci_low, est.ci_high], "trials": est.trials},
    )


def criterion_g_x02(seed: int, jobs: int = 1) -> dict:
    """Same at x=0.2 vs (1-p)^2/(1-x)^2 = 0.390625."""
    est = estimate_g(0.2, 0.5, 100_000, master_seed=stream_seed(seed, 2), jobs=jobs)
    return _crit(
        2,
        "g_closed_form_x02",
        abs(est.frequency - 0.390625) <= 0.006,
        est.frequency,
        0.390625,
        0.006,
        {"ci": [est.ci_low, est.ci_high], "trials": est.trials},
    )


def criterion_percolation_identity(seed: int, jobs: int = 1) -> dict:
    """Coupled cluster sizes match direct growth and the analytic law on Z."""
    p = 0.4
    trials = 100_000
    coupled = sample_coupled(
        Z, p, trials, range_cap=10_000, step_cap=1_000_000,
        master_seed=stream_seed(seed, 31), jobs=jobs,
    )
    direct = sample_percolation(
        Z, p, trials, range_cap=10_000, master_seed=stream_seed(seed, 32), jobs=jobs
    )
    resolved = coupled["perc_status"] == CODE_DIED
    chi = equivalence_test(
        coupled["cluster_size"][resolved], direct["cluster_size"], significance=0.01
    )
    sizes = direct["cluster_size"]
    pmf_dev = max(
        abs(float(np.mean(sizes == k)) - cluster_size_pmf_Z(p, k)) for k in range(1, 11)
    )
    passed = chi.passed and pmf_dev <= 0.005
    return _crit(
        3,
        "percolation_identity",
        passed,
        {"chi2": chi.statistic, "max_pmf_deviation": pmf_dev},
        {"chi2_below": chi.threshold, "pmf_within": 0.005},
        details={
            "trials": trials,
            "excluded_truncated": int(np.count_nonzero(~resolved)),
            "chi2_verdict": chi.verdict,
            "bins": chi.metadata["bins"],
        },
    )


def criteria_coupling_invariants(seed: int, jobs: int = 1) -> list[dict]:
    """Coupling bound and closure invariants over assertion-enabled runs.

    Any violation raises inside the runs, so a clean pass means zero
    violations across every step and every finalization.
    """
    configs = [
        (Z, 0.5, stream_seed(seed, 4)),
        (RegularTree(3), 0.3, stream_seed(seed, 5)),
    ]
    violations = {"bound": 0, "closure": 0}
    runs = 0
    err = None
    try:
        for graph, p, ms in configs:
            sample_coupled(
                graph, p, 10_000, range_cap=1_000, step_cap=100_000,
                master_seed=ms, jobs=jobs, assertions_enabled=True,
            )
            runs += 10_000
    except CouplingInvariantError as exc:  # pragma: no cover - signals a bug
        err = str(exc)
        if "finalized" in err:
            violations["closure"] += 1
        else:
            violations["bound"] += 1
    details = {"runs": runs, "graphs": ["zd:1@0.5", "tree:3@0.3"]}
    if err:
        details["error"] = err
    return [
        _crit(4, "bound_domination_invariant", violations["bound"] == 0,
              violations["bound"], 0, details=details),
        _crit(5, "termination_closure_invariant", violations["closure"] == 0,
              violations["closure"], 0, details=details),
    ]


def criterion_branching_oracle(seed: int, jobs: int = 1) -> dict:
    """Galton-Watson extinction: empirical and fixed-point values."""
    b = sample_branching(2, 0.6, 100_000, cap=100_000,
                         master_seed=stream_seed(seed, 6), jobs=jobs)
    freq = float(np.mean(~b["cap_hit"]))
    target = float(Fraction(4, 9))
    q = extinction_prob(2, 0.6)
    q_crit = extinction_prob(2, 0.5)
    passed = abs(freq - target) <= 0.01 and abs(q - target) <= 1e-9 and q_crit == 1.0
    return _crit(
        6,
        "branching_extinction",
        passed,
        {"empirical": freq, "fixed_point": q, "critical": q_crit},
        {"empirical": target, "fixed_point": target, "critical": 1.0},
        {"empirical": 0.01, "fixed_point": 1e-9, "critical": 0.0},
        {"trials": 100_000, "cap": 100_000},
    )


def criterion_dominance(seed: int, jobs: int = 1) -> dict:
    """Avalanche range stochastically dominates percolation range."""
    results = {}
    passed = True
    for tag, graph, p, cap in (
        ("zd:1", Z, 0.4, 10_000),
        ("tree:5", RegularTree(5), 0.22, 1_000),
    ):
        av = sample_avalanche(
            graph, p, 100_000, range_cap=cap, step_cap=1_000_000,
            master_seed=stream_seed(seed, 71), jobs=jobs,
        )
        pc = sample_percolation(
            graph, p, 100_000, range_cap=cap,
            master_seed=stream_seed(seed, 72), jobs=jobs, fast=False,
        )
        a = np.minimum(av["range"], cap)
        b = np.minimum(pc["range"], cap)
        direct = dominance_test(a, b, significance=0.01, cap_a=cap, cap_b=cap)
        swapped = dominance_test(b, a, significance=0.01, cap_a=cap, cap_b=cap)
        results[tag] = {
            "direct": direct.statistic,
            "swapped": swapped.statistic,
            "threshold": direct.threshold,
            "direct_verdict": direct.verdict,
            "swapped_verdict": swapped.verdict,
        }
        passed = passed and direct.passed and not swapped.passed
    return _crit(
        7,
        "stochastic_dominance",
        passed,
        results,
        "direct pass, swapped fail on both graphs",
        details={"samples": 100_000, "significance": 0.01},
    )


def criterion_tree_bounds(seed: int, jobs: int = 1) -> dict:
    """Survival on the degree-5 tree: none below the lower bound, plenty
    above the percolation threshold."""
    low = estimate_survival(
        "avalanche", RegularTree(5), 0.15, 10_000, range_cap=10_000,
        step_cap=1_000_000, master_seed=stream_seed(seed, 81), jobs=jobs,
    )
    high = estimate_survival(
        "avalanche", RegularTree(5), 0.30, 10_000, range_cap=10_000,
        step_cap=1_000_000, master_seed=stream_seed(seed, 82), jobs=jobs,
    )
    frac_high = high.survived / high.trials
    passed = low.survived == 0 and frac_high >= 0.01
    return _crit(
        8,
        "tree_critical_bounds",
        passed,
        {"survived_at_0.15": low.survived, "survival_at_0.30": frac_high},
        {"survived_at_0.15": 0, "survival_at_0.30": ">= 0.01"},
        details={"trials": 10_000, "range_cap": 10_000,
                 "ci_high_at_0.15": low.ci_high},
    )


def criterion_engine_equivalence(seed: int, jobs: int = 1) -> dict:
    """Classic and forgetful engines induce the same range law."""
    g = Cycle(20)
    kw = dict(range_cap=25, step_cap=100_000, jobs=jobs)
    classic = sample_avalanche(g, 0.3, 100_000, engine="classic",
                               master_seed=stream_seed(seed, 91), **kw)
    forgetful = sample_avalanche(g, 0.3, 100_000, engine="forgetful",
                                 master_seed=stream_seed(seed, 92), **kw)
    chi = equivalence_test(classic["range"], forgetful["range"], significance=0.01)
    return _crit(
        9,
        "engine_equivalence",
        chi.passed,
        chi.statistic,
        chi.threshold,
        details={"graph": "cycle:20", "p": 0.3, "runs": 100_000,
                 "bins": chi.metadata["bins"],
                 "mean_range": [float(classic["range"].mean()),
                                float(forgetful["range"].mean())]},
    )


def criterion_uniform_reconstruction(seed: int, jobs: int = 1) -> dict:
    """Minimum-conditioned resampling recovers i.i.d. uniforms; skipping the
    resampling step does not."""
    bounds = (0.2, 0.3, 0.6)
    good = uniformity_test(100_000, bounds, rng=stream_seed(seed, 101),
                           significance=0.01, resample=True)
    control = uniformity_test(100_000, bounds, rng=stream_seed(seed, 102),
                              significance=0.01, resample=False)
    passed = good.passed and not control.passed
    return _crit(
        10,
        "uniform_reconstruction",
        passed,
        {"ks": good.statistic, "control_ks": control.statistic},
        {"ks_below": good.threshold, "control": "fail"},
        details={"bounds": list(bounds), "trials": 100_000,
                 "pairs_pass": all(pr["pass"] for pr in good.metadata["pairwise"])},
    )


def criterion_determinism(seed: int, jobs: int = 1) -> dict:
    """Worker count must not change a single sampled value."""
    del jobs  # this check pins its own worker counts
    ms = stream_seed(seed, 111)
    a = sample_coupled(Z, 0.4, 2_000, range_cap=1_000, step_cap=100_000,
                       master_seed=ms, jobs=1)
    b = sample_coupled(Z, 0.4, 2_000, range_cap=1_000, step_cap=100_000,
                       master_seed=ms, jobs=8)
    same = all(np.array_equal(a[k], b[k]) for k in
               ("av_range", "av_steps", "cluster_size", "perc_range"))
    return _crit(11, "determinism_across_jobs", same,
                 "identical" if same else "diverged", "identical",
                 details={"trials": 2_000, "jobs_compared": [1, 8]})


def run_all(seed: int, jobs: int = 1) -> dict:
    criteria = [
        criterion_g_x0(seed, jobs),
        criterion_g_x02(seed, jobs),
        criterion_percolation_identity(seed, jobs),
        *criteria_coupling_invariants(seed, jobs),
        criterion_branching_oracle(seed, jobs),
        criterion_dominance(seed, jobs),
        criterion_tree_bounds(seed, jobs),
        criterion_engine_equivalence(seed, jobs),
        criterion_uniform_reconstruction(seed, jobs),
        criterion_determinism(seed, jobs),
    ]
    return {
        "tool": "avalanche-lab",
        "version": __version__,
        "master_seed": seed,
        "criteria": criteria,
        "all_pass": all(c["passed"] for c in criteria),
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
