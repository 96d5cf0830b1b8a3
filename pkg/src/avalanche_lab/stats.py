"""Monte Carlo harness: batch samplers, survival estimation, and the
statistical tests that turn the theory's guarantees into checks.

Every trial in a batch owns random streams derived from (master seed, trial
index), so identical configurations produce identical results at any worker
count.  Aggregation is plain counting and concatenation in trial order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps

from ._batch import map_blocks
from .avalanche import (
    STATUS_DIED,
    STATUS_RANGE_CAP,
    STATUS_STEP_CAP,
    run_avalanche,
    run_classic_avalanche,
)
from .graph import Cycle, GraphKind, LatticeZd, RegularTree, RootedTreeStar
from .percolation import branching_total_progeny, grow_cluster, grow_cluster_tree_fast
from .rng import TrialStreams

# compact per-trial status codes used in sample arrays
CODE_DIED = 0
CODE_RANGE_CAP = 1
CODE_STEP_CAP = 2
STATUS_BY_CODE = (STATUS_DIED, STATUS_RANGE_CAP, STATUS_STEP_CAP)
_CODE_BY_STATUS = {s: i for i, s in enumerate(STATUS_BY_CODE)}
_CODE_BY_STATUS["closed_out"] = CODE_DIED


@dataclass
class SurvivalPoint:
    """Survival estimate at one threshold; survival means hitting the range cap."""

    p: float
    trials: int
    survived: int
    mean_range: float
    mean_steps: float
    ci_low: float
    ci_high: float


@dataclass
class TestReport:
    name: str
    statistic: float
    threshold: float
    verdict: str
    metadata: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "metadata": self.metadata,
        }


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must lie in [0, trials]")
    z = float(sps.norm.ppf(0.5 + confidence / 2.0))
    phat = successes / trials
    z2n = z * z / trials
    center = (phat + z2n / 2.0) / (1.0 + z2n)
    half = z * math.sqrt(phat * (1.0 - phat) / trials + z2n / (4.0 * trials)) / (1.0 + z2n)
    return max(0.0, center - half), min(1.0, center + half)


# -- batch samplers ----------------------------------------------------------


def _use_tree_kernel(graph: GraphKind) -> bool:
    if not isinstance(graph, RegularTree):
        return False
    try:
        from . import _treefast  # noqa: F401
    except ImportError:
        return False
    return True


def sample_avalanche(
    graph: GraphKind,
    p: float,
    trials: int,
    range_cap: int,
    step_cap: int,
    master_seed: int,
    engine: str = "classic",
    jobs: int = 1,
    trimmed: bool = False,
    seed_key: tuple = (),
) -> dict:
    """Status/range/steps arrays for a batch of avalanche trials."""
    if engine not in ("classic", "forgetful"):
        raise ValueError(f"unknown engine {engine!r}")
    kernel = engine == "classic" and not trimmed and _use_tree_kernel(graph)
    if kernel:
        from .avalanche import run_classic_tree

    def block(lo: int, hi: int):
        codes = np.empty(hi - lo, np.int8)
        ranges = np.empty(hi - lo, np.int64)
        steps = np.empty(hi - lo, np.int64)
        for j, i in enumerate(range(lo, hi)):
            streams = TrialStreams(master_seed, *seed_key, i)
            if kernel:
                out = run_classic_tree(graph, p, range_cap, step_cap, streams.classic_seed)
            elif engine == "classic":
                out = run_classic_avalanche(
                    graph, p, range_cap=range_cap, step_cap=step_cap, rng=streams.classic
                )
            else:
                out = run_avalanche(
                    graph,
                    p,
                    range_cap=range_cap,
                    step_cap=step_cap,
                    sampler=streams.sampler(),
                    trimmed=trimmed,
                )
            codes[j] = _CODE_BY_STATUS[out.status]
            ranges[j] = out.range
            steps[j] = out.steps
        return codes, ranges, steps

    blocks = map_blocks(trials, jobs, block)
    return {
        "status": np.concatenate([b[0] for b in blocks]),
        "range": np.concatenate([b[1] for b in blocks]),
        "steps": np.concatenate([b[2] for b in blocks]),
        "range_cap": range_cap,
        "step_cap": step_cap,
    }


def sample_percolation(
    graph: GraphKind,
    p: float,
    trials: int,
    range_cap: int,
    master_seed: int,
    jobs: int = 1,
    fast: Optional[bool] = None,
    seed_key: tuple = (),
) -> dict:
    """Status/cluster-size/range arrays for a batch of cluster growths."""
    if fast is None:
        fast = isinstance(graph, (RegularTree, RootedTreeStar))

    def block(lo: int, hi: int):
        codes = np.empty(hi - lo, np.int8)
        sizes = np.empty(hi - lo, np.int64)
        ranges = np.empty(hi - lo, np.int64)
        closed = np.empty(hi - lo, bool)
        for j, i in enumerate(range(lo, hi)):
            streams = TrialStreams(master_seed, *seed_key, i)
            if fast:
                out = grow_cluster_tree_fast(graph, p, streams.gen, range_cap)
            else:
                out = grow_cluster(graph, p, streams.gen, range_cap)
            codes[j] = _CODE_BY_STATUS[out.status]
            sizes[j] = out.cluster_size
            ranges[j] = out.range
            closed[j] = out.origin_neighbors_closed
        return codes, sizes, ranges, closed

    blocks = map_blocks(trials, jobs, block)
    return {
        "status": np.concatenate([b[0] for b in blocks]),
        "cluster_size": np.concatenate([b[1] for b in blocks]),
        "range": np.concatenate([b[2] for b in blocks]),
        "origin_neighbors_closed": np.concatenate([b[3] for b in blocks]),
        "range_cap": range_cap,
    }


def sample_branching(
    n: int,
    p: float,
    trials: int,
    cap: int,
    master_seed: int,
    jobs: int = 1,
    seed_key: tuple = (),
) -> dict:
    def block(lo: int, hi: int):
        totals = np.empty(hi - lo, np.int64)
        gens = np.empty(hi - lo, np.int64)
        hits = np.empty(hi - lo, bool)
        for j, i in enumerate(range(lo, hi)):
            streams = TrialStreams(master_seed, *seed_key, i)
            out = branching_total_progeny(n, p, streams.gen, cap)
            totals[j] = out.total_progeny
            gens[j] = out.generations
            hits[j] = out.cap_hit
        return totals, gens, hits

    blocks = map_blocks(trials, jobs, block)
    return {
        "total_progeny": np.concatenate([b[0] for b in blocks]),
        "generations": np.concatenate([b[1] for b in blocks]),
        "cap_hit": np.concatenate([b[2] for b in blocks]),
        "cap": cap,
    }


def sample_coupled(
    graph: GraphKind,
    p: float,
    trials: int,
    range_cap: int,
    step_cap: int,
    master_seed: int,
    jobs: int = 1,
    assertions_enabled: bool = True,
    seed_key: tuple = (),
) -> dict:
    """Per-trial rows of the joint avalanche / coupled-cluster process."""
    from .coupling import run_coupled

    def block(lo: int, hi: int):
        cols = {
            "av_status": np.empty(hi - lo, np.int8),
            "av_range": np.empty(hi - lo, np.int64),
            "av_steps": np.empty(hi - lo, np.int64),
            "perc_status": np.empty(hi - lo, np.int8),
            "cluster_size": np.empty(hi - lo, np.int64),
            "perc_range": np.empty(hi - lo, np.int64),
            "both_neighbors_closed": np.empty(hi - lo, bool),
        }
        for j, i in enumerate(range(lo, hi)):
            streams = TrialStreams(master_seed, *seed_key, i)
            av, pc = run_coupled(
                graph,
                p,
                range_cap=range_cap,
                step_cap=step_cap,
                streams=streams,
                assertions_enabled=assertions_enabled,
            )
            cols["av_status"][j] = _CODE_BY_STATUS[av.status]
            cols["av_range"][j] = av.range
            cols["av_steps"][j] = av.steps
            cols["perc_status"][j] = _CODE_BY_STATUS[pc.status]
            cols["cluster_size"][j] = pc.cluster_size
            cols["perc_range"][j] = pc.range
            cols["both_neighbors_closed"][j] = pc.origin_neighbors_closed
        return cols

    blocks = map_blocks(trials, jobs, block)
    out = {k: np.concatenate([b[k] for b in blocks]) for k in blocks[0]}
    out["range_cap"] = range_cap
    out["step_cap"] = step_cap
    return out


# -- survival curves ---------------------------------------------------------


def estimate_survival(
    process: str,
    graph,
    p: float,
    trials: int,
    range_cap: int = 10_000,
    step_cap: int = 1_000_000,
    master_seed: int = 0,
    engine: str = "classic",
    jobs: int = 1,
    seed_key: tuple = (),
) -> SurvivalPoint:
    """Survival (range-cap-hit) frequency with a 95% Wilson interval.

    ``process`` is one of avalanche / percolation / branching; for branching
    pass the offspring trial count n in place of the graph.  Mean range and
    mean steps are taken over the runs that died.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if process == "avalanche":
        s = sample_avalanche(
            graph, p, trials, range_cap, step_cap, master_seed, engine, jobs, seed_key=seed_key
        )
        status, ranges, steps = s["status"], s["range"], s["steps"]
    elif process == "percolation":
        s = sample_percolation(graph, p, trials, range_cap, master_seed, jobs, seed_key=seed_key)
        status, ranges, steps = s["status"], s["range"], s["cluster_size"]
    elif process == "branching":
        s = sample_branching(int(graph), p, trials, range_cap, master_seed, jobs, seed_key=seed_key)
        status = np.where(s["cap_hit"], CODE_RANGE_CAP, CODE_DIED).astype(np.int8)
        ranges, steps = s["total_progeny"], s["generations"]
    else:
        raise ValueError(f"unknown process {process!r}")
    survived = int(np.count_nonzero(status == CODE_RANGE_CAP))
    died = status == CODE_DIED
    mean_range = float(ranges[died].mean()) if died.any() else float("nan")
    mean_steps = float(steps[died].mean()) if died.any() else float("nan")
    lo, hi = wilson_interval(survived, trials, 0.95)
    return SurvivalPoint(
        p=p,
        trials=trials,
        survived=survived,
        mean_range=mean_range,
        mean_steps=mean_steps,
        ci_low=lo,
        ci_high=hi,
    )


def sweep(
    process: str,
    graph,
    p_grid: Sequence[float],
    trials: int,
    range_cap: int = 10_000,
    step_cap: int = 1_000_000,
    master_seed: int = 0,
    engine: str = "classic",
    jobs: int = 1,
) -> tuple[list[SurvivalPoint], tuple[Optional[float], Optional[float]]]:
    """Survival curve over a threshold grid plus a critical-value bracket.

    The bracket is (largest p whose interval still contains 0, smallest p
    whose interval excludes 0); either end is None when no grid point
    qualifies.
    """
    grid = [float(p) for p in p_grid]
    if not grid:
        raise ValueError("threshold grid must not be empty")
    if any(not 0.0 < p < 1.0 for p in grid):
        raise ValueError("grid thresholds must lie in (0, 1)")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    points = [
        estimate_survival(
            process,
            graph,
            p,
            trials,
            range_cap,
            step_cap,
            master_seed,
            engine,
            jobs,
            seed_key=(idx,),
        )
        for idx, p in enumerate(grid)
    ]
    zero_consistent = [pt.p for pt in points if pt.ci_low == 0.0]
    positive = [pt.p for pt in points if pt.ci_low > 0.0]
    bracket = (max(zero_consistent) if zero_consistent else None, min(positive) if positive else None)
    return points, bracket


# -- statistical tests -------------------------------------------------------


def dominance_test(
    samples_a: np.ndarray,
    samples_b: np.ndarray,
    significance: float = 0.01,
    cap_a: Optional[int] = None,
    cap_b: Optional[int] = None,
    name: str = "stochastic_dominance",
) -> TestReport:
    """One-sided two-sample KS check that A is stochastically >= B.

    The adverse deviation is sup_t (ECDF_A(t) - ECDF_B(t)); domination is
    rejected (verdict fail) when it exceeds the asymptotic one-sided critical
    value at `significance`.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    if cap_a is not None and cap_b is not None and cap_a != cap_b:
        raise ValueError(f"cap metadata mismatch: {cap_a} != {cap_b}")
    grid = np.union1d(a, b)
    fa = np.searchsorted(np.sort(a), grid, side="right") / a.size
    fb = np.searchsorted(np.sort(b), grid, side="right") / b.size
    stat = float(np.max(fa - fb))
    n, m = a.size, b.size
    crit = math.sqrt(-math.log(significance) * (n + m) / (2.0 * n * m))
    return TestReport(
        name=name,
        statistic=stat,
        threshold=crit,
        verdict="pass" if stat <= crit else "fail",
        metadata={
            "n_a": int(n),
            "n_b": int(m),
            "significance": significance,
            "mean_diff": float(a.mean() - b.mean()),
            "cap": cap_a if cap_a is not None else cap_b,
        },
    )


def _merge_bins(values_a: np.ndarray, values_b: np.ndarray, min_expected: float):
    """Counts over merged adjacent bins with adequate expected mass."""
    support = np.union1d(values_a, values_b)
    ca = np.array([np.count_nonzero(values_a == v) for v in support], dtype=np.float64)
    cb = np.array([np.count_nonzero(values_b == v) for v in support], dtype=np.float64)
    na, nb = values_a.size, values_b.size
    total = na + nb
    # pooled expected count in the smaller sample decides bin adequacy
    scale = min(na, nb) / total
    merged_a, merged_b = [], []
    acc_a = acc_b = 0.0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        if (acc_a + acc_b) * scale >= min_expected:
            merged_a.append(acc_a)
            merged_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a or acc_b:
        if merged_a:
            merged_a[-1] += acc_a
            merged_b[-1] += acc_b
        else:
            merged_a.append(acc_a)
            merged_b.append(acc_b)
    return np.array(merged_a), np.array(merged_b)


def equivalence_test(
    samples_a: np.ndarray,
    samples_b: np.ndarray,
    significance: float = 0.01,
    min_expected: float = 5.0,
    name: str = "distribution_equivalence",
) -> TestReport:
    """Two-sample chi-square over a binned common support.

    Adjacent support values are merged until each bin's pooled expected
    count reaches `min_expected` in the smaller sample.
    """
    a = np.asarray(samples_a)
    b = np.asarray(samples_b)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    ca, cb = _merge_bins(a, b, min_expected)
    if len(ca) < 2:
        stat, df = 0.0, 0
    else:
        res = sps.chi2_contingency(np.vstack([ca, cb]), correction=False)
        stat, df = float(res.statistic), int(res.dof)
    threshold = float(sps.chi2.ppf(1.0 - significance, df)) if df > 0 else float("inf")
    return TestReport(
        name=name,
        statistic=stat,
        threshold=threshold,
        verdict="pass" if stat <= threshold else "fail",
        metadata={
            "n_a": int(a.size),
            "n_b": int(b.size),
            "bins": int(len(ca)),
            "dof": df,
            "significance": significance,
        },
    )


def uniformity_test(
    trials: int,
    bounds: Sequence[float],
    rng: np.random.Generator | int = 0,
    significance: float = 0.01,
    resample: bool = True,
    name: str = "uniform_reconstruction",
) -> TestReport:
    """Reconstruct i.i.d. uniforms from minimum-conditioned samples.

    Each round draws one fitness per bound y_i, locates the minimum M at
    coordinate K, recovers that coordinate's underlying uniform exactly as
    (M - y_K)/(1 - y_K), and redraws every other coordinate uniformly above
    (M - y_i)^+/(1 - y_i).  Pooled coordinates are KS-tested against
    uniform(0, 1); coordinate pairs are chi-square-tested for independence
    on a 4x4 grid.

    With resample=False the conditioning levels themselves are emitted for
    the other coordinates (no redraw) -- a deliberately broken variant used
    as the negative control.
    """
    y = np.asarray(bounds, dtype=np.float64)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("need at least two bounds")
    if np.any((y < 0.0) | (y >= 1.0)):
        raise ValueError("bounds must lie in [0, 1)")
    if trials < 1:
        raise ValueError("trial count must be positive")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(rng))))
    n = y.size
    u = rng.random((trials, n))
    f = y + (1.0 - y) * u
    k = np.argmin(f, axis=1)
    rows = np.arange(trials)
    m = f[rows, k]
    lower = np.clip((m[:, None] - y[None, :]) / (1.0 - y[None, :]), 0.0, None)
    if resample:
        out = lower + (1.0 - lower) * rng.random((trials, n))
    else:
        out = lower.copy()
    out[rows, k] = (m - y[k]) / (1.0 - y[k])

    pooled = out.ravel()
    ks_stat = float(sps.kstest(pooled, "uniform").statistic)
    ks_crit = float(sps.kstwobign.isf(significance)) / math.sqrt(pooled.size)

    cells = np.minimum((out * 4).astype(np.int64), 3)
    pairs = []
    pairs_pass = True
    for i in range(n):
        for j in range(i + 1, n):
            table = np.zeros((4, 4))
            np.add.at(table, (cells[:, i], cells[:, j]), 1.0)
            res = sps.chi2_contingency(table, correction=False)
            crit = float(sps.chi2.ppf(1.0 - significance, res.dof))
            ok = res.statistic <= crit
            pairs_pass &= bool(ok)
            pairs.append(
                {
                    "coords": [i, j],
                    "statistic": float(res.statistic),
                    "threshold": crit,
                    "pass": bool(ok),
                }
            )
    verdict = "pass" if ks_stat <= ks_crit and pairs_pass else "fail"
    return TestReport(
        name=name,
        statistic=ks_stat,
        threshold=ks_crit,
        verdict=verdict,
        metadata={
            "trials": trials,
            "bounds": [float(v) for v in y],
            "resample": resample,
            "significance": significance,
            "pooled_size": int(pooled.size),
            "pairwise": pairs,
        },
    )
