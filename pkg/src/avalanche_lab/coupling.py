"""Joint construction of an avalanche and the site-percolation cluster it
dominates.

Two copies of the graph evolve together.  The avalanche side runs the
forgetful engine.  On the coupled side each vertex is either fixed (open if
its value came out <= p, closed otherwise) or *extremal*: it carries a bound
z meaning "uniform on (z, 1)" but no value yet.  The origin starts open with
value 0 and its neighbours start extremal with z = 0.

Every avalanche step with minimum M at vertex K updates the extremal set
using the bounds y the avalanche held when the step's uniforms were drawn:

* K extremal: its value is fixed at z + (1-z) * (M-y)/(1-y).  At or below p
  it opens and its undetermined neighbours join the extremal set with z = 0
  (their avalanche bounds reset to 0 in the same step); above p it closes.
* any other extremal vertex: learning that its avalanche fitness exceeded M
  raises the bound to z + (1-z) * (M-y)^+ / (1-y).

When the avalanche dies (terminal minimum M > p) every remaining extremal
vertex is fixed at zhat + (1-zhat) * X with a fresh uniform X, where zhat is
the same conditioned bound; all such values land above p, closing the
construction.

Two runtime assertions guard the construction (either firing means an
implementation bug): an extremal vertex's z never falls below its avalanche
counterpart's y, and every value fixed at termination exceeds p.  The bound
update is evaluated as M + (1-M) * (z-y)/(1-y), which keeps both guarantees
exact in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._batch import map_blocks
from .avalanche import (
    STATUS_DIED,
    STATUS_RANGE_CAP,
    STATUS_STEP_CAP,
    AvalancheOutcome,
    AvalancheState,
    StepEvent,
    init_avalanche,
)
from .graph import GraphKind, LatticeZd
from .percolation import STATUS_CLOSED_OUT, PercOutcome
from .rng import StepKeyedSampler, TrialStreams

# below this extremal-set size, scalar loops beat numpy dispatch overhead
_SMALL = 64


class CouplingInvariantError(AssertionError):
    """A guaranteed property of the coupled construction failed."""


class CoupledState:
    def __init__(
        self,
        graph: GraphKind,
        p: float,
        sampler: StepKeyedSampler,
        gen: np.random.Generator,
        assertions_enabled: bool = True,
        early_close: bool = False,
    ):
        self.graph = graph
        self.p = p
        self.sampler = sampler
        self.gen = gen
        self.assertions_enabled = assertions_enabled
        # close extremal vertices with z > p immediately instead of waiting
        # for a fixing; off by default so runs follow the literal rules
        self.early_close = early_close
        self.avalanche: AvalancheState = init_avalanche(graph, p, trimmed=False)
        self.origin = self.avalanche.origin
        self.open_cluster: set = {self.origin}
        self.closed_examined: set = set()
        self.fixed: dict = {self.origin: 0.0}
        self.extremal: set = set()
        self._z = np.full(len(self.avalanche._y), np.nan)
        for w in self.avalanche.neighbors(self.origin):
            i = self.avalanche._index[w]
            self.extremal.add(i)
            self._z[i] = 0.0

    def _sync(self) -> None:
        cap = len(self.avalanche._y)
        if len(self._z) < cap:
            z = np.full(cap, np.nan)
            z[: len(self._z)] = self._z
            self._z = z

    def extremal_set(self) -> dict:
        """Extremal vertex -> current bound z."""
        av = self.avalanche
        return {av._verts[i]: float(self._z[i]) for i in self.extremal}

    def _assert_prop5(self) -> None:
        av = self.avalanche
        y = av._y
        z = self._z
        for i in self.extremal:
            if z[i] < y[i]:
                raise CouplingInvariantError(
                    f"extremal bound fell below avalanche bound at {av._verts[i]}: "
                    f"z={z[i]!r} < y={y[i]!r}"
                )

    def outcome(self, status: str, keep_sets: bool = False) -> PercOutcome:
        nbrs_closed = all(w in self.closed_examined for w in self.graph.neighbors(self.origin))
        return PercOutcome(
            status=status,
            cluster_size=len(self.open_cluster),
            range=len(self.open_cluster) + len(self.closed_examined),
            origin_neighbors_closed=nbrs_closed,
            open_cluster=set(self.open_cluster) if keep_sets else None,
            closed_examined=set(self.closed_examined) if keep_sets else None,
        )


def init_coupled(
    graph: GraphKind,
    p: float,
    sampler: StepKeyedSampler | int = 0,
    gen: Optional[np.random.Generator] = None,
    assertions_enabled: bool = True,
    early_close: bool = False,
) -> CoupledState:
    if not 0.0 < p < 1.0:
        raise ValueError("threshold p must lie in (0, 1)")
    if isinstance(sampler, int):
        sampler = StepKeyedSampler(sampler)
    if gen is None:
        gen = np.random.Generator(np.random.PCG64(sampler.key))
    return CoupledState(graph, p, sampler, gen, assertions_enabled, early_close)


def _conditioned_bound(z: float, y: float, m: float) -> float:
    # z + (1-z)(m-y)^+/(1-y), written so the result is >= m exactly in floats
    if y >= m:
        return z
    zhat = m + (1.0 - m) * (z - y) / (1.0 - y)
    return zhat if zhat >= z else z


def coupled_step(state: CoupledState) -> StepEvent:
    """Advance the avalanche one step and apply the coupling rules."""
    av = state.avalanche
    if av.terminated:
        raise RuntimeError("avalanche already terminated")
    k_idx, m, u_k = av._sample_minimum(state.sampler)
    if m > av.p:
        av._mark_terminated(m)
        return StepEvent(terminated=True, minimum=m)

    kv = av._verts[k_idx]
    k_ext = k_idx in state.extremal
    opened = False
    if k_ext:
        zk = float(state._z[k_idx])
        fixed_value = zk + (1.0 - zk) * u_k
        opened = fixed_value <= state.p

    # rule 1: condition every other extremal bound on its avalanche fitness
    # having exceeded m, reading the avalanche bounds before they update
    y_arr = av._y
    z_arr = state._z
    if len(state.extremal) <= _SMALL:
        for i in state.extremal:
            if i == k_idx:
                continue
            y = float(y_arr[i])
            if y < m:
                z = float(z_arr[i])
                zhat = m + (1.0 - m) * (z - y) / (1.0 - y)
                z_arr[i] = zhat if zhat >= z else z
    else:
        idx = np.fromiter(state.extremal, np.int64, len(state.extremal))
        idx = idx[idx != k_idx]
        y = y_arr[idx]
        z = z_arr[idx]
        gain = y < m
        if gain.any():
            zi, yi = z[gain], y[gain]
            z[gain] = np.maximum(m + (1.0 - m) * (zi - yi) / (1.0 - yi), zi)
            z_arr[idx] = z

    # rule 2: the minimal vertex's value is fixed
    if k_ext:
        state.extremal.discard(k_idx)
        state._z[k_idx] = np.nan
        state.fixed[kv] = fixed_value
        if opened:
            state.open_cluster.add(kv)
        else:
            state.closed_examined.add(kv)

    av._apply_minimum(k_idx, m)
    state._sync()

    if opened:
        for w in av.neighbors(kv):
            if w in state.fixed:
                continue
            wi = av._index[w]
            if wi not in state.extremal:
                state.extremal.add(wi)
                state._z[wi] = 0.0
    if state.early_close:
        # a bound above p can only realize above p, so the vertex is already
        # certain to close; realize it now and drop it from the extremal set
        hot = sorted(i for i in state.extremal if state._z[i] > state.p)
        for i in hot:
            v = av._verts[i]
            z = float(state._z[i])
            state.fixed[v] = z + (1.0 - z) * state.gen.random()
            state.closed_examined.add(v)
            state.extremal.discard(i)
            state._z[i] = np.nan
    if state.assertions_enabled:
        state._assert_prop5()
    return StepEvent(terminated=False, minimum=m, vertex=kv, u=u_k)


def finalize(state: CoupledState, keep_sets: bool = False) -> PercOutcome:
    """Fix every remaining extremal value once the avalanche has died.

    Requires the untrimmed terminal minimum.  Every value produced here must
    exceed p; with assertions enabled a value at or below p raises.
    """
    av = state.avalanche
    if not av.terminated:
        raise RuntimeError("avalanche still running; nothing to finalize")
    m = av.terminal_minimum
    # canonical vertex order fixes the fresh-draw sequence
    order = sorted((av._verts[i], i) for i in state.extremal)
    for v, i in order:
        zhat = _conditioned_bound(float(state._z[i]), float(av._y[i]), m)
        value = zhat + (1.0 - zhat) * state.gen.random()
        if state.assertions_enabled and value <= state.p:
            raise CouplingInvariantError(
                f"finalized value {value!r} at {v} did not exceed p={state.p}"
            )
        state.fixed[v] = value
        state.closed_examined.add(v)
        state._z[i] = np.nan
    state.extremal.clear()
    return state.outcome(STATUS_CLOSED_OUT, keep_sets=keep_sets)


def run_coupled(
    graph: GraphKind,
    p: float,
    range_cap: int = 10_000,
    step_cap: int = 1_000_000,
    streams: TrialStreams | None = None,
    sampler: StepKeyedSampler | int = 0,
    gen: Optional[np.random.Generator] = None,
    assertions_enabled: bool = True,
    keep_sets: bool = False,
) -> tuple[AvalancheOutcome, PercOutcome]:
    """Run the joint process until the avalanche dies or hits a cap.

    Caps are the avalanche's; a capped run leaves the coupled cluster
    unresolved and the percolation outcome mirrors the cap status.
    """
    if range_cap < 1 or step_cap < 1:
        raise ValueError("caps must be positive")
    if streams is not None:
        sampler = streams.sampler()
        gen = streams.gen
    state = init_coupled(graph, p, sampler, gen, assertions_enabled)
    av = state.avalanche
    resolved: Optional[PercOutcome] = None
    while True:
        if len(av.range_set) >= range_cap:
            status = STATUS_RANGE_CAP
            break
        if av.steps >= step_cap:
            status = STATUS_STEP_CAP
            break
        if coupled_step(state).terminated:
            av_out = AvalancheOutcome(
                status=STATUS_DIED,
                range=len(av.range_set),
                steps=av.steps,
                range_set=set(av.range_set) if keep_sets else None,
            )
            perc = resolved if resolved is not None else finalize(state, keep_sets=keep_sets)
            return av_out, perc
        if resolved is None and not state.extremal:
            # nothing is undetermined and nothing can be added: the cluster
            # is complete even though the avalanche may run on
            resolved = state.outcome(STATUS_CLOSED_OUT, keep_sets=keep_sets)
    av_out = AvalancheOutcome(
        status=status,
        range=len(av.range_set),
        steps=av.steps,
        range_set=set(av.range_set) if keep_sets else None,
    )
    perc = resolved if resolved is not None else state.outcome(status, keep_sets=keep_sets)
    return av_out, perc


# -- closed-form check for the two-neighbour closure probability on Z -------


@dataclass
class GEstimate:
    """Monte Carlo estimate of the both-neighbours-closed probability."""

    x: float
    p: float
    trials: int
    successes: int
    frequency: float
    ci_low: float
    ci_high: float
    target: float

    @property
    def within_ci(self) -> bool:
        return self.ci_low <= self.target <= self.ci_high


_WATCHED = ((-1,), (1,))


def _g_trial(p: float, x: float, streams: TrialStreams, step_cap: int) -> bool:
    state = init_coupled(LatticeZd(1), p, streams.sampler(), streams.gen)
    av = state.avalanche
    widx = [av._index[w] for w in _WATCHED]
    for i in widx:
        state._z[i] = x
    while True:
        undecided = False
        for w, i in zip(_WATCHED, widx):
            value = state.fixed.get(w)
            if value is not None:
                if value <= p:
                    return False
            elif not state._z[i] > p:
                undecided = True
        if not undecided:
            # each unfixed watched bound exceeds p, so any eventual fixing
            # lands above p: both neighbours are certain to close
            return True
        if coupled_step(state).terminated:
            finalize(state)
            return all(state.fixed[w] > p for w in _WATCHED)
        if av.steps >= step_cap:
            raise RuntimeError("watched neighbours failed to resolve before step cap")


def estimate_g(
    x: float,
    p: float,
    trials: int,
    master_seed: int = 0,
    jobs: int = 1,
    step_cap: int = 1_000_000,
) -> GEstimate:
    """Estimate the probability that both origin neighbours on Z end closed.

    Only the coupled side starts at bound x; the avalanche side is the usual
    fresh start.  The closed form for comparison is (1-p)^2 / (1-x)^2.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("threshold p must lie in (0, 1)")
    if not 0.0 <= x <= p:
        raise ValueError("initial bound x must lie in [0, p]")
    if trials < 1:
        raise ValueError("trial count must be positive")

    def block(lo: int, hi: int) -> int:
        count = 0
        for i in range(lo, hi):
            count += _g_trial(p, x, TrialStreams(master_seed, i), step_cap)
        return count

    successes = sum(map_blocks(trials, jobs, block))
    from .stats import wilson_interval

    lo, hi = wilson_interval(successes, trials, 0.95)
    return GEstimate(
        x=x,
        p=p,
        trials=trials,
        successes=successes,
        frequency=successes / trials,
        ci_low=lo,
        ci_high=hi,
        target=(1.0 - p) ** 2 / (1.0 - x) ** 2,
    )
