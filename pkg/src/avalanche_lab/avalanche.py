"""Threshold avalanches: a distribution-tracking engine, an explicit-fitness
engine, and the original finite-cycle dynamics.

Both avalanche engines realize the same process.  A run starts from a single
origin whose fitness is minimal by construction, so the first update (origin
plus all its neighbours drawn fresh) is hard-coded rather than sampled.  At
each later step the minimal fitness M over all vertices touched so far is
located; if M exceeds the threshold p the avalanche is over, otherwise the
minimal vertex and its neighbours are redrawn and the walk continues.

The forgetful engine never stores realized fitnesses.  Each tracked vertex
keeps only a lower bound y, meaning "uniform on (y, 1)": after a step with
minimum M, every non-minimal vertex's bound becomes max(y, M) (the surviving
conditional law), while the minimal vertex and its neighbours reset to 0.
Per-step uniforms are keyed by (vertex, step), so evicting hopeless vertices
(bound > p, "trimmed" mode) replays the identical trajectory.

The classic engine keeps explicit fitness values in a lazy-deletion heap and
resamples only the minimal vertex and its neighbours per step; it is the
cheap oracle for long runs and large batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graph import GraphKind, RegularTree, Vertex
from .rng import StepKeyedSampler, vertex_hash

STATUS_DIED = "died"
STATUS_RANGE_CAP = "range_cap"
STATUS_STEP_CAP = "step_cap"


@dataclass
class StepEvent:
    """One engine step: either a sub-threshold minimum or termination.

    For a minimum at vertex K with bound y, ``u`` is the underlying uniform
    (M - y) / (1 - y) recovered from the observed minimum.
    """

    terminated: bool
    minimum: float
    vertex: Optional[Vertex] = None
    u: Optional[float] = None


@dataclass
class AvalancheOutcome:
    status: str
    range: int
    steps: int
    range_set: Optional[set] = None


class AvalancheState:
    """Forgetful-engine state: per-vertex bounds over every vertex updated.

    ``bounds`` maps each currently tracked vertex to its bound y.  With
    trimming on, vertices whose bound exceeds p are dropped from tracking
    (they can never be the sub-threshold minimum); the range set still
    remembers them.
    """

    def __init__(self, graph: GraphKind, p: float, origin: Vertex = None, trimmed: bool = False):
        if not 0.0 < p < 1.0:
            raise ValueError("threshold p must lie in (0, 1)")
        self.graph = graph
        self.p = p
        self.trimmed = trimmed
        self.origin = graph.origin if origin is None else origin
        graph.validate(self.origin)
        self.steps = 0
        self.range_set: set = set()
        self.terminated = False
        self.terminal_minimum: Optional[float] = None
        self._n = 0
        cap = 64
        self._y = np.zeros(cap)
        self._vh = np.zeros(cap, np.uint64)
        self._active = np.zeros(cap, bool)
        self._verts: list = []
        self._index: dict = {}
        self._nbrs: dict = {}
        # forced first update: the origin is minimal by construction, so it
        # and its neighbours start at bound 0
        self._touch(self.origin)
        for v in self.neighbors(self.origin):
            self._touch(v)
        self.steps = 1

    def neighbors(self, v: Vertex) -> list:
        nbrs = self._nbrs.get(v)
        if nbrs is None:
            nbrs = self.graph.neighbors(v)
            self._nbrs[v] = nbrs
        return nbrs

    # -- bookkeeping ------------------------------------------------------

    def _grow(self, need: int) -> None:
        cap = len(self._y)
        if need <= cap:
            return
        new = max(need, 2 * cap)
        for name in ("_y", "_vh", "_active"):
            arr = getattr(self, name)
            buf = np.zeros(new, arr.dtype)
            buf[: self._n] = arr[: self._n]
            setattr(self, name, buf)

    def _touch(self, v: Vertex) -> int:
        """Reset v's bound to 0, registering it on first contact."""
        i = self._index.get(v)
        if i is None:
            i = self._n
            self._grow(i + 1)
            self._index[v] = i
            self._verts.append(v)
            self._vh[i] = vertex_hash(self.graph.format_vertex(v))
            self._n += 1
            self.range_set.add(v)
        self._y[i] = 0.0
        self._active[i] = True
        return i

    @property
    def bounds(self) -> dict:
        """Tracked vertex -> bound, excluding trimmed-away vertices."""
        n = self._n
        return {self._verts[i]: float(self._y[i]) for i in range(n) if self._active[i]}

    def bound_of(self, v: Vertex) -> float:
        return float(self._y[self._index[v]])

    def tracked_count(self) -> int:
        return int(self._active[: self._n].sum())

    # -- stepping ---------------------------------------------------------

    def _sample_minimum(self, sampler: StepKeyedSampler):
        """Draw this step's fitnesses and locate the minimum; no mutation.

        The scalar and vector paths produce bit-identical fitnesses: both
        evaluate y + (1 - y) * u with the same IEEE operation order.
        """
        n = self._n
        if not self.trimmed and n <= 32:
            us = sampler.uniform_seq(self._vh[:n].tolist(), self.steps)
            ys = self._y[:n].tolist()
            best = 2.0
            k = -1
            uk = 0.0
            tie = False
            for i in range(n):
                y = ys[i]
                f = y + (1.0 - y) * us[i]
                if f < best:
                    best, k, uk = f, i, us[i]
                    tie = False
                elif f == best:
                    tie = True
            if tie:
                # probability ~0; the contract breaks ties in canonical order
                mins = [i for i in range(n) if ys[i] + (1.0 - ys[i]) * us[i] == best]
                k = min(mins, key=lambda i: self._verts[i])
                uk = us[k]
            return k, best, uk
        if self.trimmed:
            idx = np.flatnonzero(self._active[:n])
        else:
            idx = None
        y = self._y[:n] if idx is None else self._y[idx]
        vh = self._vh[:n] if idx is None else self._vh[idx]
        u = sampler.uniforms(vh, self.steps)
        f = y + (1.0 - y) * u
        j = int(np.argmin(f))
        m = float(f[j])
        ties = np.flatnonzero(f == m)
        if len(ties) > 1:
            pick = min(ties, key=lambda t: self._verts[t if idx is None else idx[t]])
            j = int(pick)
        k = j if idx is None else int(idx[j])
        return k, m, float(u[j])

    def _apply_minimum(self, k: int, m: float) -> None:
        """Condition every other bound on exceeding m, reset K + neighbours."""
        n = self._n
        if self.trimmed:
            sel = self._active[:n]
            self._y[:n][sel] = np.maximum(self._y[:n][sel], m)
        else:
            np.maximum(self._y[:n], m, out=self._y[:n])
        kv = self._verts[k]
        self._touch(kv)
        for w in self.neighbors(kv):
            self._touch(w)
        if self.trimmed:
            n = self._n
            self._active[:n] &= self._y[:n] <= self.p
        self.steps += 1

    def _mark_terminated(self, m: float) -> None:
        self.terminated = True
        self.terminal_minimum = m


def init_avalanche(
    graph: GraphKind, p: float, origin: Vertex = None, trimmed: bool = False
) -> AvalancheState:
    """Fresh avalanche after its forced first update (steps == 1)."""
    return AvalancheState(graph, p, origin, trimmed)


def step_forgetful(state: AvalancheState, sampler: StepKeyedSampler) -> StepEvent:
    if state.terminated:
        raise RuntimeError("avalanche already terminated")
    k, m, u = state._sample_minimum(sampler)
    if m > state.p:
        state._mark_terminated(m)
        return StepEvent(terminated=True, minimum=m)
    kv = state._verts[k]
    state._apply_minimum(k, m)
    return StepEvent(terminated=False, minimum=m, vertex=kv, u=u)


def run_avalanche(
    graph: GraphKind,
    p: float,
    origin: Vertex = None,
    range_cap: int = 10_000,
    step_cap: int = 1_000_000,
    sampler: StepKeyedSampler | int = 0,
    trimmed: bool = False,
    keep_range_set: bool = False,
) -> AvalancheOutcome:
    """Run the forgetful engine to termination or a cap.

    Hitting `range_cap` is the desk-scale surrogate for an infinite
    avalanche; `step_cap` is a safety valve counted separately.
    """
    if range_cap < 1 or step_cap < 1:
        raise ValueError("caps must be positive")
    if isinstance(sampler, int):
        sampler = StepKeyedSampler(sampler)
    state = init_avalanche(graph, p, origin, trimmed)
    status = STATUS_DIED
    while True:
        if len(state.range_set) >= range_cap:
            status = STATUS_RANGE_CAP
            break
        if state.steps >= step_cap:
            status = STATUS_STEP_CAP
            break
        if step_forgetful(state, sampler).terminated:
            break
    return AvalancheOutcome(
        status=status,
        range=len(state.range_set),
        steps=state.steps,
        range_set=set(state.range_set) if keep_range_set else None,
    )


# -- classic engine --------------------------------------------------------


class ClassicState:
    """Explicit-fitness avalanche state.

    Vertices with fitness above p are inert but stay in the heap: the
    terminal minimum is taken over everything ever updated.
    """

    def __init__(self, graph: GraphKind, p: float, origin: Vertex, rng):
        import heapq

        if not 0.0 < p < 1.0:
            raise ValueError("threshold p must lie in (0, 1)")
        self.graph = graph
        self.p = p
        self.origin = graph.origin if origin is None else origin
        graph.validate(self.origin)
        self.fitness: dict = {}
        self._heap: list = []
        self._push = heapq.heappush
        self._pop = heapq.heappop
        self._nbrs: dict = {}
        self.steps = 0
        self.terminated = False
        self.terminal_minimum: Optional[float] = None
        for v in [self.origin] + graph.neighbors(self.origin):
            self._resample(v, rng)
        self.steps = 1

    def neighbors(self, v: Vertex) -> list:
        nbrs = self._nbrs.get(v)
        if nbrs is None:
            nbrs = self.graph.neighbors(v)
            self._nbrs[v] = nbrs
        return nbrs

    def _resample(self, v: Vertex, rng) -> None:
        f = rng.random()
        self.fitness[v] = f
        self._push(self._heap, (f, v))

    @property
    def range_set(self):
        return self.fitness.keys()


def init_classic(graph: GraphKind, p: float, origin: Vertex = None, rng=None) -> ClassicState:
    return ClassicState(graph, p, origin, rng)


def step_classic(state: ClassicState, rng) -> StepEvent:
    if state.terminated:
        raise RuntimeError("avalanche already terminated")
    # pop stale heap entries; (fitness, vertex) tuples break exact ties in
    # canonical vertex order
    while True:
        f, v = state._pop(state._heap)
        if state.fitness[v] == f:
            break
    if f > state.p:
        state._push(state._heap, (f, v))
        state.terminated = True
        state.terminal_minimum = f
        return StepEvent(terminated=True, minimum=f)
    state._resample(v, rng)
    for w in state.neighbors(v):
        state._resample(w, rng)
    state.steps += 1
    return StepEvent(terminated=False, minimum=f, vertex=v, u=f)


def run_classic_avalanche(
    graph: GraphKind,
    p: float,
    origin: Vertex = None,
    range_cap: int = 10_000,
    step_cap: int = 1_000_000,
    rng=None,
    keep_range_set: bool = False,
) -> AvalancheOutcome:
    """Classic-engine counterpart of run_avalanche (same outcome law)."""
    if range_cap < 1 or step_cap < 1:
        raise ValueError("caps must be positive")
    state = init_classic(graph, p, origin, rng)
    status = STATUS_DIED
    while True:
        if len(state.fitness) >= range_cap:
            status = STATUS_RANGE_CAP
            break
        if state.steps >= step_cap:
            status = STATUS_STEP_CAP
            break
        if step_classic(state, rng).terminated:
            break
    return AvalancheOutcome(
        status=status,
        range=len(state.fitness),
        steps=state.steps,
        range_set=set(state.fitness) if keep_range_set else None,
    )


def run_classic_tree(
    graph: RegularTree,
    p: float,
    range_cap: int,
    step_cap: int,
    seed: int,
) -> AvalancheOutcome:
    """Classic engine on a regular tree via the compiled arena kernel."""
    from . import _treefast

    status_code, rng_, steps = _treefast.run_tree_classic(
        np.uint64(seed), p, graph.delta, graph.delta - 1, range_cap, step_cap
    )
    status = (STATUS_DIED, STATUS_RANGE_CAP, STATUS_STEP_CAP)[status_code]
    return AvalancheOutcome(status=status, range=rng_, steps=steps)


# -- original circle model --------------------------------------------------


def run_classic_bs(
    n: int,
    burn_in: int,
    measure: int,
    rng: np.random.Generator,
    bins: int = 100,
):
    """Original N-species circle dynamics; empirical marginal fitness law.

    Runs `burn_in` minimum-replacement steps, then accumulates the marginal
    fitness histogram over the next `measure` steps.  Each fitness value
    contributes to its bin for every measured step it survives, which is
    accounted in O(1) per replacement by lifetime bookkeeping.

    Returns (masses, edges) with masses summing to 1 over `bins` equal-width
    bins on [0, 1].
    """
    if n < 3:
        raise ValueError("circle model needs at least 3 species")
    if measure < 1:
        raise ValueError("measurement window must be positive")
    fitness = rng.random(n)
    born = np.zeros(n, np.int64)
    counts = np.zeros(bins, np.float64)
    total_steps = burn_in + measure

    def credit(i: int, die: int) -> None:
        # overlap of [born[i], die) with the measurement window
        lo = max(int(born[i]), burn_in)
        hi = min(die, total_steps)
        if hi > lo:
            b = min(int(fitness[i] * bins), bins - 1)
            counts[b] += hi - lo

    t = 0
    while t < total_steps:
        k = int(np.argmin(fitness))
        left = (k - 1) % n
        right = (k + 1) % n
        t += 1
        for i in sorted({left, k, right}):
            credit(i, t)
            fitness[i] = rng.random()
            born[i] = t
    for i in range(n):
        credit(i, total_steps)
    masses = counts / (n * measure)
    edges = np.linspace(0.0, 1.0, bins + 1)
    return masses, edges
