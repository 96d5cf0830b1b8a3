"""Independent comparison processes: dynamic site-percolation cluster growth
at the origin (origin open with probability 1) and Galton-Watson branching.

These are the oracles the avalanche and coupled processes are tested
against, so they deliberately share nothing with those engines beyond the
graph definitions.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .graph import GraphKind, RegularTree, RootedTreeStar, Vertex

STATUS_CLOSED_OUT = "closed_out"
STATUS_RANGE_CAP = "range_cap"
STATUS_STEP_CAP = "step_cap"


@dataclass
class PercOutcome:
    """Result of one cluster-growth (or coupled-construction) run.

    ``range`` counts the open cluster plus every closed vertex that was
    examined while growing it.  For cap-hit runs the cluster is unresolved
    and the counts are a snapshot at the moment the cap fired.
    """

    status: str
    cluster_size: int
    range: int
    origin_neighbors_closed: bool
    open_cluster: Optional[set] = None
    closed_examined: Optional[set] = None


@dataclass
class BranchingOutcome:
    total_progeny: int
    generations: int
    cap_hit: bool


def grow_cluster(
    graph: GraphKind,
    p: float,
    rng: np.random.Generator,
    range_cap: int = 10_000,
    keep_sets: bool = False,
) -> PercOutcome:
    """Grow the open cluster at the origin, one frontier vertex at a time.

    The origin is open for free; every other examined vertex is open exactly
    when its fresh uniform value is <= p.  The frontier is first-in
    first-out, which fixes the draw order without affecting the cluster law.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("threshold p must lie in (0, 1)")
    if range_cap < 1:
        raise ValueError("range cap must be positive")
    origin = graph.origin
    open_cluster = {origin}
    closed: set = set()
    queued = {origin}
    frontier = deque()
    for w in graph.neighbors(origin):
        if w not in queued:
            queued.add(w)
            frontier.append(w)
    status = STATUS_CLOSED_OUT
    while frontier:
        if len(open_cluster) + len(closed) >= range_cap:
            status = STATUS_RANGE_CAP
            break
        v = frontier.popleft()
        if rng.random() <= p:
            open_cluster.add(v)
            for w in graph.neighbors(v):
                if w not in queued:
                    queued.add(w)
                    frontier.append(w)
        else:
            closed.add(v)
    nbrs_closed = all(w in closed for w in graph.neighbors(origin))
    return PercOutcome(
        status=status,
        cluster_size=len(open_cluster),
        range=len(open_cluster) + len(closed),
        origin_neighbors_closed=nbrs_closed,
        open_cluster=set(open_cluster) if keep_sets else None,
        closed_examined=set(closed) if keep_sets else None,
    )


def grow_cluster_tree_fast(
    graph: RegularTree | RootedTreeStar,
    p: float,
    rng: np.random.Generator,
    range_cap: int = 10_000,
) -> PercOutcome:
    """Generation-batched cluster growth on trees.

    On a tree the cluster never revisits a vertex, so each open vertex
    examines a fixed number of fresh children and whole generations can be
    drawn as single binomials.  Same (status, cluster size, range) law as
    the frontier construction; used for large supercritical batches.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("threshold p must lie in (0, 1)")
    root_children = graph._root_children()
    child_count = graph._child_count()
    size = 1
    examined = root_children
    alive = int(rng.binomial(root_children, p))
    size += alive
    first_gen = alive
    status = STATUS_CLOSED_OUT
    while True:
        if 1 + examined >= range_cap:
            status = STATUS_RANGE_CAP
            break
        if alive == 0:
            break
        n_exam = alive * child_count
        alive = int(rng.binomial(n_exam, p))
        examined += n_exam
        size += alive
    return PercOutcome(
        status=status,
        cluster_size=size,
        range=1 + examined,
        origin_neighbors_closed=(status == STATUS_CLOSED_OUT and first_gen == 0),
    )


def branching_total_progeny(
    n: int,
    p: float,
    rng: np.random.Generator,
    cap: int = 100_000,
) -> BranchingOutcome:
    """Total progeny of a Galton-Watson tree with Binomial(n, p) offspring.

    Individuals within a generation are exchangeable, so a whole generation
    is one Binomial(n * alive, p) draw.  ``generations`` counts non-empty
    offspring generations (the root alone gives 0).
    """
    if n < 1:
        raise ValueError("offspring trials must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("offspring probability must lie in [0, 1]")
    if cap < 1:
        raise ValueError("progeny cap must be positive")
    total = 1
    alive = 1
    generations = 0
    while alive > 0 and total < cap:
        alive = int(rng.binomial(n * alive, p))
        if alive > 0:
            generations += 1
        total += alive
    return BranchingOutcome(total_progeny=total, generations=generations, cap_hit=total >= cap)


def extinction_prob(n: int, p: float, tol: float = 1e-15, max_iter: int = 10_000_000) -> float:
    """Smallest root in [0, 1] of q = (1 - p + p*q)^n.

    Monotone fixed-point iteration from 0 converges to the smallest root;
    with mean offspring n*p <= 1 that root is 1 and is returned directly.
    """
    if n < 1:
        raise ValueError("offspring trials must be >= 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("offspring probability must lie in [0, 1]")
    if n * p <= 1.0:
        return 1.0
    q = 0.0
    for _ in range(max_iter):
        q_next = (1.0 - p + p * q) ** n
        if abs(q_next - q) <= tol:
            return q_next
        q = q_next
    return q


def cluster_size_pmf_Z(p: float, k: int) -> float:
    """P(cluster size = k) on Z with the origin forced open."""
    if k < 1:
        raise ValueError("cluster size must be >= 1")
    if not 0.0 < p < 1.0:
        raise ValueError("threshold p must lie in (0, 1)")
    return k * p ** (k - 1) * (1.0 - p) ** 2
