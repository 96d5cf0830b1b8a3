"""Compiled classic-engine kernel for regular trees.

Tree vertices live in an integer arena: id 0 is the root, children are
allocated as contiguous blocks the first time their parent is updated, and
the parent id is stored per vertex.  Every allocated vertex is resampled in
the same step, so the allocation counter equals the avalanche range.

Uniform draws come from an inline SplitMix64 counter, a pure function of the
per-trial seed, so runs are reproducible under any thread interleaving.  The
minimum is tracked with an array binary heap using lazy deletion; exact
fitness ties (probability ~2^-53 per pair) resolve in heap order rather than
canonical vertex order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_U = np.uint64


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> _U(30))) * _U(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> _U(27))) * _U(0x94D049BB133111EB)
    return z ^ (z >> _U(31))


@njit(cache=True, nogil=True)
def run_tree_classic(seed, p, root_nc, other_nc, range_cap, step_cap):
    """One classic avalanche on a tree; returns (status, range, steps).

    root_nc / other_nc are the child counts of the root and of any other
    vertex (regular tree of degree d: d and d-1).  Status codes: 0 died,
    1 range cap, 2 step cap.
    """
    capacity = range_cap + root_nc + other_nc + 4
    parent = np.full(capacity, -1, np.int64)
    child0 = np.full(capacity, -1, np.int64)
    fitness = np.ones(capacity, np.float64)

    heap_cap = 4 * capacity + 64
    hf = np.empty(heap_cap, np.float64)
    hid = np.empty(heap_cap, np.int64)
    hn = 0

    ctr = seed
    phi = _U(0x9E3779B97F4A7C15)
    inv53 = 2.0**-53

    # forced first update: root plus its children
    child0[0] = 1
    for i in range(root_nc):
        parent[1 + i] = 0
    nxt = 1 + root_nc
    for v in range(nxt):
        ctr += phi
        u = (np.float64(_mix64(ctr) >> _U(11)) + 1.0) * inv53
        fitness[v] = u
        i = hn
        hf[i] = u
        hid[i] = v
        while i > 0:
            par = (i - 1) >> 1
            if hf[par] > hf[i]:
                hf[par], hf[i] = hf[i], hf[par]
                hid[par], hid[i] = hid[i], hid[par]
                i = par
            else:
                break
        hn += 1
    steps = 1

    while True:
        if nxt >= range_cap:
            return 1, nxt, steps
        if steps >= step_cap:
            return 2, nxt, steps

        # pop entries until one carries a current fitness
        while True:
            f = hf[0]
            v = hid[0]
            hn -= 1
            hf[0] = hf[hn]
            hid[0] = hid[hn]
            i = 0
            while True:
                l = 2 * i + 1
                r = l + 1
                s = i
                if l < hn and hf[l] < hf[s]:
                    s = l
                if r < hn and hf[r] < hf[s]:
                    s = r
                if s == i:
                    break
                hf[s], hf[i] = hf[i], hf[s]
                hid[s], hid[i] = hid[i], hid[s]
                i = s
            if fitness[v] == f:
                break
        if f > p:
            return 0, nxt, steps

        nc = root_nc if v == 0 else other_nc
        c0 = child0[v]
        if c0 < 0:
            c0 = nxt
            child0[v] = c0
            for i in range(nc):
                parent[nxt + i] = v
            nxt += nc

        # compact stale heap entries if the next pushes would not fit
        if hn + nc + 2 > heap_cap:
            live = 0
            for i in range(hn):
                if fitness[hid[i]] == hf[i]:
                    hf[live] = hf[i]
                    hid[live] = hid[i]
                    live += 1
            hn = live
            for start in range(hn // 2 - 1, -1, -1):
                i = start
                while True:
                    l = 2 * i + 1
                    r = l + 1
                    s = i
                    if l < hn and hf[l] < hf[s]:
                        s = l
                    if r < hn and hf[r] < hf[s]:
                        s = r
                    if s == i:
                        break
                    hf[s], hf[i] = hf[i], hf[s]
                    hid[s], hid[i] = hid[i], hid[s]
                    i = s

        # resample v, its parent (if any), and its children
        for slot in range(nc + 2):
            if slot == 0:
                w = v
            elif slot == 1:
                w = parent[v]
                if w < 0:
                    continue
            else:
                w = c0 + slot - 2
            ctr += phi
            u = (np.float64(_mix64(ctr) >> _U(11)) + 1.0) * inv53
            fitness[w] = u
            i = hn
            hf[i] = u
            hid[i] = w
            while i > 0:
                par = (i - 1) >> 1
                if hf[par] > hf[i]:
                    hf[par], hf[i] = hf[i], hf[par]
                    hid[par], hid[i] = hid[i], hid[par]
                    i = par
                else:
                    break
            hn += 1
        steps += 1
