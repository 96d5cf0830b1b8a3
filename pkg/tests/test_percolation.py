import itertools
import math

import numpy as np
import pytest

from avalanche_lab.graph import Cycle, LatticeZd, RegularTree, RootedTreeStar
from avalanche_lab.percolation import (
    branching_total_progeny,
    cluster_size_pmf_Z,
    extinction_prob,
    grow_cluster,
    grow_cluster_tree_fast,
)
from avalanche_lab.rng import TrialStreams
from avalanche_lab.stats import equivalence_test, sample_branching, sample_percolation


def enumerate_cluster_pmf(p: float, half_width: int = 6) -> dict:
    """Cluster-size law on Z by brute force over open/closed window patterns.

    Exact for sizes whose cluster and closed boundary fit in the window,
    i.e. k <= half_width.
    """
    sites = list(range(-half_width, 0)) + list(range(1, half_width + 1))
    pmf: dict = {}
    for pattern in itertools.product([True, False], repeat=len(sites)):
        state = dict(zip(sites, pattern))
        weight = 1.0
        for is_open in pattern:
            weight *= p if is_open else 1.0 - p
        size = 1
        for x in range(1, half_width + 1):
            if state[x]:
                size += 1
            else:
                break
        for x in range(-1, -half_width - 1, -1):
            if state[x]:
                size += 1
            else:
                break
        pmf[size] = pmf.get(size, 0.0) + weight
    return pmf


def test_pmf_matches_enumeration_oracle():
    for p in (0.3, 0.4, 0.5):
        oracle = enumerate_cluster_pmf(p)
        for k in range(1, 7):
            assert abs(oracle[k] - cluster_size_pmf_Z(p, k)) < 1e-12


def test_pmf_examples():
    assert abs(cluster_size_pmf_Z(0.4, 1) - 0.36) < 1e-15
    assert abs(cluster_size_pmf_Z(0.5, 2) - 0.25) < 1e-15
    total = sum(cluster_size_pmf_Z(0.3, k) for k in range(1, 4000))
    assert abs(total - 1.0) < 1e-12


def test_pmf_rejects_bad_arguments():
    with pytest.raises(ValueError):
        cluster_size_pmf_Z(0.4, 0)
    with pytest.raises(ValueError):
        cluster_size_pmf_Z(1.0, 3)


def test_grow_cluster_matches_pmf():
    trials = 30_000
    s = sample_percolation(LatticeZd(1), 0.4, trials, range_cap=10_000, master_seed=71)
    for k in range(1, 7):
        freq = float(np.mean(s["cluster_size"] == k))
        target = cluster_size_pmf_Z(0.4, k)
        sigma = math.sqrt(target * (1 - target) / trials)
        assert abs(freq - target) < 4 * sigma + 1e-9


def test_both_origin_neighbors_closed_probability():
    trials = 30_000
    s = sample_percolation(LatticeZd(1), 0.5, trials, range_cap=10_000, master_seed=72)
    freq = float(np.mean(s["origin_neighbors_closed"]))
    sigma = math.sqrt(0.25 * 0.75 / trials)
    assert abs(freq - 0.25) < 4 * sigma


def test_small_p_limit():
    s = sample_percolation(RegularTree(4), 0.01, 2_000, range_cap=1_000, master_seed=73,
                           fast=False)
    lone = (s["cluster_size"] == 1) & (s["range"] == 5)
    assert np.mean(lone) > 0.9


def test_range_identity_on_z():
    # on Z a resolved cluster always ends with two closed boundary sites
    s = sample_percolation(LatticeZd(1), 0.45, 5_000, range_cap=10_000, master_seed=74)
    assert np.all(s["range"] == s["cluster_size"] + 2)


def test_range_bound_per_run():
    for graph, delta in [(LatticeZd(2), 4), (RegularTree(5), 5), (Cycle(30), 2)]:
        s = sample_percolation(graph, 0.3, 2_000, range_cap=5_000, master_seed=75,
                               fast=False)
        done = s["status"] == 0
        assert np.all(s["range"][done] <= delta * s["cluster_size"][done] + 1)


def test_tree_fast_path_matches_frontier():
    g = RegularTree(4)
    fast = sample_percolation(g, 0.25, 30_000, range_cap=2_000, master_seed=76, fast=True)
    slow = sample_percolation(g, 0.25, 30_000, range_cap=2_000, master_seed=77, fast=False)
    assert equivalence_test(fast["cluster_size"], slow["cluster_size"]).passed
    assert equivalence_test(fast["range"], slow["range"]).passed


def test_treestar_cluster_equals_branching_progeny():
    # open cluster at the root of the degree-asymmetric tree is a
    # Galton-Watson tree with Binomial(n-1, p) offspring
    n, p, trials = 4, 0.3, 30_000
    sizes = []
    for i in range(trials):
        out = grow_cluster(RootedTreeStar(n), p, TrialStreams(78, i).gen, range_cap=5_000)
        sizes.append(out.cluster_size)
    br = sample_branching(n - 1, p, trials, cap=5_000, master_seed=79)
    rep = equivalence_test(np.asarray(sizes), br["total_progeny"])
    assert rep.passed, rep.to_dict()


def test_grow_cluster_cap_and_validation():
    gen = TrialStreams(80, 0).gen
    out = grow_cluster(RegularTree(5), 0.9, gen, range_cap=100)
    assert out.status == "range_cap"
    assert out.range >= 100
    with pytest.raises(ValueError):
        grow_cluster(LatticeZd(1), 0.0, gen)
    with pytest.raises(ValueError):
        grow_cluster_tree_fast(RegularTree(3), 1.0, gen)


def test_frontier_keeps_sets_consistent():
    gen = TrialStreams(81, 0).gen
    out = grow_cluster(LatticeZd(2), 0.55, gen, range_cap=500, keep_sets=True)
    assert (0, 0) in out.open_cluster
    assert not (out.open_cluster & out.closed_examined)
    assert len(out.open_cluster) == out.cluster_size
    assert len(out.open_cluster) + len(out.closed_examined) == out.range
    # every closed vertex must touch the open cluster
    g = LatticeZd(2)
    for v in out.closed_examined:
        assert any(w in out.open_cluster for w in g.neighbors(v))


def test_extinction_prob_examples():
    # critical case: mean offspring 1 dies out almost surely
    assert extinction_prob(2, 0.5) == 1.0
    assert extinction_prob(3, 1.0 / 3.0) == 1.0
    assert extinction_prob(5, 0.05) == 1.0
    # supercritical: smallest root of 0.36 q^2 - 0.52 q + 0.16 = 0
    disc = math.sqrt(0.52**2 - 4 * 0.36 * 0.16)
    root = (0.52 - disc) / (2 * 0.36)
    q = extinction_prob(2, 0.6)
    assert abs(q - root) < 1e-9
    assert abs(q - 4.0 / 9.0) < 1e-9
    assert extinction_prob(2, 1.0) == 0.0


def test_extinction_prob_validation():
    with pytest.raises(ValueError):
        extinction_prob(0, 0.5)
    with pytest.raises(ValueError):
        extinction_prob(2, 1.5)


def test_branching_extinction_frequency():
    trials = 20_000
    s = sample_branching(2, 0.6, trials, cap=100_000, master_seed=82)
    freq = float(np.mean(~s["cap_hit"]))
    sigma = math.sqrt((4 / 9) * (5 / 9) / trials)
    assert abs(freq - 4 / 9) < 4 * sigma


def test_subcritical_branching_never_caps():
    s = sample_branching(3, 0.2, 5_000, cap=100_000, master_seed=83)
    assert not s["cap_hit"].any()
    assert np.all(s["total_progeny"] >= 1)


def test_branching_outcome_fields():
    gen = TrialStreams(84, 0).gen
    out = branching_total_progeny(2, 0.0, gen, cap=100)
    assert out.total_progeny == 1 and out.generations == 0 and not out.cap_hit
    out = branching_total_progeny(1, 1.0, gen, cap=50)
    assert out.cap_hit and out.total_progeny >= 50


def test_site_percolation_critical_transition_on_tree():
    # survival switches on near 1/(degree-1) = 0.25
    below = sample_percolation(RegularTree(5), 0.20, 4_000, range_cap=4_000, master_seed=85)
    above = sample_percolation(RegularTree(5), 0.30, 4_000, range_cap=4_000, master_seed=86)
    assert np.mean(below["status"] == 1) < 0.005
    assert np.mean(above["status"] == 1) > 0.01
