import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from avalanche_lab.avalanche import (
    STATUS_DIED,
    STATUS_RANGE_CAP,
    AvalancheState,
    init_avalanche,
    init_classic,
    run_avalanche,
    run_classic_avalanche,
    run_classic_bs,
    run_classic_tree,
    step_classic,
    step_forgetful,
)
from avalanche_lab.graph import Cycle, LatticeZd, RegularTree
from avalanche_lab.rng import StepKeyedSampler, TrialStreams
from avalanche_lab.stats import equivalence_test, sample_avalanche, sample_branching


class FakeSampler:
    """Feeds prescribed uniforms to the engine, one list per step."""

    def __init__(self, per_step):
        self.per_step = dict(per_step)
        self.key = 0

    def uniform_seq(self, vhashes, step):
        return list(self.per_step[step][: len(vhashes)])

    def uniforms(self, vhashes, step):
        return np.asarray(self.uniform_seq(vhashes, step))


def test_init_zd1():
    s = init_avalanche(LatticeZd(1), 0.5)
    assert s.steps == 1
    assert s.bounds == {(0,): 0.0, (1,): 0.0, (-1,): 0.0}
    assert s.range_set == {(0,), (1,), (-1,)}


def test_init_tree3():
    s = init_avalanche(RegularTree(3), 0.3)
    assert len(s.bounds) == 4
    assert all(y == 0.0 for y in s.bounds.values())


def test_init_cycle5():
    s = init_avalanche(Cycle(5), 0.9)
    assert set(s.bounds) == {4, 0, 1}
    assert s.steps == 1


def test_init_rejects_bad_threshold():
    with pytest.raises(ValueError):
        init_avalanche(LatticeZd(1), 0.0)
    with pytest.raises(ValueError):
        init_avalanche(LatticeZd(1), 1.0)


def test_recovered_uniform_matches_bound_transform():
    # bounds 0.2/0.3/0.6; the 0.2 vertex realizes the minimum 0.5, so its
    # underlying uniform is (0.5-0.2)/(1-0.2) = 3/8
    s = init_avalanche(LatticeZd(1), 0.7)
    order = s._verts  # [(0,), (1,), (-1,)]
    assert order == [(0,), (1,), (-1,)]
    s._y[0:3] = [0.3, 0.2, 0.6]
    ev = step_forgetful(s, FakeSampler({1: [0.9, 0.375, 0.9]}))
    assert not ev.terminated
    assert ev.vertex == (1,)
    assert ev.u == 0.375
    assert abs(ev.minimum - 0.5) < 1e-12
    assert abs(ev.u - (ev.minimum - 0.2) / (1 - 0.2)) < 1e-12
    # non-neighbours condition up to the minimum, K and neighbours reset
    b = s.bounds
    assert b[(1,)] == 0.0 and b[(0,)] == 0.0 and b[(2,)] == 0.0
    assert b[(-1,)] == 0.6  # already above the minimum: unchanged


def test_termination_leaves_state_unchanged():
    s = init_avalanche(LatticeZd(1), 0.5)
    before = s.bounds
    ev = step_forgetful(s, FakeSampler({1: [0.9, 0.8, 0.7]}))
    assert ev.terminated
    assert ev.minimum == 0.7
    assert s.bounds == before
    assert s.steps == 1
    with pytest.raises(RuntimeError):
        step_forgetful(s, FakeSampler({1: [0.9, 0.8, 0.7]}))


def test_bound_monotonicity_and_fitness_law():
    streams = TrialStreams(77, 0)
    sampler = streams.sampler()
    s = init_avalanche(Cycle(20), 0.6)
    while not s.terminated and s.steps < 200:
        prev = s.bounds
        n = s._n
        u = sampler.uniforms(s._vh[:n], s.steps)
        f = s._y[:n] + (1.0 - s._y[:n]) * u
        assert np.all(f > s._y[:n]) and np.all(f <= 1.0)
        ev = step_forgetful(s, sampler)
        if ev.terminated:
            assert ev.minimum > 0.6
            break
        assert ev.minimum <= 0.6
        assert 0.0 < ev.u <= 1.0
        cur = s.bounds
        nbrs = set(s.neighbors(ev.vertex)) | {ev.vertex}
        for v, y_old in prev.items():
            if v in nbrs:
                assert cur[v] == 0.0
            else:
                assert cur[v] >= y_old


def test_single_step_termination_probability_on_z():
    # all three fresh uniforms above p kills the avalanche immediately
    p, trials = 0.5, 20_000
    dead = 0
    for i in range(trials):
        s = init_avalanche(LatticeZd(1), p)
        dead += step_forgetful(s, TrialStreams(5, i).sampler()).terminated
    freq = dead / trials
    sigma = math.sqrt(0.125 * 0.875 / trials)
    assert abs(freq - 0.125) < 4 * sigma


def test_range_lower_bound_and_step_bound():
    s = sample_avalanche(RegularTree(4), 0.2, 500, range_cap=2000, step_cap=100_000,
                         master_seed=3, engine="classic")
    assert np.all(s["range"] >= 5)
    assert np.all(s["range"] <= 1 + 4 * s["steps"])
    f = sample_avalanche(LatticeZd(1), 0.4, 500, range_cap=2000, step_cap=100_000,
                         master_seed=4, engine="forgetful")
    assert np.all(f["range"] >= 3)
    assert np.all(f["range"] <= 1 + 2 * f["steps"])


def test_trimming_soundness():
    # same keyed stream: trimmed eviction must not change the trajectory
    for graph, p in [(LatticeZd(1), 0.5), (RegularTree(3), 0.3)]:
        for i in range(150):
            key = TrialStreams(911, i).engine_key
            a = run_avalanche(graph, p, range_cap=500, step_cap=20_000,
                              sampler=StepKeyedSampler(key), trimmed=False)
            b = run_avalanche(graph, p, range_cap=500, step_cap=20_000,
                              sampler=StepKeyedSampler(key), trimmed=True)
            if a.status in (STATUS_DIED, STATUS_RANGE_CAP):
                assert (a.status, a.range, a.steps) == (b.status, b.range, b.steps)


def test_trimmed_state_only_tracks_low_bounds():
    s = init_avalanche(Cycle(30), 0.3, trimmed=True)
    sampler = TrialStreams(13, 0).sampler()
    while not s.terminated:
        step_forgetful(s, sampler)
        assert all(y <= 0.3 for y in s.bounds.values())


def test_classic_init_matches_forced_first_update():
    rng = TrialStreams(21, 0).classic
    s = init_classic(LatticeZd(2), 0.4, rng=rng)
    assert s.steps == 1
    assert set(s.fitness) == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}


def test_classic_step_event_fields():
    rng = TrialStreams(22, 0).classic
    s = init_classic(Cycle(10), 0.8, rng=rng)
    ev = step_classic(s, rng)
    if not ev.terminated:
        assert ev.minimum <= 0.8
        assert ev.vertex in s.fitness
    else:
        assert ev.minimum > 0.8


def test_engine_equivalence_on_cycle():
    # classic and forgetful engines induce the same range law
    g = Cycle(20)
    for p, seed in [(0.2, 31), (0.3, 32)]:
        a = sample_avalanche(g, p, 20_000, range_cap=25, step_cap=100_000,
                             master_seed=seed, engine="classic")
        b = sample_avalanche(g, p, 20_000, range_cap=25, step_cap=100_000,
                             master_seed=seed + 1000, engine="forgetful")
        rep = equivalence_test(a["range"], b["range"], significance=0.01)
        assert rep.passed, rep.to_dict()


def test_tree_kernel_matches_generic_classic():
    g = RegularTree(3)
    kern = sample_avalanche(g, 0.2, 30_000, range_cap=500, step_cap=100_000,
                            master_seed=41, engine="classic")  # kernel path
    slow_rows = []
    for i in range(30_000):
        out = run_classic_avalanche(g, 0.2, range_cap=500, step_cap=100_000,
                                    rng=TrialStreams(42, i).classic)
        slow_rows.append(out.range)
    rep = equivalence_test(kern["range"], np.asarray(slow_rows), significance=0.01)
    assert rep.passed, rep.to_dict()


def test_tree_kernel_direct_outcome_shape():
    out = run_classic_tree(RegularTree(5), 0.15, range_cap=10_000, step_cap=1_000_000, seed=7)
    assert out.status == STATUS_DIED
    assert out.range >= 6
    assert out.steps >= 1


def test_avalanche_survival_regimes_on_tree():
    # far-subcritical thresholds die out; far-supercritical ones hit the cap
    low = sample_avalanche(RegularTree(5), 0.01, 1_000, range_cap=10_000,
                           step_cap=1_000_000, master_seed=51)
    assert np.all(low["status"] == 0)
    high = sample_avalanche(RegularTree(5), 0.9, 200, range_cap=1_000,
                            step_cap=1_000_000, master_seed=52)
    assert np.mean(high["status"] == 1) > 0.5


def test_steps_dominated_by_branching_progeny():
    # every avalanche step consumes one active vertex and spawns at most a
    # Binomial(degree+1, p) batch of fresh actives, so step counts are
    # stochastically below branching total progeny
    delta, p, n = 4, 0.12, 20_000
    av = sample_avalanche(RegularTree(delta), p, n, range_cap=5_000,
                          step_cap=100_000, master_seed=61)
    br = sample_branching(delta + 1, p, n, cap=100_000, master_seed=62)
    mean_steps = av["steps"].mean()
    mean_progeny = br["total_progeny"].mean()
    se = math.sqrt(av["steps"].var() / n + br["total_progeny"].var() / n)
    assert mean_steps <= mean_progeny + 3 * se


def test_classic_bs_tiny_cycle_is_uniform():
    # on three sites every vertex is a neighbour of the minimum, so the
    # state refreshes completely and the marginal law stays uniform
    from scipy import stats as sps

    gen = np.random.Generator(np.random.PCG64(5))
    masses, edges = run_classic_bs(3, burn_in=200, measure=20_000, rng=gen, bins=20)
    assert abs(masses.sum() - 1.0) <= 1e-12
    counts = masses * 3 * 20_000
    stat = float(((counts - counts.mean()) ** 2 / counts.mean()).sum())
    assert stat < sps.chi2.ppf(0.999, 19)


def test_classic_bs_mass_concentrates_above_threshold():
    gen = np.random.Generator(np.random.PCG64(6))
    masses, edges = run_classic_bs(50, burn_in=30_000, measure=20_000, rng=gen, bins=100)
    assert abs(masses.sum() - 1.0) <= 1e-12
    assert masses[:30].sum() < 0.15  # little mass below 0.3
    assert masses[60:].sum() > 0.5  # bulk above 0.6


def test_classic_bs_rejects_bad_sizes():
    gen = np.random.Generator(np.random.PCG64(7))
    with pytest.raises(ValueError):
        run_classic_bs(2, 10, 10, gen)
    with pytest.raises(ValueError):
        run_classic_bs(5, 10, 0, gen)


def test_caps_reported():
    out = run_avalanche(RegularTree(5), 0.9, range_cap=50, step_cap=10_000, sampler=3)
    assert out.status == STATUS_RANGE_CAP
    assert out.range >= 50
    out2 = run_avalanche(RegularTree(5), 0.9, range_cap=10_000, step_cap=5, sampler=4)
    assert out2.status == "step_cap"
    assert out2.steps == 5


@given(st.integers(0, 2**64 - 1), st.integers(1, 500))
def test_keyed_draws_do_not_depend_on_companions(key, step):
    sampler = StepKeyedSampler(key)
    vh = np.arange(1, 40, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    full = sampler.uniforms(vh, step)
    subset = sampler.uniforms(vh[::3], step)
    assert np.array_equal(full[::3], subset)
    assert np.all((full > 0.0) & (full <= 1.0))


def test_scalar_and_vector_sampler_paths_agree():
    sampler = StepKeyedSampler(987654321)
    vh = (np.arange(100, dtype=np.uint64) + np.uint64(3)) * np.uint64(0x9E3779B97F4A7C15)
    vec = sampler.uniforms(vh, 17)  # large input: vector path
    seq = sampler.uniform_seq(vh.tolist(), 17)
    assert np.array_equal(vec, np.asarray(seq))
    for i in (0, 7, 99):
        assert vec[i] == sampler.uniform(int(vh[i]), 17)
