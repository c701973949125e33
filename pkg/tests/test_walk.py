"""Event-driven walks: clocks, jump chains, rescaling, martingales."""

import math

import numpy as np
import pytest
import scipy.stats

import rcm
from rcm.walk import chi_at_positions, occupation_fractions, walk_positions_at


def test_path_structure_and_determinism(env_elliptic16):
    env = env_elliptic16
    p1 = rcm.simulate_vsrw(env, 0, 25.0, seed=3)
    p2 = rcm.simulate_vsrw(env, 0, 25.0, seed=3)
    assert np.array_equal(p1.times, p2.times)
    assert np.array_equal(p1.positions, p2.positions)
    assert p1.times[0] > 0
    assert np.all(np.diff(p1.times) > 0)
    steps = np.abs(np.diff(p1.positions, axis=0)).sum(axis=1)
    assert np.all(steps == 1)
    p3 = rcm.simulate_vsrw(env, 0, 25.0, seed=4)
    assert p3.num_jumps != p1.num_jumps or not np.array_equal(p3.times, p1.times)


def test_vsrw_jump_rate_unit_conductance(env_const):
    # Poisson clock of rate 2d on the unit-conductance torus
    t = 3.0
    _, jumps = walk_positions_at(env_const, 0, [t], 10_000, seed=1)
    target = 2 * 2 * t
    se = jumps.std(ddof=1) / math.sqrt(jumps.size)
    assert abs(jumps.mean() - target) <= 3 * se


def test_vsrw_covariance_unit_conductance(env_const):
    t = 4.0
    pos, _ = walk_positions_at(env_const, 0, [t], 10_000, seed=2)
    x = pos[:, 0, :].astype(float)
    for j in range(2):
        var = x[:, j] ** 2
        se = var.std(ddof=1) / math.sqrt(var.size)
        assert abs(var.mean() - 2 * t) <= 3 * se
    cross = x[:, 0] * x[:, 1]
    assert abs(cross.mean()) <= 3 * cross.std(ddof=1) / math.sqrt(cross.size)


def test_csrw_unit_jump_rate(env_elliptic16):
    t = 5.0
    _, jumps = walk_positions_at(env_elliptic16, 0, [t], 10_000, seed=3,
                                 scheme="CSRW")
    se = jumps.std(ddof=1) / math.sqrt(jumps.size)
    assert abs(jumps.mean() - t) <= 3 * se


def test_csrw_vsrw_share_jump_chain(env_elliptic16):
    # identical seed discipline: same discrete chain, different clocks
    env = env_elliptic16
    pv = rcm.simulate_vsrw(env, 0, 8.0, seed=11)
    pc = rcm.simulate_csrw(env, 0, 40.0, seed=11)
    m = min(pv.num_jumps, pc.num_jumps)
    assert m > 10
    assert np.array_equal(pv.positions[:m], pc.positions[:m])
    assert not np.array_equal(pv.times[:m], pc.times[:m])


def test_csrw_covariance_time_change(env_const):
    # unit conductances: CSRW covariance is VSRW covariance / (2d)
    t = 8.0
    pos_v, _ = walk_positions_at(env_const, 0, [t], 8000, seed=5)
    pos_c, _ = walk_positions_at(env_const, 0, [t], 8000, seed=6, scheme="CSRW")
    for j in range(2):
        vv = (pos_v[:, 0, j].astype(float) ** 2)
        cc = (pos_c[:, 0, j].astype(float) ** 2)
        target = vv.mean() / 4.0
        se = math.sqrt(cc.std(ddof=1) ** 2 / cc.size
                       + (vv.std(ddof=1) / 4.0) ** 2 / vv.size)
        assert abs(cc.mean() - target) <= 3 * se


def test_holding_time_distribution():
    # holding times collected at one fixed vertex are Exp(mu(x))
    env = rcm.generate_env(rcm.spec_uniform_elliptic(0.5, 2.0, 2, 3, seed=7))
    path = rcm.simulate_vsrw(env, 0, 30_000.0, seed=8)
    idx = env.lattice.vertex_indices(path.positions)
    target = 0
    holds = []
    arrive = np.concatenate([[0.0], path.times])
    for i in range(path.num_jumps):
        if idx[i] == target:
            holds.append(path.times[i] - arrive[i])
    holds = np.asarray(holds)
    assert holds.size > 10_000
    res = scipy.stats.kstest(holds, "expon", args=(0.0, 1.0 / env.mu[target]))
    assert res.pvalue > 1e-3


def test_rescale_path(env_const):
    path = rcm.simulate_vsrw(env_const, 0, 100.0, seed=9)
    r = rcm.rescale_path(path, 5)
    assert np.array_equal(r.eval(0.0), path.positions[0] / 5.0)
    ident = rcm.rescale_path(path, 1)
    assert np.array_equal(ident.eval(3.0), path.position_at(3.0))
    with pytest.raises(ValueError):
        r.eval(100.0)  # horizon 100 < 25 * 100

    # binary-search lookup vs a linear-scan oracle
    from rcm import rng

    queries = rng.uniform01(rng.stream_key(1, 1), np.arange(100, dtype=np.uint64)) * 4.0
    for t in queries:
        expected_idx = 0
        while expected_idx < path.num_jumps and path.times[expected_idx] <= 5.0 ** 2 * t:
            expected_idx += 1
        assert np.array_equal(r.eval(t), path.positions[expected_idx] / 5.0)


def test_martingale_unit_conductance(env_const):
    path = rcm.simulate_vsrw(env_const, 0, 20.0, seed=10)
    sol = rcm.solve_corrector(env_const)
    m = rcm.martingale_path(path, sol)
    assert np.array_equal(m, path.positions.astype(float))


def test_martingale_mean_zero(env_elliptic16):
    env = env_elliptic16
    sol = rcm.solve_corrector(env)
    t = 4.0
    pos, _ = walk_positions_at(env, 0, [1.0, t], 10_000, seed=12)
    start = env.lattice.coords_of(0)[None, :]
    m0 = start - chi_at_positions(sol, start)
    for qi in (0, 1):
        m = pos[:, qi, :] - chi_at_positions(sol, pos[:, qi, :]) - m0
        for j in range(2):
            se = m[:, j].std(ddof=1) / math.sqrt(m.shape[0])
            assert abs(m[:, j].mean()) <= 3 * se
    # arbitrary projections inherit the martingale property
    v = np.array([0.3, -1.2])
    m = pos[:, 1, :] - chi_at_positions(sol, pos[:, 1, :]) - m0
    proj = m @ v
    assert abs(proj.mean()) <= 3 * proj.std(ddof=1) / math.sqrt(proj.size)


def test_martingale_lattice_mismatch(env_elliptic16, env_const):
    path = rcm.simulate_vsrw(env_const, 0, 5.0, seed=1)
    sol = rcm.solve_corrector(env_elliptic16)
    with pytest.raises(ValueError):
        rcm.martingale_path(path, sol)


def test_corrector_sup_along_path(env_elliptic16):
    env = env_elliptic16
    sol = rcm.solve_corrector(env)
    n, T = 4, 1.0
    path = rcm.simulate_vsrw(env, 0, n * n * T, seed=13)
    sup = rcm.corrector_sup_along_path(path, sol, n, T)
    assert 0.0 <= sup <= np.abs(sol.chi).max() / n
    with pytest.raises(ValueError):
        rcm.corrector_sup_along_path(path, sol, n, 2.0)
    const = rcm.generate_env(rcm.spec_constant(1.0, 2, 16))
    p0 = rcm.simulate_vsrw(const, 0, n * n * T, seed=14)
    assert rcm.corrector_sup_along_path(p0, rcm.solve_corrector(const), n, T) == 0.0


def test_occupation_uniformity_trend(env_const):
    # chi-square distance to uniform shrinks with the horizon
    short = [rcm.occupation_uniformity(env_const, 1_000.0, seed=s) for s in range(6)]
    long = [rcm.occupation_uniformity(env_const, 10_000.0, seed=s + 50) for s in range(6)]
    assert np.median(long) < np.median(short)
    assert min(short + long) >= 0.0


def test_occupation_fractions_sum(env_elliptic16):
    frac = occupation_fractions(env_elliptic16, 0, 500.0, seed=3)
    assert frac.sum() == pytest.approx(1.0, rel=1e-9)


def test_walk_config_validation():
    with pytest.raises(ValueError):
        rcm.WalkConfig(scheme="JUMP")
    with pytest.raises(ValueError):
        rcm.WalkConfig(t_max=0.0)
    with pytest.raises(ValueError):
        rcm.WalkConfig(count=0)


def test_max_jumps_cap(env_const):
    with pytest.raises(RuntimeError, match="cap"):
        rcm.simulate_vsrw(env_const, 0, 1000.0, seed=1, max_jumps=10)


def test_query_validation(env_const):
    with pytest.raises(ValueError):
        walk_positions_at(env_const, 0, [2.0, 1.0], 10, seed=0)
    with pytest.raises(ValueError):
        walk_positions_at(env_const, 0, [-1.0], 10, seed=0)


def test_corrector_sup_trend_over_sizes():
    # median sup |chi(X_s)|/n over 100 paths decreases across n = 16, 32, 64
    meds = []
    for n in (16, 32, 64):
        env = rcm.generate_env(rcm.spec_uniform_elliptic(0.5, 2.0, 2, n, seed=5))
        sol = rcm.solve_corrector(env)
        sups = [rcm.corrector_sup_along_path(
            rcm.simulate_vsrw(env, 0, float(n * n), seed=100 + k), sol, n, 1.0)
            for k in range(100)]
        meds.append(float(np.median(sups)))
    assert meds[0] > meds[1] > meds[2]
