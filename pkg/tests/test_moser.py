"""Sobolev/energy/maximum machinery against oracles and frozen constants."""

import math

import numpy as np
import pytest

import rcm
from rcm import calibration
from rcm.lattice import Ball, boundary_vertices, divergence, neighbor_indices
from rcm.moser import (build_cutoff_family, energy_estimate_check, exponents,
                       linear_cutoff, moser_iterate, poincare_l1_check,
                       poisson_solve_dirichlet, power_norm, signed_power_field,
                       small_exponent_bound, sobolev_check, sobolev_s1_ratio)
from rcm.solver import SolverConfig

from conftest import random_vertex_field


# ---------------------------------------------------------------------------
# exponents


def test_exponents_rho_at_q_half_d():
    from rcm.moser import rho_exponent

    for d in (2, 3, 4, 6):
        assert rho_exponent(d, d / 2) == pytest.approx(1.0)
    for d in (3, 4, 6):
        assert exponents(d, 3.0, d / 2).rho == pytest.approx(1.0)


def test_exponents_d3_infinite():
    e = exponents(3, math.inf, math.inf)
    assert e.rho == pytest.approx(3.0)
    assert e.p_star == 1.0
    assert e.alpha(3) == pytest.approx(27.0)
    assert e.kappa == pytest.approx(0.75)


def test_exponents_d2_rho_equals_q():
    for q in (1.5, 2.0, 5.0):
        assert exponents(2, 4.0, q).rho == pytest.approx(q)


def test_contraction_iff_moment_condition():
    grid = [(2, 3.0, 3.0), (2, 2.0, 2.0), (2, 6.0, 1.5), (3, 4.0, 4.0),
            (3, 3.0, 3.0), (3, math.inf, 2.0), (4, math.inf, math.inf),
            (2, math.inf, 2.0), (5, 4.0, 100.0)]
    for d, p, q in grid:
        e = exponents(d, p, q)
        assert e.contracts == rcm.check_moment_condition(p, q, d), (d, p, q)
    # boundary cases collapse to r = 1 exactly
    assert exponents(2, 2.0, 2.0).r == pytest.approx(1.0)
    assert exponents(3, 3.0, 3.0).r == pytest.approx(1.0)


def test_signed_power_field():
    assert signed_power_field(np.array([-4.0]), 0.5)[0] == pytest.approx(-2.0)
    u = np.array([-3.0, 0.0, 2.0])
    assert np.array_equal(signed_power_field(u, 1.0), u)
    v = random_vertex_field(rcm.TorusLattice(2, 5), 0)
    back = signed_power_field(signed_power_field(v, 3.0), 1.0 / 3.0)
    assert np.allclose(back, v, atol=1e-10)
    with pytest.raises(ValueError):
        signed_power_field(u, 0.0)


def test_power_norm_large_exponents():
    vals = np.array([1e-8, 2e-8, 5e-9])
    # stable at exponents that would underflow the naive power sum
    res = power_norm(vals, 4096.0)
    assert res == pytest.approx(2e-8 * np.mean((vals / 2e-8) ** 4096) ** (1 / 4096.0))
    assert 0 < res <= 2e-8


# ---------------------------------------------------------------------------
# cutoffs


def test_cutoff_family_invariants():
    for n, sigma, sigma_p, side in ((16, 1.0, 0.5, 64), (24, 0.875, 0.5, 96),
                                    (19, 1.0, 0.625, 80), (13, 0.9, 0.55, 56)):
        lat = rcm.TorusLattice(2, side)
        x0 = lat.index_of((side // 2,) * 2)
        fam = build_cutoff_family(lat, x0, n, sigma, sigma_p)
        dist = lat.distance_field(x0)
        prev_r = int(math.floor(sigma * n))
        for lv in fam.levels:
            eta = lv.eta
            grad = np.abs(rcm.gradient(lat, eta)).max()
            assert grad <= 1.0 / (lv.tau_k * n) + 1e-12
            assert np.all(eta[dist <= lv.r_in] == 1.0)
            assert np.all(eta[dist >= lv.r_out] == 0.0)
            assert lv.r_out == prev_r
            # plateau at most one vertex below floor(sigma_{k+1} n)
            nominal = int(math.floor((lv.sigma_k - lv.tau_k) * n))
            assert lv.r_in >= min(nominal, lv.r_out - 1) - 1
            prev_r = lv.r_in
        assert prev_r >= int(math.floor(sigma_p * n)) - 1


def test_cutoff_linear_in_distance():
    lat = rcm.TorusLattice(2, 40)
    x0 = lat.index_of((20, 20))
    eta = linear_cutoff(lat, x0, 9, 4)
    dist = lat.distance_field(x0)
    expected = np.clip((9 - dist) / 5.0, 0.0, 1.0)
    assert np.allclose(eta, expected)


# ---------------------------------------------------------------------------
# Sobolev


def test_s1_ratio_single_vertex():
    lat = rcm.TorusLattice(2, 10)
    u = np.zeros(lat.num_vertices)
    u[lat.index_of((4, 4))] = 1.0
    assert sobolev_s1_ratio(lat, u) == pytest.approx(0.25)


def test_s1_ratio_box_exact():
    # m x m box: numerator m, denominator 4m (edge-boundary count oracle)
    lat = rcm.TorusLattice(2, 20)
    for m in (2, 3, 5):
        u = np.zeros(lat.num_vertices).reshape(lat.shape)
        u[4:4 + m, 6:6 + m] = 1.0
        u = u.reshape(-1)
        boundary_edges = 4 * m
        assert float(np.sum(np.abs(rcm.gradient(lat, u)))) == boundary_edges
        assert sobolev_s1_ratio(lat, u) == pytest.approx(m / (4.0 * m))


def test_s1_ratio_errors():
    lat = rcm.TorusLattice(2, 8)
    with pytest.raises(ValueError):
        sobolev_s1_ratio(lat, np.zeros(lat.num_vertices))
    with pytest.raises(ValueError):
        sobolev_s1_ratio(lat, np.ones(lat.num_vertices))  # wraps every axis


def test_sobolev_check_zero_field(env_elliptic16):
    env = env_elliptic16
    lat = env.lattice
    x0 = lat.index_of((8, 8))
    ball = Ball(lat, x0, 6)
    eta = linear_cutoff(lat, x0, 6, 3)
    lhs, core = sobolev_check(env, ball, eta, np.zeros(lat.num_vertices), q=2.0)
    assert lhs == 0.0
    assert core >= 0.0


def test_sobolev_check_rejects_bad_cutoff(env_elliptic16):
    env = env_elliptic16
    lat = env.lattice
    ball = Ball(lat, lat.index_of((8, 8)), 5)
    u = random_vertex_field(lat, 3)
    with pytest.raises(ValueError):
        sobolev_check(env, ball, np.ones(lat.num_vertices), u, q=2.0)
    bad = np.zeros(lat.num_vertices)
    bad[ball.vertices()] = 1.5
    with pytest.raises(ValueError):
        sobolev_check(env, ball, bad, u, q=2.0)


def test_sobolev_q_inf_needs_d3(env_elliptic16):
    env = env_elliptic16
    lat = env.lattice
    ball = Ball(lat, lat.index_of((8, 8)), 5)
    eta = linear_cutoff(lat, lat.index_of((8, 8)), 5, 2)
    with pytest.raises(ValueError):
        sobolev_check(env, ball, eta, random_vertex_field(lat, 1), q=math.inf)
    env3 = rcm.generate_env(rcm.spec_uniform_elliptic(0.5, 2.0, 3, 11, seed=2))
    lat3 = env3.lattice
    x0 = lat3.index_of((5, 5, 5))
    ball3 = Ball(lat3, x0, 4)
    eta3 = linear_cutoff(lat3, x0, 4, 2)
    lhs, core = sobolev_check(env3, ball3, eta3,
                              random_vertex_field(lat3, 2), q=math.inf)
    assert lhs > 0 and core > 0


def test_sobolev_holds_with_frozen_constant(env_elliptic16):
    constants = calibration.load_constants()
    env = env_elliptic16
    lat = env.lattice
    x0 = lat.index_of((8, 8))
    ball = Ball(lat, x0, 6)
    eta = linear_cutoff(lat, x0, 6, 3)
    for trial in range(50):
        u = random_vertex_field(lat, trial, stream=40)
        lhs, core = sobolev_check(env, ball, eta, u, q=3.0)
        assert lhs <= constants["sobolev"] * core
        lhs_w, core_w = sobolev_check(env, ball, eta, u, q=3.0, p=3.0,
                                      weighted=True)
        assert lhs_w <= constants["sobolev_weighted"] * core_w


# ---------------------------------------------------------------------------
# Dirichlet Poisson problem


def test_poisson_zero_drift(env_elliptic16):
    lat = env_elliptic16.lattice
    ball = Ball(lat, lat.index_of((8, 8)), 5)
    u = poisson_solve_dirichlet(env_elliptic16, ball, np.zeros((2, lat.num_vertices)))
    assert np.all(u == 0.0)


def test_poisson_dense_oracle():
    env = rcm.generate_env(rcm.spec_uniform_elliptic(0.3, 3.0, 2, 20, seed=5))
    lat = env.lattice
    x0 = lat.index_of((10, 10))
    ball = Ball(lat, x0, 6)
    v_field = rcm.local_drift(env, 0, rescaled=True)
    u = poisson_solve_dirichlet(env, ball, v_field, SolverConfig(tol=1e-12))
    verts = ball.vertices()
    local = -np.ones(lat.num_vertices, dtype=int)
    local[verts] = np.arange(verts.size)
    fwd, bwd = neighbor_indices(lat)
    a = np.zeros((verts.size, verts.size))
    for li, v in enumerate(verts):
        a[li, li] = env.mu[v]
        for i in range(lat.d):
            for w, cond in ((fwd[i][v], env.conductances[i][v]),
                            (bwd[i][v], env.conductances[i][bwd[i][v]])):
                if local[w] >= 0:
                    a[li, local[w]] -= cond
    dense = np.linalg.solve(a, -divergence(lat, v_field)[verts])
    assert np.abs(u[verts] - dense).max() < 1e-8
    # residual of the defining identity at interior vertices
    resid = rcm.laplacian(env, u) - divergence(lat, v_field)
    interior = np.setdiff1d(verts, boundary_vertices(lat, verts))
    assert np.abs(resid[interior]).max() <= 1e-10 * env.mu.max()
    outside = np.setdiff1d(np.arange(lat.num_vertices), verts)
    assert np.all(u[outside] == 0.0)


def test_poisson_requires_unwrapped_ball(env_elliptic16):
    lat = env_elliptic16.lattice
    with pytest.raises(ValueError):
        poisson_solve_dirichlet(env_elliptic16, Ball(lat, 0, 8),
                                np.zeros((2, lat.num_vertices)))


# ---------------------------------------------------------------------------
# energy estimate


def _drift_setup(seed=5, radius=6):
    env = rcm.generate_env(rcm.spec_uniform_elliptic(0.3, 3.0, 2, 2 * radius + 4,
                                                     seed=seed))
    lat = env.lattice
    x0 = lat.index_of(((2 * radius + 4) // 2,) * 2)
    slopes = np.array([1.0, -0.5])
    v_field = env.conductances * (slopes[:, None] / lat.n)
    ball = Ball(lat, x0, radius)
    u = poisson_solve_dirichlet(env, ball, v_field, SolverConfig())
    f = calibration._linear_profile(lat, x0, slopes)
    eta = linear_cutoff(lat, x0, radius, radius // 2)
    return env, ball, eta, u, f


def test_energy_estimate_zero_solution(env_elliptic16):
    env = env_elliptic16
    lat = env.lattice
    x0 = lat.index_of((8, 8))
    ball = Ball(lat, x0, 5)
    eta = linear_cutoff(lat, x0, 5, 2)
    zeros = np.zeros(lat.num_vertices)
    lhs, rhs = energy_estimate_check(env, ball, eta, zeros, 2.0, zeros)
    assert lhs == 0.0 and rhs == 0.0


def test_energy_estimate_alpha_one_factors():
    env, ball, eta, u, f = _drift_setup()
    lhs, rhs = energy_estimate_check(env, ball, eta, u, 1.0, f)
    # alpha = 1: both prefactors equal 1, so rhs is the bare three-term sum
    lat = env.lattice
    emask_grad = np.abs(rcm.gradient(lat, eta))
    from rcm.moser import _edges_touching

    emask = _edges_touching(lat, ball.mask())
    ge = emask_grad[emask].max()
    gf = np.abs(rcm.gradient(lat, f))[emask].max()
    gef = (emask_grad * np.abs(rcm.gradient(lat, f)))[emask].max()
    verts = ball.vertices()
    mu, au = env.mu[verts], np.abs(u[verts])
    expected = (ge ** 2 * np.mean(mu * au ** 2) + gf ** 2 * np.mean(mu)
                + gef * np.mean(mu * au))
    assert rhs == pytest.approx(expected, rel=1e-12)
    assert lhs == pytest.approx(rcm.weighted_dirichlet_form(env, eta, u)
                                / ball.size(), rel=1e-12)


def test_energy_estimate_frozen_constant():
    constants = calibration.load_constants()
    for seed in (5, 6, 7):
        env, ball, eta, u, f = _drift_setup(seed=seed)
        for alpha in (1.0, 1.5, 2.0, 3.0):
            lhs, rhs = energy_estimate_check(env, ball, eta, u, alpha, f)
            assert lhs <= constants["energy"] * rhs
    with pytest.raises(ValueError):
        energy_estimate_check(env, ball, eta, u, 0.5, f)


# ---------------------------------------------------------------------------
# Moser iteration


def test_moser_zero_solution(env_elliptic16):
    env = rcm.generate_env(rcm.spec_uniform_elliptic(0.5, 2.0, 2, 64, seed=3))
    exps = exponents(2, 3.0, 3.0)
    zeros = np.zeros(env.lattice.num_vertices)
    rep = moser_iterate(env, env.lattice.index_of((32, 32)), 16, zeros,
                        exps, 1.0, 0.5)
    assert rep.max_abs == 0.0 and rep.ratio == 0.0


def test_moser_exponent_bookkeeping_d3():
    # d=3, p=q=inf, unit conductances at n=16: alpha_k = 3^k, kappa = 3/4
    env = rcm.generate_env(rcm.spec_constant(1.0, 3, 36))
    lat = env.lattice
    x0 = lat.index_of((18, 18, 18))
    exps = exponents(3, math.inf, math.inf)
    slopes = np.array([1.0, 0.0, 0.0])
    v_field = env.conductances * (slopes[:, None] / lat.n)
    u = poisson_solve_dirichlet(env, Ball(lat, x0, 8), v_field, SolverConfig())
    rep = moser_iterate(env, x0, 8, u, exps, 1.0, 0.5)
    assert rep.kappa == pytest.approx(0.75)
    for lv in rep.levels:
        assert lv.alpha == pytest.approx(3.0 ** lv.k)


def test_moser_requires_contraction():
    env = rcm.generate_env(rcm.spec_constant(1.0, 2, 64))
    exps = exponents(2, 2.0, 2.0)
    with pytest.raises(ValueError):
        moser_iterate(env, 0, 16, np.zeros(env.lattice.num_vertices),
                      exps, 1.0, 0.5)


def test_moser_gamma_product_and_rhs():
    seed = 3
    rows = calibration.maximum_instance(seed, 0)
    assert any(name == "maximum" for name, _ in rows)
    for name, value in rows:
        assert value >= 0.0


def test_moser_frozen_constant_fresh_instances():
    constants = calibration.load_constants()
    for i in range(20):
        for name, value in calibration.maximum_instance(97, i):
            assert value <= constants[name], (name, value)


def test_small_exponent_boundary():
    env = rcm.generate_env(rcm.spec_uniform_elliptic(0.5, 2.0, 2, 64, seed=8))
    lat = env.lattice
    x0 = lat.index_of((32, 32))
    slopes = np.array([1.0, 0.0])
    v_field = env.conductances * (slopes[:, None] / lat.n)
    u = poisson_solve_dirichlet(env, Ball(lat, x0, 16), v_field, SolverConfig())
    exps = exponents(2, 3.0, 3.0)
    rep = moser_iterate(env, x0, 16, u, exps, 1.0, 0.5)
    # alpha = 2 rho: theta = 1 reproduces the plain bound exactly
    g, k, bound = small_exponent_bound(rep, 2.0 * exps.rho)
    assert g == pytest.approx(rep.gamma)
    assert k == pytest.approx(rep.kappa)
    g1, k1, bound1 = small_exponent_bound(rep, 1.0)
    assert 0 < g1 <= 1.0
    assert k1 >= rep.kappa
    assert rep.max_abs <= calibration.load_constants()["small_exponent"] * bound1
    with pytest.raises(ValueError):
        small_exponent_bound(rep, 0.0)


def test_small_exponent_gamma_one_theta_half():
    # gamma = 1, theta = 1/2: gamma' = (1 * 1/2) / (1 - 1 + 1/2) = 1
    env = rcm.generate_env(rcm.spec_uniform_elliptic(0.5, 2.0, 2, 64, seed=9))
    lat = env.lattice
    x0 = lat.index_of((32, 32))
    exps = exponents(2, 3.0, 3.0)
    # scale the drift solution up so every level norm is >= 1 (gamma_k = 1)
    slopes = np.array([1.0, 0.0])
    v_field = env.conductances * (slopes[:, None] / lat.n)
    u = poisson_solve_dirichlet(env, Ball(lat, x0, 16), v_field, SolverConfig())
    u = u / max(np.abs(u).max(), 1e-12) * 50.0
    rep = moser_iterate(env, x0, 16, u, exps, 1.0, 0.5)
    assert rep.gamma == pytest.approx(1.0)
    g, k, _ = small_exponent_bound(rep, exps.rho)  # theta = 1/2
    assert g == pytest.approx(1.0)
    assert k == pytest.approx(rep.kappa / 0.5)


def test_moser_level_recursion_constant():
    constants = calibration.load_constants()
    for i in range(10):
        rows = calibration.maximum_instance(55, i)
        for name, value in rows:
            if name == "recursion":
                assert value <= constants["recursion"]


# ---------------------------------------------------------------------------
# Poincare


def test_poincare_constant_field():
    lat = rcm.TorusLattice(2, 11)
    ball = Ball(lat, lat.index_of((5, 5)), 4)
    assert poincare_l1_check(lat, np.full(lat.num_vertices, 2.5), ball) == 0.0


def test_poincare_linear_field_exhaustive():
    # u = first coordinate on B(0, 2): enumerate both sides directly
    lat = rcm.TorusLattice(2, 11)
    x0 = lat.index_of((5, 5))
    coords = np.stack(np.unravel_index(np.arange(lat.num_vertices), lat.shape),
                      axis=-1).astype(float)
    u = coords[:, 0]
    ball = Ball(lat, x0, 2)
    verts = ball.vertices()
    mean = u[verts].mean()
    lhs = np.abs(u[verts] - mean).sum()
    fwd, _ = neighbor_indices(lat)
    mask = ball.mask()
    edges = 0.0
    for i in range(lat.d):
        sel = mask & mask[fwd[i]]
        edges += np.abs(u[fwd[i]][sel] - u[sel]).sum()
    expected = lhs / (2 * edges)
    assert poincare_l1_check(lat, u, ball) == pytest.approx(expected, rel=1e-12)


def test_poincare_frozen_constant():
    constants = calibration.load_constants()
    lat = rcm.TorusLattice(2, 21)
    ball = Ball(lat, lat.index_of((10, 10)), 7)
    for trial in range(100):
        u = random_vertex_field(lat, trial, stream=60)
        assert poincare_l1_check(lat, u, ball) <= constants["poincare"]
