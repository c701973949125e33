"""Corrector solves against closed-form and 1D-reduction oracles."""

import numpy as np
import pytest

import rcm
from rcm.corrector import solution_to_csv
from rcm.lattice import neighbor_indices
from rcm.solver import SolverConfig


def oracle_layered_1d(profile, n):
    """Ring reduction: harmonic increments J/c_i with J the harmonic mean.

    Returns (chi at each column, sigma2_11) from dense linear algebra, fully
    independent of the lattice solver.
    """
    c = np.array([profile[i % len(profile)] for i in range(n)], dtype=float)
    # solve (-L) chi = b on the n-ring, b_i = c_{i-1} - c_i
    a = np.zeros((n, n))
    for i in range(n):
        a[i, i] = c[i] + c[i - 1]
        a[i, (i + 1) % n] -= c[i]
        a[i, (i - 1) % n] -= c[i - 1]
    b = np.roll(c, 1) - c
    chi = np.linalg.lstsq(a, b, rcond=None)[0]
    chi -= chi.mean()
    g = 1.0 - (np.roll(chi, -1) - chi)  # harmonic increments
    sigma11 = 2.0 * np.sum(c * g * g) / n
    return chi, sigma11


def test_local_drift_examples(env_const):
    env = env_const
    v = rcm.local_drift(env, 0)
    assert np.all(v[0] == 1.0) and np.all(v[1] == 0.0)
    assert np.all(rcm.divergence(env.lattice, v) == 0.0)
    with pytest.raises(ValueError):
        rcm.local_drift(env, 2)
    scaled = rcm.local_drift(env, 1, rescaled=True)
    assert np.all(scaled[1] == 1.0 / 3.0)


def test_drift_divergence_sums_to_zero():
    env = rcm.generate_env(rcm.spec_iid_pareto_mix(3, 3, 2, 8, seed=4))
    for j in range(2):
        assert abs(rcm.divergence(env.lattice, rcm.local_drift(env, j)).sum()) < 1e-10


def test_constant_env_zero_corrector():
    env = rcm.generate_env(rcm.spec_constant(1.7, 2, 16))
    sol = rcm.solve_corrector(env)
    assert np.abs(sol.chi).max() <= 1e-8
    sigma = rcm.sigma_from_corrector(sol)
    assert np.allclose(sigma, 2 * 1.7 * np.eye(2), atol=1e-8)


def test_layered_matches_1d_oracle(env_layered64):
    sol = rcm.solve_corrector(env_layered64)
    chi_1d, sigma11 = oracle_layered_1d((1.0, 4.0), 64)
    assert sigma11 == pytest.approx(3.2, abs=1e-12)
    sigma = rcm.sigma_from_corrector(sol)
    assert sigma[0, 0] == pytest.approx(sigma11, abs=1e-6)
    assert sigma[1, 1] == pytest.approx(2.0, abs=1e-8)
    assert abs(sigma[0, 1]) < 1e-8
    # chi_1 depends only on the first coordinate and matches the ring solve
    grid = sol.chi[0].reshape(64, 64)
    assert np.abs(grid - grid[:, :1]).max() < 1e-7
    assert np.abs(grid[:, 0] - chi_1d).max() < 1e-7
    # vertical structure is translation invariant: chi_2 = 0
    assert np.abs(sol.chi[1]).max() < 1e-8


def test_corrector_mean_zero_and_residuals(env_elliptic16):
    sol = rcm.solve_corrector(env_elliptic16)
    for j in range(2):
        assert abs(sol.chi[j].sum()) < 1e-8
        assert sol.residuals[j] <= 1e-10
        assert sol.residuals_mu[j] <= 1e-8


def test_coordinate_swap_symmetry():
    # an environment symmetric under swapping axes yields swapped correctors
    lat = rcm.TorusLattice(2, 8)
    key_vals = np.arange(64, dtype=float).reshape(8, 8)
    sym = key_vals + key_vals.T
    w = np.empty((2, 64))
    w[0] = (1.0 + 0.1 * sym).reshape(-1)
    # direction-2 conductances: transpose of direction-1 pattern
    w[1] = (1.0 + 0.1 * sym).T.reshape(-1)
    env = rcm.make_environment(lat, w)
    sol = rcm.solve_corrector(env, SolverConfig(tol=1e-12))
    chi0 = sol.chi[0].reshape(8, 8)
    chi1 = sol.chi[1].reshape(8, 8)
    assert np.abs(chi0 - chi1.T).max() < 1e-9


def test_harmonic_coordinate(env_elliptic16):
    env = env_elliptic16
    sol = rcm.solve_corrector(env)
    hc = rcm.harmonic_coordinate(sol)
    assert np.all(hc.harmonicity <= 1e-8 * env.mu.max())
    # unit conductances: increments reduce to the bare displacement
    const = rcm.generate_env(rcm.spec_constant(1.0, 2, 8))
    hc1 = rcm.harmonic_coordinate(rcm.solve_corrector(const))
    for j in range(2):
        for i in range(2):
            assert np.allclose(hc1.increments[j, i], 1.0 if i == j else 0.0)


def test_increments_loop_exact(env_elliptic16):
    # sum of dPhi_j around an elementary square vanishes
    env = env_elliptic16
    lat = env.lattice
    fwd, _ = neighbor_indices(lat)
    inc = rcm.harmonic_coordinate(rcm.solve_corrector(env)).increments
    for j in range(2):
        f = inc[j]
        for v in range(0, lat.num_vertices, 11):
            right = int(fwd[0][v])
            up = int(fwd[1][v])
            loop = f[0, v] + f[1, right] - f[0, up] - f[1, v]
            assert abs(loop) < 1e-12


def test_sigma_psd_and_symmetric():
    env = rcm.generate_env(rcm.spec_iid_pareto_mix(3.0, 3.0, 2, 16, seed=6))
    sigma = rcm.sigma_from_corrector(rcm.solve_corrector(env))
    assert np.array_equal(sigma, sigma.T)
    assert np.linalg.eigvalsh(sigma).min() >= -1e-12


def test_sigma_dominated_by_drift_energy():
    # projection decreases energy: sigma_jj <= (2/N) sum of direction-j weights
    env = rcm.generate_env(rcm.spec_uniform_elliptic(0.2, 4.0, 2, 12, seed=13))
    sigma = rcm.sigma_from_corrector(rcm.solve_corrector(env))
    n_v = env.lattice.num_vertices
    for j in range(2):
        bound = 2.0 * env.conductances[j].sum() / n_v
        assert sigma[j, j] <= bound * (1 + 1e-10)


def test_shift_covariance(env_elliptic16):
    env = env_elliptic16
    lat = env.lattice
    sol = rcm.solve_corrector(env, SolverConfig(tol=1e-12))
    z = (5, 9)
    sol_shift = rcm.solve_corrector(rcm.shift_env(env, z), SolverConfig(tol=1e-12))
    for j in range(2):
        g = rcm.gradient(lat, sol.chi[j])
        g_shift = rcm.gradient(lat, sol_shift.chi[j])
        rolled = np.stack([
            np.roll(g[i].reshape(lat.shape), (-z[0], -z[1]), axis=(0, 1)).reshape(-1)
            for i in range(2)])
        assert np.abs(g_shift - rolled).max() < 1e-9


def test_sublinearity_profile_constant_env():
    spec = rcm.spec_constant(2.0, 2, 8)
    rows = rcm.sublinearity_profile(spec, [4, 8], L=1.0)
    assert all(value == 0.0 for _, _, value in rows)
    assert all(value >= 0.0 for _, _, value in rows)


def test_l1_profile_and_cube_average(env_elliptic16):
    sol = rcm.solve_corrector(env_elliptic16)
    rows = rcm.l1_profile(sol, [4, 6])
    assert {n for n, _, _ in rows} == {4, 6}
    assert all(v >= 0 for _, _, v in rows)
    with pytest.raises(ValueError):
        rcm.l1_profile(sol, [8])  # 2n >= side
    # the full torus at n = side hits each vertex once: exact zero by mean-zero
    side = sol.lattice.n
    cube = (np.zeros(2), np.full(2, (side - 1) / side))
    avg = rcm.cube_average(sol, cube, side)
    assert np.abs(avg).max() < 1e-12
    with pytest.raises(ValueError):
        rcm.cube_average(sol, (np.zeros(2), np.full(2, 1.5)), side + 8)


def test_l1_profile_zero_for_constant():
    env = rcm.generate_env(rcm.spec_constant(1.0, 2, 12))
    sol = rcm.solve_corrector(env)
    assert all(v == 0.0 for _, _, v in rcm.l1_profile(sol, [3, 5]))
    assert np.all(rcm.cube_average(sol, (np.zeros(2), np.ones(2) * 0.4), 5) == 0.0)


def test_solution_csv(tmp_path, env_const):
    sol = rcm.solve_corrector(env_const)
    out = tmp_path / "chi.csv"
    solution_to_csv(sol, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "vertex_index,chi_1,chi_2"
    assert len(lines) == 1 + env_const.lattice.num_vertices
