"""Corrector Poisson solves on the periodized lattice.

The corrector chi_j is the mean-zero periodic solution of

    (-L^w) chi_j = div V_j,      V_j(e) = w(e) * delta_{ij} on direction-i edges,

which makes the harmonic coordinate increments
dPhi_j(e) = delta_{ij} - (grad chi_j)(e) divergence-free against w.  Sign
conventions in the literature differ; this one is fixed by requiring
Phi_j = Pi_j - chi_j to be harmonic, with Pi the position field.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .environment import EnvSpec, generate_env
from .lattice import Ball, Environment, divergence, gradient
from .solver import SolverConfig, conjugate_gradient


def local_drift(env: Environment, j: int, rescaled: bool = False) -> np.ndarray:
    """Drift edge field of coordinate j; `rescaled` divides by the side length."""
    lat = env.lattice
    if not 0 <= j < lat.d:
        raise ValueError(f"coordinate {j} out of range for d={lat.d}")
    v = np.zeros((lat.d, lat.num_vertices))
    v[j] = env.conductances[j]
    if rescaled:
        v /= lat.n
    return v


@dataclass(frozen=True)
class CorrectorSolution:
    environment: Environment
    chi: np.ndarray              # (d, n**d), each row mean zero
    residuals: np.ndarray        # relative l2 residual per coordinate
    residuals_mu: np.ndarray     # relative mu-weighted l2 residual per coordinate
    iterations: np.ndarray

    @property
    def lattice(self):
        return self.environment.lattice


@dataclass(frozen=True)
class HarmonicCoordinate:
    solution: CorrectorSolution
    increments: np.ndarray       # (d, d, n**d); [j] is the edge field dPhi_j
    harmonicity: np.ndarray      # max_x |div(w * dPhi_j)| per coordinate


def solve_corrector(env: Environment, cfg: SolverConfig | None = None) -> CorrectorSolution:
    """Solve the corrector equation for every coordinate.

    Conjugate gradient on the positive semidefinite system with kernel the
    constants; the solution is projected to counting-measure mean zero.  A
    non-converged coordinate raises SolverError with the reached residual.
    """
    cfg = cfg or SolverConfig()
    lat = env.lattice
    apply_a = _kernels.make_neg_laplacian(env)
    diag = env.mu if cfg.precond == "diagonal" else None
    chi = np.empty((lat.d, lat.num_vertices))
    res = np.empty(lat.d)
    res_mu = np.empty(lat.d)
    iters = np.empty(lat.d, dtype=np.int64)
    for j in range(lat.d):
        b = divergence(lat, local_drift(env, j))
        x, rel, it = conjugate_gradient(apply_a, b, diag=diag, tol=cfg.tol,
                                        max_iter=cfg.max_iter)
        x -= x.mean()
        chi[j] = x
        res[j] = rel
        r = b - apply_a(x)
        norm_b_mu = float(np.sqrt(np.sum(env.mu * b * b)))
        res_mu[j] = (float(np.sqrt(np.sum(env.mu * r * r))) / norm_b_mu
                     if norm_b_mu > 0 else 0.0)
        iters[j] = it
    chi.setflags(write=False)
    return CorrectorSolution(environment=env, chi=chi, residuals=res,
                             residuals_mu=res_mu, iterations=iters)


def harmonic_coordinate(sol: CorrectorSolution) -> HarmonicCoordinate:
    env = sol.environment
    lat = env.lattice
    inc = np.empty((lat.d, lat.d, lat.num_vertices))
    harm = np.empty(lat.d)
    for j in range(lat.d):
        inc[j] = -gradient(lat, sol.chi[j])
        inc[j, j] += 1.0
        harm[j] = float(np.abs(divergence(lat, env.conductances * inc[j])).max())
    inc.setflags(write=False)
    return HarmonicCoordinate(solution=sol, increments=inc, harmonicity=harm)


def sigma_from_corrector(sol: CorrectorSolution) -> np.ndarray:
    """Finite-volume diffusivity matrix from the harmonic increments.

    (1/n^d) sum over vertices and both edge orientations of
    w(e) dPhi_i(e) dPhi_j(e); each canonical edge therefore counts twice.
    """
    env = sol.environment
    lat = env.lattice
    hc = harmonic_coordinate(sol)
    sigma = np.empty((lat.d, lat.d))
    for i in range(lat.d):
        for j in range(i, lat.d):
            s = 2.0 * float(np.sum(env.conductances * hc.increments[i] * hc.increments[j]))
            sigma[i, j] = sigma[j, i] = s / lat.num_vertices
    return sigma


def sublinearity_profile(spec: EnvSpec, sizes, L: float = 1.0,
                         cfg: SolverConfig | None = None):
    """Rows (n, j, max_{B(Ln)} |chi_j| / n), one fresh solve per n.

    Each n is solved on a torus of side 4*L*n so the measurement ball is
    unwrapped.
    """
    if L < 1.0:
        raise ValueError("L must be >= 1")
    rows = []
    for n in sizes:
        side = int(np.ceil(4.0 * L * n))
        env = generate_env(spec.with_side(side))
        sol = solve_corrector(env, cfg)
        ball = Ball(env.lattice, 0, int(L * n))
        verts = ball.vertices()
        for j in range(env.lattice.d):
            rows.append((int(n), j, float(np.abs(sol.chi[j][verts]).max()) / n))
    return rows


def l1_profile(sol: CorrectorSolution, sizes):
    """Rows (n, j, n^{-d} sum_{B(n)} |chi_j| / n) on one solved torus."""
    lat = sol.lattice
    rows = []
    for n in sizes:
        if 2 * n >= lat.n:
            raise ValueError(f"ball radius {n} does not fit on a side-{lat.n} torus")
        verts = Ball(lat, 0, int(n)).vertices()
        for j in range(lat.d):
            rows.append((int(n), j,
                         float(np.abs(sol.chi[j][verts]).sum()) / n ** lat.d / n))
    return rows


def cube_average(sol: CorrectorSolution, cube, n: int) -> np.ndarray:
    """Vector of n^{-d} sum_{x in nC} chi_j(x) / n for a cube C = prod [a_i, b_i]."""
    lat = sol.lattice
    lo, hi = (np.asarray(v, dtype=np.float64) for v in cube)
    if lo.shape != (lat.d,) or hi.shape != (lat.d,) or np.any(lo >= hi):
        raise ValueError("cube must be a product of nondegenerate intervals")
    starts = np.ceil(n * lo).astype(np.int64)
    stops = np.floor(n * hi).astype(np.int64)
    if np.any(stops - starts + 1 > lat.n):
        raise ValueError("scaled cube does not fit in one period of the torus")
    axes = [np.arange(a, b + 1) for a, b in zip(starts, stops)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    idx = lat.vertex_indices(coords)
    return np.array([float(sol.chi[j][idx].sum()) / n ** lat.d / n
                     for j in range(lat.d)])


def solution_to_csv(sol: CorrectorSolution, path) -> None:
    lat = sol.lattice
    with open(path, "w") as fh:
        fh.write("vertex_index," + ",".join(f"chi_{j + 1}" for j in range(lat.d)) + "\n")
        for v in range(lat.num_vertices):
            vals = ",".join(repr(float(sol.chi[j][v])) for j in range(lat.d))
            fh.write(f"{v},{vals}\n")


def sigma_to_csv(sigma: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        d = sigma.shape[0]
        fh.write(",".join(f"sigma2_{j + 1}" for j in range(d)) + "\n")
        for i in range(d):
            fh.write(",".join(repr(float(sigma[i, j])) for j in range(d)) + "\n")
