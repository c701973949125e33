"""Weighted Sobolev inequality, energy estimate and Moser iteration.

Norm conventions: ||f||_{s,B} averages |f|^s over the ball under counting
measure, ||f||_{s,B,mu} weights by mu.  Large iteration exponents are handled
by factoring out the maximum before taking powers, which is exact in real
arithmetic and avoids under/overflow.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .lattice import (Ball, Environment, TorusLattice, boundary_vertices,
                      gradient, neighbor_indices, weighted_dirichlet_form)
from .solver import SolverConfig, conjugate_gradient


# ---------------------------------------------------------------------------
# exponent bookkeeping


@dataclass(frozen=True)
class Exponents:
    """Derived Sobolev/Moser exponents for dimension d and moments (p, q)."""

    d: int
    p: float
    q: float
    rho: float
    p_star: float
    r: float
    kappa: float

    @property
    def contracts(self) -> bool:
        return self.r > 1.0

    def alpha(self, k: int) -> float:
        return self.r ** k


def rho_exponent(d: int, q: float) -> float:
    """rho(d, q) = d / ((d-2) + d/q) for q in [1, inf]; rho(d, d/2) = 1."""
    if d < 2:
        raise ValueError("dimension must be >= 2")
    if q < 1:
        raise ValueError("q must be >= 1")
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    denom = (d - 2) + d * inv_q
    return math.inf if denom == 0 else d / denom


def exponents(d: int, p: float, q: float) -> Exponents:
    """rho = d / ((d-2) + d/q), p_* = p/(p-1), r = rho/p_*, kappa = rho/(2(rho-p_*)).

    r > 1 holds exactly when 1/p + 1/q < 2/d; otherwise kappa is set to inf
    and the iteration refuses to run.
    """
    if p <= 1 or q <= 1:
        raise ValueError("moment exponents must lie in (1, inf]")
    rho = rho_exponent(d, q)
    p_star = 1.0 if math.isinf(p) else p / (p - 1.0)
    r = math.inf if math.isinf(rho) else rho / p_star
    if r > 1.0:
        kappa = 0.5 / (1.0 - (p_star / rho if not math.isinf(rho) else 0.0))
    else:
        kappa = math.inf
    return Exponents(d=d, p=p, q=q, rho=rho, p_star=p_star, r=r, kappa=kappa)


def signed_power_field(u: np.ndarray, alpha: float) -> np.ndarray:
    """Pointwise |u|^alpha sign(u); zero stays zero."""
    if alpha == 0:
        raise ValueError("signed power needs a nonzero exponent")
    u = np.asarray(u, dtype=np.float64)
    with np.errstate(divide="ignore"):
        mag = np.abs(u) ** alpha
    return np.where(u == 0.0, 0.0, np.sign(u) * mag)


def power_norm(vals: np.ndarray, s: float, weights: np.ndarray | None = None) -> float:
    """(mean w |v|^s)^{1/s}, computed stably for arbitrarily large s."""
    vals = np.abs(np.asarray(vals, dtype=np.float64))
    if np.isinf(s):
        return float(vals.max()) if vals.size else 0.0
    if s < 1:
        raise ValueError("norm exponent must be >= 1")
    m = float(vals.max()) if vals.size else 0.0
    if m == 0.0:
        return 0.0
    scaled = (vals / m) ** s
    if weights is not None:
        scaled = weights * scaled
    return m * float(np.mean(scaled)) ** (1.0 / s)


def ball_norm(f, s, ball: Ball, env: Environment | None = None) -> float:
    v = ball.vertices()
    w = None if env is None else env.mu[v]
    return power_norm(np.asarray(f)[v], s, weights=w)


# ---------------------------------------------------------------------------
# cutoffs


@dataclass(frozen=True)
class CutoffLevel:
    k: int
    sigma_k: float
    tau_k: float
    r_out: int
    r_in: int
    eta: np.ndarray

    @property
    def grad_bound(self) -> float:
        return 1.0 / (self.r_out - self.r_in)


@dataclass(frozen=True)
class CutoffFamily:
    """Nested linear cutoffs between B(sigma' n) and B(sigma n).

    Level k interpolates from 1 on B(r_in) to 0 outside B(r_out) linearly in
    graph distance, with gradient at most 1/(tau_k n).  Radii are integers;
    when flooring sigma_{k+1} n would break the gradient bound, the inner
    radius drops by one extra vertex.
    """

    x0: int
    n: int
    sigma: float
    sigma_prime: float
    levels: tuple


def linear_cutoff(lat: TorusLattice, x0: int, r_out: int, r_in: int) -> np.ndarray:
    if not 0 <= r_in < r_out:
        raise ValueError("need 0 <= r_in < r_out")
    dist = lat.distance_field(x0)
    return np.clip((r_out - dist) / (r_out - r_in), 0.0, 1.0)


def build_cutoff_family(lat: TorusLattice, x0: int, n: int, sigma: float,
                        sigma_prime: float) -> CutoffFamily:
    if not 0.5 <= sigma_prime < sigma <= 1.0:
        raise ValueError("need 1/2 <= sigma' < sigma <= 1")
    if 2 * int(sigma * n) >= lat.n:
        raise ValueError("outer ball must be unwrapped (2 sigma n < side)")
    span = sigma - sigma_prime
    target = int(math.floor(sigma_prime * n))
    levels = []
    r = int(math.floor(sigma * n))
    k = 0
    while r > target:
        tau = 2.0 ** (-k - 1) * span
        gap = max(1, math.ceil(tau * n))
        sigma_next = sigma_prime + 2.0 ** (-k - 1) * span
        r_next = min(int(math.floor(sigma_next * n)), r - gap)
        if r_next < target:
            if r - target >= tau * n:
                r_next = target
            else:
                break
        levels.append(CutoffLevel(k=k, sigma_k=sigma_prime + 2.0 ** (-k) * span,
                                  tau_k=tau, r_out=r, r_in=r_next,
                                  eta=linear_cutoff(lat, x0, r, r_next)))
        r = r_next
        k += 1
    if not levels:
        raise ValueError(f"no cutoff levels fit between radii {target} and "
                         f"{int(math.floor(sigma * n))}")
    return CutoffFamily(x0=x0, n=n, sigma=sigma, sigma_prime=sigma_prime,
                        levels=tuple(levels))


def _validate_cutoff(lat: TorusLattice, ball: Ball, eta: np.ndarray) -> None:
    eta = np.asarray(eta)
    if np.any(eta < 0) or np.any(eta > 1):
        raise ValueError("cutoff must take values in [0, 1]")
    mask = ball.mask()
    if np.any(eta[~mask] != 0):
        raise ValueError("cutoff must be supported inside the ball")
    if np.any(eta[boundary_vertices(lat, ball.vertices())] != 0):
        raise ValueError("cutoff must vanish on the relative boundary of the ball")


# ---------------------------------------------------------------------------
# Sobolev inequalities


def sobolev_s1_ratio(lat: TorusLattice, u: np.ndarray) -> float:
    """(sum |u|^{d/(d-1)})^{(d-1)/d} divided by the total gradient mass.

    The support must leave an empty slab in every axis so sums agree with the
    infinite-lattice ones.
    """
    u = np.asarray(u, dtype=np.float64)
    support = u.reshape(lat.shape) != 0
    if not support.any():
        raise ValueError("field is identically zero")
    for axis in range(lat.d):
        other = tuple(a for a in range(lat.d) if a != axis)
        occupied = support.any(axis=other)
        if occupied.all():
            raise ValueError(f"support wraps around axis {axis}")
    s = lat.d / (lat.d - 1.0)
    num = float(np.sum(np.abs(u) ** s)) ** (1.0 / s)
    den = float(np.sum(np.abs(gradient(lat, u))))
    if den == 0.0:
        raise ValueError("gradient mass vanishes")
    return num / den


def _edges_touching(lat: TorusLattice, mask: np.ndarray) -> np.ndarray:
    fwd, _ = neighbor_indices(lat)
    return np.stack([mask | mask[fwd[i]] for i in range(lat.d)])


def sobolev_check(env: Environment, ball: Ball, eta: np.ndarray, u: np.ndarray,
                  q: float, p: float | None = None, weighted: bool = False):
    """Left side and constant-free right side of the Sobolev inequality.

    Plain form: ||(eta u)^2||_{rho,B} against
    |B|^{2/d} ||nu||_{q,B} ( E_{eta^2}(u)/|B| + ||grad eta||_inf^2 ||u^2||_{1,B,mu} ).
    The weighted form replaces the left norm by ||(eta u)^2||_{r,B,mu} and
    multiplies the right side by ||mu||_{p,B}^{1/r}.
    """
    lat = env.lattice
    if math.isinf(q) and lat.d == 2:
        raise ValueError("q = inf needs dimension >= 3")
    _validate_cutoff(lat, ball, eta)
    u = np.asarray(u, dtype=np.float64)
    rho = rho_exponent(lat.d, q)
    size = ball.size()
    energy = weighted_dirichlet_form(env, eta, u)
    grad_eta_inf = float(np.abs(gradient(lat, eta)).max())
    u2_mu = ball_norm(u * u, 1.0, ball, env=env)
    bracket = energy / size + grad_eta_inf ** 2 * u2_mu
    nu_q = power_norm(env.nu[ball.vertices()], q)
    core = size ** (2.0 / lat.d) * nu_q * bracket
    etau2 = (eta * u) ** 2
    if not weighted:
        return ball_norm(etau2, rho, ball), core
    if p is None or p <= 1:
        raise ValueError("weighted form needs an exponent p > 1")
    p_star = 1.0 if math.isinf(p) else p / (p - 1.0)
    r = rho / p_star
    if r < 1.0:
        raise ValueError("weighted norm exponent r must be >= 1")
    mu_p = power_norm(env.mu[ball.vertices()], p)
    return (ball_norm(etau2, r, ball, env=env),
            core * mu_p ** (1.0 / r))


# ---------------------------------------------------------------------------
# Poisson problem with zero boundary data


def poisson_solve_dirichlet(env: Environment, ball: Ball, V: np.ndarray,
                            cfg: SolverConfig | None = None) -> np.ndarray:
    """Solve L u = div* V on the ball with u = 0 outside.

    The restricted operator is symmetric positive definite; conjugate
    gradient with Jacobi preconditioning solves it to cfg.tol.
    """
    cfg = cfg or SolverConfig()
    lat = env.lattice
    if not ball.unwrapped:
        raise ValueError("ball must be unwrapped (2r < side)")
    V = np.asarray(V, dtype=np.float64)
    if not np.all(np.isfinite(V)):
        raise ValueError("drift field must be finite")
    verts = ball.vertices()
    local = -np.ones(lat.num_vertices, dtype=np.int64)
    local[verts] = np.arange(verts.size)
    fwd, bwd = neighbor_indices(lat)
    rows, cols, vals = [np.arange(verts.size)], [np.arange(verts.size)], [env.mu[verts]]
    for i in range(lat.d):
        for nbr_tab, w in ((fwd[i], env.conductances[i][verts]),
                           (bwd[i], env.conductances[i][bwd[i][verts]])):
            other = local[nbr_tab[verts]]
            inside = other >= 0
            rows.append(np.arange(verts.size)[inside])
            cols.append(other[inside])
            vals.append(-w[inside])
    a = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(verts.size, verts.size))
    from .lattice import divergence

    b = -divergence(lat, V)[verts]
    x, _, _ = conjugate_gradient(
        lambda v: a @ v, b, tol=cfg.tol, max_iter=cfg.max_iter,
        diag=env.mu[verts] if cfg.precond == "diagonal" else None)
    u = np.zeros(lat.num_vertices)
    u[verts] = x
    return u


# ---------------------------------------------------------------------------
# energy estimate


def energy_estimate_check(env: Environment, ball: Ball, eta: np.ndarray,
                          u: np.ndarray, alpha: float, f: np.ndarray):
    """Left and constant-free right side of the Dirichlet form estimate.

    lhs = E_{eta^2}(signed u^alpha) / |B|; rhs adds the three mu-weighted
    power sums with factors alpha^4/(2 alpha - 1)^2 and alpha^2/(2 alpha - 1).
    Gradient sup norms are taken over edges incident to the ball.
    """
    if alpha < 1:
        raise ValueError("energy estimate needs alpha >= 1")
    lat = env.lattice
    _validate_cutoff(lat, ball, eta)
    u = np.asarray(u, dtype=np.float64)
    size = ball.size()
    u_alpha = signed_power_field(u, alpha)
    lhs = weighted_dirichlet_form(env, eta, u_alpha) / size

    emask = _edges_touching(lat, ball.mask())
    grad_eta = np.abs(gradient(lat, eta))[emask]
    grad_f = np.abs(gradient(lat, np.asarray(f, dtype=np.float64)))[emask]
    ge = float(grad_eta.max())
    gf = float(grad_f.max())
    gef = float((grad_eta * grad_f).max())

    verts = ball.vertices()
    mu = env.mu[verts]
    au = np.abs(u[verts])
    with np.errstate(divide="ignore", invalid="ignore"):
        p_2a = float(np.mean(mu * au ** (2 * alpha)))
        p_2am2 = float(np.mean(mu * au ** (2 * alpha - 2))) if alpha > 1 \
            else float(np.mean(mu))
        p_2am1 = float(np.mean(mu * au ** (2 * alpha - 1)))
    c1 = alpha ** 4 / (2 * alpha - 1) ** 2
    c2 = alpha ** 2 / (2 * alpha - 1)
    rhs = c1 * (ge ** 2 * p_2a + gf ** 2 * p_2am2) + c2 * gef * p_2am1
    return lhs, rhs


# ---------------------------------------------------------------------------
# Moser iteration


@dataclass(frozen=True)
class LevelRecord:
    k: int
    alpha: float
    sigma_k: float
    radius: int
    norm: float
    gamma: float


@dataclass(frozen=True)
class MoserReport:
    x0: int
    n: int
    sigma: float
    sigma_prime: float
    exps: Exponents
    levels: tuple
    max_abs: float
    norm_2rho: float
    mu_norm: float
    nu_norm: float
    gamma: float
    kappa: float
    rhs_core: float
    ratio: float
    u: np.ndarray
    environment: Environment

    def j_base(self) -> float:
        return max(1.0, self.mu_norm * self.nu_norm) / (self.sigma - self.sigma_prime) ** 2


def moser_iterate(env: Environment, x0: int, n: int, u: np.ndarray,
                  exps: Exponents, sigma: float, sigma_prime: float) -> MoserReport:
    """Level-by-level maximum bound for a solution of the drift Poisson problem.

    Levels k >= 1 record alpha_k = r^k, the ball radius, the norm
    ||u||_{2 alpha_k p_*, B_k} and gamma_k (1 when that norm is >= 1, else
    1 - 1/alpha_k).  The final bound compares max over B(sigma' n) with
    (1 v ||mu||_p ||nu||_q / (sigma - sigma')^2)^kappa * ||u||_{2 rho}^gamma.
    """
    if not exps.contracts:
        raise ValueError("r <= 1: the moment condition fails, iteration will not contract")
    if math.isinf(exps.rho):
        raise ValueError("q = inf in dimension 2 is outside the iteration's scope")
    lat = env.lattice
    if 2 * n >= lat.n:
        raise ValueError("ball B(n) must be unwrapped (2n < side)")
    u = np.asarray(u, dtype=np.float64)
    family = build_cutoff_family(lat, x0, n, sigma, sigma_prime)

    ball_n = Ball(lat, x0, n)
    mu_norm = power_norm(env.mu[ball_n.vertices()], exps.p)
    nu_norm = power_norm(env.nu[ball_n.vertices()], exps.q)

    records = []
    gamma = 1.0
    for lvl in family.levels:
        k = lvl.k + 1
        alpha_k = exps.alpha(k)
        radius = lvl.r_in
        norm_k = ball_norm(u, 2.0 * alpha_k * exps.p_star, Ball(lat, x0, radius))
        gamma_k = 1.0 if norm_k >= 1.0 else 1.0 - 1.0 / alpha_k
        gamma *= gamma_k
        records.append(LevelRecord(k=k, alpha=alpha_k, sigma_k=lvl.sigma_k,
                                   radius=radius, norm=norm_k, gamma=gamma_k))

    r0 = family.levels[0].r_out
    norm_2rho = ball_norm(u, 2.0 * exps.rho, Ball(lat, x0, r0))
    target = int(math.floor(sigma_prime * n))
    max_abs = float(np.abs(u[Ball(lat, x0, target).vertices()]).max())
    j_base = max(1.0, mu_norm * nu_norm) / (sigma - sigma_prime) ** 2
    rhs_core = j_base ** exps.kappa * norm_2rho ** gamma
    if rhs_core == 0.0:
        ratio = 0.0 if max_abs == 0.0 else math.inf
    else:
        ratio = max_abs / rhs_core
    return MoserReport(x0=x0, n=n, sigma=sigma, sigma_prime=sigma_prime,
                       exps=exps, levels=tuple(records), max_abs=max_abs,
                       norm_2rho=norm_2rho, mu_norm=mu_norm, nu_norm=nu_norm,
                       gamma=gamma, kappa=exps.kappa, rhs_core=rhs_core,
                       ratio=ratio, u=u, environment=env)


def small_exponent_bound(report: MoserReport, alpha: float):
    """Bound through an averaged l^alpha norm, exponents per the interpolation step.

    For alpha in (0, 2 rho): theta = alpha/(2 rho), gamma' = gamma theta / den,
    kappa' = kappa / den with den = 1 - gamma + gamma theta.  For
    alpha >= 2 rho the plain bound applies by norm monotonicity.  The
    returned bound carries no leading constant.
    """
    if alpha <= 0:
        raise ValueError("norm exponent must be positive")
    rho = report.exps.rho
    lat = report.environment.lattice
    outer = Ball(lat, report.x0, int(math.floor(report.sigma * report.n)))
    norm_alpha = _avg_power_norm(report.u, alpha, outer)
    if alpha >= 2.0 * rho:
        bound = report.j_base() ** report.kappa * norm_alpha ** report.gamma
        return report.gamma, report.kappa, bound
    theta = alpha / (2.0 * rho)
    den = 1.0 - report.gamma + report.gamma * theta
    gamma_p = report.gamma * theta / den
    kappa_p = report.kappa / den
    bound = report.j_base() ** kappa_p * norm_alpha ** gamma_p
    return gamma_p, kappa_p, bound


def _avg_power_norm(u, alpha, ball):
    # averaged (quasi-)norm, valid for every alpha > 0
    vals = np.abs(np.asarray(u)[ball.vertices()])
    m = float(vals.max())
    if m == 0.0:
        return 0.0
    return m * float(np.mean((vals / m) ** alpha)) ** (1.0 / alpha)


def moser_report_to_csv(report: MoserReport, path) -> None:
    with open(path, "w") as fh:
        fh.write("k,alpha,sigma_k,radius,norm,gamma\n")
        for lv in report.levels:
            fh.write(f"{lv.k},{lv.alpha!r},{lv.sigma_k!r},{lv.radius},"
                     f"{lv.norm!r},{lv.gamma!r}\n")
        fh.write("summary,max_abs,rhs_core,ratio,gamma,kappa\n")
        fh.write(f"summary,{report.max_abs!r},{report.rhs_core!r},"
                 f"{report.ratio!r},{report.gamma!r},{report.kappa!r}\n")


# ---------------------------------------------------------------------------
# l1 Poincare


def poincare_l1_check(lat: TorusLattice, u: np.ndarray, ball: Ball) -> float:
    """Ratio of sum |u - mean| to radius * gradient mass over edges in the ball."""
    if not ball.unwrapped:
        raise ValueError("ball must be unwrapped (2r < side)")
    u = np.asarray(u, dtype=np.float64)
    verts = ball.vertices()
    lhs = float(np.abs(u[verts] - u[verts].mean()).sum())
    mask = ball.mask()
    fwd, _ = neighbor_indices(lat)
    grad = gradient(lat, u)
    edge_sum = 0.0
    for i in range(lat.d):
        inside = mask & mask[fwd[i]]
        edge_sum += float(np.abs(grad[i][inside]).sum())
    if edge_sum == 0.0:
        return 0.0
    return lhs / (ball.radius * edge_sum)
