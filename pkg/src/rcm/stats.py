"""Monte Carlo verification of the diffusive limit.

The protocol is quenched: every report fixes one environment and randomizes
only the trajectories.  Covariances of the rescaled walk and its martingale
part are estimated as raw second moments (the martingale mean is exactly
zero in law) with per-entry standard errors from the sample variance.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .corrector import CorrectorSolution, sigma_from_corrector, solve_corrector
from .environment import EnvSpec, generate_env
from .lattice import Environment
from .solver import SolverConfig
from .walk import chi_at_positions, occupation_fractions, walk_positions_at


@dataclass(frozen=True)
class SigmaEstimate:
    n: int
    t: float
    count: int
    scheme: str
    cov_m: np.ndarray
    se_m: np.ndarray
    cov_x: np.ndarray
    se_x: np.ndarray


@dataclass(frozen=True)
class CltReport:
    env_label: str
    n: int
    count: int
    scheme: str
    sigma2: np.ndarray        # corrector route
    cov_m: np.ndarray         # Monte Carlo route, martingale part
    se_m: np.ndarray
    cov_x: np.ndarray
    se_x: np.ndarray
    ks_stats: np.ndarray      # per coordinate direction
    ks_pvalues: np.ndarray


def _second_moment(y: np.ndarray):
    count, d = y.shape
    cov = np.empty((d, d))
    se = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            prod = y[:, i] * y[:, j]
            cov[i, j] = cov[j, i] = float(prod.mean())
            se[i, j] = se[j, i] = float(prod.std(ddof=1) / math.sqrt(count))
    return cov, se


def _estimate_from_positions(pos, sol, n, t, start=0):
    x = pos[:, 0, :].astype(np.float64)
    start_coords = sol.lattice.coords_of(start)[None, :]
    m0 = start_coords - chi_at_positions(sol, start_coords)
    m = x - chi_at_positions(sol, pos[:, 0, :]) - m0
    scale = 1.0 / (n * math.sqrt(t))
    cov_m, se_m = _second_moment(m * scale)
    cov_x, se_x = _second_moment(x * scale)
    return cov_m, se_m, cov_x, se_x, x * scale


def estimate_sigma_mc(env: Environment, n: int, t: float, count: int, seed: int,
                      scheme: str = "VSRW",
                      sol: CorrectorSolution | None = None) -> SigmaEstimate:
    """Empirical covariances of M^{(n)}_t/sqrt(t) and X^{(n)}_t/sqrt(t)."""
    if count < 100:
        raise ValueError("need at least 100 trajectories")
    if t <= 0:
        raise ValueError("time must be positive")
    if sol is None:
        sol = solve_corrector(env, SolverConfig())
    pos, _ = walk_positions_at(env, 0, [n * n * t], count, seed, scheme=scheme)
    cov_m, se_m, cov_x, se_x, _ = _estimate_from_positions(pos, sol, n, t)
    return SigmaEstimate(n=n, t=t, count=count, scheme=scheme, cov_m=cov_m,
                         se_m=se_m, cov_x=cov_x, se_x=se_x)


def gaussianity_test(samples: np.ndarray, v: np.ndarray, sigma2: np.ndarray):
    """Two-sided KS statistic and p-value of projected samples against
    the centered normal law with variance v' sigma2 v."""
    v = np.asarray(v, dtype=np.float64)
    if not np.any(v != 0):
        raise ValueError("projection direction must be nonzero")
    var = float(v @ np.asarray(sigma2) @ v)
    if var <= 0:
        raise ValueError("projected variance must be positive")
    res = scipy.stats.kstest(np.asarray(samples, dtype=np.float64), "norm",
                             args=(0.0, math.sqrt(var)))
    return float(res.statistic), float(res.pvalue)


def occupation_uniformity(env: Environment, t_max: float, seed: int) -> float:
    """Chi-square distance between occupation-time fractions and uniform."""
    nv = env.lattice.num_vertices
    expected_jumps = float(np.mean(env.mu)) * t_max
    if expected_jumps < 100 * nv:
        raise ValueError("horizon too short: fewer than 100 expected jumps per vertex")
    frac = occupation_fractions(env, 0, t_max, seed, scheme="VSRW")
    uniform = 1.0 / nv
    return float(np.sum((frac - uniform) ** 2 / uniform))


def qfclt_suite(spec: EnvSpec, sizes, count: int, seed: int, t: float = 1.0,
                scheme: str = "VSRW", cfg: SolverConfig | None = None):
    """One CltReport per torus side n: corrector covariance, Monte Carlo
    covariance at the diffusive time n^2 t, and per-direction KS tests."""
    if count < 100:
        raise ValueError("need at least 100 trajectories")
    if t <= 0:
        raise ValueError("time must be positive")
    reports = []
    for k, n in enumerate(sizes):
        env = generate_env(spec.with_side(int(n)))
        sol = solve_corrector(env, cfg or SolverConfig())
        sigma2 = sigma_from_corrector(sol)
        pos, _ = walk_positions_at(env, 0, [n * n * t], count, seed + k,
                                   scheme=scheme)
        cov_m, se_m, cov_x, se_x, x = _estimate_from_positions(pos, sol, n, t)
        d = env.lattice.d
        ks = np.empty(d)
        pv = np.empty(d)
        target = sigma2 if scheme == "VSRW" else sigma2 / float(np.mean(env.mu))
        for j in range(d):
            e = np.zeros(d)
            e[j] = 1.0
            ks[j], pv[j] = gaussianity_test(x[:, j], e, target)
        reports.append(CltReport(env_label=spec.label(), n=int(n), count=count,
                                 scheme=scheme, sigma2=target, cov_m=cov_m,
                                 se_m=se_m, cov_x=cov_x, se_x=se_x,
                                 ks_stats=ks, ks_pvalues=pv))
    return reports


def covariance_trend(reports):
    """(n, max-norm distance between cov_m and the corrector covariance) rows."""
    return [(r.n, float(np.abs(r.cov_m - r.sigma2).max())) for r in reports]


def reports_to_csv(reports, path) -> None:
    with open(path, "w") as fh:
        fh.write("n,direction,ks_stat,ks_pvalue,cov_m,se_m,cov_x,se_x,sigma2\n")
        for r in reports:
            for j in range(r.sigma2.shape[0]):
                fh.write(f"{r.n},{j + 1},{r.ks_stats[j]!r},{r.ks_pvalues[j]!r},"
                         f"{r.cov_m[j, j]!r},{r.se_m[j, j]!r},"
                         f"{r.cov_x[j, j]!r},{r.se_x[j, j]!r},"
                         f"{r.sigma2[j, j]!r}\n")


def covariance_block_csv(report: CltReport, path) -> None:
    d = report.sigma2.shape[0]
    with open(path, "w") as fh:
        fh.write("matrix," + ",".join(f"col_{j + 1}" for j in range(d)) + "\n")
        for name, mat in (("sigma2_corrector", report.sigma2),
                          ("cov_martingale", report.cov_m),
                          ("cov_walk", report.cov_x)):
            for i in range(d):
                fh.write(name + "," + ",".join(repr(float(mat[i, j]))
                                               for j in range(d)) + "\n")
