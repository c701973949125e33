"""Calibration of the existential inequality constants.

Each inequality family (S1 Sobolev, weighted Sobolev, energy estimate,
maximum bound, small-exponent bound, level recursion, l1 Poincare) holds with
some finite constant.  The calibration run measures the constant-free ratio
over a corpus generated from seed 0, multiplies the supremum by a safety
factor, and freezes the result in a key=value file shipped with the package.
Verification corpora regenerate independent instances from other seeds and
assert the frozen bounds; any excess is reported as a violation row.
"""

import importlib.resources
import math

import numpy as np

from . import rng
from .environment import (EnvSpec, generate_env, spec_constant,
                          spec_iid_pareto_mix, spec_layered,
                          spec_uniform_elliptic)
from .lattice import Ball, TorusLattice
from .moser import (energy_estimate_check, exponents, linear_cutoff,
                    moser_iterate, poincare_l1_check,
                    poisson_solve_dirichlet, small_exponent_bound,
                    sobolev_check, sobolev_s1_ratio)
from .solver import SolverConfig

CONSTANTS_FILE = "moser_constants_v1.txt"
CONSTANTS_VERSION = 1
DEFAULT_CALIBRATION_COUNT = 2500

# headroom over the seed-0 supremum; wider for the families whose empirical
# maxima fluctuate more between corpora
SAFETY_FACTORS = {
    "s1": 1.02,
    "sobolev": 3.0,
    "sobolev_weighted": 3.0,
    "energy": 2.0,
    "maximum": 2.0,
    "small_exponent": 3.0,
    "recursion": 5.0,
    "poincare": 1.25,
}

FAMILIES = ("s1", "sobolev", "energy", "maximum", "poincare")

# fixed exponent table per dimension; every pair satisfies 1/p + 1/q < 2/d
_PQ = {
    2: ((3.0, 3.0), (4.0, 2.0), (2.0, 4.0), (6.0, 1.5), (math.inf, 2.0)),
    3: ((4.0, 4.0), (math.inf, math.inf), (math.inf, 2.0), (4.0, math.inf)),
}


_FAMILY_ID = {"s1": 1, "sobolev": 2, "energy": 3, "maximum": 4, "poincare": 5}


def _key(seed, family, i, slot=0):
    stream = (_FAMILY_ID[family] << 40) + (int(i) << 8) + int(slot)
    return rng.stream_key(seed, stream)


def _uniform(seed, family, i, slot, count=1):
    k = _key(seed, family, i, slot)
    u = rng.uniform01(k, np.arange(count, dtype=np.uint64))
    return u if count > 1 else float(u[0])


def _pick(seq, u):
    return seq[min(int(u * len(seq)), len(seq) - 1)]


def _random_env(seed, family, i, d, n) -> EnvSpec:
    u = _uniform(seed, family, i, slot=1)
    env_seed = _key(seed, family, i, slot=7)
    kind = _pick(("constant", "elliptic", "wide", "pareto", "layered"), u)
    if kind == "constant":
        c = 0.5 + 1.5 * _uniform(seed, family, i, slot=2)
        return spec_constant(c, d, n, env_seed)
    if kind == "elliptic":
        return spec_uniform_elliptic(0.5, 2.0, d, n, env_seed)
    if kind == "wide":
        return spec_uniform_elliptic(0.05, 20.0, d, n, env_seed)
    if kind == "pareto":
        a = 3.0 + 5.0 * _uniform(seed, family, i, slot=3)
        b = 3.0 + 5.0 * _uniform(seed, family, i, slot=4)
        return spec_iid_pareto_mix(a, b, d, n, env_seed)
    profile = 0.5 + 3.5 * np.asarray(_uniform(seed, family, i, slot=5, count=3))
    return spec_layered(0, profile, d, n, env_seed)


def _random_field(seed, family, i, lat, smooth_steps=0, nonneg=False):
    k = _key(seed, family, i, slot=6)
    u = rng.normals(k, np.arange(lat.num_vertices, dtype=np.uint64))
    for _ in range(smooth_steps):
        g = u.reshape(lat.shape)
        acc = 2.0 * lat.d * g.astype(np.float64)
        for ax in range(lat.d):
            acc = acc + np.roll(g, 1, axis=ax) + np.roll(g, -1, axis=ax)
        u = (acc / (4.0 * lat.d)).reshape(-1)
    return np.abs(u) if nonneg else u


# ---------------------------------------------------------------------------
# instance generators, one ratio (or several) per call


def s1_instance(seed, i):
    lat = TorusLattice(2, 24)
    style = _pick(("vertex", "box", "noise", "bump"), _uniform(seed, "s1", i, 0))
    u = np.zeros(lat.num_vertices)
    if style == "vertex":
        u[lat.index_of((5, 5))] = 1.0 + _uniform(seed, "s1", i, 2)
    elif style == "box":
        m = 2 + int(8 * _uniform(seed, "s1", i, 2))
        grid = u.reshape(lat.shape)
        grid[2:2 + m, 3:3 + m] = 1.0
    else:
        field = _random_field(seed, "s1", i, lat,
                              smooth_steps=3 if style == "bump" else 0)
        grid = u.reshape(lat.shape)
        grid[3:15, 3:15] = field.reshape(lat.shape)[3:15, 3:15]
    return [("s1", sobolev_s1_ratio(lat, u))]


def sobolev_instance(seed, i):
    d = 3 if i % 5 == 4 else 2
    p, q = _pick(_PQ[d], _uniform(seed, "sobolev", i, 0))
    radius = (5 + int(6 * _uniform(seed, "sobolev", i, 2))) if d == 2 else 4
    side = 2 * radius + 4
    env = generate_env(_random_env(seed, "sobolev", i, d, side))
    lat = env.lattice
    x0 = lat.index_of((side // 2,) * d)
    ball = Ball(lat, x0, radius)
    inner = max(1, int(radius * (0.4 + 0.4 * _uniform(seed, "sobolev", i, 3))))
    eta = linear_cutoff(lat, x0, radius, min(inner, radius - 1))
    u = _random_field(seed, "sobolev", i, lat,
                      smooth_steps=int(3 * _uniform(seed, "sobolev", i, 4)))
    out = []
    lhs, core = sobolev_check(env, ball, eta, u, q)
    if core > 0:
        out.append(("sobolev", lhs / core))
    lhs_w, core_w = sobolev_check(env, ball, eta, u, q, p=p, weighted=True)
    if core_w > 0:
        out.append(("sobolev_weighted", lhs_w / core_w))
    return out


def _drift_solution(env, x0, radius, slopes, cfg):
    v = env.conductances * (np.asarray(slopes)[:, None] / env.lattice.n)
    ball = Ball(env.lattice, x0, radius)
    u = poisson_solve_dirichlet(env, ball, v, cfg)
    return ball, u, v


def _linear_profile(lat, center, slopes):
    c0 = lat.coords_of(center)
    coords = np.stack(np.unravel_index(np.arange(lat.num_vertices), lat.shape), axis=-1)
    rel = ((coords - c0 + lat.n // 2) % lat.n) - lat.n // 2
    return rel @ (np.asarray(slopes) / lat.n)


def energy_instance(seed, i, cfg=SolverConfig()):
    d = 3 if i % 6 == 5 else 2
    radius = (5 + int(6 * _uniform(seed, "energy", i, 0))) if d == 2 else 4
    side = 2 * radius + 4
    env = generate_env(_random_env(seed, "energy", i, d, side))
    lat = env.lattice
    x0 = lat.index_of((side // 2,) * d)
    slopes = 2.0 * np.asarray(_uniform(seed, "energy", i, 2, count=d)) - 1.0
    ball, u, _ = _drift_solution(env, x0, radius, slopes, cfg)
    f = _linear_profile(lat, x0, slopes)
    inner = max(1, int(radius * 0.5))
    eta = linear_cutoff(lat, x0, radius, inner)
    out = []
    for alpha in (1.0, 1.5, 2.0, 3.0):
        lhs, rhs = energy_estimate_check(env, ball, eta, u, alpha, f)
        if rhs > 0:
            out.append(("energy", lhs / rhs))
    return out


def maximum_instance(seed, i, n=None, cfg=SolverConfig()):
    d = 2
    if n is None:
        n = _pick((12, 16), _uniform(seed, "maximum", i, 0))
    p, q = _pick(tuple(pq for pq in _PQ[d] if not math.isinf(pq[1])),
                 _uniform(seed, "maximum", i, 2))
    side = 4 * n
    env = generate_env(_random_env(seed, "maximum", i, d, side))
    lat = env.lattice
    x0 = lat.index_of((side // 2,) * d)
    slopes = 2.0 * np.asarray(_uniform(seed, "maximum", i, 3, count=d)) - 1.0
    _, u, _ = _drift_solution(env, x0, n, slopes, cfg)
    exps = exponents(d, p, q)
    sigma, sigma_prime = _pick(((1.0, 0.5), (0.875, 0.5), (1.0, 0.625)),
                               _uniform(seed, "maximum", i, 4))
    report = moser_iterate(env, x0, n, u, exps, sigma, sigma_prime)
    rows = [("maximum", report.ratio)]
    _, _, bound = small_exponent_bound(report, 1.0)
    if bound > 0:
        rows.append(("small_exponent", report.max_abs / bound))
    rows.extend(("recursion", c) for c in recursion_constants(report))
    return rows


def recursion_constants(report):
    """Per-level constants c_k solving the recursion inequality with equality."""
    out = []
    span2 = (report.sigma - report.sigma_prime) ** 2
    mn = report.mu_norm * report.nu_norm
    levels = report.levels
    for a, b in zip(levels, levels[1:]):
        if a.norm <= 0 or b.norm <= 0:
            continue
        k, alpha_k = a.k, a.alpha
        c = (b.norm / a.norm ** a.gamma) ** (2.0 * alpha_k) \
            * span2 / (2.0 ** (2 * k) * alpha_k ** 2 * mn)
        out.append(c)
    return out


def poincare_instance(seed, i):
    d = 3 if i % 7 == 6 else 2
    radius = (4 + int(8 * _uniform(seed, "poincare", i, 0))) if d == 2 else 4
    side = 2 * radius + 3
    lat = TorusLattice(d, side)
    x0 = lat.index_of((side // 2,) * d)
    style = _pick(("noise", "smooth", "linear", "power"), _uniform(seed, "poincare", i, 2))
    if style == "linear":
        u = _linear_profile(lat, x0, np.ones(d)) * lat.n
    else:
        u = _random_field(seed, "poincare", i, lat,
                          smooth_steps=3 if style == "smooth" else 0)
        if style == "power":
            u = np.sign(u) * np.abs(u) ** 1.7
    return [("poincare", poincare_l1_check(lat, u, Ball(lat, x0, radius)))]


_GENERATORS = {
    "s1": s1_instance,
    "sobolev": sobolev_instance,
    "energy": energy_instance,
    "maximum": maximum_instance,
    "poincare": poincare_instance,
}

_CONSTANT_NAMES = ("s1", "sobolev", "sobolev_weighted", "energy", "maximum",
                   "small_exponent", "recursion", "poincare")


def corpus_ratios(seed: int, count: int, families=FAMILIES):
    ratios = {name: [] for name in _CONSTANT_NAMES}
    for family in families:
        gen = _GENERATORS[family]
        for i in range(count):
            for name, value in gen(seed, i):
                ratios[name].append(value)
    return ratios


def calibrate_constants(seed: int = 0, count: int = DEFAULT_CALIBRATION_COUNT) -> dict:
    ratios = corpus_ratios(seed, count)
    values = {}
    for name, vals in ratios.items():
        if vals:
            values[name] = float(np.max(vals)) * SAFETY_FACTORS[name]
    return values


def verify_constants(constants: dict, seed: int, count: int,
                     families=FAMILIES):
    """Violation rows (family, constant name, observed, allowed) on a fresh corpus."""
    rows = []
    for family in families:
        gen = _GENERATORS[family]
        for i in range(count):
            for name, value in gen(seed, i):
                allowed = constants[name]
                if value > allowed:
                    rows.append((family, name, float(value), float(allowed)))
    return rows


def save_constants(path, values: dict, seed: int, count: int) -> None:
    with open(path, "w") as fh:
        fh.write(f"version={CONSTANTS_VERSION}\n")
        fh.write(f"calibration_seed={seed}\n")
        fh.write(f"corpus_count={count}\n")
        for name in _CONSTANT_NAMES:
            if name in values:
                fh.write(f"{name}={values[name]!r}\n")


def load_constants(path=None) -> dict:
    if path is None:
        ref = importlib.resources.files("rcm").joinpath(CONSTANTS_FILE)
        text = ref.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    values = {}
    for line in text.strip().splitlines():
        name, _, raw = line.partition("=")
        values[name] = float(raw) if "." in raw or "e" in raw or "inf" in raw \
            else int(raw)
    if values.get("version") != CONSTANTS_VERSION:
        raise ValueError(f"unsupported constants file version {values.get('version')}")
    return values
