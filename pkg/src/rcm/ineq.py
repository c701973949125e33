"""Scalar power inequalities and their edge-field consequences.

The four scalar estimates are exact in real arithmetic; the checkers allow a
1e-12 relative slack to absorb rounding and nothing else.  Sweeps sample
magnitudes log-uniformly over 1e-6..1e6 with both signs, capping
|exponent| * |log10 magnitude| so that no intermediate quantity leaves the
representable range (extreme magnitudes are still exercised at moderate
exponents, extreme exponents at moderate magnitudes).
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .lattice import TorusLattice, edge_products, gradient

RTOL = 1e-12
_LOG_CAP = 280.0  # |alpha| * |log10 a| budget, safely inside float64 range


def signed_pow(a, alpha):
    """|a|^alpha * sign(a), with 0 mapped to 0."""
    if np.any(np.asarray(alpha) == 0):
        raise ValueError("signed power needs a nonzero exponent")
    a = np.asarray(a, dtype=np.float64)
    with np.errstate(divide="ignore"):
        mag = np.abs(a) ** alpha
    return np.where(a == 0.0, 0.0, np.sign(a) * mag)


def _holds(lhs, rhs, scale=None):
    """lhs <= rhs up to 1e-12 of the computation's natural magnitude.

    `scale` bounds the magnitudes entering the two sides before any
    cancellation; near-equality cases (a close to b) lose that many digits,
    so measuring the slack against the cancelled results would reject pure
    rounding noise.
    """
    if scale is None:
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
    else:
        scale = np.maximum(scale, np.maximum(np.abs(lhs), np.abs(rhs)))
    return lhs <= rhs + RTOL * scale


def _sides_chain_ub1(a, b, alpha, beta):
    lhs = np.abs(signed_pow(a, alpha) - signed_pow(b, alpha))
    with np.errstate(divide="ignore"):
        tail = np.abs(a) ** (alpha - beta) + np.abs(b) ** (alpha - beta)
    factor = np.maximum(1.0, np.abs(alpha / beta))
    rhs = factor * np.abs(signed_pow(a, beta) - signed_pow(b, beta)) * tail
    scale = (np.abs(a) ** alpha + np.abs(b) ** alpha) \
        + factor * (np.abs(a) ** beta + np.abs(b) ** beta) * tail
    return lhs, rhs, scale


def check_chain_ub1(a, b, alpha, beta):
    """|a~^al - b~^al| <= (1 v |al/be|) |a~^be - b~^be| (|a|^{al-be} + |b|^{al-be})."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(alpha == 0) or np.any(beta == 0):
        raise ValueError("exponents must be nonzero")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return _holds(*_sides_chain_ub1(a, b, alpha, beta))


def check_pol_ub(a, b, alpha):
    """(a~^al - b~^al)^2 <= al^2/(2al-1) (a-b)(a~^{2al-1} - b~^{2al-1}).

    Valid for alpha > 1/2 with general signs; for nonnegative a, b any
    alpha outside {0, 1/2} is allowed.  The constant keeps the sign of
    2*alpha - 1, which makes the right-hand side nonnegative in every
    admissible regime.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.any((alpha == 0) | (alpha == 0.5)):
        raise ValueError("exponent must avoid {0, 1/2}")
    if np.any((alpha < 0.5) & ((a < 0) | (b < 0))):
        raise ValueError("alpha <= 1/2 requires nonnegative arguments")
    return _holds(*_sides_pol_ub(a, b, alpha))


def _sides_pol_ub(a, b, alpha):
    diff = signed_pow(a, alpha) - signed_pow(b, alpha)
    const = alpha * alpha / (2 * alpha - 1)
    rhs = const * (a - b) \
        * (signed_pow(a, 2 * alpha - 1) - signed_pow(b, 2 * alpha - 1))
    with np.errstate(divide="ignore"):
        scale = (np.abs(a) ** alpha + np.abs(b) ** alpha) ** 2 \
            + np.abs(const) * (np.abs(a) + np.abs(b)) \
            * (np.abs(a) ** (2 * alpha - 1) + np.abs(b) ** (2 * alpha - 1))
    return diff * diff, rhs, scale


def check_chain_lo(a, b, alpha, beta):
    """(|a|^al + |b|^al) |a~^be - b~^be| <= 2 |a~^{al+be} - b~^{al+be}|."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if np.any(alpha < 0) or np.any(beta < 0):
        raise ValueError("exponents must be nonnegative")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return _holds(*_sides_chain_lo(a, b, alpha, beta))


def _sides_chain_lo(a, b, alpha, beta):
    # beta = 0: a~^0 is sign(a); alpha + beta = 0 only when both vanish
    pow_b_a = np.where(beta == 0, np.sign(a), signed_pow(a, np.where(beta == 0, 1, beta)))
    pow_b_b = np.where(beta == 0, np.sign(b), signed_pow(b, np.where(beta == 0, 1, beta)))
    ab = alpha + beta
    pow_ab_a = np.where(ab == 0, np.sign(a), signed_pow(a, np.where(ab == 0, 1, ab)))
    pow_ab_b = np.where(ab == 0, np.sign(b), signed_pow(b, np.where(ab == 0, 1, ab)))
    pow_a_a = np.where(alpha == 0, np.where(a == 0, 0.0, 1.0),
                       np.abs(a) ** np.where(alpha == 0, 1, alpha))
    pow_a_b = np.where(alpha == 0, np.where(b == 0, 0.0, 1.0),
                       np.abs(b) ** np.where(alpha == 0, 1, alpha))
    lhs = (pow_a_a + pow_a_b) * np.abs(pow_b_a - pow_b_b)
    rhs = 2.0 * np.abs(pow_ab_a - pow_ab_b)
    scale = (pow_a_a + pow_a_b) * (np.abs(pow_b_a) + np.abs(pow_b_b)) \
        + 2.0 * (np.abs(pow_ab_a) + np.abs(pow_ab_b))
    return lhs, rhs, scale


def check_chain_ub2(a, b, alpha):
    """(|a|^{2al-1} + |b|^{2al-1}) |a-b| <= 4 |a~^al - b~^al| (|a|^al + |b|^al)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha < 0.5):
        raise ValueError("exponent must be >= 1/2")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return _holds(*_sides_chain_ub2(a, b, alpha))


def _sides_chain_ub2(a, b, alpha):
    with np.errstate(divide="ignore"):
        heads = np.abs(a) ** (2 * alpha - 1) + np.abs(b) ** (2 * alpha - 1)
    lhs = heads * np.abs(a - b)
    tails = np.abs(a) ** alpha + np.abs(b) ** alpha
    rhs = 4.0 * np.abs(signed_pow(a, alpha) - signed_pow(b, alpha)) * tails
    scale = heads * (np.abs(a) + np.abs(b)) + 4.0 * tails * tails
    return lhs, rhs, scale


def check_edge_chain_rules(lat: TorusLattice, u: np.ndarray, alpha: float) -> bool:
    """Both discrete chain-rule surrogates for a nonnegative vertex field.

    Upper: |grad u^alpha| / (1 v |alpha|) <= |u^{alpha-1}.grad u| + |grad u.u^{alpha-1}|
    Lower (alpha >= 1): 2 |grad u^alpha| >= same right-hand side.
    """
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0):
        raise ValueError("edge chain rules are checked for nonnegative fields")
    if alpha >= 1:
        with np.errstate(divide="ignore", invalid="ignore"):
            upow = np.where(u == 0.0, 0.0 if alpha > 1 else 1.0, u ** (alpha - 1))
    else:
        with np.errstate(divide="ignore"):
            upow = u ** (alpha - 1)
    grad_ua = gradient(lat, signed_pow(u, alpha))
    gu = gradient(lat, u)
    tail, head = edge_products(lat, upow, gu)
    rhs = np.abs(tail) + np.abs(head)
    lhs = np.abs(grad_ua)
    upper = np.all(lhs / max(1.0, abs(alpha)) <= rhs + RTOL * np.maximum(lhs, rhs))
    if alpha >= 1:
        lower = np.all(rhs <= 2.0 * lhs + RTOL * np.maximum(rhs, 2.0 * lhs))
        return bool(upper and lower)
    return bool(upper)


# ---------------------------------------------------------------------------
# randomized sweeps


@dataclass(frozen=True)
class SampleSpec:
    count: int = 1_000_000
    seed: int = 0
    log_mag_low: float = -6.0
    log_mag_high: float = 6.0
    exp_high: float = 64.0


def _sample_values(key, counters, spec, max_exp):
    """Signed magnitudes with the exponent-dependent log-range cap."""
    cap = np.minimum(spec.log_mag_high, _LOG_CAP / np.maximum(max_exp, 1.0))
    lo = np.maximum(spec.log_mag_low, -cap)
    u = rng.uniform01(key, counters)
    s = rng.uniform01(key, counters + np.uint64(1 << 40))
    mag = 10.0 ** (lo + (cap - lo) * u)
    return np.where(s < 0.5, -mag, mag)


def _sample_exponent(key, counters, low, high):
    """Log-uniform over [low, high] plus dense mass near the lower endpoint."""
    u = rng.uniform01(key, counters)
    t = rng.uniform01(key, counters + np.uint64(1 << 41))
    smooth = low * (high / low) ** u
    near = low * (1.0 + 0.1 * u)
    return np.where(t < 0.25, near, smooth)


def sweep_chain_ub1(spec: SampleSpec):
    key = rng.stream_key(spec.seed, 1)
    c = np.arange(spec.count, dtype=np.uint64)
    alpha = _sample_exponent(key, c, 1e-3, spec.exp_high)
    alpha = np.where(rng.uniform01(key, c + np.uint64(1 << 42)) < 0.5, -alpha, alpha)
    beta = _sample_exponent(key, c + np.uint64(1 << 43), 1e-3, spec.exp_high)
    beta = np.where(rng.uniform01(key, c + np.uint64(1 << 44)) < 0.5, -beta, beta)
    # mixed magnitudes make the product grow like |beta| + |alpha - beta|
    max_exp = np.abs(alpha) + np.abs(beta) + np.abs(alpha - beta)
    a = _sample_values(key, c + np.uint64(1 << 45), spec, max_exp)
    b = _sample_values(key, c + np.uint64(1 << 46), spec, max_exp)
    ok = check_chain_ub1(a, b, alpha, beta)
    return _violations("chain_ub1", ok, a, b, alpha, beta)


def sweep_pol_ub(spec: SampleSpec):
    # two regimes, each with the full sample count
    key = rng.stream_key(spec.seed, 2)
    c1 = np.arange(spec.count, dtype=np.uint64)
    # regime 1: general signs, alpha > 1/2
    alpha1 = 0.5 + _sample_exponent(key, c1, 1e-3, spec.exp_high)
    m1 = np.maximum(2.0 * np.abs(alpha1), np.abs(2.0 * alpha1 - 1.0) + 1.0)
    a1 = _sample_values(key, c1 + np.uint64(1 << 45), spec, m1)
    b1 = _sample_values(key, c1 + np.uint64(1 << 46), spec, m1)
    ok1 = check_pol_ub(a1, b1, alpha1)
    # regime 2: nonnegative arguments, alpha < 1/2 (including negative)
    c2 = np.arange(spec.count, dtype=np.uint64) + np.uint64(1 << 32)
    u = rng.uniform01(key, c2)
    alpha2 = np.where(u < 0.5, 0.5 - _sample_exponent(key, c2 + np.uint64(1 << 41), 1e-3, 0.499),
                      -_sample_exponent(key, c2 + np.uint64(1 << 42), 1e-3, spec.exp_high))
    m2 = np.maximum(2.0 * np.abs(alpha2), np.abs(2.0 * alpha2 - 1.0) + 1.0)
    a2 = np.abs(_sample_values(key, c2 + np.uint64(1 << 45), spec, m2))
    b2 = np.abs(_sample_values(key, c2 + np.uint64(1 << 46), spec, m2))
    ok2 = check_pol_ub(a2, b2, alpha2)
    rows1 = _violations("pol_ub_signed", ok1, a1, b1, alpha1, np.zeros_like(alpha1))
    rows2 = _violations("pol_ub_nonneg", ok2, a2, b2, alpha2, np.zeros_like(alpha2))
    return rows1 + rows2


def sweep_chain_lo(spec: SampleSpec):
    key = rng.stream_key(spec.seed, 3)
    c = np.arange(spec.count, dtype=np.uint64)
    alpha = _sample_exponent(key, c, 1e-3, spec.exp_high)
    beta = _sample_exponent(key, c + np.uint64(1 << 43), 1e-3, spec.exp_high)
    zero_beta = rng.uniform01(key, c + np.uint64(1 << 44)) < 0.05
    beta = np.where(zero_beta, 0.0, beta)
    max_exp = alpha + beta
    a = _sample_values(key, c + np.uint64(1 << 45), spec, max_exp)
    b = _sample_values(key, c + np.uint64(1 << 46), spec, max_exp)
    ok = check_chain_lo(a, b, alpha, beta)
    return _violations("chain_lo", ok, a, b, alpha, beta)


def sweep_chain_ub2(spec: SampleSpec):
    key = rng.stream_key(spec.seed, 4)
    c = np.arange(spec.count, dtype=np.uint64)
    alpha = 0.5 + _sample_exponent(key, c, 1e-4, spec.exp_high)
    max_exp = np.maximum(2.0 * alpha, np.abs(2.0 * alpha - 1.0) + 1.0)
    a = _sample_values(key, c + np.uint64(1 << 45), spec, max_exp)
    b = _sample_values(key, c + np.uint64(1 << 46), spec, max_exp)
    ok = check_chain_ub2(a, b, alpha)
    return _violations("chain_ub2", ok, a, b, alpha, np.zeros_like(alpha))


_SIDES = {
    "chain_ub1": lambda a, b, al, be: _sides_chain_ub1(a, b, al, be),
    "pol_ub_signed": lambda a, b, al, be: _sides_pol_ub(a, b, al),
    "pol_ub_nonneg": lambda a, b, al, be: _sides_pol_ub(a, b, al),
    "chain_lo": lambda a, b, al, be: _sides_chain_lo(a, b, al, be),
    "chain_ub2": lambda a, b, al, be: _sides_chain_ub2(a, b, al),
}


def _violations(name, ok, a, b, alpha, beta):
    bad = np.flatnonzero(~ok)
    rows = []
    for i in bad:
        lhs, rhs, _ = _SIDES[name](a[i], b[i], alpha[i], beta[i])
        rows.append((name, float(a[i]), float(b[i]), float(alpha[i]),
                     float(beta[i]), float(lhs), float(rhs)))
    return rows


def run_sweeps(samples: int = 1_000_000, seed: int = 0):
    """All four scalar sweeps; returns the (ideally empty) violation rows."""
    spec = SampleSpec(count=samples, seed=seed)
    rows = []
    rows += sweep_chain_ub1(spec)
    rows += sweep_pol_ub(spec)
    rows += sweep_chain_lo(spec)
    rows += sweep_chain_ub2(spec)
    return rows


def violations_to_csv(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("inequality,a,b,alpha,beta,lhs,rhs\n")
        for name, a, b, alpha, beta, lhs, rhs in rows:
            fh.write(f"{name},{a!r},{b!r},{alpha!r},{beta!r},{lhs!r},{rhs!r}\n")
