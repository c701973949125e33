"""Conductance environment laws: generation, moments, shifts, persistence.

Conductances are derived per edge from counter-based streams, so a given
(spec, seed) always produces the same environment regardless of evaluation
order.  The file format is documented next to save_env.
"""

import dataclasses
import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .lattice import Environment, TorusLattice, make_environment, _roll_flat

KINDS = ("constant", "uniform_elliptic", "iid_pareto_mix", "layered", "gff_exp")

_MAGIC = b"RCME"
_VERSION = 1


@dataclass(frozen=True)
class EnvSpec:
    """Parameters of one conductance law on a (d, n) torus."""

    kind: str
    d: int
    n: int
    seed: int
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown environment kind {self.kind!r}")
        p = self.params
        if self.kind == "constant":
            if len(p) != 1 or p[0] <= 0:
                raise ValueError("constant law needs a single c > 0")
        elif self.kind == "uniform_elliptic":
            if len(p) != 2 or not (0 < p[0] <= p[1]):
                raise ValueError("uniform_elliptic needs 0 < c_low <= c_high")
        elif self.kind == "iid_pareto_mix":
            if len(p) != 2 or p[0] <= 0 or p[1] <= 0:
                raise ValueError("iid_pareto_mix needs tail indices a > 0, b > 0")
        elif self.kind == "layered":
            axis, profile = p[0], p[1]
            if not (0 <= axis < self.d):
                raise ValueError("layered axis out of range")
            if len(profile) == 0 or any(c <= 0 for c in profile):
                raise ValueError("layered profile must be positive")
        elif self.kind == "gff_exp":
            if len(p) != 1:
                raise ValueError("gff_exp needs a single scale parameter")
            if self.d < 3:
                raise ValueError("gff_exp requires dimension >= 3")

    def lattice(self) -> TorusLattice:
        return TorusLattice(self.d, self.n)

    def with_side(self, n: int) -> "EnvSpec":
        return dataclasses.replace(self, n=n)

    def label(self) -> str:
        return f"{self.kind}{self.params}@d={self.d},n={self.n},seed={self.seed}"


def spec_constant(c, d, n, seed=0):
    return EnvSpec("constant", d, n, seed, (float(c),))


def spec_uniform_elliptic(c_low, c_high, d, n, seed=0):
    return EnvSpec("uniform_elliptic", d, n, seed, (float(c_low), float(c_high)))


def spec_iid_pareto_mix(a, b, d, n, seed=0):
    return EnvSpec("iid_pareto_mix", d, n, seed, (float(a), float(b)))


def spec_layered(axis, profile, d, n, seed=0):
    return EnvSpec("layered", d, n, seed, (int(axis), tuple(float(c) for c in profile)))


def spec_gff_exp(scale, d, n, seed=0):
    return EnvSpec("gff_exp", d, n, seed, (float(scale),))


def _gff_sample(lat: TorusLattice, seed: int) -> np.ndarray:
    """Massless Gaussian free field on the torus, zero Fourier mode pinned.

    Independent complex Gaussian amplitudes with variance N/lambda_k per
    nonzero Laplacian eigenvalue lambda_k; the real part of the inverse FFT
    is an exact sample.
    """
    n, d, nv = lat.n, lat.d, lat.num_vertices
    freq = 4.0 * np.sin(np.pi * np.arange(n) / n) ** 2
    lam = freq
    for _ in range(d - 1):
        lam = lam[..., None] + freq
    lam = lam.reshape(-1)
    scale = np.zeros(nv)
    scale[1:] = np.sqrt(nv / lam[1:])
    key = rng.stream_key(seed, 0)
    re = rng.normals(key, np.arange(nv, dtype=np.uint64) * np.uint64(2))
    im = rng.normals(key, np.arange(nv, dtype=np.uint64) * np.uint64(2) + np.uint64(1))
    coeff = (scale * (re + 1j * im)).reshape(lat.shape)
    return np.real(np.fft.ifftn(coeff)).reshape(-1)


def generate_env(spec: EnvSpec) -> Environment:
    lat = spec.lattice()
    d, nv = lat.d, lat.num_vertices
    ne = d * nv
    kind, p = spec.kind, spec.params
    if kind == "constant":
        w = np.full((d, nv), p[0])
    elif kind == "uniform_elliptic":
        key = rng.stream_key(spec.seed, 0)
        u = rng.uniform01(key, np.arange(ne, dtype=np.uint64)).reshape(d, nv)
        w = p[0] + (p[1] - p[0]) * u
    elif kind == "iid_pareto_mix":
        a, b = p
        key = rng.stream_key(spec.seed, 0)
        idx = np.arange(ne, dtype=np.uint64)
        u_branch = rng.uniform01(key, idx * np.uint64(2))
        u_val = 1.0 - rng.uniform01(key, idx * np.uint64(2) + np.uint64(1))  # in (0, 1]
        upper = u_val ** (-1.0 / a)
        lower = u_val ** (1.0 / b)
        w = np.where(u_branch < 0.5, upper, lower).reshape(d, nv)
    elif kind == "layered":
        axis, profile = p
        profile = np.asarray(profile)
        coords_axis = np.stack(
            np.unravel_index(np.arange(nv), lat.shape), axis=0)[axis]
        w = np.ones((d, nv))
        w[axis] = profile[coords_axis % profile.size]
    elif kind == "gff_exp":
        phi = _gff_sample(lat, spec.seed)
        w = np.empty((d, nv))
        for i in range(d):
            w[i] = np.exp(p[0] * (phi + _roll_flat(lat, phi, -1, i)))
    else:  # pragma: no cover
        raise ValueError(kind)
    return make_environment(lat, w)


def check_moment_condition(p: float, q: float, d: int) -> bool:
    """Strict inequality 1/p + 1/q < 2/d for p, q in (1, inf]."""
    if p <= 1 or q <= 1:
        raise ValueError("moment exponents must lie in (1, inf]")
    inv = (0.0 if math.isinf(p) else 1.0 / p) + (0.0 if math.isinf(q) else 1.0 / q)
    return inv < 2.0 / d


def pareto_mix_edge_moment(a: float, b: float, s: float):
    """E[w^s] for the two-sided mixture, or None when the moment diverges.

    The upper branch is U^(-1/a) (moment finite iff s < a), the lower branch
    U^(1/b) (finite for all s >= 0); negative s probes 1/w instead.
    """
    if s >= 0:
        if s >= a:
            return None
        return 0.5 * (a / (a - s) + b / (b + s))
    return pareto_mix_edge_moment(b, a, -s)


@dataclass(frozen=True)
class MomentReport:
    p: float
    q: float
    mu_p: float        # ||mu||_{p, torus}^p
    nu_q: float        # ||nu||_{q, torus}^q
    edge_p: float      # (1/#edges) sum w^p
    edge_inv_q: float  # (1/#edges) sum w^{-q}
    mu_p_target: float | None = None
    nu_q_target: float | None = None


def empirical_moments(env: Environment, p: float, q: float,
                      spec: EnvSpec | None = None) -> MomentReport:
    if p < 1 or q < 1 or math.isinf(p) or math.isinf(q):
        raise ValueError("empirical moments need finite exponents p, q >= 1")
    w = env.conductances
    mu_p = float(np.mean(env.mu ** p))
    nu_q = float(np.mean(env.nu ** q))
    edge_p = float(np.mean(w ** p))
    edge_inv_q = float(np.mean(w ** -q))
    mu_t = nu_t = None
    if spec is not None:
        two_d = 2 * env.lattice.d
        if spec.kind == "constant":
            mu_t = (two_d * spec.params[0]) ** p
            nu_t = (two_d / spec.params[0]) ** q
        elif spec.kind == "iid_pareto_mix" and p == 1 and q == 1:
            a, b = spec.params
            m = pareto_mix_edge_moment(a, b, 1.0)
            mi = pareto_mix_edge_moment(a, b, -1.0)
            mu_t = None if m is None else two_d * m
            nu_t = None if mi is None else two_d * mi
    return MomentReport(p=p, q=q, mu_p=mu_p, nu_q=nu_q, edge_p=edge_p,
                        edge_inv_q=edge_inv_q, mu_p_target=mu_t, nu_q_target=nu_t)


def shift_env(env: Environment, z) -> Environment:
    """Environment translated so that the new origin sits at z."""
    lat = env.lattice
    z = lat.wrap_coords(np.asarray(z, dtype=np.int64))
    if z.shape != (lat.d,):
        raise ValueError(f"shift vector must have {lat.d} coordinates")
    shift = tuple(-int(zi) for zi in z)
    axes = tuple(range(lat.d))
    w = np.stack([
        np.roll(env.conductances[i].reshape(lat.shape), shift, axis=axes).reshape(-1)
        for i in range(lat.d)
    ])
    return make_environment(lat, w)


def save_env(env: Environment, path) -> None:
    """Write the binary environment file.

    Layout: magic "RCME", u32 version = 1, u8 dimension, u64 side length,
    then d * n**d little-endian float64 conductances, vertices lexicographic
    with the last coordinate fastest, per vertex the d forward edges
    +e_1 .. +e_d.
    """
    lat = env.lattice
    header = _MAGIC + struct.pack("<IBQ", _VERSION, lat.d, lat.n)
    payload = np.ascontiguousarray(env.conductances.T, dtype="<f8").tobytes()
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def load_env(path) -> Environment:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 17 or blob[:4] != _MAGIC:
        raise ValueError("not an environment file (bad magic)")
    version, d, n = struct.unpack("<IBQ", blob[4:17])
    if version != _VERSION:
        raise ValueError(f"unsupported environment file version {version}")
    lat = TorusLattice(int(d), int(n))
    expected = 17 + lat.num_edges * 8
    if len(blob) != expected:
        raise ValueError(
            f"truncated or oversized payload: {len(blob)} bytes, expected {expected}")
    flat = np.frombuffer(blob, dtype="<f8", offset=17)
    w = np.ascontiguousarray(flat.reshape(lat.num_vertices, lat.d).T)
    if np.any(~np.isfinite(w)) or np.any(w <= 0):
        raise ValueError("environment file contains nonpositive conductances")
    return make_environment(lat, w)
