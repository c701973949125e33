"""Continuous-time random walks over a periodized environment.

The walk lives on Z^d; conductances are looked up modulo the torus side, so
the periodic harmonic coordinate stays exactly harmonic along the whole path.
Trajectory k of a batch uses the substream (master seed, k); each jump
consumes one uniform for the exponential clock and one for the direction, in
that order, so VSRW and CSRW driven by the same seed share their jump chain.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .corrector import CorrectorSolution
from .lattice import Environment

SCHEMES = ("VSRW", "CSRW")
DEFAULT_MAX_JUMPS = 10_000_000


@dataclass(frozen=True)
class WalkConfig:
    scheme: str = "VSRW"
    t_max: float = 1.0
    count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.t_max <= 0:
            raise ValueError("horizon must be positive")
        if self.count < 1:
            raise ValueError("trajectory count must be >= 1")


@dataclass(frozen=True)
class WalkPath:
    """One trajectory: jump times and unwrapped integer positions.

    positions[0] is the start at time 0; positions[i+1] holds from times[i]
    (inclusive) to times[i+1].
    """

    times: np.ndarray          # (m,), strictly increasing, > 0
    positions: np.ndarray      # (m+1, d), int64
    start: int
    scheme: str
    seed: int
    t_max: float
    side: int

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def num_jumps(self) -> int:
        return self.times.shape[0]

    def position_at(self, t: float) -> np.ndarray:
        """Right-continuous lookup of the position at time t."""
        if t < 0 or t > self.t_max:
            raise ValueError(f"time {t} outside the simulated horizon [0, {self.t_max}]")
        idx = int(np.searchsorted(self.times, t, side="right"))
        return self.positions[idx]


def _simulate(env: Environment, x0: int, t_max: float, seed: int, scheme: str,
              max_jumps: int) -> WalkPath:
    if t_max <= 0:
        raise ValueError("horizon must be positive")
    key = rng.stream_key(seed, 0)
    times, positions = _kernels.walk_path(env, x0, t_max, key, scheme, max_jumps)
    times.setflags(write=False)
    positions.setflags(write=False)
    return WalkPath(times=times, positions=positions, start=int(x0),
                    scheme=scheme, seed=int(seed), t_max=float(t_max),
                    side=env.lattice.n)


def simulate_vsrw(env: Environment, x0: int, t_max: float, seed: int,
                  max_jumps: int = DEFAULT_MAX_JUMPS) -> WalkPath:
    """Variable speed walk: Exp(mu(x)) holding times, jump law w_xy / mu(x)."""
    return _simulate(env, x0, t_max, seed, "VSRW", max_jumps)


def simulate_csrw(env: Environment, x0: int, t_max: float, seed: int,
                  max_jumps: int = DEFAULT_MAX_JUMPS) -> WalkPath:
    """Constant speed walk: unit-mean holding times, same jump chain as VSRW."""
    return _simulate(env, x0, t_max, seed, "CSRW", max_jumps)


def walk_positions_at(env: Environment, x0: int, times, count: int, seed: int,
                      scheme: str = "VSRW"):
    """Unwrapped positions of `count` independent trajectories at query times.

    Returns (positions, jump_counts) with positions of shape
    (count, len(times), d); jump_counts counts jumps up to the last query.
    Statistics of large batches should use this entry point rather than
    materializing paths.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if times.size == 0 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("query times must be positive and strictly increasing")
    return _kernels.walk_positions(env, x0, times, count, seed, scheme)


@dataclass(frozen=True)
class RescaledPath:
    """Diffusive rescaling t -> X_{n^2 t} / n of one path."""

    path: WalkPath
    n: int

    def eval(self, t: float) -> np.ndarray:
        return self.path.position_at(self.n ** 2 * t) / self.n


def rescale_path(path: WalkPath, n: int) -> RescaledPath:
    if n < 1:
        raise ValueError("rescaling factor must be >= 1")
    return RescaledPath(path=path, n=int(n))


def chi_at_positions(sol: CorrectorSolution, positions: np.ndarray) -> np.ndarray:
    """Corrector values (periodic extension) at unwrapped integer positions."""
    lat = sol.lattice
    idx = lat.vertex_indices(positions)
    return np.stack([sol.chi[j][idx] for j in range(lat.d)], axis=-1)


def martingale_path(path: WalkPath, sol: CorrectorSolution) -> np.ndarray:
    """M values at [0, jump times...]: corrected position, pinned to M_0 = 0.

    The periodic corrector is normalized to mean zero over the torus rather
    than to chi(start) = 0, so the start value is subtracted; the result is
    the gauge-independent martingale of the corrected coordinates.
    """
    if sol.lattice.n != path.side or sol.lattice.d != path.d:
        raise ValueError("corrector solved on a different lattice than the path")
    m = path.positions - chi_at_positions(sol, path.positions)
    return m - m[0]


def corrector_sup_along_path(path: WalkPath, sol: CorrectorSolution, n: int,
                             T: float) -> float:
    """sup over jump times <= n^2 T of |chi(X_s)|_inf / n."""
    horizon = n ** 2 * T
    if path.t_max < horizon:
        raise ValueError(f"path horizon {path.t_max} shorter than n^2 T = {horizon}")
    if sol.lattice.n != path.side or sol.lattice.d != path.d:
        raise ValueError("corrector solved on a different lattice than the path")
    m = int(np.searchsorted(path.times, horizon, side="right"))
    visited = path.positions[:m + 1]
    chi = chi_at_positions(sol, visited)
    return float(np.abs(chi).max()) / n


def occupation_fractions(env: Environment, x0: int, t_max: float, seed: int,
                         scheme: str = "VSRW") -> np.ndarray:
    """Fraction of time spent at each vertex (positions wrapped to the torus)."""
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    key = rng.stream_key(seed, 0)
    occ = _kernels.occupation_times(env, x0, t_max, key, scheme)
    return occ / t_max


def path_to_csv(path: WalkPath, out) -> None:
    d = path.d
    with open(out, "w") as fh:
        fh.write("time," + ",".join(f"x_{j + 1}" for j in range(d)) + "\n")
        fh.write("0.0," + ",".join(str(int(c)) for c in path.positions[0]) + "\n")
        for i in range(path.num_jumps):
            coords = ",".join(str(int(c)) for c in path.positions[i + 1])
            fh.write(f"{path.times[i]!r},{coords}\n")
