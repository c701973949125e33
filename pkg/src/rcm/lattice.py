"""Discrete calculus on the weighted d-dimensional torus.

Vertices are indexed lexicographically with the last coordinate fastest,
i.e. C order of the (n,)*d grid.  Every unoriented edge is stored once in its
canonical orientation (x, x + e_i mod n); an edge field is an array of shape
(d, n**d) whose entry [i, v] sits on the edge leaving vertex v in direction i
(tail e^- = v, head e^+ = v + e_i).  Vertex fields are flat arrays of length
n**d.  All operations are pure functions; lattices and environments are
immutable after construction.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import rng


@dataclass(frozen=True)
class TorusLattice:
    """Periodic d-dimensional lattice with side length n."""

    d: int
    n: int

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"dimension must be >= 2, got {self.d}")
        if self.n < 3:
            raise ValueError(f"side length must be >= 3, got {self.n}")

    @property
    def num_vertices(self) -> int:
        return self.n ** self.d

    @property
    def num_edges(self) -> int:
        return self.d * self.n ** self.d

    @property
    def shape(self):
        return (self.n,) * self.d

    def index_of(self, coords) -> int:
        c = np.mod(np.asarray(coords, dtype=np.int64), self.n)
        return int(np.ravel_multi_index(tuple(c), self.shape))

    def coords_of(self, index: int) -> np.ndarray:
        return np.array(np.unravel_index(int(index), self.shape), dtype=np.int64)

    def wrap_coords(self, coords) -> np.ndarray:
        """Map (arrays of) integer coordinates into the fundamental domain."""
        return np.mod(np.asarray(coords, dtype=np.int64), self.n)

    def vertex_indices(self, coords) -> np.ndarray:
        """Vertex indices of an (..., d) array of integer coordinates."""
        c = self.wrap_coords(coords)
        return np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), self.shape)

    def circ_dist(self, a, b) -> np.ndarray:
        """Per-coordinate circular distance."""
        delta = np.abs(np.asarray(a, dtype=np.int64) - np.asarray(b, dtype=np.int64))
        return np.minimum(delta, self.n - delta)

    def graph_distance(self, x, y) -> int:
        """Torus graph distance (sum of circular coordinate distances)."""
        cx = self.coords_of(x) if np.isscalar(x) else np.asarray(x)
        cy = self.coords_of(y) if np.isscalar(y) else np.asarray(y)
        return int(self.circ_dist(cx, cy).sum())

    def distance_field(self, x0: int) -> np.ndarray:
        """Graph distance from x0 to every vertex, as a flat array."""
        c0 = self.coords_of(x0)
        axes = [self.circ_dist(np.arange(self.n), c0[i]) for i in range(self.d)]
        dist = axes[0]
        for a in axes[1:]:
            dist = dist[..., None] + a
        return dist.reshape(-1)


@lru_cache(maxsize=None)
def neighbor_indices(lat: TorusLattice):
    """(forward, backward) vertex index tables of shape (d, n**d)."""
    idx = np.arange(lat.num_vertices, dtype=np.int64).reshape(lat.shape)
    fwd = np.stack([np.roll(idx, -1, axis=i).reshape(-1) for i in range(lat.d)])
    bwd = np.stack([np.roll(idx, 1, axis=i).reshape(-1) for i in range(lat.d)])
    return fwd, bwd


def _as_grid(lat, v):
    return np.asarray(v).reshape(lat.shape)


def _roll_flat(lat, v, shift, axis):
    return np.roll(_as_grid(lat, v), shift, axis=axis).reshape(-1)


@dataclass(frozen=True)
class Ball:
    """Closed graph-distance ball on the torus."""

    lattice: TorusLattice
    center: int
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("ball radius must be >= 0")

    @property
    def unwrapped(self) -> bool:
        """True when the ball embeds isometrically in Z^d (2r < n)."""
        return 2 * self.radius < self.lattice.n

    def vertices(self) -> np.ndarray:
        return ball_vertices(self.lattice, self.center, self.radius)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.lattice.num_vertices, dtype=bool)
        m[self.vertices()] = True
        return m

    def size(self) -> int:
        return self.vertices().size


@lru_cache(maxsize=512)
def _ball_vertices_cached(lat: TorusLattice, center: int, radius: int):
    dist = lat.distance_field(center)
    v = np.flatnonzero(dist <= radius)
    v.setflags(write=False)
    return v


def ball_vertices(lat: TorusLattice, x0: int, r: int) -> np.ndarray:
    """Sorted vertex indices of the closed ball B(x0, r)."""
    if r < 0:
        raise ValueError("ball radius must be >= 0")
    return _ball_vertices_cached(lat, int(x0), int(r))


def boundary_vertices(lat: TorusLattice, vertex_set: np.ndarray) -> np.ndarray:
    """Relative internal boundary of a vertex set within the full torus."""
    mask = np.zeros(lat.num_vertices, dtype=bool)
    mask[vertex_set] = True
    fwd, bwd = neighbor_indices(lat)
    has_outside = np.zeros(lat.num_vertices, dtype=bool)
    for i in range(lat.d):
        has_outside |= mask & ~mask[fwd[i]]
        has_outside |= mask & ~mask[bwd[i]]
    return np.flatnonzero(has_outside)


@dataclass(frozen=True)
class Environment:
    """Positive conductances on the torus with cached vertex measures.

    mu[x] is the sum of conductances over the 2d edges at x and nu[x] the sum
    of their reciprocals.
    """

    lattice: TorusLattice
    conductances: np.ndarray  # shape (d, n**d), canonical edge order
    mu: np.ndarray = field(repr=False)
    nu: np.ndarray = field(repr=False)

    def edge_grid(self, i: int) -> np.ndarray:
        return self.conductances[i].reshape(self.lattice.shape)


def make_environment(lat: TorusLattice, conductances: np.ndarray) -> Environment:
    w = np.ascontiguousarray(conductances, dtype=np.float64)
    if w.shape != (lat.d, lat.num_vertices):
        raise ValueError(
            f"conductance array must have shape {(lat.d, lat.num_vertices)}, got {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise ValueError("conductances must be finite")
    if np.any(w <= 0.0):
        raise ValueError("conductances must be strictly positive")
    mu = np.zeros(lat.num_vertices)
    nu = np.zeros(lat.num_vertices)
    for i in range(lat.d):
        mu += w[i]
        mu += _roll_flat(lat, w[i], 1, i)
        nu += 1.0 / w[i]
        nu += _roll_flat(lat, 1.0 / w[i], 1, i)
    for arr in (w, mu, nu):
        arr.setflags(write=False)
    return Environment(lattice=lat, conductances=w, mu=mu, nu=nu)


# ---------------------------------------------------------------------------
# discrete gradient / divergence / Laplacian


def gradient(lat: TorusLattice, f: np.ndarray) -> np.ndarray:
    """Edge field with value f(e^+) - f(e^-) on each canonical edge."""
    f = np.asarray(f, dtype=np.float64)
    return np.stack([_roll_flat(lat, f, -1, i) - f for i in range(lat.d)])


def divergence(lat: TorusLattice, F: np.ndarray) -> np.ndarray:
    """Adjoint of the gradient: sum of F over incoming minus outgoing edges."""
    F = np.asarray(F, dtype=np.float64)
    out = np.zeros(lat.num_vertices)
    for i in range(lat.d):
        out += _roll_flat(lat, F[i], 1, i)
        out -= F[i]
    return out


def laplacian(env: Environment, f: np.ndarray) -> np.ndarray:
    """Weighted graph Laplacian, the direct neighbor-sum formula.

    Equals -divergence(conductances * gradient(f)) up to rounding; the two
    routes are compared in the test suite.
    """
    lat = env.lattice
    f = np.asarray(f, dtype=np.float64)
    out = np.zeros(lat.num_vertices)
    for i in range(lat.d):
        w = env.conductances[i]
        out += w * (_roll_flat(lat, f, -1, i) - f)
        wb = _roll_flat(lat, w, 1, i)
        out += wb * (_roll_flat(lat, f, 1, i) - f)
    return out


def dirichlet_form(env: Environment, f: np.ndarray, g: np.ndarray) -> float:
    """Energy <grad f, w grad g> summed over canonical edges."""
    gf = gradient(env.lattice, f)
    gg = gf if g is f else gradient(env.lattice, g)
    return float(np.sum(env.conductances * gf * gg))


def weighted_dirichlet_form(env: Environment, eta: np.ndarray, u: np.ndarray) -> float:
    """Dirichlet form with edge weights (eta^2(e^-) + eta^2(e^+)) w(e) / 2."""
    eta = np.asarray(eta, dtype=np.float64)
    if np.any(eta < 0.0) or np.any(eta > 1.0):
        raise ValueError("cutoff must take values in [0, 1]")
    lat = env.lattice
    eta2 = eta * eta
    gu = gradient(lat, u)
    total = 0.0
    for i in range(lat.d):
        w_mod = 0.5 * (eta2 + _roll_flat(lat, eta2, -1, i)) * env.conductances[i]
        total += float(np.sum(w_mod * gu[i] * gu[i]))
    return total


def edge_products(lat: TorusLattice, f: np.ndarray, F: np.ndarray):
    """Tail and head products (f.F)(e) = f(e^-) F(e), (F.f)(e) = f(e^+) F(e)."""
    f = np.asarray(f, dtype=np.float64)
    F = np.asarray(F, dtype=np.float64)
    tail = f[None, :] * F
    head = np.stack([_roll_flat(lat, f, -1, i) * F[i] for i in range(lat.d)])
    return tail, head


# ---------------------------------------------------------------------------
# space-averaged norms


def norm_avg(f: np.ndarray, p: float, ball: Ball) -> float:
    """Space-averaged l^p norm of f over a ball; p = inf gives the max."""
    v = ball.vertices()
    if v.size == 0:
        raise ValueError("norm over an empty ball")
    vals = np.abs(np.asarray(f, dtype=np.float64)[v])
    if np.isinf(p):
        return float(vals.max())
    if p < 1:
        raise ValueError("norm exponent must be >= 1")
    return float(np.mean(vals ** p) ** (1.0 / p))


def norm_avg_mu(env: Environment, f: np.ndarray, p: float, ball: Ball) -> float:
    """mu-weighted space-averaged l^p norm over a ball."""
    v = ball.vertices()
    if v.size == 0:
        raise ValueError("norm over an empty ball")
    vals = np.abs(np.asarray(f, dtype=np.float64)[v])
    if np.isinf(p):
        return float(vals.max())
    if p < 1:
        raise ValueError("norm exponent must be >= 1")
    return float(np.mean(env.mu[v] * vals ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# isoperimetry probe


def _relative_boundary_size(lat, ball_mask, a_mask):
    fwd, bwd = neighbor_indices(lat)
    outside = ball_mask & ~a_mask
    on_boundary = np.zeros(lat.num_vertices, dtype=bool)
    for i in range(lat.d):
        on_boundary |= a_mask & outside[fwd[i]]
        on_boundary |= a_mask & outside[bwd[i]]
    return int(np.count_nonzero(on_boundary))


def _random_connected_subset(lat, ball, target, key, ball_mask):
    """Grow a connected subset of the ball by randomized breadth-first search."""
    fwd, bwd = neighbor_indices(lat)
    verts = ball.vertices()
    start = int(verts[int(rng.uniform01(key, [0])[0] * verts.size)])
    chosen = {start}
    frontier = [start]
    counter = 1
    while len(chosen) < target and frontier:
        pick = int(rng.uniform01(key, [counter])[0] * len(frontier))
        counter += 1
        v = frontier.pop(pick)
        for i in range(lat.d):
            for w in (int(fwd[i, v]), int(bwd[i, v])):
                if ball_mask[w] and w not in chosen:
                    chosen.add(w)
                    frontier.append(w)
                    if len(chosen) >= target:
                        break
            if len(chosen) >= target:
                break
    return np.fromiter(chosen, dtype=np.int64)


def isoperimetry_probe(lat: TorusLattice, x0: int, r: int, trials: int, seed: int = 0) -> float:
    """Empirical probe of the relative isoperimetric ratio on B(x0, r).

    Returns the minimum of r * |boundary of A in B| / |A| over sampled
    sub-boxes and random connected subsets A with |A| < |B|/2.  This is
    heuristic evidence for a lower bound, not a certified constant.
    """
    ball = Ball(lat, x0, r)
    ball_mask = ball.mask()
    verts = ball.vertices()
    half = verts.size / 2.0
    best = np.inf
    c0 = lat.coords_of(x0)

    def consider(a_idx):
        nonlocal best
        if a_idx.size == 0 or a_idx.size >= half:
            return
        a_mask = np.zeros(lat.num_vertices, dtype=bool)
        a_mask[a_idx] = True
        bnd = _relative_boundary_size(lat, ball_mask, a_mask)
        best = min(best, r * bnd / a_idx.size)

    # single vertex and half-box probes
    consider(np.array([x0], dtype=np.int64))
    coords = np.stack(np.unravel_index(verts, lat.shape), axis=-1)
    rel = (coords - c0 + lat.n // 2) % lat.n - lat.n // 2
    for axis in range(lat.d):
        for cut in (0, 1, -1):
            consider(verts[rel[:, axis] < cut])

    key = rng.stream_key(seed, 0)
    sizes = 1 + (rng.uniform01(key, np.arange(trials)) * (half - 1)).astype(np.int64)
    for t in range(trials):
        sub_key = rng.stream_key(seed, t + 1)
        consider(_random_connected_subset(lat, ball, int(sizes[t]), sub_key, ball_mask))
    return float(best)
