"""Kernel lane selection.

The hot loops (torus Laplacian matvec, walk event loops) have a numba lane
and a pure-numpy lane producing the same results.  numba is used when
importable unless the environment variable RCM_NO_NUMBA is set to a non-empty
value other than "0".
"""

import os
from collections import namedtuple

import numpy as np

from . import numpy_impl

WalkTables = namedtuple("WalkTables", "nbr wgt mu disp_axis disp_sign")


def _numba_disabled() -> bool:
    flag = os.environ.get("RCM_NO_NUMBA", "")
    return flag not in ("", "0")


_impl = numpy_impl
LANE = "numpy"
if not _numba_disabled():
    try:
        from . import numba_impl as _numba_impl

        _impl = _numba_impl
        LANE = "numba"
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


def lane() -> str:
    return LANE


def build_walk_tables(env) -> WalkTables:
    """Per-vertex neighbor/weight tables consumed by the walk kernels.

    Direction slots are ordered (+e_1, -e_1, +e_2, -e_2, ...); both lanes
    scan them in this order when picking the next jump.
    """
    from ..lattice import neighbor_indices

    lat = env.lattice
    fwd, bwd = neighbor_indices(lat)
    d, nv = lat.d, lat.num_vertices
    nbr = np.empty((nv, 2 * d), dtype=np.int64)
    wgt = np.empty((nv, 2 * d), dtype=np.float64)
    disp_axis = np.empty(2 * d, dtype=np.int64)
    disp_sign = np.empty(2 * d, dtype=np.int64)
    for i in range(d):
        nbr[:, 2 * i] = fwd[i]
        nbr[:, 2 * i + 1] = bwd[i]
        wgt[:, 2 * i] = env.conductances[i]
        wgt[:, 2 * i + 1] = env.conductances[i][bwd[i]]
        disp_axis[2 * i] = i
        disp_axis[2 * i + 1] = i
        disp_sign[2 * i] = 1
        disp_sign[2 * i + 1] = -1
    return WalkTables(nbr=nbr, wgt=wgt, mu=np.ascontiguousarray(env.mu),
                      disp_axis=disp_axis, disp_sign=disp_sign)


def make_neg_laplacian(env, impl=None):
    """Matvec closure for A = -L (symmetric positive semidefinite)."""
    from ..lattice import neighbor_indices

    mod = impl or _impl
    fwd, bwd = neighbor_indices(env.lattice)
    if mod is numpy_impl:
        return mod.make_neg_laplacian(env.conductances, env.mu, fwd, bwd,
                                      shape=env.lattice.shape)
    return mod.make_neg_laplacian(env.conductances, env.mu, fwd, bwd)


def walk_positions(env, x0, queries, n_traj, seed, scheme, impl=None):
    mod = impl or _impl
    tables = build_walk_tables(env)
    coords0 = env.lattice.coords_of(x0)
    queries = np.asarray(queries, dtype=np.float64)
    return mod.walk_positions(tables, int(x0), coords0, queries, int(n_traj),
                              int(seed), scheme == "CSRW")


def walk_path(env, x0, t_max, key, scheme, max_jumps, impl=None):
    mod = impl or _impl
    tables = build_walk_tables(env)
    coords0 = env.lattice.coords_of(x0)
    return mod.walk_path(tables, int(x0), coords0, float(t_max), int(key),
                         scheme == "CSRW", int(max_jumps))


def occupation_times(env, x0, t_max, key, scheme, impl=None):
    mod = impl or _impl
    tables = build_walk_tables(env)
    return mod.occupation_times(tables, int(x0), float(t_max), int(key),
                                scheme == "CSRW")
