"""numba-compiled hot kernels: torus Laplacian matvec and walk event loops.

The scalar splitmix64 here mirrors rcm.rng exactly so both lanes draw
identical random streams; equality is enforced by the kernel tests.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _u01(key, counter):
    z = _mix64(key + _GOLDEN * (counter + np.uint64(1)))
    return (z >> np.uint64(11)) * _U53


@njit(cache=True)
def _stream_key(seed, stream):
    return _mix64(seed + _GOLDEN * (stream + np.uint64(1)))


@njit(cache=True)
def _neg_laplacian(w, mu, fwd, bwd, u, out):
    # out = mu*u - sum_i [ w_i(x) u(x+e_i) + w_i(x-e_i) u(x-e_i) ]
    # term order matches the numpy lane so both produce identical floats
    d = w.shape[0]
    n = u.shape[0]
    for x in range(n):
        out[x] = mu[x] * u[x]
    for i in range(d):
        wi = w[i]
        fi = fwd[i]
        bi = bwd[i]
        for x in range(n):
            out[x] -= wi[x] * u[fi[x]]
        for x in range(n):
            out[x] -= wi[bi[x]] * u[bi[x]]
    return out


@njit(cache=True, inline="always")
def _pick_direction(wgt, v, threshold, ndir):
    acc = 0.0
    j = ndir - 1
    for jj in range(ndir):
        acc += wgt[v, jj]
        if threshold < acc:
            j = jj
            break
    return j


@njit(cache=True)
def _walk_positions(nbr, wgt, mu, disp_axis, disp_sign, x0, coords0, queries,
                    n_traj, seed, unit_rate):
    d = coords0.shape[0]
    nq = queries.shape[0]
    ndir = 2 * d
    out = np.empty((n_traj, nq, d), dtype=np.int64)
    jumps = np.zeros(n_traj, dtype=np.int64)
    t_last = queries[nq - 1]
    for k in range(n_traj):
        key = _stream_key(seed, np.uint64(k))
        counter = np.uint64(0)
        v = x0
        pos = coords0.copy()
        t = 0.0
        qi = 0
        while qi < nq:
            u1 = _u01(key, counter)
            counter += np.uint64(1)
            rate = 1.0 if unit_rate else mu[v]
            t_next = t + (-np.log1p(-u1) / rate)
            while qi < nq and t_next > queries[qi]:
                for a in range(d):
                    out[k, qi, a] = pos[a]
                qi += 1
            if qi >= nq:
                break
            u2 = _u01(key, counter)
            counter += np.uint64(1)
            j = _pick_direction(wgt, v, u2 * mu[v], ndir)
            pos[disp_axis[j]] += disp_sign[j]
            v = nbr[v, j]
            t = t_next
            if t_next <= t_last:
                jumps[k] += 1
    return out, jumps


@njit(cache=True)
def _walk_path_count(nbr, wgt, mu, x0, t_max, key, unit_rate, d):
    ndir = 2 * d
    counter = np.uint64(0)
    v = x0
    t = 0.0
    m = 0
    while True:
        u1 = _u01(key, counter)
        counter += np.uint64(1)
        rate = 1.0 if unit_rate else mu[v]
        t_next = t + (-np.log1p(-u1) / rate)
        if t_next > t_max:
            break
        u2 = _u01(key, counter)
        counter += np.uint64(1)
        v = nbr[v, _pick_direction(wgt, v, u2 * mu[v], ndir)]
        t = t_next
        m += 1
    return m


@njit(cache=True)
def _walk_path_fill(nbr, wgt, mu, disp_axis, disp_sign, x0, coords0, t_max, key,
                    unit_rate, times, positions):
    d = coords0.shape[0]
    ndir = 2 * d
    counter = np.uint64(0)
    v = x0
    pos = coords0.copy()
    for a in range(d):
        positions[0, a] = pos[a]
    t = 0.0
    m = 0
    while True:
        u1 = _u01(key, counter)
        counter += np.uint64(1)
        rate = 1.0 if unit_rate else mu[v]
        t_next = t + (-np.log1p(-u1) / rate)
        if t_next > t_max:
            break
        u2 = _u01(key, counter)
        counter += np.uint64(1)
        j = _pick_direction(wgt, v, u2 * mu[v], ndir)
        pos[disp_axis[j]] += disp_sign[j]
        v = nbr[v, j]
        t = t_next
        times[m] = t
        for a in range(d):
            positions[m + 1, a] = pos[a]
        m += 1
    return m


@njit(cache=True)
def _occupation_times(nbr, wgt, mu, x0, t_max, key, unit_rate, occ):
    d = wgt.shape[1] // 2
    ndir = 2 * d
    counter = np.uint64(0)
    v = x0
    t = 0.0
    while True:
        u1 = _u01(key, counter)
        counter += np.uint64(1)
        rate = 1.0 if unit_rate else mu[v]
        tau = -np.log1p(-u1) / rate
        if t + tau >= t_max:
            occ[v] += t_max - t
            break
        occ[v] += tau
        u2 = _u01(key, counter)
        counter += np.uint64(1)
        v = nbr[v, _pick_direction(wgt, v, u2 * mu[v], ndir)]
        t += tau
    return occ


def make_neg_laplacian(w, mu, fwd, bwd):
    w = np.ascontiguousarray(w)
    mu = np.ascontiguousarray(mu)
    fwd = np.ascontiguousarray(fwd)
    bwd = np.ascontiguousarray(bwd)

    def apply(u, out=None):
        if out is None:
            out = np.empty_like(u)
        return _neg_laplacian(w, mu, fwd, bwd, u, out)

    return apply


def walk_positions(tables, x0, coords0, queries, n_traj, seed, unit_rate):
    return _walk_positions(tables.nbr, tables.wgt, tables.mu, tables.disp_axis,
                           tables.disp_sign, x0, coords0, queries, n_traj,
                           np.uint64(seed), unit_rate)


def walk_path(tables, x0, coords0, t_max, key, unit_rate, max_jumps):
    d = coords0.shape[0]
    m = _walk_path_count(tables.nbr, tables.wgt, tables.mu, x0, t_max,
                         np.uint64(key), unit_rate, d)
    if m > max_jumps:
        raise RuntimeError(
            f"path has {m} jumps, above the materialization cap {max_jumps}; "
            "use the batch statistics entry points instead"
        )
    times = np.empty(m, dtype=np.float64)
    positions = np.empty((m + 1, d), dtype=np.int64)
    _walk_path_fill(tables.nbr, tables.wgt, tables.mu, tables.disp_axis,
                    tables.disp_sign, x0, coords0, t_max, np.uint64(key),
                    unit_rate, times, positions)
    return times, positions


def occupation_times(tables, x0, t_max, key, unit_rate):
    occ = np.zeros(tables.mu.shape[0], dtype=np.float64)
    return _occupation_times(tables.nbr, tables.wgt, tables.mu, x0, t_max,
                             np.uint64(key), unit_rate, occ)
