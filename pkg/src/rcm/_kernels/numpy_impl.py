"""Pure-numpy fallback kernels.

Same random streams and the same per-element operation order as the numba
lane, so walk outputs coincide and matvecs agree to the last bit.  The batch
walk advances all trajectories together, one jump per sweep.
"""

import numpy as np

from .. import rng


def make_neg_laplacian(w, mu, fwd, bwd, shape=None):
    d = w.shape[0]
    if shape is None:
        side = round(w.shape[1] ** (1.0 / d))
        shape = (side,) * d
    w_grids = [w[i].reshape(shape) for i in range(d)]
    mu = np.asarray(mu)

    def apply(u, out=None):
        ug = u.reshape(shape)
        acc = mu * u
        for i in range(d):
            acc -= (w_grids[i] * np.roll(ug, -1, axis=i)).reshape(-1)
            acc -= np.roll(w_grids[i] * ug, 1, axis=i).reshape(-1)
        if out is not None:
            out[:] = acc
            return out
        return acc

    return apply


def _keys_for(seed, n_traj):
    return rng.mix64(np.uint64(seed) + np.uint64(rng.GOLDEN)
                     * (np.arange(n_traj, dtype=np.uint64) + np.uint64(1)))


def walk_positions(tables, x0, coords0, queries, n_traj, seed, unit_rate):
    nbr, wgt, mu = tables.nbr, tables.wgt, tables.mu
    disp_axis, disp_sign = tables.disp_axis, tables.disp_sign
    d = coords0.shape[0]
    nq = queries.shape[0]
    t_last = queries[-1]

    keys = _keys_for(seed, n_traj)
    counter = np.zeros(n_traj, dtype=np.uint64)
    v = np.full(n_traj, x0, dtype=np.int64)
    pos = np.tile(coords0, (n_traj, 1))
    t = np.zeros(n_traj)
    qi = np.zeros(n_traj, dtype=np.int64)
    out = np.empty((n_traj, nq, d), dtype=np.int64)
    jumps = np.zeros(n_traj, dtype=np.int64)

    while True:
        active = np.flatnonzero(qi < nq)
        if active.size == 0:
            break
        u1 = rng.uniform01(keys[active], counter[active])
        counter[active] += np.uint64(1)
        rate = 1.0 if unit_rate else mu[v[active]]
        t_next = t[active] + (-np.log1p(-u1) / rate)
        # record every query that falls inside the current holding interval
        while True:
            qa = qi[active]
            sel = qa < nq
            sel &= t_next > queries[np.minimum(qa, nq - 1)]
            if not sel.any():
                break
            idx = active[sel]
            out[idx, qi[idx], :] = pos[idx]
            qi[idx] += 1
        alive = qi[active] < nq
        act = active[alive]
        if act.size == 0:
            continue
        u2 = rng.uniform01(keys[act], counter[act])
        counter[act] += np.uint64(1)
        thr = u2 * mu[v[act]]
        cs = np.cumsum(wgt[v[act]], axis=1)
        j = np.minimum((cs <= thr[:, None]).sum(axis=1), 2 * d - 1)
        pos[act, disp_axis[j]] += disp_sign[j]
        v[act] = nbr[v[act], j]
        t_new = t_next[alive]
        jumps[act] += (t_new <= t_last).astype(np.int64)
        t[act] = t_new
    return out, jumps


class _Draws:
    """Sequential uniforms of one stream, fetched in counter-indexed chunks."""

    def __init__(self, key, chunk=8192):
        self.key = key
        self.chunk = chunk
        self.counter = 0
        self.base = 0
        self.buf = rng.uniform01(key, np.arange(chunk, dtype=np.uint64))

    def __call__(self):
        if self.counter - self.base >= self.buf.shape[0]:
            self.base = self.counter
            self.buf = rng.uniform01(
                self.key,
                np.arange(self.counter, self.counter + self.chunk, dtype=np.uint64),
            )
        val = self.buf[self.counter - self.base]
        self.counter += 1
        return val


def _pick_direction(wgt, v, threshold, ndir):
    acc = 0.0
    j = ndir - 1
    for jj in range(ndir):
        acc += wgt[v, jj]
        if threshold < acc:
            j = jj
            break
    return j


def walk_path(tables, x0, coords0, t_max, key, unit_rate, max_jumps):
    nbr, wgt, mu = tables.nbr, tables.wgt, tables.mu
    disp_axis, disp_sign = tables.disp_axis, tables.disp_sign
    d = coords0.shape[0]
    draw = _Draws(key)
    times = []
    coords = [coords0.copy()]
    v = int(x0)
    pos = coords0.copy()
    t = 0.0
    while True:
        u1 = draw()
        rate = 1.0 if unit_rate else mu[v]
        t_next = t + (-np.log1p(-u1) / rate)
        if t_next > t_max:
            break
        u2 = draw()
        j = _pick_direction(wgt, v, u2 * mu[v], 2 * d)
        pos[disp_axis[j]] += disp_sign[j]
        v = int(nbr[v, j])
        t = t_next
        times.append(t)
        coords.append(pos.copy())
        if len(times) > max_jumps:
            raise RuntimeError(
                f"path exceeded the materialization cap {max_jumps}; "
                "use the batch statistics entry points instead"
            )
    return np.array(times), np.array(coords, dtype=np.int64).reshape(len(coords), d)


def occupation_times(tables, x0, t_max, key, unit_rate):
    nbr, wgt, mu = tables.nbr, tables.wgt, tables.mu
    d = wgt.shape[1] // 2
    occ = np.zeros(mu.shape[0])
    draw = _Draws(key)
    v = int(x0)
    t = 0.0
    while True:
        u1 = draw()
        rate = 1.0 if unit_rate else mu[v]
        tau = -np.log1p(-u1) / rate
        if t + tau >= t_max:
            occ[v] += t_max - t
            break
        occ[v] += tau
        u2 = draw()
        v = int(nbr[v, _pick_direction(wgt, v, u2 * mu[v], 2 * d)])
        t += tau
    return occ
