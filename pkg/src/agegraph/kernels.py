"""Hot loops over CSR arrays, in a numba flavour and a pure-numpy flavour.

The public names (``propagate_step``, ``multi_source_bfs``, ``pps_scan``)
dispatch to whichever flavour ``agegraph._accel.BACKEND`` selected. Both
flavours are importable under explicit ``*_numba`` / ``*_numpy`` names so
tests and benchmarks can compare them in one process.

Per-node neighbour accumulation always runs in CSR order, so the numba
results do not depend on the thread count.
"""

import numpy as np

from agegraph._accel import BACKEND, HAVE_NUMBA, njit, prange

UNREACHABLE = -1


# ---------------------------------------------------------------- propagation


@njit(parallel=True, cache=True)
def _propagate_step_nb(offsets, neighbors, weights, g_prev, g0, informed_prev,
                       masked, lam, g_out, informed_out):
    n = g_prev.shape[0]
    C = g_prev.shape[1]
    for x in prange(n):
        for a in range(C):
            g_out[x, a] = 0.0
        wsum = 0.0
        reached = informed_prev[x]
        for k in range(offsets[x], offsets[x + 1]):
            y = neighbors[k]
            if informed_prev[y]:
                reached = True
            elif masked:
                continue
            w = weights[k]
            wsum += w
            for a in range(C):
                g_out[x, a] += w * g_prev[y, a]
        informed_out[x] = reached
        if wsum > 0.0 and lam != 0.0:
            s = 0.0
            for a in range(C):
                v = (1.0 - lam) * g0[x, a] + lam * (g_out[x, a] / wsum)
                g_out[x, a] = v
                s += v
            for a in range(C):
                g_out[x, a] /= s
        else:
            for a in range(C):
                g_out[x, a] = g0[x, a]


def _segment_sums(values, offsets):
    """Sum ``values`` over each CSR row; rows without entries sum to zero."""
    n = offsets.shape[0] - 1
    out = np.zeros((n,) + values.shape[1:], dtype=values.dtype)
    nonempty = offsets[1:] > offsets[:-1]
    if values.shape[0] and nonempty.any():
        out[nonempty] = np.add.reduceat(values, offsets[:-1][nonempty], axis=0)
    return out


def propagate_step_numpy(offsets, neighbors, weights, g_prev, g0, informed_prev,
                         masked, lam, g_out, informed_out):
    nbr_informed = informed_prev[neighbors]
    w = weights * nbr_informed if masked else weights
    wsum = _segment_sums(w, offsets)
    acc = _segment_sums(w[:, None] * g_prev[neighbors], offsets)
    informed_out[:] = informed_prev | (_segment_sums(nbr_informed.astype(np.int64), offsets) > 0)

    active = wsum > 0.0
    g_out[:] = g0
    if lam != 0.0 and active.any():
        mixed = (1.0 - lam) * g0[active] + lam * (acc[active] / wsum[active, None])
        g_out[active] = mixed / mixed.sum(axis=1, keepdims=True)


# ------------------------------------------------------------------------ BFS


@njit(cache=True)
def _multi_source_bfs_nb(offsets, neighbors, is_source):
    n = is_source.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for x in range(n):
        if is_source[x]:
            dist[x] = 0
            queue[tail] = x
            tail += 1
    while head < tail:
        x = queue[head]
        head += 1
        d = dist[x] + 1
        for k in range(offsets[x], offsets[x + 1]):
            y = neighbors[k]
            if dist[y] < 0:
                dist[y] = d
                queue[tail] = y
                tail += 1
    return dist


def csr_gather(offsets, neighbors, rows):
    """Concatenated neighbour lists of ``rows``."""
    starts = offsets[rows]
    lengths = offsets[rows + 1] - starts
    total = int(lengths.sum())
    if total == 0:
        return neighbors[:0]
    shift = np.repeat(starts - np.cumsum(lengths) + lengths, lengths)
    return neighbors[np.arange(total) + shift]


def multi_source_bfs_numpy(offsets, neighbors, is_source):
    n = is_source.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    frontier = np.flatnonzero(is_source)
    dist[frontier] = 0
    level = 0
    while frontier.size:
        level += 1
        nxt = csr_gather(offsets, neighbors, frontier)
        nxt = np.unique(nxt[dist[nxt] < 0])
        dist[nxt] = level
        frontier = nxt
    return dist


# ------------------------------------------------------------------- PPS scan


@njit(cache=True)
def _pps_scan_nb(order_nodes, order_cats, quotas, n):
    assigned = np.full(n, -1, dtype=np.int64)
    filled = np.zeros(quotas.shape[0], dtype=np.int64)
    remaining = n
    for k in range(order_nodes.shape[0]):
        i = order_nodes[k]
        a = order_cats[k]
        if assigned[i] < 0 and filled[a] < quotas[a]:
            assigned[i] = a
            filled[a] += 1
            remaining -= 1
            if remaining == 0:
                break
    return assigned


def pps_scan_numpy(order_nodes, order_cats, quotas, n):
    assigned = [-1] * n
    filled = [0] * len(quotas)
    caps = [int(q) for q in quotas]
    remaining = n
    for i, a in zip(order_nodes.tolist(), order_cats.tolist()):
        if assigned[i] < 0 and filled[a] < caps[a]:
            assigned[i] = a
            filled[a] += 1
            remaining -= 1
            if remaining == 0:
                break
    return np.asarray(assigned, dtype=np.int64)


# ------------------------------------------------------------------- dispatch

if HAVE_NUMBA:
    propagate_step_numba = _propagate_step_nb
    multi_source_bfs_numba = _multi_source_bfs_nb
    pps_scan_numba = _pps_scan_nb

if BACKEND == "numba":
    propagate_step = _propagate_step_nb
    multi_source_bfs = _multi_source_bfs_nb
    pps_scan = _pps_scan_nb
else:
    propagate_step = propagate_step_numpy
    multi_source_bfs = multi_source_bfs_numpy
    pps_scan = pps_scan_numpy
