from collections import deque

import numpy as np
import pytest

from agegraph.graph import Graph, NodePartition, ROLE_SEED, ROLE_UNKNOWN, ROLE_VALIDATION


def random_graph(rng, n, mean_degree, *, connected=False, weighted=False):
    """Erdos-Renyi style graph; ``connected`` threads a random spanning path first."""
    m = int(round(mean_degree * n / 2))
    u = rng.integers(0, n, size=m)
    v = rng.integers(0, n, size=m)
    if connected and n > 1:
        perm = rng.permutation(n)
        u = np.concatenate([u, perm[:-1]])
        v = np.concatenate([v, perm[1:]])
    w = rng.uniform(0.5, 3.0, size=u.size) if weighted else None
    return Graph.from_index_edges(n, u, v, w, weighted=weighted)


def random_partition(rng, n, C, seed_frac=0.2, val_frac=0.2):
    role = np.zeros(n, dtype=np.int8)
    draw = rng.random(n)
    role[draw < seed_frac] = ROLE_SEED
    role[(draw >= seed_frac) & (draw < seed_frac + val_frac)] = ROLE_VALIDATION
    if not (role == ROLE_SEED).any():
        role[0] = ROLE_SEED
    label = np.where(role != ROLE_UNKNOWN, rng.integers(0, C, size=n), -1)
    return NodePartition(role, label, C)


def partition_from(n, C, seeds=None, validation=None):
    """Partition from ``{node: label}`` dicts."""
    role = np.zeros(n, dtype=np.int8)
    label = np.full(n, -1)
    for mapping, code in ((seeds or {}, ROLE_SEED), (validation or {}, ROLE_VALIDATION)):
        for x, a in mapping.items():
            role[x] = code
            label[x] = a
    return NodePartition(role, label, C)


def adjacency_sets(g):
    return [set(g.neighbors_of(x).tolist()) for x in range(g.n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def bfs_distances(g, sources):
    """Plain multi-source BFS; -1 marks unreachable nodes."""
    dist = [-1] * g.n
    q = deque()
    for s in sources:
        dist[s] = 0
        q.append(s)
    while q:
        x = q.popleft()
        for y in g.neighbors_of(x).tolist():
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                q.append(y)
    return dist


def reference_run(g, p, lam, t_end, masked=True, use_weights=False):
    """Literal per-node iteration with plain Python floats.

    Returns the list of (table, informed) pairs for t = 0..t_end.
    """
    C = p.n_categories
    adj = [list(zip(g.neighbors_of(x).tolist(),
                    (g.weights[g.offsets[x]:g.offsets[x + 1]].tolist() if use_weights
                     else [1.0] * int(g.degree[x]))))
           for x in range(g.n)]
    g0 = []
    for x in range(g.n):
        if p.is_seed[x]:
            g0.append([1.0 if a == p.label[x] else 0.0 for a in range(C)])
        else:
            g0.append([1.0 / C] * C)
    cur = [row[:] for row in g0]
    informed = [bool(s) for s in p.is_seed]
    history = [(np.array(cur), np.array(informed))]
    for _ in range(t_end):
        nxt, inf_next = [], []
        for x in range(g.n):
            pool = [(y, w) for y, w in adj[x] if informed[y] or not masked]
            inf_next.append(informed[x] or any(informed[y] for y, _ in adj[x]))
            wsum = sum(w for _, w in pool)
            if not pool or lam == 0:
                nxt.append(g0[x][:])
                continue
            mean = [sum(w * cur[y][a] for y, w in pool) / wsum for a in range(C)]
            row = [(1 - lam) * g0[x][a] + lam * mean[a] for a in range(C)]
            s = sum(row)
            nxt.append([v / s for v in row])
        cur, informed = nxt, inf_next
        history.append((np.array(cur), np.array(informed)))
    return history
