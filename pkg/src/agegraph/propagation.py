"""Reaction-diffusion of per-node category probability vectors.

Each iteration mixes a node's initial vector with the weighted mean of its
neighbours' previous vectors::

    g[x, t] = (1 - lam) * g[x, 0] + lam * sum_y w[y, x] g[y, t-1] / sum_y w[y, x]

In masked mode only neighbours already reached by seed information enter the
mean; a node with none of them keeps its initial vector. Updates are
synchronous (double-buffered).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, TextIO

import numpy as np

from agegraph import kernels
from agegraph.errors import DataError, ParseError
from agegraph.graph import CategoryScheme, Graph, NodePartition


@dataclass(frozen=True)
class PropagationConfig:
    lam: float = 0.5
    t_end: int = 30
    masked: bool = True
    use_weights: bool = False

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lam}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")


@dataclass(eq=False)
class PropagationState:
    current: np.ndarray   # (n, C)
    initial: np.ndarray   # (n, C)
    informed: np.ndarray  # (n,) bool
    t: int = 0

    @property
    def n_categories(self) -> int:
        return self.current.shape[1]


def init_state(g: Graph, p: NodePartition, scheme: CategoryScheme | None = None) -> PropagationState:
    """One-hot vectors on seeds, uniform ``1/C`` elsewhere; seeds start informed."""
    if p.n != g.n:
        raise DataError(f"partition covers {p.n} nodes, graph has {g.n}")
    C = p.n_categories
    if scheme is not None and scheme.n_categories != C:
        raise DataError(f"scheme has {scheme.n_categories} categories, partition {C}")
    seeds = np.flatnonzero(p.is_seed)
    seed_labels = p.label[seeds]
    if np.any((seed_labels < 0) | (seed_labels >= C)):
        raise DataError("seed label outside [0, C)")
    g0 = np.full((g.n, C), 1.0 / C)
    g0[seeds] = 0.0
    g0[seeds, seed_labels] = 1.0
    return PropagationState(g0.copy(), g0, p.is_seed.copy(), 0)


def _edge_weights(g: Graph, cfg: PropagationConfig) -> np.ndarray:
    return g.weights if cfg.use_weights else np.ones_like(g.weights)


def _check_dims(state: PropagationState, g: Graph) -> None:
    if state.current.shape[0] != g.n:
        raise DataError(f"state has {state.current.shape[0]} nodes, graph has {g.n}")


def step(state: PropagationState, g: Graph, cfg: PropagationConfig) -> PropagationState:
    _check_dims(state, g)
    out = np.empty_like(state.current)
    informed = np.empty_like(state.informed)
    kernels.propagate_step(g.offsets, g.neighbors, _edge_weights(g, cfg), state.current,
                           state.initial, state.informed, cfg.masked, float(cfg.lam),
                           out, informed)
    return PropagationState(out, state.initial, informed, state.t + 1)


def iterate(g: Graph, p: NodePartition, cfg: PropagationConfig) -> Iterator[PropagationState]:
    """Yield the state at t = 0, 1, ..., t_end."""
    state = init_state(g, p)
    yield state
    for _ in range(cfg.t_end):
        state = step(state, g, cfg)
        yield state


def run(g: Graph, p: NodePartition, cfg: PropagationConfig = PropagationConfig()) -> PropagationState:
    state = init_state(g, p)
    weights = _edge_weights(g, cfg)
    cur, nxt = state.current, np.empty_like(state.current)
    inf_cur, inf_nxt = state.informed, np.empty_like(state.informed)
    for _ in range(cfg.t_end):
        kernels.propagate_step(g.offsets, g.neighbors, weights, cur, state.initial, inf_cur,
                               cfg.masked, float(cfg.lam), nxt, inf_nxt)
        cur, nxt = nxt, cur
        inf_cur, inf_nxt = inf_nxt, inf_cur
    return PropagationState(cur, state.initial, inf_cur, cfg.t_end)


# ------------------------------------------------------------- matrix oracle


@dataclass(frozen=True, eq=False)
class OperatorMatrices:
    """Dense adjacency, degree, Laplacian and normalized Laplacian."""

    A: np.ndarray
    D: np.ndarray
    L: np.ndarray
    calL: np.ndarray

    @classmethod
    def from_graph(cls, g: Graph, use_weights: bool = False) -> "OperatorMatrices":
        A = np.zeros((g.n, g.n))
        rows = g.row_index()
        A[rows, g.neighbors] = g.weights if use_weights else 1.0
        deg = A.sum(axis=1)
        if np.any(deg <= 0):
            raise DataError("degree-0 node: the normalized Laplacian is undefined")
        D = np.diag(deg)
        L = D - A
        d_isqrt = 1.0 / np.sqrt(deg)
        calL = d_isqrt[:, None] * L * d_isqrt[None, :]
        return cls(A, D, L, calL)


def laplacian_oracle_run(g: Graph, p: NodePartition,
                         cfg: PropagationConfig = PropagationConfig()) -> np.ndarray:
    """Dense global-form iteration, for checking ``run`` on small graphs.

    With ``h = D^(1/2) g`` the local update becomes
    ``h_t = (1 - lam) h_0 + lam (I - calL) h_{t-1}`` where
    ``calL = D^(-1/2) L D^(-1/2)``. Each category column evolves on its own.
    Unmasked mode only.
    """
    if cfg.masked:
        raise ValueError("the matrix oracle covers unmasked propagation only")
    ops = OperatorMatrices.from_graph(g, cfg.use_weights)
    d_sqrt = np.sqrt(np.diag(ops.D))
    g0 = init_state(g, p).initial
    identity = np.eye(g.n)
    out = np.empty_like(g0)
    for a in range(g0.shape[1]):
        h0 = d_sqrt * g0[:, a]
        h = h0.copy()
        for _ in range(cfg.t_end):
            h = (1.0 - cfg.lam) * h0 + cfg.lam * ((identity - ops.calL) @ h)
        out[:, a] = h / d_sqrt
    return out


# --------------------------------------------------------------- convergence


def validation_accuracy(table: np.ndarray, p: NodePartition) -> float:
    val = np.flatnonzero(p.is_validation)
    if val.size == 0:
        raise DataError("empty validation set")
    return float(np.mean(np.argmax(table[val], axis=1) == p.label[val]))


def convergence_trace(g: Graph, p: NodePartition, cfg: PropagationConfig,
                      evaluate: Callable[[np.ndarray], float] | None = None) -> list[float]:
    """Accuracy after each iteration, index 0 being the priors."""
    if evaluate is None:
        if not p.is_validation.any():
            raise DataError("empty validation set")

        def evaluate(table):
            return validation_accuracy(table, p)

    return [evaluate(state.current) for state in iterate(g, p, cfg)]


# ------------------------------------------------------------------------ I/O


def write_probability_table(out: TextIO, g: Graph, state: PropagationState) -> None:
    C = state.n_categories
    header = "node_id\t" + "\t".join(f"p_{a}" for a in range(C)) + "\tinformed\n"
    out.write(header)
    cols = [np.char.mod("%.9f", state.current[:, a]) for a in range(C)]
    ids = g.node_ids.astype(str)
    flags = np.where(state.informed, "1", "0")
    for row in zip(ids, *cols, flags):
        out.write("\t".join(row))
        out.write("\n")


def read_probability_table(source) -> tuple[list[str], np.ndarray, np.ndarray]:
    lines = iter(source)
    header = next(lines).rstrip("\n").split("\t")
    C = len(header) - 2
    ids, probs, informed = [], [], []
    for lineno, line in enumerate(lines, start=2):
        fields = line.rstrip("\n").split("\t")
        if len(fields) != C + 2:
            raise ParseError(f"expected {C + 2} fields", lineno)
        ids.append(fields[0])
        probs.append([float(v) for v in fields[1:C + 1]])
        informed.append(fields[-1] == "1")
    return ids, np.asarray(probs, dtype=np.float64).reshape(-1, C), np.asarray(informed)
