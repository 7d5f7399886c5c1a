"""Graph construction, pruning, and node-role bookkeeping.

Graphs are immutable, symmetric CSR structures. External node ids are kept
in a sorted array (``int64`` when every id is an integer token, unicode
otherwise), so the internal index of a node is its rank among the ids and
lookups are a ``searchsorted``.
"""

from __future__ import annotations

import bisect
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from agegraph import kernels
from agegraph.errors import DataError, InvariantViolation, ParseError

log = logging.getLogger(__name__)

ROLE_UNKNOWN = 0
ROLE_SEED = 1
ROLE_VALIDATION = 2
ROLE_NAMES = {ROLE_UNKNOWN: "unknown", ROLE_SEED: "seed", ROLE_VALIDATION: "validation"}

_INT_TOKEN = re.compile(r"^[+-]?\d+$")


# ------------------------------------------------------------------ categories


@dataclass(frozen=True)
class CategoryScheme:
    """Ordered age cut points; bins are ``[edge_k, edge_k+1)``, the last unbounded."""

    edges: tuple[float, ...] = (25, 35, 50)

    def __post_init__(self):
        edges = tuple(self.edges)
        object.__setattr__(self, "edges", edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f"category edges must be strictly increasing: {edges}")

    @classmethod
    def parse(cls, text: str) -> "CategoryScheme":
        text = text.strip()
        if not text:
            return cls(())
        return cls(tuple(_number(tok) for tok in text.split(",")))

    @property
    def n_categories(self) -> int:
        return len(self.edges) + 1

    @property
    def labels(self) -> list[str]:
        if not self.edges:
            return ["all"]
        out = [f"<{_fmt_age(self.edges[0])}"]
        for lo, hi in zip(self.edges, self.edges[1:]):
            out.append(f"{_fmt_age(lo)}-{_fmt_age(hi - 1)}")
        out.append(f"{_fmt_age(self.edges[-1])}+")
        return out

    def category(self, age: float) -> int:
        return assign_category(age, self)

    def categorize(self, ages) -> np.ndarray:
        ages = np.asarray(ages, dtype=np.float64)
        if np.any(ages < 0):
            raise DataError("ages must be non-negative")
        return np.searchsorted(np.asarray(self.edges, dtype=np.float64), ages, side="right")

    def __str__(self):
        return ",".join(_fmt_age(e) for e in self.edges)


def _number(tok: str) -> float:
    value = float(tok)
    return int(value) if value.is_integer() else value


def _fmt_age(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


DEFAULT_SCHEME = CategoryScheme((25, 35, 50))


def assign_category(age: float, scheme: CategoryScheme = DEFAULT_SCHEME) -> int:
    if age < 0:
        raise DataError(f"negative age: {age}")
    return bisect.bisect_right(scheme.edges, age)


# ----------------------------------------------------------------------- graph


@dataclass(frozen=True, eq=False)
class Graph:
    """Symmetric sparse adjacency in CSR form.

    ``offsets`` has length ``n + 1``; the neighbours of internal node ``x``
    are ``neighbors[offsets[x]:offsets[x + 1]]``, sorted ascending, with the
    matching edge weights in ``weights``. ``node_ids`` holds the sorted
    external ids.
    """

    offsets: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray
    node_ids: np.ndarray
    weighted: bool = False

    @property
    def n(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def edge_count(self) -> int:
        return self.neighbors.shape[0] // 2

    @property
    def degree(self) -> np.ndarray:
        return np.diff(self.offsets)

    def neighbors_of(self, x: int) -> np.ndarray:
        return self.neighbors[self.offsets[x]:self.offsets[x + 1]]

    def row_index(self) -> np.ndarray:
        """Source node of every CSR entry."""
        return np.repeat(np.arange(self.n, dtype=np.int64), self.degree)

    @classmethod
    def from_index_edges(cls, n: int, u, v, w=None, node_ids=None,
                         weighted: bool = False) -> "Graph":
        """Build from internal-index edges; drops self-loops, symmetrizes, dedups.

        Duplicate pairs, in either direction, keep the maximum weight.
        """
        u = np.asarray(u, dtype=np.int64)
        v = np.asarray(v, dtype=np.int64)
        w = np.ones(u.shape[0]) if w is None else np.asarray(w, dtype=np.float64)
        if node_ids is None:
            node_ids = np.arange(n, dtype=np.int64)
        if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise DataError("edge endpoint out of range")
        keep = u != v
        src = np.concatenate([u[keep], v[keep]])
        dst = np.concatenate([v[keep], u[keep]])
        ww = np.concatenate([w[keep], w[keep]])
        order = np.lexsort((-ww, dst, src))
        src, dst, ww = src[order], dst[order], ww[order]
        first = np.ones(src.shape[0], dtype=bool)
        first[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
        src, dst, ww = src[first], dst[first], ww[first]
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
        return cls(offsets, dst, ww, np.asarray(node_ids), weighted)

    @classmethod
    def from_edges(cls, src_ids: Iterable, dst_ids: Iterable, weights=None,
                   extra_nodes: Iterable = ()) -> "Graph":
        """Build from external-id edge endpoints."""
        src_ids = list(src_ids)
        dst_ids = list(dst_ids)
        tokens = src_ids + dst_ids + list(extra_nodes)
        node_ids, inverse = _canonical_ids(tokens)
        m = len(src_ids)
        return cls.from_index_edges(len(node_ids), inverse[:m], inverse[m:2 * m],
                                    weights, node_ids, weighted=weights is not None)

    def index_of(self, ids) -> np.ndarray:
        """Internal indices for external ids; ``-1`` where absent."""
        ids = _coerce_ids(ids, self.node_ids.dtype)
        if self.n == 0 or ids.size == 0:
            return np.full(ids.shape, -1, dtype=np.int64)
        pos = np.searchsorted(self.node_ids, ids)
        pos = np.minimum(pos, self.n - 1)
        found = self.node_ids[pos] == ids
        return np.where(found, pos, -1).astype(np.int64)

    def induced(self, keep) -> "Graph":
        """Subgraph induced by the boolean node mask ``keep``, re-indexed."""
        keep = np.asarray(keep, dtype=bool)
        new_index = np.full(self.n, -1, dtype=np.int64)
        new_index[keep] = np.arange(int(keep.sum()))
        rows = self.row_index()
        sel = keep[rows] & keep[self.neighbors]
        new_rows = new_index[rows[sel]]
        k = int(keep.sum())
        offsets = np.zeros(k + 1, dtype=np.int64)
        np.cumsum(np.bincount(new_rows, minlength=k), out=offsets[1:])
        return Graph(offsets, new_index[self.neighbors[sel]], self.weights[sel],
                     self.node_ids[keep], self.weighted)

    def undirected_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Each undirected edge once as ``(u, v, w)`` with ``u < v``."""
        rows = self.row_index()
        upper = rows < self.neighbors
        return rows[upper], self.neighbors[upper], self.weights[upper]

    def check_invariants(self) -> None:
        """Full scan of the structural invariants; raises InvariantViolation."""
        n = self.n
        if self.offsets[0] != 0 or np.any(np.diff(self.offsets) < 0):
            raise InvariantViolation("offsets must start at 0 and be non-decreasing")
        if self.offsets[-1] != self.neighbors.shape[0]:
            raise InvariantViolation("offsets do not cover the neighbor array")
        if self.weights.shape != self.neighbors.shape:
            raise InvariantViolation("weights and neighbors differ in length")
        if n > 1 and np.any(self._id_order_broken()):
            raise InvariantViolation("node ids must be strictly increasing")
        rows = self.row_index()
        if np.any(rows == self.neighbors):
            raise InvariantViolation("self-loop present")
        same_row = rows[1:] == rows[:-1]
        if np.any(same_row & (self.neighbors[1:] <= self.neighbors[:-1])):
            raise InvariantViolation("neighbor lists must be strictly increasing")
        if np.any(self.weights <= 0):
            raise InvariantViolation("non-positive edge weight")
        fwd = np.lexsort((self.weights, self.neighbors, rows))
        bwd = np.lexsort((self.weights, rows, self.neighbors))
        if not (np.array_equal(rows[fwd], self.neighbors[bwd])
                and np.array_equal(self.neighbors[fwd], rows[bwd])
                and np.array_equal(self.weights[fwd], self.weights[bwd])):
            raise InvariantViolation("adjacency is not symmetric")

    def _id_order_broken(self):
        return self.node_ids[1:] <= self.node_ids[:-1]

    def export(self, out: TextIO) -> None:
        """Write the deterministic sorted edge list (each edge once, u < v)."""
        u, v, w = self.undirected_edges()
        ids = self.node_ids.astype(str)
        if self.weighted:
            lines = (f"{a}\t{b}\t{c!r}\n" for a, b, c in zip(ids[u], ids[v], w.tolist()))
        else:
            lines = (f"{a}\t{b}\n" for a, b in zip(ids[u], ids[v]))
        out.writelines(lines)


def _canonical_ids(tokens: list) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique ids plus the inverse map; integer tokens sort numerically."""
    if not tokens:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    if all(isinstance(t, (int, np.integer)) for t in tokens):
        arr = np.asarray(tokens, dtype=np.int64)
    elif all(isinstance(t, str) and _INT_TOKEN.match(t) for t in tokens):
        arr = np.asarray([int(t) for t in tokens], dtype=np.int64)
    else:
        arr = np.asarray([str(t) for t in tokens])
    ids, inverse = np.unique(arr, return_inverse=True)
    return ids, inverse.astype(np.int64)


def _coerce_ids(ids, dtype) -> np.ndarray:
    if isinstance(ids, np.ndarray) and ids.dtype == dtype:
        return ids
    seq = list(ids) if not isinstance(ids, (str, bytes)) else [ids]
    if np.issubdtype(dtype, np.integer):
        out = np.empty(len(seq), dtype=np.int64)
        for k, t in enumerate(seq):
            if isinstance(t, (int, np.integer)) or (isinstance(t, str) and _INT_TOKEN.match(t)):
                out[k] = int(t)
            else:
                # cannot match any integer id
                out[k] = np.iinfo(np.int64).min
        return out
    return np.asarray([str(t) for t in seq], dtype=str)


# ---------------------------------------------------------------------- ingest


@dataclass(frozen=True)
class EdgeListSchema:
    """How to split edge-list lines.

    ``delimiter=None`` splits on any run of whitespace. ``weighted=None``
    accepts an optional third field; ``False`` rejects it; ``True`` requires it.
    """

    delimiter: str | None = None
    weighted: bool | None = None
    comment: str = "#"


def ingest_edge_list(source: Iterable[str], schema: EdgeListSchema = EdgeListSchema()) -> Graph:
    src: list[str] = []
    dst: list[str] = []
    weights: list[float] = []
    saw_weight = False
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith(schema.comment):
            continue
        fields = line.split(schema.delimiter)
        if schema.delimiter is not None:
            fields = [f.strip() for f in fields]
        if len(fields) not in (2, 3) or not fields[0] or not fields[1]:
            raise ParseError(f"expected 'src dst [weight]', got {line!r}", lineno)
        if len(fields) == 3:
            if schema.weighted is False:
                raise ParseError("unexpected weight column", lineno)
            try:
                w = float(fields[2])
            except ValueError:
                raise ParseError(f"bad weight {fields[2]!r}", lineno) from None
            if not w > 0 or not np.isfinite(w):
                raise ParseError(f"weight must be positive and finite, got {fields[2]!r}", lineno)
            saw_weight = True
        elif schema.weighted:
            raise ParseError("missing weight column", lineno)
        else:
            w = 1.0
        src.append(fields[0])
        dst.append(fields[1])
        weights.append(w)
    graph = Graph.from_edges(src, dst, weights if saw_weight else None)
    return graph


def read_edge_file(path, schema: EdgeListSchema = EdgeListSchema()) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return ingest_edge_list(fh, schema)


# ----------------------------------------------------------------------- prune


def prune_high_degree(g: Graph, cap: int) -> Graph:
    """Drop every node whose degree exceeds ``cap`` (single pass, original degrees)."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    return g.induced(g.degree <= cap)


def seed_reachable(g: Graph, p: "NodePartition") -> np.ndarray:
    if p.n != g.n:
        raise DataError("partition does not match graph size")
    if not p.is_seed.any():
        raise DataError("no seed nodes: every component would be pruned")
    return kernels.multi_source_bfs(g.offsets, g.neighbors, p.is_seed) >= 0


def prune_seedless_components(g: Graph, p: "NodePartition") -> Graph:
    """Keep only the connected components that contain at least one seed."""
    return g.induced(seed_reachable(g, p))


# ------------------------------------------------------------------ partitions


@dataclass(frozen=True, eq=False)
class NodePartition:
    """Per-node role (unknown / seed / validation) and known category.

    ``label`` is ``-1`` for unknown nodes.
    """

    role: np.ndarray
    label: np.ndarray
    n_categories: int

    def __post_init__(self):
        role = np.asarray(self.role, dtype=np.int8)
        label = np.asarray(self.label, dtype=np.int64)
        object.__setattr__(self, "role", role)
        object.__setattr__(self, "label", label)
        if role.shape != label.shape:
            raise DataError("role and label arrays differ in length")
        if np.any((role < ROLE_UNKNOWN) | (role > ROLE_VALIDATION)):
            raise DataError("unknown role code")
        known = role != ROLE_UNKNOWN
        bad = known & ((label < 0) | (label >= self.n_categories))
        if bad.any():
            x = int(np.flatnonzero(bad)[0])
            raise DataError(f"node {x}: label {label[x]} outside [0, {self.n_categories})")

    @property
    def n(self) -> int:
        return self.role.shape[0]

    @property
    def is_seed(self) -> np.ndarray:
        return self.role == ROLE_SEED

    @property
    def is_validation(self) -> np.ndarray:
        return self.role == ROLE_VALIDATION

    def take(self, indices) -> "NodePartition":
        """Restrict to the given old-node indices (in the given order)."""
        indices = np.asarray(indices, dtype=np.int64)
        return NodePartition(self.role[indices], self.label[indices], self.n_categories)

    def transfer(self, old: Graph, new: Graph) -> "NodePartition":
        """Re-index from ``old`` onto ``new``, a node subset of ``old``."""
        idx = old.index_of(new.node_ids)
        if np.any(idx < 0):
            raise DataError("new graph has nodes absent from the old graph")
        return self.take(idx)

    def category_counts(self, role: int) -> np.ndarray:
        sel = self.role == role
        return np.bincount(self.label[sel], minlength=self.n_categories)


def split_ground_truth(labels, seed_fraction: float, rng_seed: int,
                       n_categories: int | None = None) -> NodePartition:
    """Randomly split labeled nodes into seeds and validation nodes.

    ``labels`` is a per-node category array with ``-1`` for unlabeled nodes.
    The number of seeds is ``round(seed_fraction * n_labeled)`` (half-up),
    kept within ``[1, n_labeled - 1]``.
    """
    if not 0.0 < seed_fraction < 1.0:
        raise ValueError(f"seed_fraction must be in (0, 1), got {seed_fraction}")
    labels = np.asarray(labels, dtype=np.int64)
    labeled = np.flatnonzero(labels >= 0)
    if labeled.size < 2:
        raise DataError(f"need at least 2 labeled nodes, got {labeled.size}")
    if n_categories is None:
        n_categories = int(labels.max()) + 1
    n_seed = int(np.floor(seed_fraction * labeled.size + 0.5))
    n_seed = min(max(n_seed, 1), labeled.size - 1)
    rng = np.random.default_rng(rng_seed)
    shuffled = labeled[rng.permutation(labeled.size)]
    role = np.zeros(labels.shape[0], dtype=np.int8)
    role[shuffled[:n_seed]] = ROLE_SEED
    role[shuffled[n_seed:]] = ROLE_VALIDATION
    label = np.where(role != ROLE_UNKNOWN, labels, -1)
    return NodePartition(role, label, n_categories)


# ---------------------------------------------------------------------- labels


@dataclass
class LabelTable:
    """Parsed label file: external ids and their values (ages or categories)."""

    ids: list[str]
    values: np.ndarray
    mode: str = "age"
    dropped: list[str] = field(default_factory=list)


def read_labels(source: Iterable[str], mode: str = "age") -> LabelTable:
    """Parse ``node_id<TAB>value`` lines; ``mode`` is ``age`` or ``category``."""
    if mode not in ("age", "category"):
        raise ValueError(f"label mode must be 'age' or 'category', got {mode!r}")
    ids: list[str] = []
    values: list[float] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t") if "\t" in line else line.split()
        if len(fields) != 2:
            raise ParseError(f"expected 'node_id<TAB>value', got {line!r}", lineno)
        node, tok = fields[0].strip(), fields[1].strip()
        try:
            value = float(tok)
        except ValueError:
            raise ParseError(f"bad value {tok!r}", lineno) from None
        if mode == "category" and not value.is_integer():
            raise ParseError(f"category index must be an integer, got {tok!r}", lineno)
        if value < 0 or not np.isfinite(value):
            raise ParseError(f"value must be non-negative, got {tok!r}", lineno)
        if node in seen:
            raise ParseError(f"duplicate label for node {node!r}", lineno)
        seen.add(node)
        ids.append(node)
        values.append(value)
    return LabelTable(ids, np.asarray(values, dtype=np.float64), mode)


def read_label_file(path, mode: str = "age") -> LabelTable:
    with open(path, encoding="utf-8") as fh:
        return read_labels(fh, mode)


def align_labels(g: Graph, table: LabelTable) -> np.ndarray:
    """Per-node values from a label table; ``NaN`` where a node has no label.

    Labeled ids missing from the graph are dropped with a warning.
    """
    out = np.full(g.n, np.nan)
    if not table.ids:
        return out
    idx = g.index_of(table.ids)
    missing = idx < 0
    if missing.any():
        table.dropped = [table.ids[k] for k in np.flatnonzero(missing)]
        log.warning("%d labeled node(s) not in the graph were dropped", int(missing.sum()))
    out[idx[~missing]] = table.values[~missing]
    return out


def categories_from_values(values: np.ndarray, mode: str, scheme: CategoryScheme) -> np.ndarray:
    """Category per node (``-1`` for unlabeled) from aligned label values."""
    cats = np.full(values.shape[0], -1, dtype=np.int64)
    known = ~np.isnan(values)
    if mode == "age":
        cats[known] = scheme.categorize(values[known])
    else:
        cats[known] = values[known].astype(np.int64)
        if np.any(cats[known] >= scheme.n_categories):
            raise DataError(f"category index outside [0, {scheme.n_categories})")
    return cats
