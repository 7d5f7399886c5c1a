"""Per-node topological metrics and stratified hit-rate tables.

SIN is the number of seed neighbours, DTS the hop distance to the nearest
seed (``UNREACHABLE`` when none is reachable) and degree the neighbour count.
Hit tables count validation nodes that received an assignment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from agegraph import kernels
from agegraph.errors import DataError
from agegraph.graph import ROLE_NAMES, CategoryScheme, Graph, NodePartition
from agegraph.labeling import Assignment

UNREACHABLE = kernels.UNREACHABLE

# right-closed degree intervals: [1, 2], (2, 29], (29, 48], (48, 66], (66, 100]
DEFAULT_DEGREE_EDGES = (0, 2, 29, 48, 66, 100)
DEFAULT_BEST_CELL_FLOOR = 50


@dataclass(frozen=True, eq=False)
class NodeMetrics:
    sin: np.ndarray
    dts: np.ndarray
    degree: np.ndarray

    def get(self, which: str) -> np.ndarray:
        if which not in ("sin", "dts", "degree"):
            raise ValueError(f"unknown metric {which!r}")
        return getattr(self, which)


def compute_sin(g: Graph, p: NodePartition) -> np.ndarray:
    if p.n != g.n:
        raise DataError("partition does not match graph size")
    seed_entry = p.is_seed[g.neighbors].astype(np.float64)
    return np.bincount(g.row_index(), weights=seed_entry, minlength=g.n).astype(np.int64)


def compute_dts(g: Graph, p: NodePartition) -> np.ndarray:
    if p.n != g.n:
        raise DataError("partition does not match graph size")
    if not p.is_seed.any():
        raise DataError("distance to seeds needs at least one seed")
    return kernels.multi_source_bfs(g.offsets, g.neighbors, p.is_seed)


def compute_node_metrics(g: Graph, p: NodePartition) -> NodeMetrics:
    return NodeMetrics(compute_sin(g, p), compute_dts(g, p), g.degree.astype(np.int64))


def write_metrics_table(out: TextIO, g: Graph, p: NodePartition, m: NodeMetrics) -> None:
    out.write("node_id\trole\tlabel\tsin\tdts\tdegree\n")
    roles = np.asarray([ROLE_NAMES[k] for k in range(3)], dtype=object)[p.role]
    dts = np.where(m.dts == UNREACHABLE, "inf", m.dts.astype(str))
    for row in zip(g.node_ids.astype(str), roles, p.label.astype(str), m.sin.astype(str),
                   dts, m.degree.astype(str)):
        out.write("\t".join(row))
        out.write("\n")


# ------------------------------------------------------------------------ bins


@dataclass(frozen=True)
class Bin:
    """Inclusive integer range ``[lo, hi]``; ``hi=None`` is unbounded."""

    lo: int
    hi: int | None
    label: str

    def contains(self, values: np.ndarray) -> np.ndarray:
        mask = values >= self.lo
        if self.hi is not None:
            mask &= values <= self.hi
        return mask


def exact_bins(k: int) -> list[Bin]:
    """One bin per value 0..k-1, then a trailing ``k+`` bucket."""
    return [Bin(v, v, str(v)) for v in range(k)] + [Bin(k, None, f"{k}+")]


def interval_bins(edges: Sequence[int]) -> list[Bin]:
    """Right-closed intervals ``(e_k, e_k+1]`` over integers."""
    out = []
    for lo, hi in zip(edges, edges[1:]):
        label = f"[{lo + 1}, {hi}]" if lo == 0 else f"({lo}, {hi}]"
        out.append(Bin(lo + 1, hi, label))
    return out


def _check_disjoint(bins: Sequence[Bin]) -> None:
    ordered = sorted(bins, key=lambda b: b.lo)
    for a, b in zip(ordered, ordered[1:]):
        if a.hi is None or a.hi >= b.lo:
            raise ValueError(f"bins {a.label!r} and {b.label!r} overlap")


# ---------------------------------------------------------------------- tables


@dataclass
class HitsRow:
    stratum: str
    population: int
    hits: int
    flagged: bool = False
    extra: dict[str, float] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        return self.hits / self.population if self.population else float("nan")


@dataclass
class HitsTable:
    title: str
    rows: list[HitsRow]
    denominator: int
    extra_columns: tuple[str, ...] = ()
    best: str | None = None

    def row(self, stratum: str) -> HitsRow:
        for r in self.rows:
            if r.stratum == stratum:
                return r
        raise KeyError(stratum)

    def _cells(self) -> list[list[str]]:
        header = ["stratum", "population", "hits", "rate", *self.extra_columns, "flagged"]
        body = [header]
        for r in self.rows:
            rate = "nan" if r.population == 0 else f"{r.rate:.6f}"
            extras = [f"{r.extra.get(c, float('nan')):.6f}" for c in self.extra_columns]
            body.append([r.stratum, str(r.population), str(r.hits), rate, *extras,
                         "1" if r.flagged else "0"])
        return body

    def to_tsv(self) -> str:
        return "".join("\t".join(row) + "\n" for row in self._cells())

    def to_text(self) -> str:
        cells = self._cells()
        widths = [max(len(row[k]) for row in cells) for k in range(len(cells[0]))]
        lines = [self.title, ""]
        for row in cells:
            lines.append("  ".join(c.rjust(w) if k else c.ljust(w)
                                   for k, (c, w) in enumerate(zip(row, widths))))
        lines.append(f"denominator: {self.denominator}")
        if self.best is not None:
            lines.append(f"best: {self.best}")
        return "\n".join(lines) + "\n"

    def render(self, fmt: str = "tsv") -> str:
        if fmt == "tsv":
            return self.to_tsv()
        if fmt == "text":
            return self.to_text()
        raise ValueError(f"format must be 'tsv' or 'text', got {fmt!r}")


def _evaluated(assignment: Assignment, p: NodePartition) -> tuple[np.ndarray, np.ndarray]:
    """Indices of assigned validation nodes and a hit flag for each."""
    if assignment.n != p.n:
        raise DataError("assignment does not match partition size")
    if not p.is_validation.any():
        raise DataError("empty validation set")
    idx = np.flatnonzero(p.is_validation & assignment.assigned)
    return idx, assignment.category[idx] == p.label[idx]


def overall_accuracy(assignment: Assignment, p: NodePartition) -> tuple[int, int]:
    """``(hits, population)`` over assigned validation nodes."""
    idx, hit = _evaluated(assignment, p)
    return int(hit.sum()), int(idx.size)


def hits_by_group(assignment: Assignment, p: NodePartition, scheme: CategoryScheme) -> HitsTable:
    idx, hit = _evaluated(assignment, p)
    C = scheme.n_categories
    truth = p.label[idx]
    pop = np.bincount(truth, minlength=C)
    hits = np.bincount(truth, weights=hit, minlength=C).astype(np.int64)
    pred = assignment.histogram(C)
    seeds = p.category_counts(1)
    total_pred, total_seed, total_val = pred.sum(), seeds.sum(), pop.sum()
    rows = []
    for a, label in enumerate(scheme.labels):
        rows.append(HitsRow(label, int(pop[a]), int(hits[a]), extra={
            "share_all": pred[a] / total_pred if total_pred else float("nan"),
            "share_seed": seeds[a] / total_seed if total_seed else float("nan"),
            "share_validation": pop[a] / total_val if total_val else float("nan"),
        }))
    rows.append(HitsRow("overall", int(idx.size), int(hit.sum()),
                        extra={"share_all": 1.0, "share_seed": 1.0, "share_validation": 1.0}))
    return HitsTable("hits by category", rows, int(idx.size),
                     ("share_all", "share_seed", "share_validation"))


def hits_by_metric(assignment: Assignment, p: NodePartition, metrics: NodeMetrics,
                   which: str, bins: Sequence[Bin]) -> HitsTable:
    """One row per bin; DTS adds an ``unreachable`` row when such nodes exist."""
    _check_disjoint(bins)
    idx, hit = _evaluated(assignment, p)
    values = metrics.get(which)[idx]
    rows = []
    covered = np.zeros(idx.size, dtype=bool)
    unreachable = (values == UNREACHABLE) if which == "dts" else np.zeros(idx.size, dtype=bool)
    for b in bins:
        sel = b.contains(values) & ~unreachable
        covered |= sel
        rows.append(HitsRow(b.label, int(sel.sum()), int(hit[sel].sum())))
    if unreachable.any():
        rows.append(HitsRow("unreachable", int(unreachable.sum()), int(hit[unreachable].sum())))
        covered |= unreachable
    if not covered.all():
        missing = np.unique(values[~covered])
        raise DataError(f"{which} values not covered by bins: {missing[:10].tolist()}")
    return HitsTable(f"hits by {which}", rows, int(idx.size))


def joint_table(assignment: Assignment, p: NodePartition, metrics: NodeMetrics,
                degree_bins: Sequence[Bin] | None = None,
                dts_values: Sequence[int] = (1, 2, 3),
                floor: int = DEFAULT_BEST_CELL_FLOOR) -> HitsTable:
    """Degree-bin x DTS cells; ``best`` names the top-rate cell with population >= floor.

    Validation nodes outside the grid land in a flagged ``outside`` row.
    """
    if degree_bins is None:
        degree_bins = interval_bins(DEFAULT_DEGREE_EDGES)
    _check_disjoint(degree_bins)
    idx, hit = _evaluated(assignment, p)
    deg = metrics.degree[idx]
    dts = metrics.dts[idx]
    rows = []
    inside = np.zeros(idx.size, dtype=bool)
    best, best_rate = None, -1.0
    for b in degree_bins:
        in_bin = b.contains(deg)
        for d in dts_values:
            sel = in_bin & (dts == d)
            inside |= sel
            row = HitsRow(f"{b.label} dts={d}", int(sel.sum()), int(hit[sel].sum()))
            row.flagged = row.population < floor
            if not row.flagged and row.rate > best_rate:
                best, best_rate = row.stratum, row.rate
            rows.append(row)
    outside = ~inside
    if outside.any():
        rows.append(HitsRow("outside", int(outside.sum()), int(hit[outside].sum()), flagged=True))
    return HitsTable("hits by degree x dts", rows, int(idx.size), best=best)
