"""Collapse probability tables into category assignments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from agegraph import kernels
from agegraph.errors import DataError
from agegraph.graph import CategoryScheme, Graph, NodePartition

UNASSIGNED = -1

SOURCE_ARGMAX = 0
SOURCE_PPS = 1
SOURCE_UNASSIGNED = 2
SOURCE_NAMES = ("argmax", "pps", "unassigned")


@dataclass(eq=False)
class Assignment:
    category: np.ndarray    # int64, UNASSIGNED where filtered out
    confidence: np.ndarray  # probability of the chosen (or top) category
    source: np.ndarray      # int8 SOURCE_* codes

    @property
    def n(self) -> int:
        return self.category.shape[0]

    @property
    def assigned(self) -> np.ndarray:
        return self.category != UNASSIGNED

    def histogram(self, n_categories: int) -> np.ndarray:
        return np.bincount(self.category[self.assigned], minlength=n_categories)


@dataclass(frozen=True, eq=False)
class QuotaPlan:
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def collapse_argmax(table: np.ndarray) -> Assignment:
    """Most probable category per node; ties go to the lowest index."""
    table = np.asarray(table, dtype=np.float64)
    cat = np.argmax(table, axis=1).astype(np.int64)
    conf = table[np.arange(table.shape[0]), cat]
    return Assignment(cat, conf, np.full(cat.shape[0], SOURCE_ARGMAX, dtype=np.int8))


def filter_by_threshold(assignment: Assignment, tau: float) -> Assignment:
    """Unassign nodes whose confidence is below ``tau``."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    drop = assignment.assigned & (assignment.confidence < tau)
    cat = np.where(drop, UNASSIGNED, assignment.category)
    src = np.where(drop, SOURCE_UNASSIGNED, assignment.source).astype(np.int8)
    return Assignment(cat, assignment.confidence.copy(), src)


def compute_quotas(target_distribution, n: int) -> QuotaPlan:
    """Largest-remainder apportionment of ``n`` nodes; remainder ties go to lower indices."""
    frac = np.asarray(target_distribution, dtype=np.float64)
    if np.any(frac < 0):
        raise ValueError("target fractions must be non-negative")
    if abs(frac.sum() - 1.0) > 1e-9:
        raise ValueError(f"target fractions must sum to 1, got {frac.sum()!r}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    exact = frac * n
    base = np.floor(exact + 1e-9).astype(np.int64)
    base = np.minimum(base, np.where(frac > 0, n, 0))
    short = n - int(base.sum())
    if short > 0:
        rem = exact - base
        order = np.lexsort((np.arange(frac.size), -rem))
        base[order[:short]] += 1
    elif short < 0:  # pragma: no cover - guarded by the epsilon above
        raise DataError("quota rounding overshot")
    return QuotaPlan(base)


def pps_assign(table: np.ndarray, quotas: QuotaPlan) -> Assignment:
    """Population Pyramid Scaling: greedy global collapse under category quotas.

    All ``(node, category, p)`` tuples are scanned once in descending ``p``
    (ties: lower node id, then lower category); a node is taken by a category
    while it is unassigned and the category is below its quota.
    """
    table = np.asarray(table, dtype=np.float64)
    n, C = table.shape
    counts = np.asarray(quotas.counts, dtype=np.int64)
    if counts.shape[0] != C:
        raise DataError(f"quota plan has {counts.shape[0]} categories, table {C}")
    if quotas.total != n:
        raise DataError(f"quotas total {quotas.total} but there are {n} nodes")
    flat = table.ravel()
    # row-major flattening already orders (node, category) ascending
    order = np.argsort(-flat, kind="stable")
    nodes = order // C
    cats = order % C
    cat = kernels.pps_scan(nodes, cats, counts, n)
    if n and np.any(cat < 0):
        raise DataError("PPS left a node unassigned")
    conf = table[np.arange(n), cat] if n else np.empty(0)
    return Assignment(cat, conf, np.full(n, SOURCE_PPS, dtype=np.int8))


def seed_distribution(p: NodePartition) -> np.ndarray:
    counts = p.category_counts(1).astype(np.float64)
    if counts.sum() == 0:
        raise DataError("no seeds to take a target distribution from")
    return counts / counts.sum()


def pps_with_scope(table: np.ndarray, p: NodePartition, target_distribution,
                   scope: str = "all") -> Assignment:
    """PPS over every node (``all``) or over non-seeds with seeds fixed (``nonseed``).

    In ``nonseed`` mode seeds keep their known label and the per-category
    quotas for the whole graph are reduced by the seed counts.
    """
    if scope == "all":
        return pps_assign(table, compute_quotas(target_distribution, table.shape[0]))
    if scope != "nonseed":
        raise ValueError(f"pps scope must be 'all' or 'nonseed', got {scope!r}")
    n = table.shape[0]
    seeds = p.is_seed
    full = compute_quotas(target_distribution, n).counts
    deficit = np.maximum(full - p.category_counts(1), 0)
    n_free = int((~seeds).sum())
    if deficit.sum() == n_free:
        plan = QuotaPlan(deficit)
    elif deficit.sum() > 0:
        plan = compute_quotas(deficit / deficit.sum(), n_free)
    else:
        plan = compute_quotas(np.asarray(target_distribution, dtype=np.float64), n_free)
    free = np.flatnonzero(~seeds)
    inner = pps_assign(table[free], plan)
    cat = np.empty(n, dtype=np.int64)
    cat[seeds] = p.label[seeds]
    cat[free] = inner.category
    conf = table[np.arange(n), cat]
    return Assignment(cat, conf, np.full(n, SOURCE_PPS, dtype=np.int8))


# ------------------------------------------------------------------------ I/O


def write_assignments(out: TextIO, g: Graph, assignment: Assignment,
                      scheme: CategoryScheme) -> None:
    labels = np.asarray(scheme.labels + ["NA"], dtype=object)
    out.write("node_id\tcategory_label\tconfidence\tsource\n")
    names = np.asarray(SOURCE_NAMES, dtype=object)
    conf = np.char.mod("%.9f", assignment.confidence)
    for row in zip(g.node_ids.astype(str), labels[assignment.category], conf,
                   names[assignment.source]):
        out.write("\t".join(row))
        out.write("\n")


def read_assignments(source, scheme: CategoryScheme) -> tuple[list[str], Assignment]:
    lookup = {label: k for k, label in enumerate(scheme.labels)}
    lookup["NA"] = UNASSIGNED
    src_lookup = {name: k for k, name in enumerate(SOURCE_NAMES)}
    ids, cat, conf, src = [], [], [], []
    lines = iter(source)
    next(lines)
    for line in lines:
        node, label, c, s = line.rstrip("\n").split("\t")
        ids.append(node)
        cat.append(lookup[label])
        conf.append(float(c))
        src.append(src_lookup[s])
    return ids, Assignment(np.asarray(cat, dtype=np.int64), np.asarray(conf),
                           np.asarray(src, dtype=np.int8))
