"""Age assortativity: link-count matrix, independence null, gap profile, regression.

Ages are integer years; ``ages`` arguments are per-node float arrays with
``NaN`` for nodes outside the ground truth (fractional years are floored).
Matrices count ordered pairs, so every undirected edge between two labeled
nodes contributes twice and ``C.sum() == 2 * |E_GT|``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np

from agegraph.errors import DataError
from agegraph.graph import Graph

DEFAULT_EPS = 0.5


@dataclass(frozen=True, eq=False)
class AgeMatrix:
    ages: np.ndarray    # axis labels, contiguous integer years
    values: np.ndarray  # (len(ages), len(ages))

    def at(self, i: int, j: int) -> float:
        lo = int(self.ages[0])
        return float(self.values[i - lo, j - lo])

    @property
    def total(self) -> float:
        return float(self.values.sum())


@dataclass(frozen=True, eq=False)
class GapProfile:
    counts: np.ndarray  # counts[delta]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class Regression:
    r: float
    slope: float
    intercept: float
    n_pairs: int


def _years(ages) -> np.ndarray:
    ages = np.asarray(ages, dtype=np.float64)
    out = np.full(ages.shape, -1, dtype=np.int64)
    known = ~np.isnan(ages)
    if np.any(ages[known] < 0):
        raise DataError("negative age")
    out[known] = np.floor(ages[known]).astype(np.int64)
    return out


def _axis(years: np.ndarray, age_range: tuple[int, int] | None) -> np.ndarray:
    known = years[years >= 0]
    if age_range is None:
        if known.size == 0:
            raise DataError("no labeled nodes")
        age_range = (int(known.min()), int(known.max()))
    lo, hi = age_range
    if known.size and (known.min() < lo or known.max() > hi):
        raise DataError(f"ages fall outside the range {age_range}")
    return np.arange(lo, hi + 1)


def labeled_edges(g: Graph, ages) -> tuple[np.ndarray, np.ndarray]:
    """Ages at both ends of every undirected edge joining two labeled nodes."""
    years = _years(ages)
    if years.shape[0] != g.n:
        raise DataError("ages array does not match the graph")
    u, v, _ = g.undirected_edges()
    keep = (years[u] >= 0) & (years[v] >= 0)
    return years[u[keep]], years[v[keep]]


def communication_matrix(g: Graph, ages, age_range: tuple[int, int] | None = None) -> AgeMatrix:
    axis = _axis(_years(ages), age_range)
    au, av = labeled_edges(g, ages)
    k = axis.size
    lo = axis[0]
    flat = np.bincount(np.concatenate([(au - lo) * k + (av - lo), (av - lo) * k + (au - lo)]),
                       minlength=k * k)
    return AgeMatrix(axis, flat.reshape(k, k).astype(np.float64))


def null_matrix(ages, edge_total: float, age_range: tuple[int, int] | None = None) -> AgeMatrix:
    """Expected link counts if ages were independent of the links.

    ``R[i, j] = (|N(i)| / |N|) * (|N(j)| / |N|) * edge_total``, where
    ``edge_total`` follows the same mass convention as the C matrix
    (``2 * |E_GT|`` for ordered pairs).
    """
    years = _years(ages)
    axis = _axis(years, age_range)
    known = years[years >= 0]
    if known.size == 0:
        raise DataError("no labeled nodes")
    frac = np.bincount(known - axis[0], minlength=axis.size) / known.size
    return AgeMatrix(axis, np.outer(frac, frac) * float(edge_total))


def log_difference(Cm: AgeMatrix, Rm: AgeMatrix, eps: float = DEFAULT_EPS) -> AgeMatrix:
    if not np.array_equal(Cm.ages, Rm.ages):
        raise DataError("C and R matrices have different age axes")
    return AgeMatrix(Cm.ages, np.log(Cm.values + eps) - np.log(Rm.values + eps))


def homophily_matrices(g: Graph, ages, eps: float = DEFAULT_EPS):
    """C, R and log(C) - log(R) on a shared age axis."""
    Cm = communication_matrix(g, ages)
    Rm = null_matrix(ages, Cm.total, (int(Cm.ages[0]), int(Cm.ages[-1])))
    return Cm, Rm, log_difference(Cm, Rm, eps)


def log_difference_summary(delta: AgeMatrix, weights: AgeMatrix | None = None) -> dict[str, float]:
    """Mean absolute entry (optionally weighted) and diagonal vs off-diagonal means."""
    vals = delta.values
    k = vals.shape[0]
    diag = np.eye(k, dtype=bool)
    out = {
        "mean_abs": float(np.abs(vals).mean()),
        "diag_mean": float(vals[diag].mean()),
        "offdiag_mean": float(vals[~diag].mean()) if k > 1 else float("nan"),
    }
    if weights is not None:
        w = weights.values
        out["weighted_mean_abs"] = float((w * np.abs(vals)).sum() / w.sum()) if w.sum() else 0.0
    return out


def gap_profile(g: Graph, ages) -> GapProfile:
    """Histogram of ``|age_u - age_v|`` over labeled edges, each counted once."""
    au, av = labeled_edges(g, ages)
    return GapProfile(np.bincount(np.abs(au - av), minlength=1))


def linked_age_regression(g: Graph, ages) -> Regression:
    """Least-squares fit of neighbour age on own age over both edge orientations."""
    au, av = labeled_edges(g, ages)
    if au.size < 2:
        raise DataError(f"need at least 2 labeled edges, got {au.size}")
    x = np.concatenate([au, av]).astype(np.float64)
    y = np.concatenate([av, au]).astype(np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DataError("linked ages have zero variance")
    sxy = float(dx @ dy)
    slope = sxy / sxx
    return Regression(sxy / np.sqrt(sxx * syy), slope, float(y.mean() - slope * x.mean()), int(x.size))


def shuffle_ages(ages, rng: np.random.Generator) -> np.ndarray:
    """Permute ages among labeled nodes (keeps the age multiset and label set)."""
    ages = np.asarray(ages, dtype=np.float64).copy()
    known = np.flatnonzero(~np.isnan(ages))
    ages[known] = ages[known][rng.permutation(known.size)]
    return ages


# ------------------------------------------------------------------------ I/O


def write_matrix(out: TextIO, m: AgeMatrix, fmt: str = "%.6f") -> None:
    out.write("age\t" + "\t".join(str(a) for a in m.ages) + "\n")
    for a, row in zip(m.ages, m.values):
        out.write(f"{a}\t" + "\t".join(np.char.mod(fmt, row)) + "\n")


def read_matrix(source) -> AgeMatrix:
    lines = [ln.rstrip("\n") for ln in source if ln.strip()]
    ages = np.asarray([int(t) for t in lines[0].split("\t")[1:]])
    values = np.asarray([[float(t) for t in ln.split("\t")[1:]] for ln in lines[1:]])
    return AgeMatrix(ages, values.reshape(ages.size, ages.size))


def write_gap_profile(out: TextIO, profile: GapProfile) -> None:
    out.write("delta\tlinks\n")
    for d, c in enumerate(profile.counts):
        out.write(f"{d}\t{c}\n")
