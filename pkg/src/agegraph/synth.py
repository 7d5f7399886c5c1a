"""Synthetic age-labeled graphs with tunable age homophily.

Every pair of nodes is linked independently with probability
``min(1, c * kernel(|age_u - age_v|))``; ``c`` is solved so the expected
number of observable edges matches the requested mean degree. Ages are
integer years, so the pairs are handled per age-group pair: draw a binomial
edge count, then that many distinct pairs uniformly. With
``client_fraction < 1`` edges between two non-client nodes are deleted
afterwards (the calibration already accounts for the deletion).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from agegraph.errors import DataError
from agegraph.graph import Graph
from agegraph.rng import stream


@dataclass(frozen=True)
class Pyramid:
    """Age distribution: a two-normal mixture or a uniform range, in integer years.

    The default mixture has histogram peaks near 31 and 45 and puts roughly
    7% / 30% / 36% / 28% of the mass in the <25 / 25-34 / 35-49 / 50+ bins.
    """

    kind: str = "bimodal"
    modes: tuple[float, float] = (30.0, 47.0)
    sigma: float | tuple[float, float] = (5.5, 12.0)
    weights: tuple[float, float] = (0.34, 0.66)
    low: int = 18
    high: int = 80

    def __post_init__(self):
        if self.kind not in ("bimodal", "uniform"):
            raise ValueError(f"pyramid kind must be 'bimodal' or 'uniform', got {self.kind!r}")
        if self.low > self.high:
            raise ValueError("pyramid low must not exceed high")
        if np.any(np.asarray(self.sigma) <= 0):
            raise ValueError("sigma must be positive")

    @property
    def sigmas(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma, dtype=np.float64), (2,))


@dataclass(frozen=True)
class Kernel:
    """Link affinity by age gap: ``exp(-d / scale)`` plus an optional Gaussian bump."""

    scale: float = 5.0
    bump_weight: float = 0.0
    bump_at: float = 25.0
    bump_width: float = 3.0

    def __post_init__(self):
        if self.scale <= 0 or self.bump_weight < 0 or self.bump_width <= 0:
            raise ValueError("kernel parameters must be positive (bump_weight >= 0)")

    def __call__(self, gap) -> np.ndarray:
        gap = np.asarray(gap, dtype=np.float64)
        base = np.exp(-gap / self.scale) if math.isfinite(self.scale) else np.ones_like(gap)
        if self.bump_weight:
            base = base + self.bump_weight * np.exp(-((gap - self.bump_at) ** 2)
                                                    / (2.0 * self.bump_width ** 2))
        return base


@dataclass(frozen=True)
class SynthConfig:
    n: int = 10_000
    mean_degree: float = 6.0
    pyramid: Pyramid = field(default_factory=Pyramid)
    kernel: Kernel = field(default_factory=Kernel)
    client_fraction: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not self.mean_degree > 0:
            raise ValueError("mean_degree must be positive")
        if not 0.0 < self.client_fraction <= 1.0:
            raise ValueError("client_fraction must be in (0, 1]")


@dataclass(eq=False)
class SynthGraph:
    graph: Graph
    ages: np.ndarray       # float years per node
    is_client: np.ndarray  # bool per node


def sample_ages(cfg: SynthConfig) -> np.ndarray:
    """I.i.d. integer ages (as floats) drawn from the configured pyramid."""
    pyr = cfg.pyramid
    rng = stream(cfg.rng_seed, "synth.ages")
    if pyr.kind == "uniform":
        return rng.integers(pyr.low, pyr.high + 1, size=cfg.n).astype(np.float64)
    w = np.asarray(pyr.weights, dtype=np.float64)
    w = w / w.sum()
    out = np.empty(cfg.n, dtype=np.float64)
    filled = 0
    while filled < cfg.n:
        k = cfg.n - filled
        comp = rng.choice(2, size=k, p=w)
        draw = np.rint(rng.normal(np.asarray(pyr.modes)[comp], pyr.sigmas[comp]))
        draw = draw[(draw >= pyr.low) & (draw <= pyr.high)]
        out[filled:filled + draw.size] = draw
        filled += draw.size
    return out


def _pair_counts(sizes: np.ndarray) -> np.ndarray:
    """Unordered node-pair counts between (and within) groups."""
    P = np.outer(sizes, sizes).astype(np.float64)
    np.fill_diagonal(P, sizes * (sizes - 1) / 2.0)
    return P


def _solve_scale(K: np.ndarray, observable: np.ndarray, target: float) -> float:
    """Find c with sum(min(1, c K) * observable) == target (upper triangle)."""
    upper = np.triu(np.ones_like(K, dtype=bool))
    K = K[upper]
    O = observable[upper]
    if O[K > 0].sum() < target:
        raise DataError("mean degree infeasible for this kernel and population")

    def expected(c):
        return float((np.minimum(1.0, c * K) * O).sum())

    c0 = target / float((K * O).sum())
    if c0 * K.max() <= 1.0:
        return c0
    lo, hi = c0, 2.0 * c0
    while expected(hi) < target:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if expected(mid) < target:
            lo = mid
        else:
            hi = mid
    return hi


def _decode_triangle(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map ``idx = b(b-1)/2 + a`` (``a < b``) back to ``(a, b)``."""
    b = np.floor((1.0 + np.sqrt(1.0 + 8.0 * idx.astype(np.float64))) / 2.0).astype(np.int64)
    b -= (b * (b - 1) // 2) > idx
    b += ((b + 1) * b // 2) <= idx
    return idx - b * (b - 1) // 2, b


def generate_graph(cfg: SynthConfig, ages: np.ndarray | None = None) -> SynthGraph:
    if ages is None:
        ages = sample_ages(cfg)
    ages = np.asarray(ages, dtype=np.float64)
    n = ages.shape[0]
    if cfg.mean_degree > n - 1:
        raise DataError(f"mean degree {cfg.mean_degree} exceeds n - 1 = {n - 1}")

    n_clients = int(round(cfg.client_fraction * n))
    is_client = np.zeros(n, dtype=bool)
    is_client[stream(cfg.rng_seed, "synth.clients").permutation(n)[:n_clients]] = True

    years = np.floor(ages).astype(np.int64)
    values, group = np.unique(years, return_inverse=True)
    order = np.argsort(group, kind="stable")
    sizes = np.bincount(group, minlength=values.size)
    starts = np.concatenate([[0], np.cumsum(sizes)])
    members = [order[starts[k]:starts[k + 1]] for k in range(values.size)]

    outsiders = np.bincount(group[~is_client], minlength=values.size)
    observable = _pair_counts(sizes) - _pair_counts(outsiders)
    K = cfg.kernel(np.abs(values[:, None] - values[None, :]))
    c = _solve_scale(K, observable, cfg.mean_degree * n / 2.0)

    rng = stream(cfg.rng_seed, "synth.edges")
    src, dst = [], []
    for i in range(values.size):
        for j in range(i, values.size):
            p = min(1.0, c * K[i, j])
            pairs = int(sizes[i] * sizes[j]) if i != j else int(sizes[i] * (sizes[i] - 1) // 2)
            if p <= 0.0 or pairs == 0:
                continue
            k = int(rng.binomial(pairs, p))
            if k == 0:
                continue
            idx = rng.choice(pairs, size=k, replace=False)
            if i != j:
                a, b = idx // sizes[j], idx % sizes[j]
                src.append(members[i][a])
                dst.append(members[j][b])
            else:
                a, b = _decode_triangle(idx)
                src.append(members[i][a])
                dst.append(members[i][b])
    u = np.concatenate(src) if src else np.empty(0, dtype=np.int64)
    v = np.concatenate(dst) if dst else np.empty(0, dtype=np.int64)
    keep = is_client[u] | is_client[v]
    graph = Graph.from_index_edges(n, u[keep], v[keep])
    return SynthGraph(graph, ages, is_client)


def generate(cfg: SynthConfig) -> SynthGraph:
    return generate_graph(cfg, sample_ages(cfg))


def labeled_subset(sg: SynthGraph, fraction: float, rng_seed: int) -> np.ndarray:
    """Indices of a random ``fraction`` of client nodes chosen as ground truth."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("label fraction must be in (0, 1]")
    clients = np.flatnonzero(sg.is_client)
    k = int(round(fraction * sg.graph.n))
    k = min(k, clients.size)
    pick = stream(rng_seed, "synth.labels").permutation(clients.size)[:k]
    return np.sort(clients[pick])
