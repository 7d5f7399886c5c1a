"""End-to-end pipeline: ingest, prune, split, propagate, label, evaluate.

Every stage runs inside :func:`stage`, which tags failures with the stage
name so the CLI can report where things went wrong. All randomness flows
from ``RunConfig.rng_seed`` through :func:`agegraph.rng.derive_seed`.
"""

from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from agegraph import graph as gmod
from agegraph import labeling, metrics, propagation
from agegraph.errors import AgeGraphError, DataError, InvariantViolation
from agegraph.graph import CategoryScheme, EdgeListSchema, Graph, NodePartition
from agegraph.rng import derive_seed
from agegraph.synth import Kernel, Pyramid, SynthConfig, generate, labeled_subset

log = logging.getLogger(__name__)


class ConfigError(AgeGraphError, ValueError):
    """Bad or inconsistent run configuration."""


class StageError(AgeGraphError):
    def __init__(self, stage_name: str, cause: BaseException):
        super().__init__(f"[{stage_name}] {cause}")
        self.stage = stage_name
        self.cause = cause


@contextlib.contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (AgeGraphError, ValueError, OSError, AssertionError) as exc:
        raise StageError(name, exc) from exc


# ---------------------------------------------------------------------- config


_SYNTH_KEYS = {
    "n": int, "mean_degree": float, "kernel_scale": float, "bump_weight": float,
    "bump_at": float, "bump_width": float, "client_fraction": float,
    "label_fraction": float, "pyramid": str,
}


@dataclass
class RunConfig:
    edges: str | None = None
    labels: str | None = None
    label_mode: str = "age"
    delimiter: str | None = None
    weighted: bool = False
    scheme: str = "25,35,50"
    seed_fraction: float = 0.75
    rng_seed: int = 0
    prune_cap: int = 100
    lam: float = 0.5
    iterations: int = 30
    masked: bool = True
    pps: bool = False
    pps_scope: str = "all"
    tau: float = 0.0
    out: str | None = None
    format: str = "tsv"
    sin_bins: int = 4
    dts_bins: int = 5
    degree_edges: str = "0,2,29,48,66,100"
    best_floor: int = 50
    synth: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        if self.edges is None and not self.synth:
            raise ConfigError("either 'edges' or synth.* settings are required")
        if self.edges is not None and self.labels is None:
            raise ConfigError("'labels' is required together with 'edges'")
        for key in ("edges", "labels"):
            path = getattr(self, key)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{key} file not found: {path}")
        unknown = set(self.synth) - set(_SYNTH_KEYS)
        if unknown:
            raise ConfigError(f"unknown synth settings: {sorted(unknown)}")
        if self.label_mode not in ("age", "category"):
            raise ConfigError(f"label_mode must be 'age' or 'category', got {self.label_mode!r}")
        if self.pps_scope not in ("all", "nonseed"):
            raise ConfigError(f"pps_scope must be 'all' or 'nonseed', got {self.pps_scope!r}")
        if self.format not in ("tsv", "text"):
            raise ConfigError(f"format must be 'tsv' or 'text', got {self.format!r}")
        if not 0.0 < self.seed_fraction < 1.0:
            raise ConfigError("seed_fraction must be in (0, 1)")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must be in [0, 1]")
        if self.prune_cap < 0:
            raise ConfigError("prune_cap must be >= 0 (0 disables pruning)")
        try:
            self.category_scheme()
            self.propagation_config()
            metrics.interval_bins(self.degree_list())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def category_scheme(self) -> CategoryScheme:
        return CategoryScheme.parse(self.scheme)

    def propagation_config(self) -> propagation.PropagationConfig:
        return propagation.PropagationConfig(self.lam, self.iterations, self.masked, self.weighted)

    def degree_list(self) -> list[int]:
        return [int(t) for t in self.degree_edges.split(",")]

    def synth_config(self) -> SynthConfig:
        s = {k: _SYNTH_KEYS[k](v) for k, v in self.synth.items()}
        pyramid = Pyramid(kind=s.get("pyramid", "bimodal"))
        kernel = Kernel(scale=s.get("kernel_scale", 5.0), bump_weight=s.get("bump_weight", 0.0),
                        bump_at=s.get("bump_at", 25.0), bump_width=s.get("bump_width", 3.0))
        return SynthConfig(n=s.get("n", 10_000), mean_degree=s.get("mean_degree", 6.0),
                           pyramid=pyramid, kernel=kernel,
                           client_fraction=s.get("client_fraction", 1.0), rng_seed=self.rng_seed)

    def label_fraction(self) -> float:
        return float(self.synth.get("label_fraction", 0.2))

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["synth"] = dict(sorted(self.synth.items()))
        return d

    def digest(self) -> str:
        d = self.as_dict()
        d.pop("out")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}

# config-file key -> RunConfig field
_KEY_ALIASES = {"lambda": "lam", "t_end": "iterations"}


def coerce_setting(name: str, raw: str):
    ftype = {f.name: f.type for f in dataclasses.fields(RunConfig)}[name]
    if name == "delimiter":
        return {"tab": "\t", "whitespace": None, "": None}.get(raw, raw)
    if "bool" in ftype:
        low = raw.strip().lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if ftype.startswith("int"):
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_config(lines, base: RunConfig | None = None) -> RunConfig:
    """Apply ``key = value`` lines (``#`` comments) on top of ``base``."""
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    cfg.synth = dict(cfg.synth)
    names = {f.name for f in dataclasses.fields(RunConfig)}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key.startswith("synth."):
            cfg.synth[key[len("synth."):]] = value
            continue
        key = _KEY_ALIASES.get(key, key)
        if key not in names or key == "synth":
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, coerce_setting(key, value))
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


# -------------------------------------------------------------------- stages


@dataclass(eq=False)
class Prepared:
    graph: Graph
    partition: NodePartition
    values: np.ndarray      # aligned label values (ages or category codes), NaN if none
    scheme: CategoryScheme
    inputs: dict[str, str]  # input path -> sha256


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def load_inputs(cfg: RunConfig) -> tuple[Graph, np.ndarray, dict[str, str]]:
    """Graph and per-node label values, from files or an in-memory synth run."""
    if cfg.edges is not None:
        with stage("ingest"):
            schema = EdgeListSchema(delimiter=cfg.delimiter, weighted=None)
            g = gmod.read_edge_file(cfg.edges, schema)
            table = gmod.read_label_file(cfg.labels, cfg.label_mode)
            values = gmod.align_labels(g, table)
        return g, values, {cfg.edges: file_digest(cfg.edges), cfg.labels: file_digest(cfg.labels)}
    with stage("synth"):
        sg = generate(cfg.synth_config())
        picked = labeled_subset(sg, cfg.label_fraction(), cfg.rng_seed)
        values = np.full(sg.graph.n, np.nan)
        values[picked] = sg.ages[picked]
        if cfg.label_mode == "category":
            values[picked] = cfg.category_scheme().categorize(sg.ages[picked])
    return sg.graph, values, {}


def prepare(cfg: RunConfig) -> Prepared:
    cfg.validate()
    scheme = cfg.category_scheme()
    g, values, inputs = load_inputs(cfg)
    with stage("prune"):
        if cfg.prune_cap:
            keep = g.degree <= cfg.prune_cap
            g, values = g.induced(keep), values[keep]
    with stage("split"):
        cats = gmod.categories_from_values(values, cfg.label_mode, scheme)
        p = gmod.split_ground_truth(cats, cfg.seed_fraction, derive_seed(cfg.rng_seed, "split"),
                                    scheme.n_categories)
    with stage("prune-components"):
        keep = gmod.seed_reachable(g, p)
        g2 = g.induced(keep)
        p = p.take(np.flatnonzero(keep))
        values = values[keep]
        if not p.is_validation.any():
            raise DataError("no validation nodes left after pruning")
        g = g2
    return Prepared(g, p, values, scheme, inputs)


def label(table: np.ndarray, p: NodePartition, use_pps: bool, scope: str,
          tau: float) -> labeling.Assignment:
    if use_pps:
        a = labeling.pps_with_scope(table, p, labeling.seed_distribution(p), scope)
    else:
        a = labeling.collapse_argmax(table)
    return labeling.filter_by_threshold(a, tau) if tau > 0 else a


@dataclass(eq=False)
class RunResult:
    prepared: Prepared
    state: propagation.PropagationState
    assignment: labeling.Assignment
    node_metrics: metrics.NodeMetrics
    tables: dict[str, metrics.HitsTable]

    @property
    def accuracy(self) -> float:
        t = self.tables["hits_by_group"].row("overall")
        return t.rate


def evaluate(prep: Prepared, assignment: labeling.Assignment, cfg: RunConfig,
             node_metrics: metrics.NodeMetrics | None = None):
    with stage("evaluate"):
        if node_metrics is None:
            node_metrics = metrics.compute_node_metrics(prep.graph, prep.partition)
        p = prep.partition
        deg_bins = metrics.interval_bins(cfg.degree_list())
        top = int(node_metrics.degree.max()) if node_metrics.degree.size else 0
        if top > deg_bins[-1].hi:
            deg_bins.append(metrics.Bin(deg_bins[-1].hi + 1, None, f"> {deg_bins[-1].hi}"))
        tables = {
            "hits_by_group": metrics.hits_by_group(assignment, p, prep.scheme),
            "hits_by_sin": metrics.hits_by_metric(assignment, p, node_metrics, "sin",
                                                  metrics.exact_bins(cfg.sin_bins)),
            "hits_by_dts": metrics.hits_by_metric(assignment, p, node_metrics, "dts",
                                                  metrics.exact_bins(cfg.dts_bins)),
            "hits_by_degree": metrics.hits_by_metric(assignment, p, node_metrics, "degree",
                                                     [metrics.Bin(0, 0, "0"), *deg_bins]),
            "hits_joint": metrics.joint_table(assignment, p, node_metrics, deg_bins,
                                              floor=cfg.best_floor),
        }
    return node_metrics, tables


def infer(prep: Prepared, cfg: RunConfig) -> RunResult:
    with stage("propagate"):
        state = propagation.run(prep.graph, prep.partition, cfg.propagation_config())
        sums = state.current.sum(axis=1)
        if state.current.size and not np.allclose(sums, 1.0, atol=1e-9):
            raise InvariantViolation("probability vectors do not sum to 1")
    with stage("label"):
        a = label(state.current, prep.partition, cfg.pps, cfg.pps_scope, cfg.tau)
        if cfg.pps and cfg.tau == 0:
            want = _expected_quotas(prep.partition, cfg.pps_scope, a)
            if not np.array_equal(a.histogram(prep.scheme.n_categories), want):
                raise InvariantViolation("PPS histogram differs from its quotas")
    node_metrics, tables = evaluate(prep, a, cfg)
    return RunResult(prep, state, a, node_metrics, tables)


def _expected_quotas(p: NodePartition, scope: str, a: labeling.Assignment) -> np.ndarray:
    if scope == "all":
        return labeling.compute_quotas(labeling.seed_distribution(p), p.n).counts
    # nonseed: free nodes follow their plan and seeds keep their labels, so the
    # check reduces to the seed labels being intact
    if not np.array_equal(a.category[p.is_seed], p.label[p.is_seed]):
        raise InvariantViolation("PPS changed a seed label")
    return a.histogram(p.n_categories)


# --------------------------------------------------------------------- outputs


def write_partition(out, g: Graph, p: NodePartition) -> None:
    out.write("node_id\trole\tlabel\n")
    roles = np.asarray([gmod.ROLE_NAMES[k] for k in range(3)], dtype=object)[p.role]
    for row in zip(g.node_ids.astype(str), roles, p.label.astype(str)):
        out.write("\t".join(row))
        out.write("\n")


def read_partition(source, n_categories: int) -> tuple[list[str], NodePartition]:
    codes = {name: k for k, name in gmod.ROLE_NAMES.items()}
    lines = iter(source)
    next(lines)
    ids, role, lab = [], [], []
    for lineno, line in enumerate(lines, start=2):
        fields = line.rstrip("\n").split("\t")
        if len(fields) != 3 or fields[1] not in codes:
            raise DataError(f"partition line {lineno}: malformed {line!r}")
        ids.append(fields[0])
        role.append(codes[fields[1]])
        lab.append(int(fields[2]))
    return ids, NodePartition(np.asarray(role), np.asarray(lab), n_categories)


def _write(path: Path, writer) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer(fh)


def table_suffix(fmt: str) -> str:
    return ".tsv" if fmt == "tsv" else ".txt"


def write_run(result: RunResult, cfg: RunConfig, outdir: Path) -> list[Path]:
    """Write every artifact except the manifest; returns the paths written."""
    prep = result.prepared
    g = prep.graph
    written = []

    def emit(name, writer):
        path = outdir / name
        _write(path, writer)
        written.append(path)

    emit("graph.tsv", g.export)
    emit("partition.tsv", lambda fh: write_partition(fh, g, prep.partition))
    emit("probabilities.tsv", lambda fh: propagation.write_probability_table(fh, g, result.state))
    emit("assignments.tsv", lambda fh: labeling.write_assignments(fh, g, result.assignment, prep.scheme))
    emit("metrics.tsv", lambda fh: metrics.write_metrics_table(fh, g, prep.partition, result.node_metrics))
    for name, table in result.tables.items():
        emit(name + table_suffix(cfg.format), lambda fh, t=table: fh.write(t.render(cfg.format)))
    hits, pop = metrics.overall_accuracy(result.assignment, prep.partition)
    summary = [
        ("nodes", g.n), ("edges", g.edge_count),
        ("seeds", int(prep.partition.is_seed.sum())),
        ("validation", int(prep.partition.is_validation.sum())),
        ("assigned_validation", pop), ("hits", hits),
        ("accuracy", f"{hits / pop:.6f}" if pop else "nan"),
        ("best_cell", result.tables["hits_joint"].best or "none"),
    ]
    emit("summary.tsv", lambda fh: fh.writelines(f"{k}\t{v}\n" for k, v in summary))
    return written


def write_manifest(outdir: Path, cfg: RunConfig, inputs: dict[str, str],
                   outputs: list[Path], command: str) -> Path:
    import datetime
    import platform

    import agegraph
    from agegraph._accel import BACKEND

    versions = {"agegraph": agegraph.__version__, "python": platform.python_version(),
                "numpy": np.__version__}
    try:
        import numba
        versions["numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        pass
    manifest = {
        "command": command,
        "config": cfg.as_dict(),
        "config_sha256": cfg.digest(),
        "inputs": inputs,
        "outputs": {p.name: file_digest(p) for p in outputs},
        "versions": versions,
        "backend": BACKEND,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
    }
    path = outdir / "manifest.json"
    _write(path, lambda fh: fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n"))
    return path


def output_dir(cfg: RunConfig) -> Path:
    if cfg.out is None:
        raise ConfigError("an output directory is required ('out' / --out)")
    path = Path(cfg.out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    return path


def cmd_run(cfg: RunConfig) -> RunResult:
    outdir = output_dir(cfg)
    prep = prepare(cfg)
    result = infer(prep, cfg)
    with stage("write"):
        written = write_run(result, cfg, outdir)
        write_manifest(outdir, cfg, prep.inputs, written, "run")
    log.info("accuracy %.4f on %d validation nodes", result.accuracy,
             int(prep.partition.is_validation.sum()))
    return result


# ----------------------------------------------------------------------- sweep


SWEEP_PARAMETERS = ("lambda", "t_end", "tau")


@dataclass(frozen=True)
class SweepRow:
    value: float
    hits: int
    assigned: int
    validation: int

    @property
    def accuracy(self) -> float:
        return self.hits / self.assigned if self.assigned else float("nan")


def sweep(prep: Prepared, cfg: RunConfig, parameter: str, values) -> list[SweepRow]:
    """One evaluation per value on a shared graph and split."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"sweep parameter must be one of {SWEEP_PARAMETERS}, got {parameter!r}")
    values = list(values)
    if len(values) < 2:
        raise ConfigError("a sweep needs at least two values")
    p = prep.partition
    n_val = int(p.is_validation.sum())

    def score(table, tau):
        a = label(table, p, cfg.pps, cfg.pps_scope, tau)
        hits, pop = metrics.overall_accuracy(a, p)
        return hits, pop

    rows = []
    with stage("sweep"):
        if parameter == "lambda":
            for lam in values:
                c = dataclasses.replace(cfg.propagation_config(), lam=float(lam))
                hits, pop = score(propagation.run(prep.graph, p, c).current, cfg.tau)
                rows.append(SweepRow(float(lam), hits, pop, n_val))
        elif parameter == "t_end":
            steps = [int(v) for v in values]
            if any(s < 0 for s in steps) or any(s != v for s, v in zip(steps, values)):
                raise ConfigError("t_end values must be non-negative integers")
            c = dataclasses.replace(cfg.propagation_config(), t_end=max(steps))
            tables = {}
            for state in propagation.iterate(prep.graph, p, c):
                if state.t in steps:
                    tables[state.t] = state.current
            for s in steps:
                hits, pop = score(tables[s], cfg.tau)
                rows.append(SweepRow(float(s), hits, pop, n_val))
        else:
            table = propagation.run(prep.graph, p, cfg.propagation_config()).current
            for tau in values:
                if not 0.0 <= float(tau) <= 1.0:
                    raise ConfigError(f"tau must be in [0, 1], got {tau}")
                hits, pop = score(table, float(tau))
                rows.append(SweepRow(float(tau), hits, pop, n_val))
    return rows


def write_sweep(out, parameter: str, rows: list[SweepRow]) -> None:
    out.write(f"{parameter}\taccuracy\thits\tassigned\tvalidation\n")
    for r in rows:
        acc = "nan" if r.assigned == 0 else f"{r.accuracy:.6f}"
        out.write(f"{r.value:g}\t{acc}\t{r.hits}\t{r.assigned}\t{r.validation}\n")
