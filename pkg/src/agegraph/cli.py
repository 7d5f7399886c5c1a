"""Command-line driver: ``agegraph {synth,run,sweep,homophily,metrics}``.

Settings come from an optional ``key = value`` config file and are then
overridden by flags. Exit codes: 0 ok, 2 config error, 3 data error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from agegraph import graph as gmod
from agegraph import homophily, labeling, metrics
from agegraph.errors import DataError, InvariantViolation
from agegraph.pipeline import (SWEEP_PARAMETERS, ConfigError, RunConfig, StageError, coerce_setting,
                               cmd_run, evaluate, file_digest, load_config, load_inputs,
                               output_dir, prepare, read_partition, stage, sweep,
                               table_suffix, write_manifest, write_partition, write_sweep)
from agegraph.rng import stream
from agegraph.synth import generate, labeled_subset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4

log = logging.getLogger("agegraph")

# flag dest -> RunConfig field
_OVERRIDES = {
    "edges": "edges", "labels": "labels", "label_mode": "label_mode", "scheme": "scheme",
    "delimiter": "delimiter", "weighted": "weighted", "seed_fraction": "seed_fraction",
    "rng_seed": "rng_seed", "prune_cap": "prune_cap", "lam": "lam", "iterations": "iterations",
    "masked": "masked", "pps": "pps", "pps_scope": "pps_scope", "tau": "tau", "out": "out",
    "format": "format",
}


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="key = value settings file; flags override it")
    sp.add_argument("--edges", help="edge-list file")
    sp.add_argument("--labels", help="label file (node_id<TAB>age or category index)")
    sp.add_argument("--label-mode", choices=("age", "category"))
    sp.add_argument("--scheme", help="category boundaries, e.g. 25,35,50")
    sp.add_argument("--delimiter", help="edge-list field separator ('tab' or a literal); "
                                        "default splits on whitespace")
    sp.add_argument("--weighted", action=argparse.BooleanOptionalAction, default=None,
                    help="use edge weights in the neighbour mean")
    sp.add_argument("--seed-fraction", type=float)
    sp.add_argument("--rng-seed", type=int)
    sp.add_argument("--prune-cap", type=int, help="drop nodes with degree above this (0: keep all)")
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--masked", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--pps", action=argparse.BooleanOptionalAction, default=None)
    sp.add_argument("--pps-scope", choices=("all", "nonseed"))
    sp.add_argument("--tau", type=float)
    sp.add_argument("--format", choices=("tsv", "text"))
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--synth", action="append", default=[], metavar="KEY=VALUE",
                    help="generate the input graph instead of reading files "
                         "(n, mean_degree, kernel_scale, label_fraction, ...)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agegraph", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="write a synthetic age-labeled graph")
    sp.add_argument("--config")
    sp.add_argument("--n", type=int)
    sp.add_argument("--mean-degree", type=float)
    sp.add_argument("--kernel-scale", type=float)
    sp.add_argument("--bump-weight", type=float)
    sp.add_argument("--bump-at", type=float)
    sp.add_argument("--bump-width", type=float)
    sp.add_argument("--client-fraction", type=float)
    sp.add_argument("--label-fraction", type=float)
    sp.add_argument("--pyramid", choices=("bimodal", "uniform"))
    sp.add_argument("--rng-seed", type=int)
    sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("run", help="full inference pipeline")
    _add_common(sp)

    sp = sub.add_parser("sweep", help="accuracy as a function of lambda, t_end or tau")
    _add_common(sp)
    sp.add_argument("--param", required=True, choices=SWEEP_PARAMETERS)
    sp.add_argument("--values", required=True, help="comma-separated values")

    sp = sub.add_parser("homophily", help="age mixing matrices, gap profile and regression")
    _add_common(sp)
    sp.add_argument("--eps", type=float, default=homophily.DEFAULT_EPS)
    sp.add_argument("--shuffle-labels", action="store_true",
                    help="permute ages among labeled nodes first (null model)")

    sp = sub.add_parser("metrics", help="SIN / DTS / degree per node, optional hit tables")
    _add_common(sp)
    sp.add_argument("--assignments", help="assignments.tsv from a previous run")
    sp.add_argument("--partition", help="partition.tsv from a previous run")
    return parser


def _synth_pairs(items) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--synth expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    for dest, name in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            setattr(cfg, name, coerce_setting(name, value) if name == "delimiter" else value)
    cfg.synth.update(_synth_pairs(getattr(args, "synth", None) or []))
    if args.command == "synth":
        for key in ("n", "mean_degree", "kernel_scale", "bump_weight", "bump_at", "bump_width",
                    "client_fraction", "label_fraction", "pyramid"):
            value = getattr(args, key)
            if value is not None:
                cfg.synth[key] = str(value)
    return cfg


# -------------------------------------------------------------------- commands


def _emit_table(outdir: Path, name: str, table: metrics.HitsTable, fmt: str) -> Path:
    path = outdir / (name + table_suffix(fmt))
    path.write_text(table.render(fmt), encoding="utf-8")
    return path


def do_synth(cfg: RunConfig) -> int:
    outdir = output_dir(cfg)
    try:
        sc = cfg.synth_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    with stage("synth"):
        sg = generate(sc)
        picked = labeled_subset(sg, cfg.label_fraction(), cfg.rng_seed)
    with stage("write"):
        paths = [outdir / "edges.tsv", outdir / "labels.tsv", outdir / "ages.tsv",
                 outdir / "clients.tsv"]
        with open(paths[0], "w", encoding="utf-8", newline="\n") as fh:
            sg.graph.export(fh)
        ids = sg.graph.node_ids.astype(str)
        ages = sg.ages.astype(np.int64).astype(str)
        with open(paths[1], "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{ids[k]}\t{ages[k]}\n" for k in picked)
        with open(paths[2], "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{i}\t{a}\n" for i, a in zip(ids, ages))
        with open(paths[3], "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{ids[k]}\n" for k in np.flatnonzero(sg.is_client))
        write_manifest(outdir, cfg, {}, paths, "synth")
    print(f"nodes {sg.graph.n}  edges {sg.graph.edge_count}  "
          f"mean degree {2 * sg.graph.edge_count / sg.graph.n:.3f}  labeled {picked.size}")
    return EXIT_OK


def do_run(cfg: RunConfig) -> int:
    result = cmd_run(cfg)
    p = result.prepared.partition
    print(f"accuracy {result.accuracy:.4f}  validation {int(p.is_validation.sum())}  "
          f"seeds {int(p.is_seed.sum())}  nodes {p.n}")
    return EXIT_OK


def do_sweep(cfg: RunConfig, parameter: str, values: str) -> int:
    try:
        parsed = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be numbers, got {values!r}") from None
    prep = prepare(cfg)
    rows = sweep(prep, cfg, parameter, parsed)
    if cfg.out is None:
        write_sweep(sys.stdout, parameter, rows)
        return EXIT_OK
    outdir = output_dir(cfg)
    path = outdir / f"sweep_{parameter}.tsv"
    with stage("write"):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            write_sweep(fh, parameter, rows)
        write_manifest(outdir, cfg, prep.inputs, [path], f"sweep {parameter}")
    write_sweep(sys.stdout, parameter, rows)
    return EXIT_OK


def do_homophily(cfg: RunConfig, eps: float, shuffle: bool) -> int:
    cfg.validate()
    if cfg.label_mode != "age":
        raise ConfigError("homophily analysis needs age labels (label_mode = age)")
    outdir = output_dir(cfg)
    g, ages, inputs = load_inputs(cfg)
    with stage("prune"):
        if cfg.prune_cap:
            keep = g.degree <= cfg.prune_cap
            g, ages = g.induced(keep), ages[keep]
    with stage("homophily"):
        if shuffle:
            ages = homophily.shuffle_ages(ages, stream(cfg.rng_seed, "shuffle"))
        Cm, Rm, delta = homophily.homophily_matrices(g, ages, eps)
        gaps = homophily.gap_profile(g, ages)
        reg = homophily.linked_age_regression(g, ages)
        summary = homophily.log_difference_summary(delta, weights=Rm)
    with stage("write"):
        written = []

        def emit(name, writer):
            path = outdir / name
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                writer(fh)
            written.append(path)

        emit("C.tsv", lambda fh: homophily.write_matrix(fh, Cm, "%.0f"))
        emit("R.tsv", lambda fh: homophily.write_matrix(fh, Rm))
        emit("logdiff.tsv", lambda fh: homophily.write_matrix(fh, delta))
        emit("gap_profile.tsv", lambda fh: homophily.write_gap_profile(fh, gaps))
        emit("regression.tsv", lambda fh: fh.write(
            f"r\tslope\tintercept\tn_pairs\n{reg.r:.6f}\t{reg.slope:.6f}\t"
            f"{reg.intercept:.6f}\t{reg.n_pairs}\n"))
        emit("summary.tsv", lambda fh: fh.writelines(
            f"{k}\t{v:.6f}\n" for k, v in sorted(summary.items())))
        write_manifest(outdir, cfg, inputs, written, "homophily")
    print(f"r {reg.r:.4f}  slope {reg.slope:.4f}  labeled edges {reg.n_pairs // 2}  "
          f"mean |log C - log R| {summary['mean_abs']:.4f}")
    return EXIT_OK


def do_metrics(cfg: RunConfig, assignments: str | None, partition: str | None) -> int:
    outdir = output_dir(cfg)
    prep = prepare(cfg)
    g = prep.graph
    C = prep.scheme.n_categories
    with stage("load-artifacts"):
        if partition is not None:
            with open(partition, encoding="utf-8") as fh:
                ids, p = read_partition(fh, C)
            prep.partition = _align(g, ids, p.role, p.label, C)
        assignment = None
        if assignments is not None:
            with open(assignments, encoding="utf-8") as fh:
                ids, a = labeling.read_assignments(fh, prep.scheme)
            idx = _positions(g, ids)
            cat = np.full(g.n, labeling.UNASSIGNED, dtype=np.int64)
            conf = np.zeros(g.n)
            src = np.full(g.n, labeling.SOURCE_UNASSIGNED, dtype=np.int8)
            cat[idx], conf[idx], src[idx] = a.category, a.confidence, a.source
            assignment = labeling.Assignment(cat, conf, src)
    written = []
    with stage("metrics"):
        node_metrics = metrics.compute_node_metrics(g, prep.partition)
    with stage("write"):
        path = outdir / "metrics.tsv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            metrics.write_metrics_table(fh, g, prep.partition, node_metrics)
        written.append(path)
        path = outdir / "partition.tsv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            write_partition(fh, g, prep.partition)
        written.append(path)
    if assignment is not None:
        _, tables = evaluate(prep, assignment, cfg, node_metrics)
        with stage("write"):
            for name, table in tables.items():
                written.append(_emit_table(outdir, name, table, cfg.format))
    inputs = dict(prep.inputs)
    for extra in (assignments, partition):
        if extra is not None:
            inputs[extra] = file_digest(extra)
    write_manifest(outdir, cfg, inputs, written, "metrics")
    print(f"nodes {g.n}  seeds {int(prep.partition.is_seed.sum())}  "
          f"unreachable {int((node_metrics.dts == metrics.UNREACHABLE).sum())}")
    return EXIT_OK


def _positions(g, ids) -> np.ndarray:
    idx = g.index_of(ids)
    if np.any(idx < 0):
        raise DataError("artifact lists nodes that are not in the prepared graph")
    if np.unique(idx).size != idx.size:
        raise DataError("artifact lists a node twice")
    return idx


def _align(g, ids, role, label, C) -> gmod.NodePartition:
    idx = _positions(g, ids)
    r = np.zeros(g.n, dtype=np.int8)
    lab = np.full(g.n, -1, dtype=np.int64)
    r[idx], lab[idx] = role, label
    return gmod.NodePartition(r, lab, C)


# ------------------------------------------------------------------------ main


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, InvariantViolation) or type(exc) is AssertionError:
        return EXIT_INVARIANT
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    return EXIT_CONFIG


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "synth":
            return do_synth(cfg)
        if args.command == "run":
            return do_run(cfg)
        if args.command == "sweep":
            return do_sweep(cfg, args.param, args.values)
        if args.command == "homophily":
            return do_homophily(cfg, args.eps, args.shuffle_labels)
        return do_metrics(cfg, args.assignments, args.partition)
    except StageError as exc:
        code = _exit_code(exc.cause)
        print(f"agegraph {args.command}: stage '{exc.stage}' failed: {exc.cause}", file=sys.stderr)
        return code
    except ConfigError as exc:
        print(f"agegraph {args.command}: stage 'config' failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
