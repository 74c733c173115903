"""Command-line runner: configure, run, and report discovery experiments.

Outputs are plot-ready: ``curves.csv`` holds one row per round with the
metric trajectory, ``clusters.csv`` one row per evaluated cluster, and
``report.json`` the full record including the resolved config and every seed,
so any run can be re-executed exactly from its own report.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

from . import engine
from .clustering import WORKERS_ENV
from .config import ConfigError, config_to_dict, load_config, validate_config
from .dataset import IdxFormatError
from .engine import DiscoveryState, ExperimentConfig
from .learner import TrainingDivergedError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

REPORT_SCHEMA = "classdisco-report/v1"

CURVES_COLUMNS = ("round", "dra", "mean_cluster_accuracy", "ood_pool_size", "train_loss")
CLUSTERS_COLUMNS = (
    "round",
    "source",
    "cluster_id",
    "size",
    "accuracy",
    "mapped_label",
    "weight",
    "learnability",
    "density",
    "accepted",
)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _none_if_nan(x: float):
    return None if isinstance(x, float) and math.isnan(x) else x


def _seed_registry(cfg: ExperimentConfig) -> dict:
    return {
        "master": cfg.seed,
        "split": cfg.split.seed,
        "adam": cfg.adam.seed,
        "kmeans": cfg.kmeans.seed,
        "policy": cfg.policy.seed,
        "data": cfg.data.gaussian.seed if cfg.data.kind == "synthetic" else None,
    }


def _write_curves(path: str, state: DiscoveryState) -> None:
    lines = [",".join(CURVES_COLUMNS)]
    for rec in state.history:
        lines.append(
            ",".join(
                (
                    str(rec.round),
                    _fmt(rec.dra),
                    _fmt(rec.mean_cluster_accuracy),
                    str(rec.ood_pool_size),
                    _fmt(rec.train_loss),
                )
            )
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _write_clusters(path: str, state: DiscoveryState) -> None:
    """One row per evaluated cluster; learnability/density/accepted are filled
    from the following round's acceptance pass when one happened."""
    lines = [",".join(CLUSTERS_COLUMNS)]
    history = state.history
    for i, rec in enumerate(history):
        nxt = history[i + 1] if i + 1 < len(history) else None
        scores = {f.cluster_id: f for f in nxt.cluster_features} if nxt else {}
        accepted_id = nxt.accepted_cluster if nxt else None
        for row in rec.report.clusters:
            f = scores.get(row.cluster_id)
            lines.append(
                ",".join(
                    (
                        str(rec.round),
                        "cluster",
                        str(row.cluster_id),
                        str(row.size),
                        _fmt(row.accuracy),
                        str(row.mapped_label),
                        _fmt(row.weight),
                        _fmt(f.learnability if f else math.nan),
                        _fmt(f.density if f else math.nan),
                        str(int(row.cluster_id == accepted_id)),
                    )
                )
            )
        for j, row in enumerate(rec.report.frozen):
            learn = state.accepted[j].learnability if j < len(state.accepted) else math.nan
            lines.append(
                ",".join(
                    (
                        str(rec.round),
                        "frozen",
                        str(row.cluster_id),
                        str(row.size),
                        _fmt(row.accuracy),
                        str(row.mapped_label),
                        _fmt(row.weight),
                        _fmt(float(learn)),
                        _fmt(math.nan),
                        "1",
                    )
                )
            )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _report_doc(mode: str, cfg: ExperimentConfig, state: DiscoveryState, wall: float, workers) -> dict:
    rounds = []
    for rec in state.history:
        rounds.append(
            {
                "round": rec.round,
                "dra": rec.dra,
                "mean_cluster_accuracy": rec.mean_cluster_accuracy,
                "ood_pool_size": rec.ood_pool_size,
                "train_loss": _none_if_nan(rec.train_loss),
                "report": {
                    "ell": rec.report.ell,
                    "o": rec.report.o,
                    "n_total": rec.report.n_total,
                    "weighted_ood_accuracy": rec.report.weighted_ood_accuracy,
                    "dra": rec.report.dra,
                    "routed_total": rec.report.routed_total,
                    "routed_correct": rec.report.routed_correct,
                },
                "scored_clusters": [
                    {
                        "cluster_id": f.cluster_id,
                        "size": f.size,
                        "learnability": _none_if_nan(f.learnability),
                        "density": f.density,
                        "flagged_small": f.flagged_small,
                    }
                    for f in rec.cluster_features
                ],
                "accepted_cluster": rec.accepted_cluster,
            }
        )
    accepted = [
        {
            "round": a.round,
            "new_label": a.new_label,
            "plurality_label": a.plurality_label,
            "size": a.size,
            "learnability": _none_if_nan(a.learnability),
        }
        for a in state.accepted
    ]
    detector = None
    if state.detector is not None:
        detector = {
            "threshold": state.detector.threshold,
            "quantile": state.detector.quantile,
            "calibration_size": state.detector.calibration_size,
        }
    return {
        "schema": REPORT_SCHEMA,
        "mode": mode,
        "config": config_to_dict(cfg),
        "seed_registry": _seed_registry(cfg),
        "workers": workers,
        # accepted clusters keep their acceptance-time labels; the residual
        # pool is re-clustered at every evaluation
        "dra_accounting": "frozen-accepted-plus-reclustered-residual",
        "rounds": rounds,
        "accepted": accepted,
        "detector": detector,
        "final_dra": state.history[-1].dra,
        "stopped_early": state.stopped_early,
        "wall_clock_seconds": wall,
    }


def _resolve_workers(args) -> int | None:
    if args.workers is not None:
        return args.workers
    env = os.environ.get(WORKERS_ENV, "")
    return int(env) if env.isdigit() else None


def cmd_discover(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = validate_config(cfg)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG

    workers = _resolve_workers(args)
    start = time.perf_counter()
    try:
        if args.mode == "static":
            state, _ = engine.run_static(cfg, workers=workers)
        else:
            state, _ = engine.run_dynamic(cfg, workers=workers)
    except (FileNotFoundError, IdxFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDivergedError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - start

    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "report.json")
    with open(report_path, "w") as f:
        json.dump(_report_doc(args.mode, cfg, state, wall, workers or 1), f, indent=2)
        f.write("\n")
    _write_curves(os.path.join(args.out, "curves.csv"), state)
    _write_clusters(os.path.join(args.out, "clusters.csv"), state)

    final = state.history[-1]
    print(f"{args.mode} run finished: rounds={final.round} dra={final.dra:.4f}")
    if state.stopped_early:
        print(f"stopped early: {state.stopped_early}")
    print(f"report: {report_path}")
    return EXIT_OK


def _parse_counts(raw: str) -> list[int]:
    try:
        counts = [int(part) for part in raw.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"invalid --counts value {raw!r}: {exc}") from exc
    if not counts:
        raise ConfigError("--counts is empty")
    deduped = list(dict.fromkeys(counts))
    if len(deduped) != len(counts):
        print("warning: duplicate counts de-duplicated", file=sys.stderr)
    return deduped


def cmd_classcount(args) -> int:
    try:
        cfg = load_config(args.config)
        counts = _parse_counts(args.counts)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    workers = _resolve_workers(args)
    start = time.perf_counter()
    try:
        rows = engine.run_class_count_experiment(cfg, counts, workers=workers)
    except (FileNotFoundError, IdxFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingDivergedError, RuntimeError, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    wall = time.perf_counter() - start

    os.makedirs(args.out, exist_ok=True)
    table_path = os.path.join(args.out, "classcount.csv")
    with open(table_path, "w") as f:
        f.write("class_count,mean_cluster_accuracy\n")
        for count, acc in rows:
            f.write(f"{count},{_fmt(acc)}\n")
    with open(os.path.join(args.out, "report.json"), "w") as f:
        json.dump(
            {
                "schema": REPORT_SCHEMA,
                "mode": "classcount",
                "config": config_to_dict(cfg),
                "seed_registry": _seed_registry(cfg),
                "counts": counts,
                "rows": [{"class_count": c, "mean_cluster_accuracy": a} for c, a in rows],
                "wall_clock_seconds": wall,
            },
            f,
            indent=2,
        )
        f.write("\n")
    for count, acc in rows:
        print(f"classes={count} cluster_accuracy={acc:.4f}")
    print(f"table: {table_path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = validate_config(cfg)
    if problems:
        for p in problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    print("config ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="classdisco",
        description="Discover new classes in out-of-distribution data and report the quality.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("discover", help="run a static or dynamic discovery experiment")
    d.add_argument("--config", required=True, help="JSON config (or a previous report.json)")
    d.add_argument("--mode", choices=("static", "dynamic"), default="dynamic")
    d.add_argument("--out", required=True, help="output directory")
    d.add_argument(
        "--workers", type=int, default=None, help=f"parallel workers (default ${WORKERS_ENV} or 1)"
    )

    c = sub.add_parser("classcount", help="cluster accuracy vs number of training classes")
    c.add_argument("--config", required=True)
    c.add_argument("--counts", default="2,3,4,5", help="comma-separated training class counts")
    c.add_argument("--out", required=True)
    c.add_argument("--workers", type=int, default=None)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "discover":
        return cmd_discover(args)
    if args.command == "classcount":
        return cmd_classcount(args)
    return cmd_validate(args)


if __name__ == "__main__":
    sys.exit(main())
