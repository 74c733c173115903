"""JSON experiment configuration: strict parsing, echoing, and validation.

Unknown keys are errors so a typo can never silently fall back to a default.
``config_to_dict`` materializes every default, which is what run reports echo;
parsing that echo reproduces the exact same configuration.
"""

from __future__ import annotations

import json
import os
import struct
from typing import Any

import numpy as np

from .clustering import KMeansConfig
from .dataset import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    GaussianMixtureSpec,
    SplitSpec,
)
from .engine import DataSpec, ExperimentConfig
from .learner import AdamConfig, NetworkConfig
from .selection import LearnabilityConfig, SelectionPolicy


class ConfigError(ValueError):
    """A configuration document is malformed; the message names the field."""


def _check_keys(doc: dict, path: str, allowed: set[str]) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} under '{path}'")


def _section(doc: dict, key: str, required: bool = False) -> dict:
    value = doc.get(key)
    if value is None:
        if required:
            raise ConfigError(f"missing required section '{key}'")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(f"'{key}' must be an object")
    return value


def _build(path: str, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid '{path}': {exc}") from exc


def _parse_data(doc: dict) -> DataSpec:
    _check_keys(
        doc,
        "data",
        {"kind", "n_classes", "dim", "separation", "per_class_n", "seed", "images", "labels", "path"},
    )
    kind = doc.get("kind")
    if kind == "synthetic":
        for key in ("n_classes", "dim", "separation", "per_class_n"):
            if key not in doc:
                raise ConfigError(f"missing required key 'data.{key}' for synthetic data")
        gaussian = _build(
            "data",
            GaussianMixtureSpec,
            n_classes=int(doc["n_classes"]),
            dim=int(doc["dim"]),
            separation=float(doc["separation"]),
            per_class_n=int(doc["per_class_n"]),
            seed=int(doc.get("seed", 0)),
        )
        return DataSpec(kind="synthetic", gaussian=gaussian)
    if kind == "idx":
        if "images" not in doc or "labels" not in doc:
            raise ConfigError("idx data needs 'data.images' and 'data.labels' paths")
        return DataSpec(kind="idx", images_path=str(doc["images"]), labels_path=str(doc["labels"]))
    if kind == "csv":
        if "path" not in doc:
            raise ConfigError("csv data needs 'data.path'")
        return DataSpec(kind="csv", csv_path=str(doc["path"]))
    raise ConfigError(f"'data.kind' must be synthetic, idx, or csv, got {kind!r}")


def parse_config(doc: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON document, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a JSON object")
    _check_keys(
        doc,
        "<root>",
        {
            "data",
            "split",
            "net",
            "adam",
            "kmeans",
            "policy",
            "learnability",
            "epochs_initial",
            "epochs_per_round",
            "rounds",
            "ood_mode",
            "detector_quantile",
            "seed",
        },
    )
    data = _parse_data(_section(doc, "data", required=True))

    split_doc = _section(doc, "split", required=True)
    _check_keys(split_doc, "split", {"held_out_classes", "per_class_cap", "seed"})
    if "held_out_classes" not in split_doc:
        raise ConfigError("missing required key 'split.held_out_classes'")
    ood_mode = doc.get("ood_mode", "oracle")

    split = _build(
        "split",
        SplitSpec,
        held_out_classes=frozenset(int(c) for c in split_doc["held_out_classes"]),
        per_class_cap=(
            int(split_doc["per_class_cap"]) if split_doc.get("per_class_cap") is not None else None
        ),
        oracle_split=(ood_mode == "oracle"),
        seed=int(split_doc.get("seed", 0)),
    )

    net_doc = _section(doc, "net")
    _check_keys(net_doc, "net", {"hidden_dims", "input_dim", "output_classes"})
    net = _build(
        "net",
        NetworkConfig,
        input_dim=(int(net_doc["input_dim"]) if net_doc.get("input_dim") is not None else None),
        output_classes=(
            int(net_doc["output_classes"]) if net_doc.get("output_classes") is not None else None
        ),
        hidden_dims=tuple(int(h) for h in net_doc.get("hidden_dims", (128,))),
    )

    adam_doc = _section(doc, "adam")
    _check_keys(
        adam_doc, "adam", {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "seed"}
    )
    adam = _build(
        "adam",
        AdamConfig,
        learning_rate=float(adam_doc.get("learning_rate", 0.001)),
        beta1=float(adam_doc.get("beta1", 0.9)),
        beta2=float(adam_doc.get("beta2", 0.999)),
        epsilon=float(adam_doc.get("epsilon", 1e-7)),
        batch_size=int(adam_doc.get("batch_size", 128)),
        seed=int(adam_doc.get("seed", 0)),
    )

    kmeans_doc = _section(doc, "kmeans")
    _check_keys(kmeans_doc, "kmeans", {"k", "restarts", "max_iters", "tol", "seed"})
    kmeans = _build(
        "kmeans",
        KMeansConfig,
        k=int(kmeans_doc.get("k", 15)),
        restarts=int(kmeans_doc.get("restarts", 10)),
        max_iters=int(kmeans_doc.get("max_iters", 300)),
        tol=float(kmeans_doc.get("tol", 1e-4)),
        seed=int(kmeans_doc.get("seed", 0)),
    )

    policy_doc = _section(doc, "policy")
    _check_keys(policy_doc, "policy", {"kind", "seed", "min_accuracy"})
    policy = _build(
        "policy",
        SelectionPolicy,
        kind=str(policy_doc.get("kind", "learnability")),
        seed=int(policy_doc.get("seed", 0)),
        min_accuracy=float(policy_doc.get("min_accuracy", 0.95)),
    )

    learn_doc = _section(doc, "learnability")
    _check_keys(
        learn_doc,
        "learnability",
        {"holdout_fraction", "hidden_dims", "epochs", "use_embeddings", "include_existing"},
    )
    learnability = _build(
        "learnability",
        LearnabilityConfig,
        holdout_fraction=float(learn_doc.get("holdout_fraction", 0.2)),
        hidden_dims=tuple(int(h) for h in learn_doc.get("hidden_dims", (32,))),
        epochs=int(learn_doc.get("epochs", 30)),
        use_embeddings=bool(learn_doc.get("use_embeddings", False)),
        include_existing=bool(learn_doc.get("include_existing", False)),
    )

    return _build(
        "<root>",
        ExperimentConfig,
        data=data,
        split=split,
        net=net,
        adam=adam,
        kmeans=kmeans,
        policy=policy,
        learnability=learnability,
        epochs_initial=int(doc.get("epochs_initial", 1)),
        epochs_per_round=int(doc.get("epochs_per_round", 1)),
        rounds=(int(doc["rounds"]) if doc.get("rounds") is not None else None),
        ood_mode=str(ood_mode),
        detector_quantile=float(doc.get("detector_quantile", 0.95)),
        seed=int(doc.get("seed", 0)),
    )


def load_config(path: str) -> ExperimentConfig:
    """Read a config file; a run report is accepted too (its embedded config is used)."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if isinstance(doc, dict) and str(doc.get("schema", "")).startswith("classdisco-report"):
        doc = doc.get("config")
        if not isinstance(doc, dict):
            raise ConfigError(f"report file {path} carries no embedded config")
    return parse_config(doc)


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Exact JSON echo of a configuration, all defaults materialized."""
    data: dict[str, Any] = {"kind": cfg.data.kind}
    if cfg.data.kind == "synthetic":
        g = cfg.data.gaussian
        data.update(
            n_classes=g.n_classes,
            dim=g.dim,
            separation=g.separation,
            per_class_n=g.per_class_n,
            seed=g.seed,
        )
    elif cfg.data.kind == "idx":
        data.update(images=cfg.data.images_path, labels=cfg.data.labels_path)
    else:
        data.update(path=cfg.data.csv_path)
    return {
        "data": data,
        "split": {
            "held_out_classes": sorted(cfg.split.held_out_classes),
            "per_class_cap": cfg.split.per_class_cap,
            "seed": cfg.split.seed,
        },
        "net": {
            "hidden_dims": list(cfg.net.hidden_dims),
            "input_dim": cfg.net.input_dim,
            "output_classes": cfg.net.output_classes,
        },
        "adam": {
            "learning_rate": cfg.adam.learning_rate,
            "beta1": cfg.adam.beta1,
            "beta2": cfg.adam.beta2,
            "epsilon": cfg.adam.epsilon,
            "batch_size": cfg.adam.batch_size,
            "seed": cfg.adam.seed,
        },
        "kmeans": {
            "k": cfg.kmeans.k,
            "restarts": cfg.kmeans.restarts,
            "max_iters": cfg.kmeans.max_iters,
            "tol": cfg.kmeans.tol,
            "seed": cfg.kmeans.seed,
        },
        "policy": {
            "kind": cfg.policy.kind,
            "seed": cfg.policy.seed,
            "min_accuracy": cfg.policy.min_accuracy,
        },
        "learnability": {
            "holdout_fraction": cfg.learnability.holdout_fraction,
            "hidden_dims": list(cfg.learnability.hidden_dims),
            "epochs": cfg.learnability.epochs,
            "use_embeddings": cfg.learnability.use_embeddings,
            "include_existing": cfg.learnability.include_existing,
        },
        "epochs_initial": cfg.epochs_initial,
        "epochs_per_round": cfg.epochs_per_round,
        "rounds": cfg.rounds,
        "ood_mode": cfg.ood_mode,
        "detector_quantile": cfg.detector_quantile,
        "seed": cfg.seed,
    }


def _idx_class_counts(images_path: str, labels_path: str, problems: list[str]):
    for path in (images_path, labels_path):
        if not os.path.exists(path):
            problems.append(f"data file missing: {path}")
    if problems:
        return None
    try:
        with open(images_path, "rb") as f:
            header = f.read(16)
        if len(header) < 16:
            problems.append(f"{images_path}: truncated header")
            return None
        magic, n_images, _, _ = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            problems.append(f"{images_path}: bad magic {magic}")
        with open(labels_path, "rb") as f:
            lbl_header = f.read(8)
            payload = f.read()
        if len(lbl_header) < 8:
            problems.append(f"{labels_path}: truncated header")
            return None
        lbl_magic, n_labels = struct.unpack(">II", lbl_header)
        if lbl_magic != IDX_LABELS_MAGIC:
            problems.append(f"{labels_path}: bad magic {lbl_magic}")
        if n_images != n_labels:
            problems.append(f"count mismatch: {n_images} images vs {n_labels} labels")
        labels = np.frombuffer(payload[:n_labels], dtype=np.uint8)
        return {int(c): int(n) for c, n in zip(*np.unique(labels, return_counts=True))}
    except OSError as exc:
        problems.append(f"cannot read data files: {exc}")
        return None


def validate_config(cfg: ExperimentConfig) -> list[str]:
    """Cross-field and data-dependent checks; returns human-readable problems."""
    problems: list[str] = []

    held_out = cfg.split.held_out_classes
    if not held_out:
        problems.append("split.held_out_classes is empty: discovery has no OOD pool")
    if cfg.rounds is not None and cfg.rounds > len(held_out):
        problems.append(
            f"rounds ({cfg.rounds}) exceeds the number of held-out classes ({len(held_out)})"
        )

    counts: dict[int, int] | None = None
    if cfg.data.kind == "synthetic":
        g = cfg.data.gaussian
        counts = {c: g.per_class_n for c in range(g.n_classes)}
    elif cfg.data.kind == "idx":
        counts = _idx_class_counts(cfg.data.images_path, cfg.data.labels_path, problems)
    else:
        if not os.path.exists(cfg.data.csv_path):
            problems.append(f"data file missing: {cfg.data.csv_path}")
        else:
            try:
                from .dataset import load_csv

                data = load_csv(cfg.data.csv_path)
                labels, ns = np.unique(data.true_labels, return_counts=True)
                counts = {int(c): int(n) for c, n in zip(labels, ns)}
            except ValueError as exc:
                problems.append(f"cannot load csv data: {exc}")

    if counts is not None:
        missing = sorted(c for c in held_out if c not in counts)
        if missing:
            problems.append(f"held-out classes not present in data: {missing}")
        cap = cfg.split.per_class_cap
        pool = sum(
            min(counts[c], cap) if cap is not None else counts[c]
            for c in held_out
            if c in counts
        )
        if held_out and not missing and cfg.kmeans.k > pool:
            problems.append(f"kmeans.k ({cfg.kmeans.k}) exceeds the OOD pool size ({pool})")
        if len(held_out) >= len(counts):
            problems.append("held_out_classes covers every class; nothing left to train on")
    return problems
