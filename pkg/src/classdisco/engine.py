"""Discovery loops: static, dynamic, and the class-count experiment.

The loop: train the learner on labeled data, embed the unlabeled pool through
the penultimate layer, cluster the embeddings, score the clusters, accept one
as a new class, widen the softmax, keep training, repeat. Evaluation after
every round combines frozen accepted clusters (scored at their acceptance-time
plurality labels) with a fresh clustering of the residual pool.

Per-round seed derivation (everything reproducible from the config):
the clustering at round r uses restart sub-seeds ``kmeans.seed + r*restarts``
onward, output expansion uses ``seed + 100003*r``, learnability scoring uses
``seed + 200003*r``, and the random policy uses ``policy.seed + r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import metrics, ood, selection
from .clustering import Clustering, KMeansConfig, fit_with_restarts
from .dataset import (
    Dataset,
    GaussianMixtureSpec,
    SplitSpec,
    add_class,
    load_csv,
    load_idx,
    make_split,
    synth_gaussian,
)
from .learner import (
    AdamConfig,
    Model,
    NetworkConfig,
    embed,
    expand_outputs,
    init_model,
    train_epochs,
)
from .metrics import ReconstructionReport
from .ood import OodDetector
from .selection import ClusterFeatures, LearnabilityConfig, SelectionPolicy

_EXPAND_SEED_STRIDE = 100003
_LEARNABILITY_SEED_STRIDE = 200003

OOD_MODES = ("oracle", "detector")
DATA_KINDS = ("synthetic", "idx", "csv")


@dataclass(frozen=True)
class DataSpec:
    kind: str
    gaussian: GaussianMixtureSpec | None = None
    images_path: str | None = None
    labels_path: str | None = None
    csv_path: str | None = None

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise ValueError(f"unknown data kind {self.kind!r}, expected one of {DATA_KINDS}")
        if self.kind == "synthetic" and self.gaussian is None:
            raise ValueError("synthetic data needs a gaussian mixture spec")
        if self.kind == "idx" and (self.images_path is None or self.labels_path is None):
            raise ValueError("idx data needs images_path and labels_path")
        if self.kind == "csv" and self.csv_path is None:
            raise ValueError("csv data needs csv_path")


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSpec
    split: SplitSpec
    net: NetworkConfig = NetworkConfig()
    adam: AdamConfig = AdamConfig()
    kmeans: KMeansConfig = KMeansConfig()
    policy: SelectionPolicy = SelectionPolicy()
    learnability: LearnabilityConfig = LearnabilityConfig()
    epochs_initial: int = 1
    epochs_per_round: int = 1
    rounds: int | None = None
    ood_mode: str = "oracle"
    detector_quantile: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.ood_mode not in OOD_MODES:
            raise ValueError(f"ood_mode must be one of {OOD_MODES}")
        if not 0.0 < self.detector_quantile < 1.0:
            raise ValueError("detector_quantile must lie strictly between 0 and 1")
        if self.epochs_initial < 0 or self.epochs_per_round < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.rounds is not None and self.rounds < 0:
            raise ValueError("rounds must be >= 0")


@dataclass(frozen=True)
class AcceptedCluster:
    """Log entry for one accepted cluster; duck-typed as a frozen cluster for DRA."""

    round: int
    new_label: int
    plurality_label: int
    true_labels: np.ndarray
    indices: np.ndarray
    learnability: float
    size: int

    def __post_init__(self):
        object.__setattr__(self, "true_labels", np.asarray(self.true_labels, dtype=np.int64))
        object.__setattr__(self, "indices", np.asarray(self.indices, dtype=np.int64))

    @property
    def overlap(self) -> int:
        return int(np.count_nonzero(self.true_labels == self.plurality_label))


@dataclass(frozen=True)
class RoundRecord:
    round: int
    dra: float
    mean_cluster_accuracy: float
    ood_pool_size: int
    train_loss: float
    report: ReconstructionReport
    cluster_features: tuple[ClusterFeatures, ...] = ()
    accepted_cluster: int | None = None


@dataclass
class DiscoveryState:
    dataset: Dataset
    model: Model
    round: int
    accepted: list[AcceptedCluster]
    history: list[RoundRecord]
    config: ExperimentConfig
    detector: OodDetector | None = None
    stopped_early: str | None = None


@dataclass
class _RoundEval:
    report: ReconstructionReport
    clustering: Clustering | None
    cluster_indices: np.ndarray
    embeddings: np.ndarray | None
    detector: OodDetector | None


def load_data(spec: DataSpec) -> Dataset:
    if spec.kind == "synthetic":
        return synth_gaussian(spec.gaussian)
    if spec.kind == "idx":
        return load_idx(spec.images_path, spec.labels_path)
    return load_csv(spec.csv_path)


def _resolve_net(cfg: ExperimentConfig, data: Dataset) -> NetworkConfig:
    net = cfg.net
    if net.input_dim is None:
        net = replace(net, input_dim=data.n_features)
    if net.output_classes is None:
        net = replace(net, output_classes=data.n_classes_visible)
    return net


def _mean_recent_losses(model: Model, epochs: int) -> float:
    if epochs == 0 or not model.loss_log:
        return math.nan
    return float(np.mean(model.loss_log[-epochs:]))


def _evaluate(
    dataset: Dataset,
    model: Model,
    cfg: ExperimentConfig,
    accepted: list[AcceptedCluster],
    round_idx: int,
    workers: int | None,
) -> _RoundEval:
    pool_idx = dataset.unlabeled_indices()
    ell = dataset.human_labeled_count()

    detector = None
    routed_pred = routed_true = None
    cluster_idx = pool_idx
    if cfg.ood_mode == "detector" and len(pool_idx):
        labeled = dataset.select(dataset.labeled_indices())
        detector = ood.calibrate(model, labeled, cfg.detector_quantile)
        part = ood.partition(detector, model, dataset.select(pool_idx))
        routed_global = pool_idx[part.in_dist_indices]
        label_map = np.asarray(dataset.label_map, dtype=np.int64)
        routed_pred = label_map[part.in_dist_labels]
        routed_true = dataset.true_labels[routed_global]
        cluster_idx = pool_idx[part.ood_indices]

    clustering = None
    embeddings = None
    assign = np.empty(0, dtype=np.int64)
    truth = np.empty(0, dtype=np.int64)
    if len(cluster_idx):
        embeddings = embed(model, dataset.features[cluster_idx])
        k_eff = min(cfg.kmeans.k, len(cluster_idx))
        kmeans = replace(
            cfg.kmeans, k=k_eff, seed=cfg.kmeans.seed + round_idx * cfg.kmeans.restarts
        )
        clustering = fit_with_restarts(embeddings, kmeans, workers=workers)
        assign = clustering.assignments
        truth = dataset.true_labels[cluster_idx]

    report = metrics.dataset_reconstruction_accuracy(
        ell,
        assign,
        truth,
        frozen=tuple(accepted),
        ood_indices=pool_idx,
        routed_predicted=routed_pred,
        routed_true=routed_true,
    )
    return _RoundEval(
        report=report,
        clustering=clustering,
        cluster_indices=cluster_idx,
        embeddings=embeddings,
        detector=detector,
    )


def _prepare(cfg: ExperimentConfig, workers: int | None) -> tuple[DiscoveryState, _RoundEval]:
    """Load, split, train the initial model, and run the round-0 evaluation."""
    data = make_split(load_data(cfg.data), cfg.split)
    if len(data.unlabeled_indices()) == 0:
        raise ValueError("empty OOD pool: no held-out classes were stripped")
    model = init_model(_resolve_net(cfg, data), seed=cfg.seed)
    if cfg.epochs_initial > 0:
        labeled = data.select(data.labeled_indices())
        model = train_epochs(model, labeled, cfg.adam, cfg.epochs_initial)
    ev = _evaluate(data, model, cfg, [], 0, workers)
    record = RoundRecord(
        round=0,
        dra=ev.report.dra,
        mean_cluster_accuracy=ev.report.weighted_ood_accuracy,
        ood_pool_size=len(data.unlabeled_indices()),
        train_loss=_mean_recent_losses(model, cfg.epochs_initial),
        report=ev.report,
    )
    state = DiscoveryState(
        dataset=data,
        model=model,
        round=0,
        accepted=[],
        history=[record],
        config=cfg,
        detector=ev.detector,
    )
    return state, ev


def run_static(cfg: ExperimentConfig, workers: int | None = None):
    """One-shot discovery: cluster the whole pool once and label every cluster.

    With epochs_initial=0 the embedder is untrained (the random-embedding
    baseline); otherwise it is the semi-supervised variant.
    """
    state, _ = _prepare(cfg, workers)
    return state, state.history[0].report


def _score_clusters(
    ev: _RoundEval,
    dataset: Dataset,
    model: Model,
    cfg: ExperimentConfig,
    round_idx: int,
) -> list[ClusterFeatures]:
    clustering = ev.clustering
    sizes = clustering.cluster_sizes()
    present = np.flatnonzero(sizes > 0)
    need_learnability = cfg.policy.kind in ("learnability", "threshold")
    learn = np.full(clustering.k, math.nan)
    if need_learnability:
        score_input = (
            ev.embeddings
            if cfg.learnability.use_embeddings
            else dataset.features[ev.cluster_indices]
        )
        extra_classes = None
        if cfg.learnability.include_existing:
            labeled = dataset.labeled_indices()
            extra_x = (
                embed(model, dataset.features[labeled])
                if cfg.learnability.use_embeddings
                else dataset.features[labeled]
            )
            extra_classes = (extra_x, dataset.labels[labeled])
        raw = selection.learnability_scores(
            score_input,
            clustering.assignments,
            holdout_fraction=cfg.learnability.holdout_fraction,
            seed=cfg.seed + _LEARNABILITY_SEED_STRIDE * round_idx,
            hidden_dims=cfg.learnability.hidden_dims,
            epochs=cfg.learnability.epochs,
            extra_classes=extra_classes,
        )
        ids = np.unique(clustering.assignments)
        learn[ids] = raw
    density = selection.density_score(ev.embeddings, clustering)
    return [
        ClusterFeatures(
            cluster_id=int(cid),
            size=int(sizes[cid]),
            learnability=float(learn[cid]),
            density=float(density[cid]),
            flagged_small=bool(sizes[cid] < selection.MIN_SCOREABLE_SIZE),
        )
        for cid in present
    ]


def _pick(features: list[ClusterFeatures], policy: SelectionPolicy, round_idx: int) -> int | None:
    pol = policy
    if pol.kind == "random":
        pol = replace(pol, seed=pol.seed + round_idx)
    chosen = selection.select(features, pol)
    if pol.kind != "threshold":
        return int(chosen)
    if not chosen:
        return None
    # One class is integrated per round; take the most learnable of the passing set.
    passing = [f for f in features if f.cluster_id in set(chosen)]
    best = min(passing, key=lambda f: (-f.learnability, -f.size, f.cluster_id))
    return best.cluster_id


def run_dynamic(cfg: ExperimentConfig, workers: int | None = None):
    """Accept one cluster per round, retrain, re-embed, re-cluster.

    Returns the final state and the per-round reconstruction reports
    (round 0 is the static baseline under the same seeds).
    """
    n_held_out = len(cfg.split.held_out_classes)
    rounds = cfg.rounds if cfg.rounds is not None else n_held_out
    if rounds > n_held_out:
        raise ValueError(f"rounds={rounds} exceeds the {n_held_out} held-out classes")

    state, ev = _prepare(cfg, workers)
    dataset, model = state.dataset, state.model

    for r in range(1, rounds + 1):
        if ev.clustering is None or len(np.unique(ev.clustering.assignments)) < 2:
            state.stopped_early = f"pool exhausted before round {r}"
            break
        try:
            features = _score_clusters(ev, dataset, model, cfg, r)
        except ValueError as exc:
            state.stopped_early = f"round {r}: {exc}"
            break
        selected = _pick(features, cfg.policy, r)
        if selected is None:
            state.stopped_early = f"round {r}: no cluster above the acceptance threshold"
            break

        members_local = np.flatnonzero(ev.clustering.assignments == selected)
        members = ev.cluster_indices[members_local]
        plurality, _ = metrics.plurality_label(dataset.true_labels[members])
        sel_features = next(f for f in features if f.cluster_id == selected)
        state.accepted.append(
            AcceptedCluster(
                round=r,
                new_label=dataset.n_classes_visible,
                plurality_label=plurality,
                true_labels=dataset.true_labels[members],
                indices=members,
                learnability=sel_features.learnability,
                size=len(members),
            )
        )
        dataset = add_class(dataset, members, r)
        model = expand_outputs(
            model, dataset.n_classes_visible, seed=cfg.seed + _EXPAND_SEED_STRIDE * r
        )
        if cfg.epochs_per_round > 0:
            labeled = dataset.select(dataset.labeled_indices())
            model = train_epochs(model, labeled, cfg.adam, cfg.epochs_per_round)

        state.dataset, state.model, state.round = dataset, model, r
        ev = _evaluate(dataset, model, cfg, state.accepted, r, workers)
        state.detector = ev.detector
        state.history.append(
            RoundRecord(
                round=r,
                dra=ev.report.dra,
                mean_cluster_accuracy=ev.report.weighted_ood_accuracy,
                ood_pool_size=len(dataset.unlabeled_indices()),
                train_loss=_mean_recent_losses(model, cfg.epochs_per_round),
                report=ev.report,
                cluster_features=tuple(features),
                accepted_cluster=selected,
            )
        )
    return state, [rec.report for rec in state.history]


def evaluate_state(state: DiscoveryState, workers: int | None = None) -> ReconstructionReport:
    """Re-evaluate a state from scratch; pure, and equal to its last history record."""
    ev = _evaluate(
        state.dataset, state.model, state.config, state.accepted, state.round, workers
    )
    return ev.report


def run_class_count_experiment(
    base_cfg: ExperimentConfig,
    class_counts: list[int],
    eval_classes: set[int] | None = None,
    workers: int | None = None,
) -> list[tuple[int, float]]:
    """Cluster accuracy on a fixed OOD pool as a function of training class count.

    For each count c, train on the first c non-evaluation classes (with the
    configured per-class cap applied uniformly), cluster the evaluation pool,
    and report the size-weighted mean cluster accuracy.
    """
    raw = load_data(base_cfg.data)
    classes = [int(c) for c in np.unique(raw.true_labels)]
    if eval_classes is None:
        if len(classes) <= 5:
            raise ValueError("need more than 5 classes to hold 5 out for evaluation")
        eval_set = set(classes[-5:])
    else:
        eval_set = {int(c) for c in eval_classes}
        if not eval_set <= set(classes):
            raise ValueError("eval classes not present in the data")
    non_eval = [c for c in classes if c not in eval_set]
    for c in class_counts:
        if c < 2:
            raise ValueError(f"class count {c} must be >= 2")
        if c > len(non_eval):
            raise ValueError(f"class count {c} exceeds the {len(non_eval)} available classes")

    rows: list[tuple[int, float]] = []
    for count in class_counts:
        train_classes = set(non_eval[:count])
        keep = np.flatnonzero(np.isin(raw.true_labels, sorted(train_classes | eval_set)))
        split = SplitSpec(
            held_out_classes=frozenset(eval_set),
            per_class_cap=base_cfg.split.per_class_cap,
            oracle_split=True,
            seed=base_cfg.split.seed,
        )
        data = make_split(raw.select(keep), split)
        model = init_model(_resolve_net(base_cfg, data), seed=base_cfg.seed)
        if base_cfg.epochs_initial > 0:
            model = train_epochs(
                model, data.select(data.labeled_indices()), base_cfg.adam, base_cfg.epochs_initial
            )
        pool = data.unlabeled_indices()
        emb = embed(model, data.features[pool])
        kmeans = replace(base_cfg.kmeans, k=min(base_cfg.kmeans.k, len(pool)))
        clustering = fit_with_restarts(emb, kmeans, workers=workers)
        mapping = metrics.cluster_accuracy(clustering.assignments, data.true_labels[pool])
        rows.append((count, mapping.weighted_accuracy))
    return rows
