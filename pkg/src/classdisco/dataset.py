"""Datasets with label provenance: loading, synthesis, splitting, class addition.

Labels use an integer sentinel (``UNLABELED``) for samples in the unlabeled
pool. Provenance tracks where each label came from: ``PROV_HUMAN`` for labels
shipped with the source data, a positive round number for labels assigned by
discovery, and ``PROV_NONE`` when no label is present. Ground-truth labels are
carried separately in ``true_labels`` and are never exposed to the learner;
only evaluation reads them.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import seeds

UNLABELED = -1
PROV_NONE = -1
PROV_HUMAN = 0

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

DISCOVERED_CLASS = -1  # label_map entry for classes created by discovery


class IdxFormatError(ValueError):
    """Malformed IDX file; the message names the offending byte offset."""


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable feature/label store shared by every stage of discovery.

    label_map records, for each visible class index, the original class id it
    was remapped from; entries are ``DISCOVERED_CLASS`` for classes created by
    ``add_class``.
    """

    features: np.ndarray
    labels: np.ndarray
    true_labels: np.ndarray
    provenance: np.ndarray
    n_classes_visible: int
    label_map: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen(np.asarray(self.features, dtype=np.float64)))
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64)))
        object.__setattr__(self, "true_labels", _frozen(np.asarray(self.true_labels, dtype=np.int64)))
        object.__setattr__(self, "provenance", _frozen(np.asarray(self.provenance, dtype=np.int64)))
        if not self.label_map:
            object.__setattr__(self, "label_map", tuple(range(self.n_classes_visible)))
        self.validate()

    def validate(self) -> None:
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-d matrix")
        for name in ("labels", "true_labels", "provenance"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise ValueError(f"{name} length {arr.shape} does not match {n} samples")
        present = self.labels != UNLABELED
        if present.any() and self.labels[present].max(initial=0) >= self.n_classes_visible:
            raise ValueError("a present label is >= n_classes_visible")
        if (self.labels[present] < 0).any():
            raise ValueError("present labels must be non-negative")
        if (self.provenance[present] < PROV_HUMAN).any():
            raise ValueError("labeled samples must carry human or discovery provenance")
        if (self.provenance[~present] != PROV_NONE).any():
            raise ValueError("unlabeled samples must carry no provenance")
        if len(self.label_map) != self.n_classes_visible:
            raise ValueError("label_map length must equal n_classes_visible")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def labeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels != UNLABELED)

    def unlabeled_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels == UNLABELED)

    def human_labeled_count(self) -> int:
        return int(np.count_nonzero(self.provenance == PROV_HUMAN))

    def select(self, indices) -> "Dataset":
        """Row subset; class bookkeeping is preserved unchanged."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            true_labels=self.true_labels[idx],
            provenance=self.provenance[idx],
            n_classes_visible=self.n_classes_visible,
            label_map=self.label_map,
        )


@dataclass(frozen=True)
class SplitSpec:
    """How to strip labels from a dataset to create the unlabeled pool."""

    held_out_classes: frozenset[int] = frozenset()
    per_class_cap: int | None = None
    oracle_split: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "held_out_classes", frozenset(int(c) for c in self.held_out_classes))
        if self.per_class_cap is not None and self.per_class_cap < 1:
            raise ValueError("per_class_cap must be positive when set")


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Synthetic benchmark: isotropic unit-variance Gaussians around class centers."""

    n_classes: int
    dim: int
    separation: float
    per_class_n: int
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.separation < 0:
            raise ValueError("separation must be >= 0")
        if self.per_class_n < 1:
            raise ValueError("per_class_n must be >= 1")


def _read_exact(data: bytes, offset: int, count: int, path: str) -> bytes:
    if len(data) < offset + count:
        raise IdxFormatError(
            f"{path}: truncated file, needed {count} bytes at byte offset {offset}, "
            f"file ends at {len(data)}"
        )
    return data[offset : offset + count]


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Load an IDX image/label pair into a fully labeled Dataset.

    Pixels are scaled to [0, 1] by dividing the raw bytes by 255 and flattened
    row-major. All labels are present with human provenance.
    """
    with open(images_path, "rb") as f:
        img_bytes = f.read()
    with open(labels_path, "rb") as f:
        lbl_bytes = f.read()

    (img_magic,) = struct.unpack(">I", _read_exact(img_bytes, 0, 4, images_path))
    if img_magic != IDX_IMAGES_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad magic {img_magic} at byte offset 0, expected {IDX_IMAGES_MAGIC}"
        )
    n_images, rows, cols = struct.unpack(">III", _read_exact(img_bytes, 4, 12, images_path))

    (lbl_magic,) = struct.unpack(">I", _read_exact(lbl_bytes, 0, 4, labels_path))
    if lbl_magic != IDX_LABELS_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad magic {lbl_magic} at byte offset 0, expected {IDX_LABELS_MAGIC}"
        )
    (n_labels,) = struct.unpack(">I", _read_exact(lbl_bytes, 4, 4, labels_path))

    if n_images != n_labels:
        raise IdxFormatError(
            f"count mismatch at byte offset 4: {images_path} declares {n_images} images, "
            f"{labels_path} declares {n_labels} labels"
        )

    pixels = _read_exact(img_bytes, 16, n_images * rows * cols, images_path)
    labels_raw = _read_exact(lbl_bytes, 8, n_labels, labels_path)

    features = np.frombuffer(pixels, dtype=np.uint8).reshape(n_images, rows * cols)
    features = features.astype(np.float64) / 255.0
    labels = np.frombuffer(labels_raw, dtype=np.uint8).astype(np.int64)
    n_classes = int(labels.max()) + 1 if n_images else 0
    return Dataset(
        features=features,
        labels=labels,
        true_labels=labels,
        provenance=np.full(n_images, PROV_HUMAN, dtype=np.int64),
        n_classes_visible=n_classes,
    )


def load_csv(path: str) -> Dataset:
    """Load a CSV with a header row; last column is the integer class label."""
    raw = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.float64)
    if raw.ndim == 1:
        raw = raw.reshape(1, -1)
    if raw.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column plus a label column")
    labels = raw[:, -1]
    if not np.all(labels == np.round(labels)):
        raise ValueError(f"{path}: last column must contain integer labels")
    labels = labels.astype(np.int64)
    if (labels < 0).any():
        raise ValueError(f"{path}: labels must be non-negative")
    n = raw.shape[0]
    return Dataset(
        features=raw[:, :-1],
        labels=labels,
        true_labels=labels,
        provenance=np.full(n, PROV_HUMAN, dtype=np.int64),
        n_classes_visible=int(labels.max()) + 1 if n else 0,
    )


def synth_gaussian(spec: GaussianMixtureSpec) -> Dataset:
    """Generate a labeled Gaussian-mixture dataset, reproducible per seed.

    Class centers sit on a hypersphere of radius ``separation`` (directions
    drawn from the seed), so one knob controls how far apart classes are in
    units of the unit within-class standard deviation.
    """
    rng = seeds.spawn(spec.seed)
    directions = rng.standard_normal((spec.n_classes, spec.dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    while (norms == 0).any():  # vanishing draw, essentially impossible but cheap to guard
        redraw = norms[:, 0] == 0
        directions[redraw] = rng.standard_normal((int(redraw.sum()), spec.dim))
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
    centers = spec.separation * directions / norms

    n = spec.n_classes * spec.per_class_n
    labels = np.repeat(np.arange(spec.n_classes, dtype=np.int64), spec.per_class_n)
    noise = rng.standard_normal((n, spec.dim))
    features = centers[labels] + noise
    return Dataset(
        features=features,
        labels=labels,
        true_labels=labels,
        provenance=np.full(n, PROV_HUMAN, dtype=np.int64),
        n_classes_visible=spec.n_classes,
    )


def make_split(data: Dataset, spec: SplitSpec) -> Dataset:
    """Strip labels from the held-out classes and densely remap the rest.

    Ground truth decides which samples are stripped. Retained labels are
    remapped to 0..n_visible-1 in ascending original-class order and the
    remap is recorded in ``label_map``. ``per_class_cap`` subsamples every
    class (retained and held-out alike) to at most that many samples, chosen
    deterministically from ``spec.seed``.
    """
    all_classes = [int(c) for c in np.unique(data.true_labels)]
    missing = spec.held_out_classes - set(all_classes)
    if missing:
        raise ValueError(f"held-out classes not present in data: {sorted(missing)}")
    retained = [c for c in all_classes if c not in spec.held_out_classes]
    if not retained:
        raise ValueError("held_out_classes covers every class; nothing left to train on")

    rng = seeds.spawn(spec.seed)
    keep = np.ones(data.n_samples, dtype=bool)
    if spec.per_class_cap is not None:
        keep[:] = False
        for c in all_classes:
            members = np.flatnonzero(data.true_labels == c)
            if len(members) > spec.per_class_cap:
                chosen = rng.choice(len(members), size=spec.per_class_cap, replace=False)
                members = members[np.sort(chosen)]
            keep[members] = True

    kept = np.flatnonzero(keep)
    sub = data.select(kept)

    remap = {orig: dense for dense, orig in enumerate(retained)}
    labels = np.full(sub.n_samples, UNLABELED, dtype=np.int64)
    provenance = np.full(sub.n_samples, PROV_NONE, dtype=np.int64)
    for orig, dense in remap.items():
        members = sub.true_labels == orig
        labels[members] = dense
        provenance[members] = PROV_HUMAN
    return Dataset(
        features=sub.features,
        labels=labels,
        true_labels=sub.true_labels,
        provenance=provenance,
        n_classes_visible=len(retained),
        label_map=tuple(retained),
    )


def add_class(data: Dataset, member_indices, round: int) -> Dataset:
    """Label the given unlabeled samples as one new class discovered at `round`."""
    if round < 1:
        raise ValueError("discovery rounds are numbered from 1")
    members = np.asarray(member_indices, dtype=np.int64)
    if members.size == 0:
        raise ValueError("cannot add an empty class")
    if len(np.unique(members)) != len(members):
        raise ValueError("duplicate member indices")
    already = data.labels[members] != UNLABELED
    if already.any():
        raise ValueError(
            f"samples already labeled: {members[already][:5].tolist()}"
            f"{'...' if already.sum() > 5 else ''}"
        )
    labels = data.labels.copy()
    provenance = data.provenance.copy()
    labels[members] = data.n_classes_visible
    provenance[members] = round
    return Dataset(
        features=data.features,
        labels=labels,
        true_labels=data.true_labels,
        provenance=provenance,
        n_classes_visible=data.n_classes_visible + 1,
        label_map=data.label_map + (DISCOVERED_CLASS,),
    )
