"""Data containers, file ingestion and the synthetic benchmark generator.

File formats
------------
features CSV
    no header, one row per instance: ``instance_id,label,v1,...,vd``
prototypes CSV
    no header, one row per class: ``class_id,a1,...,am``
split file
    JSON document with ``seen_classes``, ``unseen_classes``, ``train_ids``
    and ``test_ids`` lists
binary matrix
    magic ``DDIV``, u32 rows, u32 cols, little-endian float64 row-major
"""

from __future__ import annotations

import csv
import json
import struct
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DimensionMismatchError,
    DuplicateIdError,
    ParseError,
    UnknownLabelError,
)

MATRIX_MAGIC = b"DDIV"
_HEADER = struct.Struct("<4sII")


def _frozen_matrix(values, name):
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise DataError(f"{name} has a non-finite entry at row {bad[0]}, column {bad[1]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Dense feature matrix with per-instance labels and identifiers."""

    features: np.ndarray
    labels: tuple
    instance_ids: tuple

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen_matrix(self.features, "features"))
        object.__setattr__(self, "labels", tuple(str(v) for v in self.labels))
        object.__setattr__(self, "instance_ids", tuple(str(v) for v in self.instance_ids))
        n = self.features.shape[0]
        if len(self.labels) != n or len(self.instance_ids) != n:
            raise DimensionMismatchError(
                f"{n} feature rows but {len(self.labels)} labels and "
                f"{len(self.instance_ids)} instance ids"
            )
        if len(set(self.instance_ids)) != n:
            raise DuplicateIdError("instance ids are not unique")

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_dims(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: Sequence[int]) -> Dataset:
        idx = list(idx)
        return Dataset(
            self.features[idx] if idx else np.empty((0, self.n_dims)),
            [self.labels[i] for i in idx],
            [self.instance_ids[i] for i in idx],
        )

    def with_classes(self, classes) -> Dataset:
        """Rows whose label is in ``classes``, original order kept."""
        keep = set(classes)
        return self.subset([i for i, lab in enumerate(self.labels) if lab in keep])


@dataclass(frozen=True)
class ClassSplit:
    """Seen/unseen class partition plus train/test instance indices."""

    seen: tuple
    unseen: tuple
    train_idx: tuple
    test_idx: tuple

    def __post_init__(self):
        for name in ("seen", "unseen"):
            object.__setattr__(self, name, tuple(str(c) for c in getattr(self, name)))
        for name in ("train_idx", "test_idx"):
            object.__setattr__(self, name, tuple(int(i) for i in getattr(self, name)))
        overlap = set(self.seen) & set(self.unseen)
        if overlap:
            raise DataError(f"classes both seen and unseen: {sorted(overlap)}")
        if len(set(self.seen)) != len(self.seen) or len(set(self.unseen)) != len(self.unseen):
            raise DuplicateIdError("duplicate class id in split")

    @property
    def classes(self) -> tuple:
        return self.seen + self.unseen

    @property
    def class_index(self) -> dict:
        """Dense integer index per class id; seen classes come first."""
        return {c: i for i, c in enumerate(self.classes)}

    def validate_against(self, dataset: Dataset) -> None:
        known = set(self.classes)
        for i, lab in enumerate(dataset.labels):
            if lab not in known:
                raise UnknownLabelError(
                    f"instance {dataset.instance_ids[i]!r} has label {lab!r} not in split"
                )
        n = dataset.n_instances
        for i in self.train_idx + self.test_idx:
            if not 0 <= i < n:
                raise DataError(f"split index {i} out of range for {n} instances")
        seen = set(self.seen)
        for i in self.train_idx:
            if dataset.labels[i] not in seen:
                raise DataError(
                    f"train instance {dataset.instance_ids[i]!r} has unseen label "
                    f"{dataset.labels[i]!r}"
                )


@dataclass(frozen=True)
class PrototypeTable:
    """Per-class semantic attribute vectors, one row per class."""

    class_ids: tuple
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "class_ids", tuple(str(c) for c in self.class_ids))
        object.__setattr__(self, "vectors", _frozen_matrix(self.vectors, "prototypes"))
        if len(self.class_ids) != self.vectors.shape[0]:
            raise DimensionMismatchError("class id count does not match prototype rows")
        seen = set()
        for c in self.class_ids:
            if c in seen:
                raise DuplicateIdError(f"duplicate prototype class id {c!r}")
            seen.add(c)

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.class_ids)

    def __contains__(self, class_id):
        return class_id in self._index

    def __getitem__(self, class_id) -> np.ndarray:
        return self.vectors[self._index[class_id]]

    @property
    def _index(self):
        return {c: i for i, c in enumerate(self.class_ids)}

    def subset(self, class_ids) -> PrototypeTable:
        class_ids = list(class_ids)
        if not class_ids:
            return PrototypeTable((), np.empty((0, self.width)))
        return PrototypeTable(class_ids, np.stack([self[c] for c in class_ids]))

    def normalized(self) -> PrototypeTable:
        norms = np.linalg.norm(self.vectors, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return PrototypeTable(self.class_ids, self.vectors / norms)


@dataclass(frozen=True)
class SyntheticConfig:
    n_seen: int = 6
    n_unseen: int = 3
    dim_feature: int = 6
    dim_attr: int = 8
    per_class_train: int = 60
    per_class_test: int = 40
    overlap: float = 0.5
    rng_seed: int = 0
    attr_noise: float = 0.05

    def __post_init__(self):
        for name in ("n_seen", "n_unseen", "dim_feature", "dim_attr",
                     "per_class_train", "per_class_test"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        if not np.isfinite(self.overlap) or self.overlap < 0:
            raise ConfigError(f"overlap must be >= 0, got {self.overlap!r}")
        if self.attr_noise < 0:
            raise ConfigError("attr_noise must be >= 0")

    @classmethod
    def from_dict(cls, data: Mapping) -> SyntheticConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        return cls(**data)


# Minimum center-to-center distance (in cluster standard deviations) at overlap 0.
_BASE_SEPARATION = 14.0


def center_separation(overlap: float) -> float:
    """Minimum inter-center distance for a given overlap; cluster std is 1."""
    return _BASE_SEPARATION / (1.0 + 4.0 * overlap)


def generate_synthetic(cfg: SyntheticConfig):
    """Gaussian-cluster benchmark with informative class attributes.

    Every class is an isotropic unit-variance Gaussian in feature space. Centers
    are drawn at random and rescaled so the closest pair sits exactly
    :func:`center_separation` apart. Each class attribute vector is an affine
    image of its center plus a little seeded noise, so a linear map from
    features to attributes exists.

    Returns ``(dataset, split, prototypes)``. Unseen classes only contribute
    test instances.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    n_classes = cfg.n_seen + cfg.n_unseen
    seen = [f"s{i}" for i in range(cfg.n_seen)]
    unseen = [f"u{i}" for i in range(cfg.n_unseen)]
    classes = seen + unseen

    centers = rng.standard_normal((n_classes, cfg.dim_feature))
    if n_classes > 1:
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        closest = dist[np.triu_indices(n_classes, 1)].min()
        centers *= center_separation(cfg.overlap) / closest

    proj = rng.standard_normal((cfg.dim_attr, cfg.dim_feature)) / np.sqrt(cfg.dim_feature)
    offset = 0.1 * rng.standard_normal(cfg.dim_attr)
    attrs = centers @ proj.T + offset
    attrs = attrs + cfg.attr_noise * rng.standard_normal(attrs.shape)

    rows, labels, train_idx, test_idx = [], [], [], []
    for k, c in enumerate(classes):
        n_train = cfg.per_class_train if k < cfg.n_seen else 0
        n_total = n_train + cfg.per_class_test
        pts = centers[k] + rng.standard_normal((n_total, cfg.dim_feature))
        start = len(rows)
        rows.extend(pts)
        labels.extend([c] * n_total)
        train_idx.extend(range(start, start + n_train))
        test_idx.extend(range(start + n_train, start + n_total))

    ids = [f"i{i:06d}" for i in range(len(rows))]
    dataset = Dataset(np.asarray(rows), labels, ids)
    split = ClassSplit(seen, unseen, train_idx, test_idx)
    prototypes = PrototypeTable(classes, attrs)
    return dataset, split, prototypes


# --------------------------------------------------------------------------- IO

def write_matrix(path, matrix) -> None:
    arr = np.ascontiguousarray(matrix, dtype="<f8")
    if arr.ndim != 2:
        raise DimensionMismatchError("binary matrix must be 2-D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MATRIX_MAGIC, arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ParseError(path, 1, "truncated binary matrix header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise ParseError(path, 1, f"bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ParseError(path, 1, f"expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(rows, cols).astype(np.float64)


def _is_binary_matrix(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MATRIX_MAGIC


def _parse_float(text, path, line):
    try:
        return float(text)
    except ValueError:
        raise ParseError(path, line, f"not a number: {text!r}") from None


def _read_rows(path, min_fields):
    """Non-empty CSV rows as (line_number, fields)."""
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not f.strip() for f in row):
                continue
            row = [f.strip() for f in row]
            if len(row) < min_fields:
                raise ParseError(path, lineno, f"expected at least {min_fields} fields, got {len(row)}")
            yield lineno, row


def _read_feature_csv(path):
    ids, labels, rows = [], [], []
    width = None
    for lineno, row in _read_rows(path, 3):
        values = [_parse_float(v, path, lineno) for v in row[2:]]
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DimensionMismatchError(
                f"{path}:{lineno}: row {len(rows)} has {len(values)} features, expected {width}"
            )
        ids.append(row[0])
        labels.append(row[1])
        rows.append(values)
    if not rows:
        raise DataError(f"{path}: no feature rows")
    return ids, labels, np.asarray(rows, dtype=np.float64)


def _read_label_csv(path):
    ids, labels = [], []
    for _, row in _read_rows(path, 2):
        ids.append(row[0])
        labels.append(row[1])
    return ids, labels


def read_split(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(path, exc.lineno, exc.msg) from None
    if not isinstance(doc, dict):
        raise ParseError(path, 1, "split document must be an object")
    for key in ("seen_classes", "unseen_classes", "train_ids", "test_ids"):
        if not isinstance(doc.get(key), list):
            raise ParseError(path, 1, f"missing list field {key!r}")
    return doc


def load_dataset(features_path, labels_path=None, split_path=None):
    """Load a dataset and its class split.

    ``features_path`` is either a features CSV (labels embedded) or a binary
    ``DDIV`` matrix, in which case ``labels_path`` must name a CSV of
    ``instance_id,label`` rows in matching order. Returns
    ``(Dataset, ClassSplit)``; the split is ``None`` when no split path is
    given.
    """
    if _is_binary_matrix(features_path):
        if labels_path is None:
            raise DataError("binary feature matrix needs a labels file")
        feats = read_matrix(features_path)
        ids, labels = _read_label_csv(labels_path)
        if len(ids) != feats.shape[0]:
            raise DimensionMismatchError(
                f"{feats.shape[0]} matrix rows but {len(ids)} labels"
            )
    else:
        ids, labels, feats = _read_feature_csv(features_path)
        if labels_path is not None:
            lab_ids, lab_vals = _read_label_csv(labels_path)
            lookup = dict(zip(lab_ids, lab_vals))
            try:
                labels = [lookup[i] for i in ids]
            except KeyError as exc:
                raise DataError(f"no label for instance {exc.args[0]!r}") from None
    dataset = Dataset(feats, labels, ids)
    if split_path is None:
        return dataset, None

    doc = read_split(split_path)
    pos = {iid: i for i, iid in enumerate(dataset.instance_ids)}

    def _indices(key):
        try:
            return [pos[str(i)] for i in doc[key]]
        except KeyError as exc:
            raise DataError(f"{split_path}: {key} references unknown instance {exc.args[0]!r}") from None

    split = ClassSplit(doc["seen_classes"], doc["unseen_classes"],
                       _indices("train_ids"), _indices("test_ids"))
    split.validate_against(dataset)
    return dataset, split


def load_prototypes(path) -> PrototypeTable:
    ids, rows = [], []
    width = None
    seen = set()
    for lineno, row in _read_rows(path, 2):
        cid = row[0]
        if cid in seen:
            raise DuplicateIdError(f"{path}:{lineno}: duplicate class id {cid!r}")
        seen.add(cid)
        values = [_parse_float(v, path, lineno) for v in row[1:]]
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DimensionMismatchError(
                f"{path}:{lineno}: prototype {cid!r} has width {len(values)}, expected {width}"
            )
        ids.append(cid)
        rows.append(values)
    if not rows:
        raise DataError(f"{path}: no prototype rows")
    return PrototypeTable(ids, np.asarray(rows))


def write_features(path, dataset: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for iid, lab, row in zip(dataset.instance_ids, dataset.labels, dataset.features):
            writer.writerow([iid, lab] + [repr(float(v)) for v in row])


def write_split(path, dataset: Dataset, split: ClassSplit) -> None:
    doc = {
        "seen_classes": list(split.seen),
        "unseen_classes": list(split.unseen),
        "train_ids": [dataset.instance_ids[i] for i in split.train_idx],
        "test_ids": [dataset.instance_ids[i] for i in split.test_idx],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def write_dataset(features_path, split_path, dataset: Dataset, split: ClassSplit) -> None:
    write_features(features_path, dataset)
    write_split(split_path, dataset, split)


def write_prototypes(path, table: PrototypeTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for cid, row in zip(table.class_ids, table.vectors):
            writer.writerow([cid] + [repr(float(v)) for v in row])
