"""Dataset loading, synthesis, disjoint class splitting and the feature
pipeline feeding the desk-scale learners.

A LabeledDataset is an immutable (features, labels) pair with dense float
features. Real image data enters through the CIFAR binary format or CSV;
desk-scale experiments use seeded Gaussian class blobs instead of
full-size benchmarks. The disjoint class split carves one source into a
tuning side and an evaluation side with no shared classes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataFormatError
from .seeding import rng_from

_CIFAR10_RECORD = 3073  # 1 label byte + 32*32*3 pixel bytes
_CIFAR100_RECORD = 3074  # coarse byte + fine byte + pixels


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with integer class labels.

    ``source_labels`` maps each (possibly re-indexed) label back to the
    label it carried in the originating dataset; identity when the
    dataset was never re-indexed.
    """

    features: np.ndarray
    labels: np.ndarray
    name: str
    source_labels: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ContractViolation("features must be an N x d matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ContractViolation("labels must align with feature rows")

    @property
    def num_examples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_set(self) -> tuple[int, ...]:
        return tuple(sorted(int(c) for c in np.unique(self.labels)))

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def subset(self, mask: np.ndarray, name: str | None = None) -> "LabeledDataset":
        return LabeledDataset(
            features=self.features[mask],
            labels=self.labels[mask],
            name=name or self.name,
            source_labels=dict(self.source_labels),
        )

    def require_min_per_class(self, minimum: int = 2) -> None:
        """Stratified train/val holdout needs >= 2 examples per class."""
        for cls, count in self.class_counts().items():
            if count < minimum:
                raise ContractViolation(
                    f"class {cls} in '{self.name}' has {count} examples, "
                    f"need at least {minimum}"
                )

    def metadata(self) -> dict:
        return {
            "name": self.name,
            "dim": self.dim,
            "num_examples": self.num_examples,
            "num_classes": len(self.class_set),
            "label_map": {str(k): v for k, v in sorted(self.source_labels.items())},
        }


@dataclass(frozen=True)
class SplitPair:
    """Disjoint-class halves of one source dataset."""

    tuning: LabeledDataset
    evaluation: LabeledDataset


def load_cifar_binary(path: str | Path, variant: str) -> LabeledDataset:
    """Parse the raw CIFAR binary format.

    cifar10 records are 3073 bytes (label, 3072 pixels); cifar100-fine
    records are 3074 (coarse label, fine label, pixels) and the fine
    label is kept. Pixels are scaled to [0, 1] in row-major RGB-plane
    order, exactly as stored.
    """
    path = Path(path)
    if variant == "cifar10":
        record, label_offset, max_label = _CIFAR10_RECORD, 0, 9
    elif variant == "cifar100-fine":
        record, label_offset, max_label = _CIFAR100_RECORD, 1, 99
    else:
        raise ContractViolation(f"unknown CIFAR variant '{variant}'")

    raw = path.read_bytes()
    if len(raw) == 0 or len(raw) % record != 0:
        raise DataFormatError(
            f"{path}: truncated {variant} file, {len(raw)} bytes is not a "
            f"positive multiple of the {record}-byte record size "
            f"(partial record starts at byte offset {len(raw) - len(raw) % record})"
        )
    n = len(raw) // record
    buf = np.frombuffer(raw, dtype=np.uint8).reshape(n, record)
    labels = buf[:, label_offset].astype(np.int64)
    bad = np.nonzero(labels > max_label)[0]
    if bad.size:
        i = int(bad[0])
        raise DataFormatError(
            f"{path}: label byte {int(labels[i])} out of range 0..{max_label} "
            f"at byte offset {i * record + label_offset}"
        )
    pixels = buf[:, label_offset + 1 :].astype(np.float64) / 255.0
    return LabeledDataset(features=pixels, labels=labels, name=f"{path.stem}:{variant}")


def load_csv(path: str | Path) -> LabeledDataset:
    """Load a `label,f0,f1,...` CSV. Line numbers in errors are 1-based
    and include the header line."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if not header or header[0].strip() != "label":
            raise DataFormatError(f"{path}: line 1: header must start with 'label'")
        width = len(header)
        if width < 2:
            raise DataFormatError(f"{path}: line 1: header declares no feature columns")

        labels: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"{path}: ragged row at line {lineno}: "
                    f"{len(row)} cells, expected {width}"
                )
            try:
                labels.append(int(row[0]))
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: label '{row[0]}' is not an integer"
                ) from None
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError:
                raise DataFormatError(
                    f"{path}: line {lineno}: non-numeric feature cell"
                ) from None

    if not rows:
        raise DataFormatError(f"{path}: no examples")
    return LabeledDataset(
        features=np.asarray(rows, dtype=np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        name=path.stem,
    )


def save_csv(dataset: LabeledDataset, path: str | Path, sidecar: bool = True) -> None:
    """Write a dataset in the `label,f0,...` format plus a JSON metadata
    sidecar (`<path>.meta.json`) with the label remap table."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i}" for i in range(dataset.dim)])
        for label, row in zip(dataset.labels, dataset.features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])
    if sidecar:
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        meta_path.write_text(json.dumps(dataset.metadata(), indent=2, sort_keys=True) + "\n")


def synth_gaussians(
    num_classes: int,
    dim: int,
    per_class: int,
    separation: float,
    seed: int,
) -> LabeledDataset:
    """Isotropic unit-variance Gaussian blob per class, centered at
    ``separation`` times a seeded random unit vector."""
    if num_classes < 2:
        raise ContractViolation("synth_gaussians needs at least 2 classes")
    if per_class < 4:
        raise ContractViolation("synth_gaussians needs per_class >= 4")
    if dim < 2:
        raise ContractViolation("synth_gaussians needs dim >= 2")
    if not separation > 0:
        raise ContractViolation("synth_gaussians needs separation > 0")

    rng = rng_from(seed)
    directions = rng.standard_normal((num_classes, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    means = separation * directions

    features = np.empty((num_classes * per_class, dim), dtype=np.float64)
    labels = np.empty(num_classes * per_class, dtype=np.int64)
    for c in range(num_classes):
        block = slice(c * per_class, (c + 1) * per_class)
        features[block] = means[c] + rng.standard_normal((per_class, dim))
        labels[block] = c
    name = f"gauss-c{num_classes}-d{dim}-n{per_class}-s{separation:g}-seed{seed}"
    return LabeledDataset(features=features, labels=labels, name=name)


def disjoint_class_split(
    source: LabeledDataset, first_fraction: float, seed: int
) -> SplitPair:
    """Shuffle classes by seed and split them into two datasets with no
    class overlap; the union of the two class sets is the source set.

    Each side is re-indexed to dense labels 0..C-1 (in sorted order of
    the source labels it received); the original labels are retained in
    ``source_labels``.
    """
    classes = source.class_set
    if len(classes) < 2:
        raise ContractViolation("disjoint split needs at least 2 classes")
    if not 0.0 < first_fraction < 1.0:
        raise ContractViolation("first_fraction must lie strictly between 0 and 1")

    rng = rng_from(seed)
    order = [classes[i] for i in rng.permutation(len(classes))]
    k = int(np.floor(first_fraction * len(classes)))
    k = min(max(k, 1), len(classes) - 1)
    return SplitPair(
        tuning=_take_classes(source, sorted(order[:k]), f"{source.name}-tuning"),
        evaluation=_take_classes(source, sorted(order[k:]), f"{source.name}-evaluation"),
    )


def _take_classes(source: LabeledDataset, classes: list[int], name: str) -> LabeledDataset:
    remap = {src: new for new, src in enumerate(classes)}
    mask = np.isin(source.labels, classes)
    labels = np.asarray([remap[int(l)] for l in source.labels[mask]], dtype=np.int64)
    back = {new: src for src, new in remap.items()}
    # compose with any remap already carried by the source
    if source.source_labels:
        back = {new: source.source_labels[src] for new, src in back.items()}
    return LabeledDataset(
        features=source.features[mask], labels=labels, name=name, source_labels=back
    )


def random_project(data: LabeledDataset, out_dim: int, seed: int) -> LabeledDataset:
    """Project features through a seeded Gaussian matrix (scaled by
    1/sqrt(out_dim)) and standardize each output dimension to zero mean
    and unit variance over the dataset.

    Zero-variance output dimensions are left unstandardized (mean is
    still removed); this is documented behavior, not an error.
    """
    if out_dim < 1:
        raise ContractViolation("random_project needs out_dim >= 1")
    rng = rng_from(seed)
    matrix = rng.standard_normal((data.dim, out_dim)) / np.sqrt(out_dim)
    projected = data.features @ matrix
    mean = projected.mean(axis=0)
    std = projected.std(axis=0)
    # constant columns can show std ~ 1 ulp of the mean; treat those as zero
    # variance rather than amplifying rounding noise to unit scale
    degenerate = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    scale = np.where(degenerate, 1.0, std)
    standardized = (projected - mean) / scale
    return LabeledDataset(
        features=standardized,
        labels=data.labels.copy(),
        name=f"{data.name}-proj{out_dim}",
        source_labels=dict(data.source_labels),
    )
