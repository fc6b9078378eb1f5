"""Per-image evidence records and the category vocabulary.

Evidence is what the upstream perception stack hands over: category
simplices, calibrated attribute probabilities, and object boxes.  Training
records additionally carry ground-truth labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, SimplexViolation, VocabMismatch

SIMPLEX_TOL = 1e-9
SIZE_TOL = 1e-6


@dataclass(frozen=True)
class CategoryVocab:
    object_categories: tuple
    scene_categories: tuple
    object_attributes: tuple
    scene_attributes: tuple

    def __post_init__(self):
        for name in ("object_categories", "scene_categories", "object_attributes", "scene_attributes"):
            values = tuple(str(v) for v in getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise VocabMismatch(f"{name} must not be empty")
            if len(set(values)) != len(values):
                raise VocabMismatch(f"duplicate names in {name}")

    @property
    def shape(self):
        """``(V, J, n, m)``."""
        return (
            len(self.object_categories),
            len(self.scene_categories),
            len(self.object_attributes),
            len(self.scene_attributes),
        )

    @classmethod
    def generic(cls, V, J, n, m):
        return cls(
            tuple(f"object_{i}" for i in range(V)),
            tuple(f"scene_{i}" for i in range(J)),
            tuple(f"object_attr_{i}" for i in range(n)),
            tuple(f"scene_attr_{i}" for i in range(m)),
        )

    def to_dict(self):
        return {
            "object_categories": list(self.object_categories),
            "scene_categories": list(self.scene_categories),
            "object_attributes": list(self.object_attributes),
            "scene_attributes": list(self.scene_attributes),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["object_categories"],
            d["scene_categories"],
            d["object_attributes"],
            d["scene_attributes"],
        )


def check_simplex(p, name, tol=SIMPLEX_TOL):
    p = np.asarray(p, dtype=float).ravel()
    if p.size == 0 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise SimplexViolation(f"{name} is not a probability vector")
    if abs(p.sum() - 1.0) > tol:
        raise SimplexViolation(f"{name} sums to {p.sum():.12g}")
    return p


def check_unit_vector(v, name):
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
        raise DimensionMismatch(f"{name} entries must lie in [0, 1]")
    return v


def check_bbox(bbox):
    b = np.asarray(bbox, dtype=float).ravel()
    if b.size != 4 or not np.all(np.isfinite(b)):
        raise DimensionMismatch("bbox must be (x, y, w, h)")
    x, y, w, h = b
    if x < 0 or y < 0 or w <= 0 or h <= 0 or x + w > 1 + SIZE_TOL or y + h > 1 + SIZE_TOL:
        raise DimensionMismatch(f"bbox {tuple(b)} outside the unit square")
    return b


def _labels(values):
    # None marks an absent annotation; stored as NaN
    if values is None:
        return None
    out = np.array([np.nan if v is None else float(v) for v in values], dtype=float)
    ok = np.isnan(out) | (out == 0) | (out == 1)
    if not np.all(ok):
        raise DimensionMismatch("attribute annotations must be 0, 1 or absent")
    return out


@dataclass(eq=False)
class ObjectEvidence:
    object_probs: np.ndarray
    object_attrs: np.ndarray
    bbox: np.ndarray
    relative_size: float | None = None
    object_label: int | None = None
    attr_labels: np.ndarray | None = None
    cell_ratios: np.ndarray | None = None

    def __post_init__(self):
        self.object_probs = check_simplex(self.object_probs, "object_probs")
        self.object_attrs = check_unit_vector(self.object_attrs, "object_attrs")
        self.bbox = check_bbox(self.bbox)
        area = float(self.bbox[2] * self.bbox[3])
        if self.relative_size is None:
            self.relative_size = area
        else:
            self.relative_size = float(self.relative_size)
            if not 0 < self.relative_size <= 1:
                raise DimensionMismatch("relative_size must lie in (0, 1]")
            if abs(self.relative_size - area) > SIZE_TOL:
                raise DimensionMismatch(
                    f"relative_size {self.relative_size} disagrees with bbox area {area}"
                )
        if self.object_label is not None:
            self.object_label = int(self.object_label)
        self.attr_labels = _labels(self.attr_labels)
        if self.attr_labels is not None and self.attr_labels.shape != self.object_attrs.shape:
            raise DimensionMismatch("attr_labels length differs from object_attrs")
        if self.cell_ratios is not None:
            self.cell_ratios = check_unit_vector(self.cell_ratios, "cell_ratios")


@dataclass(eq=False)
class ImageEvidence:
    image_id: str
    scene_probs: np.ndarray
    scene_attrs: np.ndarray
    objects: list = field(default_factory=list)
    scene_label: int | None = None
    scene_attr_labels: np.ndarray | None = None

    def __post_init__(self):
        self.image_id = str(self.image_id)
        self.scene_probs = check_simplex(self.scene_probs, "scene_probs")
        self.scene_attrs = check_unit_vector(self.scene_attrs, "scene_attrs")
        self.objects = list(self.objects)
        if self.scene_label is not None:
            self.scene_label = int(self.scene_label)
        self.scene_attr_labels = _labels(self.scene_attr_labels)
        if self.scene_attr_labels is not None and self.scene_attr_labels.shape != self.scene_attrs.shape:
            raise DimensionMismatch("scene_attr_labels length differs from scene_attrs")

    @property
    def is_labeled(self):
        return self.scene_label is not None and all(o.object_label is not None for o in self.objects)


class NormalTrainingRecord(ImageEvidence):
    """Evidence from a typical image together with its ground-truth labels."""

    def __post_init__(self):
        super().__post_init__()
        if not self.is_labeled:
            raise VocabMismatch(f"training record {self.image_id} lacks scene or object labels")


def check_against_vocab(evidence, vocab):
    """Raise unless every vector in ``evidence`` matches ``vocab`` dimensions."""
    V, J, n, m = vocab.shape
    if evidence.scene_probs.size != J or evidence.scene_attrs.size != m:
        raise DimensionMismatch(
            f"{evidence.image_id}: scene vectors have sizes "
            f"({evidence.scene_probs.size}, {evidence.scene_attrs.size}), expected ({J}, {m})"
        )
    if evidence.scene_label is not None and not 0 <= evidence.scene_label < J:
        raise VocabMismatch(f"{evidence.image_id}: scene_label {evidence.scene_label} out of range")
    for k, obj in enumerate(evidence.objects):
        if obj.object_probs.size != V or obj.object_attrs.size != n:
            raise DimensionMismatch(
                f"{evidence.image_id}: object {k} vectors have sizes "
                f"({obj.object_probs.size}, {obj.object_attrs.size}), expected ({V}, {n})"
            )
        if obj.object_label is not None and not 0 <= obj.object_label < V:
            raise VocabMismatch(f"{evidence.image_id}: object_label {obj.object_label} out of range")
