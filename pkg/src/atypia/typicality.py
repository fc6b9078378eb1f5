"""Generative model of typical images, learned from normal-only evidence.

The model holds Gaussian attribute conditionals for objects and scenes, a
smoothed object-given-scene table, relevance and reliability weights for
every attribute channel, per-category location models over a regular
grid, and per-category gamma models of relative object size.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import distributions as dist
from .evidence import CategoryVocab, check_against_vocab, check_bbox
from .exceptions import DegenerateSample, DimensionMismatch, InsufficientData, VocabMismatch

DEFAULT_GRID = 8
DEFAULT_SMOOTHING = 0.5
DEFAULT_ENTROPY_FLOOR = 0.05
DEFAULT_HOLDOUT = 0.2


def cell_ratios(bbox, grid_size):
    """Fraction of each grid cell covered by the box rectangle.

    Cells are numbered row-major from the top-left corner, so entry
    ``r * G + c`` is row ``r`` (y axis) and column ``c`` (x axis).
    """
    x, y, w, h = check_bbox(bbox)
    G = int(grid_size)
    edges = np.arange(G + 1) / G
    ox = np.clip(np.minimum(edges[1:], x + w) - np.maximum(edges[:-1], x), 0.0, None)
    oy = np.clip(np.minimum(edges[1:], y + h) - np.maximum(edges[:-1], y), 0.0, None)
    return np.clip(np.outer(oy, ox).ravel() * (G * G), 0.0, 1.0)


def scene_attr_relevance(params, entropy_floor=DEFAULT_ENTROPY_FLOOR):
    """Reciprocal of the conditional entropy, with the entropy floored."""
    return 1.0 / max(dist.gaussian_entropy(params), entropy_floor)


def object_attr_relevance(annotations):
    """Fraction of non-absent annotations that are positive (0 if none)."""
    a = np.asarray(annotations, dtype=float).ravel()
    a = a[~np.isnan(a)]
    if a.size == 0:
        return 0.0
    return float(a.mean())


def attribute_reliability(responses, truth):
    """Balanced accuracy of ``responses >= 0.5`` against binary ``truth``.

    Absent (NaN) truth entries are ignored; without both classes the
    reliability is 0.5.
    """
    r = np.asarray(responses, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    keep = ~np.isnan(t)
    r, t = r[keep], t[keep]
    pos, neg = t == 1, t == 0
    if not pos.any() or not neg.any():
        return 0.5
    pred = r >= 0.5
    return 0.5 * (float(pred[pos].mean()) + float((~pred[neg]).mean()))


def in_holdout(image_id, fraction):
    """Deterministic hold-out membership from a hash of the record id."""
    digest = hashlib.sha256(str(image_id).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2.0**64 < fraction


@dataclass(eq=False)
class LocationModel:
    """Zero-inflated exponential per (object category, grid cell).

    ``zero_mass[c, g]`` is the probability that category ``c`` leaves cell
    ``g`` empty; ``rate[c, g]`` parameterizes the exponential density of
    the covered fraction when it is positive.
    """

    grid_size: int
    zero_mass: np.ndarray
    rate: np.ndarray

    def __post_init__(self):
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")
        self.zero_mass = np.asarray(self.zero_mass, dtype=float)
        self.rate = np.asarray(self.rate, dtype=float)
        if self.zero_mass.shape != self.rate.shape or self.zero_mass.shape[1] != self.grid_size**2:
            raise DimensionMismatch("location model arrays do not match the grid")

    def cell_information(self, ratios, category, clamp_max=30.0):
        """Per-cell ``-log p`` of observed cell ratios, clamped above."""
        ratios = np.asarray(ratios, dtype=float)
        pi0 = self.zero_mass[category]
        rate = self.rate[category]
        with np.errstate(divide="ignore"):
            p = np.where(ratios == 0, pi0, (1.0 - pi0) * rate * np.exp(-rate * ratios))
            info = -np.log(p)
        return np.minimum(info, clamp_max)

    @classmethod
    def fit(cls, ratios_by_category, grid_size):
        """``ratios_by_category[c]`` is an (n_c, G*G) array of cell ratios."""
        cells = grid_size * grid_size
        V = len(ratios_by_category)
        zero_mass = np.ones((V, cells))
        rate = np.ones((V, cells))
        for c, R in enumerate(ratios_by_category):
            R = np.asarray(R, dtype=float).reshape(-1, cells)
            if R.shape[0] == 0:
                continue
            zero = R == 0
            zero_mass[c] = zero.mean(axis=0)
            for g in range(cells):
                positive = R[~zero[:, g], g]
                if positive.size:
                    rate[c, g] = dist.fit(dist.EXPONENTIAL, positive).rate
        return cls(grid_size, zero_mass, rate)


class TypicalityModel(BaseEstimator):
    """Model of typical images learned from labeled normal evidence.

    Parameters
    ----------
    grid_size : int, default=8
        Cells per side of the location grid.
    smoothing : float, default=0.5
        Additive smoothing of the object-given-scene counts.
    entropy_floor : float, default=0.05
        Floor (nats) on the conditional entropy inverted by scene relevance.
    holdout_fraction : float, default=0.2
        Share of records, chosen by id hash, used to measure reliability.

    Attributes
    ----------
    vocab_ : CategoryVocab
    object_attr_mean_, object_attr_var_ : ndarray of shape (n, V)
    scene_attr_mean_, scene_attr_var_ : ndarray of shape (m, J)
    object_given_scene_ : ndarray of shape (V, J)
        Column ``j`` is the distribution of object categories in scene ``j``.
    scene_relevance_ : ndarray of shape (m, J)
    object_relevance_ : ndarray of shape (n, V)
    scene_reliability_ : ndarray of shape (m,)
    object_reliability_ : ndarray of shape (n,)
    location_ : LocationModel
    size_shape_, size_scale_ : ndarray of shape (V,)
        Gamma parameters of relative object size per category.
    scene_prior_ : ndarray of shape (J,)
    """

    def __init__(
        self,
        grid_size=DEFAULT_GRID,
        smoothing=DEFAULT_SMOOTHING,
        entropy_floor=DEFAULT_ENTROPY_FLOOR,
        holdout_fraction=DEFAULT_HOLDOUT,
    ):
        self.grid_size = grid_size
        self.smoothing = smoothing
        self.entropy_floor = entropy_floor
        self.holdout_fraction = holdout_fraction

    def _check_params(self):
        if int(self.grid_size) < 1:
            raise ValueError("grid_size must be >= 1")
        if not self.smoothing > 0:
            raise ValueError("smoothing must be positive")
        if not self.entropy_floor > 0:
            raise ValueError("entropy_floor must be positive")
        if not 0 <= self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must lie in [0, 1)")

    def fit(self, records, vocab=None):
        """Learn every component from a list of labeled normal records."""
        self._check_params()
        records = list(records)
        if not records:
            raise InsufficientData("training set", "no records")
        if vocab is None:
            first = records[0]
            if not first.objects:
                raise InsufficientData("vocabulary", "cannot infer object dimensions")
            o = first.objects[0]
            vocab = CategoryVocab.generic(
                o.object_probs.size, first.scene_probs.size, o.object_attrs.size, first.scene_attrs.size
            )
        V, J, n, m = vocab.shape
        G = int(self.grid_size)
        for rec in records:
            if not rec.is_labeled:
                raise VocabMismatch(f"record {rec.image_id} is missing ground-truth labels")
            check_against_vocab(rec, vocab)

        scene_lab = np.array([r.scene_label for r in records])
        scene_attrs = np.array([r.scene_attrs for r in records]).reshape(len(records), m)
        scene_truth = np.array([
            r.scene_attr_labels if r.scene_attr_labels is not None else np.full(m, np.nan)
            for r in records
        ]).reshape(len(records), m)
        holdout = np.array([in_holdout(r.image_id, self.holdout_fraction) for r in records])

        objs = [(i, o) for i, r in enumerate(records) for o in r.objects]
        obj_image = np.array([i for i, _ in objs], dtype=int)
        obj_lab = np.array([o.object_label for _, o in objs], dtype=int)
        obj_attrs = np.array([o.object_attrs for _, o in objs]).reshape(len(objs), n)
        obj_truth = np.array([
            o.attr_labels if o.attr_labels is not None else np.full(n, np.nan) for _, o in objs
        ]).reshape(len(objs), n)
        obj_holdout = holdout[obj_image] if objs else np.zeros(0, dtype=bool)

        # scene conditionals and relevance
        s_mean = np.empty((m, J))
        s_var = np.empty((m, J))
        s_rel = np.empty((m, J))
        for j in range(J):
            rows = scene_attrs[scene_lab == j]
            if rows.shape[0] < 2:
                raise InsufficientData(f"scene category {vocab.scene_categories[j]!r}",
                                       f"{rows.shape[0]} records, need 2")
            for i in range(m):
                g = dist.fit(dist.GAUSSIAN, rows[:, i])
                s_mean[i, j], s_var[i, j] = g.mean, g.variance
                s_rel[i, j] = scene_attr_relevance(g, self.entropy_floor)

        # object conditionals and relevance
        o_mean = np.empty((n, V))
        o_var = np.empty((n, V))
        o_rel = np.empty((n, V))
        for c in range(V):
            sel = obj_lab == c
            rows = obj_attrs[sel]
            if rows.shape[0] < 2:
                raise InsufficientData(f"object category {vocab.object_categories[c]!r}",
                                       f"{rows.shape[0]} objects, need 2")
            for i in range(n):
                g = dist.fit(dist.GAUSSIAN, rows[:, i])
                o_mean[i, c], o_var[i, c] = g.mean, g.variance
                o_rel[i, c] = object_attr_relevance(obj_truth[sel, i])

        s_reliab = np.array([
            attribute_reliability(scene_attrs[holdout, i], scene_truth[holdout, i]) for i in range(m)
        ])
        o_reliab = np.array([
            attribute_reliability(obj_attrs[obj_holdout, i], obj_truth[obj_holdout, i]) for i in range(n)
        ])

        # object given scene, column-normalized with additive smoothing
        counts = np.zeros((V, J))
        np.add.at(counts, (obj_lab, scene_lab[obj_image]), 1.0)
        table = (counts + self.smoothing) / (counts.sum(axis=0, keepdims=True) + self.smoothing * V)

        # location and size
        ratios_by_cat = [[] for _ in range(V)]
        sizes_by_cat = [[] for _ in range(V)]
        for _, o in objs:
            if o.cell_ratios is not None:
                if o.cell_ratios.size != G * G:
                    raise DimensionMismatch(f"cell_ratios has {o.cell_ratios.size} entries, grid needs {G * G}")
                ratios = o.cell_ratios
            else:
                ratios = cell_ratios(o.bbox, G)
            ratios_by_cat[o.object_label].append(ratios)
            sizes_by_cat[o.object_label].append(o.relative_size)
        location = LocationModel.fit(
            [np.array(r).reshape(-1, G * G) for r in ratios_by_cat], G
        )
        size_shape = np.empty(V)
        size_scale = np.empty(V)
        for c in range(V):
            try:
                gp = dist.fit(dist.GAMMA, sizes_by_cat[c])
            except DegenerateSample as exc:
                raise InsufficientData(f"size model {vocab.object_categories[c]!r}", str(exc)) from exc
            size_shape[c], size_scale[c] = gp.shape, gp.scale

        self.vocab_ = vocab
        self.object_attr_mean_ = o_mean
        self.object_attr_var_ = o_var
        self.scene_attr_mean_ = s_mean
        self.scene_attr_var_ = s_var
        self.object_given_scene_ = table
        self.scene_relevance_ = s_rel
        self.object_relevance_ = o_rel
        self.scene_reliability_ = s_reliab
        self.object_reliability_ = o_reliab
        self.location_ = location
        self.size_shape_ = size_shape
        self.size_scale_ = size_scale
        self.scene_prior_ = np.bincount(scene_lab, minlength=J) / len(records)
        self.n_training_records_ = len(records)
        return self

    def object_attr_cond(self, i, c):
        check_is_fitted(self, "vocab_")
        return dist.GaussianParams(self.object_attr_mean_[i, c], self.object_attr_var_[i, c])

    def scene_attr_cond(self, i, j):
        check_is_fitted(self, "vocab_")
        return dist.GaussianParams(self.scene_attr_mean_[i, j], self.scene_attr_var_[i, j])

    def size_params(self, c):
        check_is_fitted(self, "vocab_")
        return dist.GammaParams(self.size_shape_[c], self.size_scale_[c])
