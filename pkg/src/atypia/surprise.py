"""Raw object-, context- and scene-centric surprise scores.

Every score is an expectation of information content (``-log p``, nats)
over the category distributions carried by the evidence.  Ablation flags
switch individual weighting terms off: a disabled weight becomes 1 and a
disabled additive term becomes 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import distributions as dist
from .evidence import check_against_vocab
from .typicality import cell_ratios

REASONS = ("object", "context", "scene")
DEFAULT_CLAMP_MAX = 30.0


@dataclass(frozen=True)
class AblationConfig:
    use_relevance: bool = True
    use_reliability: bool = True
    use_location: bool = True
    use_size_modulation: bool = True

    @classmethod
    def variant(cls, name):
        """Named ablation variant: ``var1``, ``var2``, ``var3`` or ``full``.

        ``var1`` keeps only the information terms; ``var2`` adds
        reliability (and size modulation of the context score); ``var3``
        adds relevance (and the location term of the context score).
        """
        try:
            return VARIANTS[name]
        except KeyError:
            raise ValueError(f"unknown ablation variant {name!r}; expected one of {sorted(VARIANTS)}") from None


VARIANTS = {
    "var1": AblationConfig(False, False, False, False),
    "var2": AblationConfig(False, True, False, True),
    "var3": AblationConfig(True, False, True, False),
    "full": AblationConfig(True, True, True, True),
}

FULL = VARIANTS["full"]


@dataclass(frozen=True)
class SurpriseTriple:
    object: float
    context: float
    scene: float

    def as_array(self):
        return np.array([self.object, self.context, self.scene])


def _gaussian_information(x, mean, var):
    # -log N(x; mean, var), broadcast over the parameter arrays
    return 0.5 * np.log(2 * np.pi * var) + (x - mean) ** 2 / (2 * var)


def _attribute_weights(reliability, relevance, ablation):
    w = np.ones_like(relevance)
    if ablation.use_reliability:
        w = w * reliability[:, None]
    if ablation.use_relevance:
        w = w * relevance
    return w


def scene_surprise(evidence, model, ablation=FULL):
    """Expected weighted information of the scene attributes."""
    check_is_fitted(model, "vocab_")
    check_against_vocab(evidence, model.vocab_)
    info = _gaussian_information(
        evidence.scene_attrs[:, None], model.scene_attr_mean_, model.scene_attr_var_
    )
    w = _attribute_weights(model.scene_reliability_, model.scene_relevance_, ablation)
    return float(np.sum(info * w, axis=0) @ evidence.scene_probs)


def object_surprise(evidence, model, ablation=FULL):
    """Sum over objects of the expected weighted attribute information."""
    check_is_fitted(model, "vocab_")
    check_against_vocab(evidence, model.vocab_)
    w = _attribute_weights(model.object_reliability_, model.object_relevance_, ablation)
    total = 0.0
    for obj in evidence.objects:
        info = _gaussian_information(
            obj.object_attrs[:, None], model.object_attr_mean_, model.object_attr_var_
        )
        total += float(np.sum(info * w, axis=0) @ obj.object_probs)
    return total


def cooccurrence_term(object_probs, scene_probs, model):
    """Expected ``-log P(O=c | S_j)`` under both category distributions."""
    neg_log = -np.log(model.object_given_scene_)
    return float(np.asarray(object_probs) @ neg_log @ np.asarray(scene_probs))


def _object_ratios(obj, grid_size):
    if obj.cell_ratios is not None and obj.cell_ratios.size == grid_size * grid_size:
        return obj.cell_ratios
    return cell_ratios(obj.bbox, grid_size)


def location_information(obj, category, model, clamp_max=DEFAULT_CLAMP_MAX):
    """Mean over grid cells of the clamped location information for ``category``."""
    loc = model.location_
    ratios = _object_ratios(obj, loc.grid_size)
    return float(loc.cell_information(ratios, category, clamp_max).mean())


def expected_location_information(obj, model, clamp_max=DEFAULT_CLAMP_MAX):
    loc = model.location_
    ratios = _object_ratios(obj, loc.grid_size)
    total = 0.0
    for c, p in enumerate(obj.object_probs):
        if p > 0:
            total += p * float(loc.cell_information(ratios, c, clamp_max).mean())
    return total


def _size_normalizer(shape, scale):
    params = dist.GammaParams(shape, scale)
    if shape > 1:
        at = params.mode()
    else:
        # density is maximal at the support edge; normalize at the 1st percentile
        at = special.gammaincinv(shape, 0.01) * scale
    return float(dist.log_pdf(params, at))


def size_modulation(relative_size, object_probs, model):
    """Expected modal-normalized gamma density of the relative size, in [0, 1]."""
    r = float(relative_size)
    total = 0.0
    for c, p in enumerate(np.asarray(object_probs, dtype=float)):
        if p <= 0:
            continue
        shape, scale = model.size_shape_[c], model.size_scale_[c]
        log_ratio = float(dist.log_pdf(dist.GammaParams(shape, scale), r)) - _size_normalizer(shape, scale)
        total += p * min(1.0, math.exp(min(log_ratio, 0.0)))
    return min(max(total, 0.0), 1.0)


def context_surprise(evidence, model, ablation=FULL, clamp_max=DEFAULT_CLAMP_MAX):
    """Size-modulated co-occurrence plus location information, summed over objects."""
    check_is_fitted(model, "vocab_")
    check_against_vocab(evidence, model.vocab_)
    total = 0.0
    for obj in evidence.objects:
        term = cooccurrence_term(obj.object_probs, evidence.scene_probs, model)
        if ablation.use_location:
            term += expected_location_information(obj, model, clamp_max)
        if ablation.use_size_modulation:
            term *= size_modulation(obj.relative_size, obj.object_probs, model)
        total += term
    return total


def surprise_triple(evidence, model, ablation=FULL, clamp_max=DEFAULT_CLAMP_MAX):
    return SurpriseTriple(
        object_surprise(evidence, model, ablation),
        context_surprise(evidence, model, ablation, clamp_max),
        scene_surprise(evidence, model, ablation),
    )


class SurpriseScorer(BaseEstimator, TransformerMixin):
    """Map evidence records to raw surprise triples.

    ``transform`` returns an array of shape (n_images, 3) with columns in
    ``REASONS`` order (object, context, scene).

    Parameters
    ----------
    typicality : TypicalityModel
        A fitted model of typical images.
    use_relevance, use_reliability, use_location, use_size_modulation : bool
        Ablation switches; all on reproduces the full scores.
    clamp_max : float, default=30.0
        Upper clamp (nats) on each cell's location information.
    """

    def __init__(
        self,
        typicality=None,
        use_relevance=True,
        use_reliability=True,
        use_location=True,
        use_size_modulation=True,
        clamp_max=DEFAULT_CLAMP_MAX,
    ):
        self.typicality = typicality
        self.use_relevance = use_relevance
        self.use_reliability = use_reliability
        self.use_location = use_location
        self.use_size_modulation = use_size_modulation
        self.clamp_max = clamp_max

    @property
    def ablation(self):
        return AblationConfig(
            self.use_relevance, self.use_reliability, self.use_location, self.use_size_modulation
        )

    def fit(self, X=None, y=None):
        if self.typicality is None:
            raise ValueError("SurpriseScorer needs a fitted TypicalityModel")
        check_is_fitted(self.typicality, "vocab_")
        return self

    def transform(self, X):
        self.fit()
        abl = self.ablation
        rows = [surprise_triple(ev, self.typicality, abl, self.clamp_max).as_array() for ev in X]
        return np.array(rows, dtype=float).reshape(len(rows), 3)
