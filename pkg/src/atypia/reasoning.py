"""Inverse-Gaussian normalization of surprise scores and abnormality decisions.

Raw surprise scores live on incomparable scales.  Each reason gets an
inverse-Gaussian prior fitted to its scores over normal images; the prior's
CDF maps a raw score to a probability.  The largest of the three decides
abnormality and names the dominant reason.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize_scalar
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import distributions as dist
from .exceptions import DimensionMismatch, InsufficientData
from .surprise import REASONS

MIN_TRIPLES = 30
DEFAULT_THRESHOLD = 0.95
DEFAULT_SHIFT_EPS = 1e-3
SHIFT_METHODS = ("profile", "min_eps")
_PROFILE_GRID = 121


def _as_triples(X):
    if hasattr(X, "as_array"):
        X = X.as_array()
    elif isinstance(X, (list, tuple)) and X and hasattr(X[0], "as_array"):
        X = [t.as_array() for t in X]
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != 3:
        raise DimensionMismatch(f"expected surprise triples of shape (n, 3), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DimensionMismatch("surprise triples must be finite")
    return X


def score_shift(scores, eps=DEFAULT_SHIFT_EPS):
    """Offset that moves a score population onto the positive half-line."""
    lo = float(np.min(scores))
    return -lo + eps if lo <= 0 else 0.0


def _ig_profile_loglik(y):
    # maximized inverse-Gaussian log-likelihood of a positive sample
    n = y.size
    mu = y.mean()
    inv = np.sum(1.0 / y - 1.0 / mu)
    if not inv > 0:
        return -np.inf
    lam = n / inv
    return 0.5 * n * np.log(lam / (2 * np.pi)) - 1.5 * np.sum(np.log(y)) - 0.5 * n


def profile_shift(scores):
    """Offset maximizing the inverse-Gaussian likelihood of the shifted scores.

    The offset is searched over ``-min + exp(u)``, first on a log-spaced grid
    and then by bounded refinement around the best grid point.  The result
    may be negative for a positive population.
    """
    x = np.asarray(scores, dtype=float).ravel()
    lo = float(x.min())
    spread = float(x.max() - lo)
    if spread <= 0:
        return -lo + 1.0
    us = np.linspace(np.log(spread * 1e-6), np.log(spread * 1e4), _PROFILE_GRID)

    def nll(u):
        return -_ig_profile_loglik(x - lo + np.exp(u))

    values = np.array([nll(u) for u in us])
    best = int(np.argmin(values))
    a, b = us[max(best - 1, 0)], us[min(best + 1, us.size - 1)]
    res = minimize_scalar(nll, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    u = res.x if res.fun <= values[best] else us[best]
    return -lo + float(np.exp(u))


class ReasoningModel(BaseEstimator):
    """Per-reason inverse-Gaussian priors fitted on normal surprise triples.

    Parameters
    ----------
    threshold : float, default=0.95
        An image is abnormal when its largest normalized score exceeds this.
    shift_eps : float, default=1e-3
        Margin added when shifting non-positive score populations under
        ``shift_method="min_eps"``.
    shift_method : {"profile", "min_eps"}, default="profile"
        ``"profile"`` picks each reason's offset by maximizing the prior's
        likelihood.  ``"min_eps"`` moves the minimum score to ``shift_eps``
        when it is non-positive and leaves positive populations alone.

    Attributes
    ----------
    shift_ : ndarray of shape (3,)
    priors_ : list of InverseGaussianParams
    aic_report_ : dict
        Reason name to ``{family: AIC or None}`` over the candidate families.
    """

    def __init__(self, threshold=DEFAULT_THRESHOLD, shift_eps=DEFAULT_SHIFT_EPS, shift_method="profile"):
        self.threshold = threshold
        self.shift_eps = shift_eps
        self.shift_method = shift_method

    def fit(self, X, y=None):
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.shift_method not in SHIFT_METHODS:
            raise ValueError(f"shift_method must be one of {SHIFT_METHODS}")
        X = _as_triples(X)
        if X.shape[0] < MIN_TRIPLES:
            raise InsufficientData("surprise priors", f"{X.shape[0]} normal triples, need {MIN_TRIPLES}")
        shifts, priors, report = [], [], {}
        for r, name in enumerate(REASONS):
            if self.shift_method == "profile":
                shift = profile_shift(X[:, r])
            else:
                shift = score_shift(X[:, r], self.shift_eps)
            shifted = X[:, r] + shift
            priors.append(dist.fit(dist.INVERSE_GAUSSIAN, shifted))
            _, _, table = dist.select_family(shifted, dist.FAMILIES)
            report[name] = table
            shifts.append(shift)
        self.shift_ = np.array(shifts)
        self.priors_ = priors
        self.aic_report_ = report
        return self

    def transform(self, X):
        """Normalized scores: each reason's prior CDF at the shifted raw score."""
        check_is_fitted(self, "priors_")
        X = _as_triples(X)
        out = np.empty_like(X)
        for r in range(3):
            out[:, r] = dist.cdf(self.priors_[r], X[:, r] + self.shift_[r])
        return out

    def decision_function(self, X):
        """Final abnormality score: the largest normalized score."""
        return self.transform(X).max(axis=1)

    def predict(self, X):
        """1 for abnormal, 0 for normal."""
        return (self.decision_function(X) > self.threshold).astype(int)

    def predict_reason(self, X):
        """Index into ``REASONS`` of the dominant normalized score.

        ``argmax`` returns the first maximum, so ties resolve in the order
        object, context, scene.
        """
        return np.argmax(self.transform(X), axis=1)


def classify_abnormality(normalized, threshold=DEFAULT_THRESHOLD):
    """``(is_abnormal, final_score)`` for one normalized triple."""
    score = float(np.max(normalized))
    return score > threshold, score


def reason_argmax(normalized):
    return REASONS[int(np.argmax(np.asarray(normalized, dtype=float)))]


def rank_by_reason(items, reason, key=None):
    """Order ``items`` by descending normalized score for ``reason``.

    ``key(item)`` must return the normalized triple; by default each item is
    the triple itself.  The sort is stable.
    """
    r = REASONS.index(reason)
    key = key or (lambda item: item)
    return sorted(items, key=lambda item: -float(np.asarray(key(item))[r]))
