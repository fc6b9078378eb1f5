"""Platt sigmoid calibration of raw classifier confidences.

The sigmoid is ``p = 1 / (1 + exp(A * s + B))``.  Fitting follows Platt's
procedure with smoothed targets and the Newton / backtracking line search
refinement of Lin, Lin and Weng (2007).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import LengthMismatch, SingleClassSample

_MAX_ITER = 100
_GRAD_TOL = 1e-10
_MIN_STEP = 1e-10
_HESS_RIDGE = 1e-12
_EDGE = np.finfo(float).eps / 2


@dataclass(frozen=True)
class PlattParams:
    slope: float
    intercept: float

    def to_dict(self):
        return {"slope": float(self.slope), "intercept": float(self.intercept)}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["slope"]), float(d["intercept"]))


def _objective(f_ab, t):
    # sum of t*f + log(1 + exp(-f)), evaluated without overflow
    return float(np.sum(np.where(
        f_ab >= 0,
        t * f_ab + np.log1p(np.exp(-np.abs(f_ab))),
        (t - 1) * f_ab + np.log1p(np.exp(-np.abs(f_ab))),
    )))


def fit_platt(scores, labels):
    """Fit sigmoid parameters to ``scores`` with binary ``labels``.

    Raises
    ------
    SingleClassSample
        If ``labels`` do not contain both classes.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.size} scores but {y.size} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClassSample("Platt fitting needs both positive and negative labels")

    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(pos, hi, lo)

    a = 0.0
    b = math.log((n_neg + 1.0) / (n_pos + 1.0))
    fval = _objective(s * a + b, t)
    for _ in range(_MAX_ITER):
        p = expit(-(s * a + b))
        q = 1.0 - p
        d1 = t - p
        g1 = float(np.dot(s, d1))
        g2 = float(d1.sum())
        if abs(g1) < _GRAD_TOL and abs(g2) < _GRAD_TOL:
            break
        w = p * q
        h11 = _HESS_RIDGE + float(np.dot(s * s, w))
        h22 = _HESS_RIDGE + float(w.sum())
        h21 = float(np.dot(s, w))
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db

        step = 1.0
        while step >= _MIN_STEP:
            na, nb = a + step * da, b + step * db
            nf = _objective(s * na + nb, t)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        else:
            # no progress possible at machine precision
            break
    return PlattParams(a, b)


def apply_platt(params, score):
    """Calibrated probability for ``score``; stays strictly inside (0, 1)."""
    z = -(params.slope * np.asarray(score, dtype=float) + params.intercept)
    out = np.clip(expit(z), _EDGE, 1.0 - _EDGE)
    return out[()] if out.ndim == 0 else out


class PlattCalibrator(BaseEstimator, TransformerMixin):
    """Estimator wrapper around :func:`fit_platt` / :func:`apply_platt`.

    Examples
    --------
    >>> cal = PlattCalibrator().fit([-1.0, 1.0] * 50, [0, 1] * 50)
    >>> round(float(cal.transform([0.0])[0]), 6)
    0.5
    """

    def fit(self, X, y):
        self.params_ = fit_platt(np.asarray(X, dtype=float).ravel(), y)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return np.atleast_1d(apply_platt(self.params_, np.asarray(X, dtype=float).ravel()))

    def predict_proba(self, X):
        p = self.transform(X)
        return np.column_stack([1.0 - p, p])
