"""Univariate parametric families used throughout the engine.

Four families are supported: Gaussian, exponential, gamma and inverse
Gaussian.  Each has a frozen parameter record with a fixed serialization
order, closed-form log densities and CDFs, and a maximum-likelihood
``fit``.  ``select_family`` ranks candidates by AIC.

All information quantities are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import (
    DegenerateSample,
    EmptySample,
    NoApplicableFamily,
    NonPositiveSample,
)

VARIANCE_FLOOR = 1e-9

GAUSSIAN = "gaussian"
EXPONENTIAL = "exponential"
GAMMA = "gamma"
INVERSE_GAUSSIAN = "inverse_gaussian"

# Fixed order, also the last-resort AIC tie-break.
FAMILIES = (GAUSSIAN, EXPONENTIAL, GAMMA, INVERSE_GAUSSIAN)

_GAMMA_MAX_ITER = 50
_GAMMA_TOL = 1e-10


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    variance: float

    family = GAUSSIAN
    n_params = 2

    def __post_init__(self):
        if not self.variance >= VARIANCE_FLOOR:
            raise ValueError(f"variance {self.variance} below floor {VARIANCE_FLOOR}")

    def to_list(self):
        return [self.mean, self.variance]


@dataclass(frozen=True)
class ExponentialParams:
    rate: float

    family = EXPONENTIAL
    n_params = 1

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")

    def to_list(self):
        return [self.rate]


@dataclass(frozen=True)
class GammaParams:
    shape: float
    scale: float

    family = GAMMA
    n_params = 2

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError(f"invalid gamma parameters ({self.shape}, {self.scale})")

    def to_list(self):
        return [self.shape, self.scale]

    def mode(self):
        return (self.shape - 1.0) * self.scale if self.shape > 1 else 0.0


@dataclass(frozen=True)
class InverseGaussianParams:
    mean: float
    shape: float

    family = INVERSE_GAUSSIAN
    n_params = 2

    def __post_init__(self):
        if not (self.mean > 0 and self.shape > 0):
            raise ValueError(f"invalid inverse-Gaussian parameters ({self.mean}, {self.shape})")

    def to_list(self):
        return [self.mean, self.shape]


_PARAM_TYPES = {
    GAUSSIAN: GaussianParams,
    EXPONENTIAL: ExponentialParams,
    GAMMA: GammaParams,
    INVERSE_GAUSSIAN: InverseGaussianParams,
}


def params_to_record(params):
    """Tagged record ``{"family": ..., "params": [...]}`` for persistence."""
    return {"family": params.family, "params": [float(v) for v in params.to_list()]}


def params_from_record(record):
    try:
        cls = _PARAM_TYPES[record["family"]]
        return cls(*[float(v) for v in record["params"]])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed distribution record: {record!r}") from exc


def _as_sample(samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("cannot fit a distribution to an empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    return x


def _require_positive(x, family):
    if np.any(x <= 0):
        raise NonPositiveSample(f"{family} requires strictly positive samples")


def _require_distinct(x, family):
    if np.all(x == x[0]):
        raise DegenerateSample(f"{family} fit needs at least two distinct values")


def _fit_gamma_shape(x):
    """Newton iterations on ln k - digamma(k) = ln(mean) - mean(ln x)."""
    mean = x.mean()
    s = math.log(mean) - float(np.mean(np.log(x)))
    if not s > 0:
        raise DegenerateSample("gamma fit: log-mean gap is not positive")
    k = mean * mean / x.var()
    for _ in range(_GAMMA_MAX_ITER):
        f = math.log(k) - special.digamma(k) - s
        df = 1.0 / k - special.polygamma(1, k)
        step = f / df
        k_new = k - step
        if k_new <= 0:
            k_new = k / 2.0
        if abs(k_new - k) <= _GAMMA_TOL * k:
            k = k_new
            break
        k = k_new
    return k


def fit(family, samples):
    """Maximum-likelihood fit of ``family`` to ``samples``.

    Gaussian variance is the biased (1/n) estimator, clamped to
    ``VARIANCE_FLOOR``.  Gamma uses a method-of-moments start refined by
    Newton's method on the shape equation.
    """
    x = _as_sample(samples)
    if family == GAUSSIAN:
        mean = float(x.mean())
        var = float(np.mean((x - mean) ** 2))
        return GaussianParams(mean, max(var, VARIANCE_FLOOR))
    if family == EXPONENTIAL:
        _require_positive(x, family)
        return ExponentialParams(1.0 / float(x.mean()))
    if family == GAMMA:
        _require_positive(x, family)
        _require_distinct(x, family)
        k = _fit_gamma_shape(x)
        return GammaParams(float(k), float(x.mean() / k))
    if family == INVERSE_GAUSSIAN:
        _require_positive(x, family)
        _require_distinct(x, family)
        mu = float(x.mean())
        denom = float(np.sum(1.0 / x - 1.0 / mu))
        if not denom > 0:
            raise DegenerateSample("inverse-Gaussian fit: zero shape denominator")
        return InverseGaussianParams(mu, x.size / denom)
    raise ValueError(f"unknown family {family!r}")


def log_pdf(params, x):
    """Closed-form log density; ``-inf`` outside the support."""
    x = np.asarray(x, dtype=float)
    fam = params.family
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam == GAUSSIAN:
            out = -0.5 * np.log(2 * np.pi * params.variance) - (x - params.mean) ** 2 / (
                2 * params.variance
            )
        elif fam == EXPONENTIAL:
            out = np.where(x >= 0, math.log(params.rate) - params.rate * x, -np.inf)
        elif fam == GAMMA:
            k, theta = params.shape, params.scale
            safe = np.where(x > 0, x, 1.0)
            val = (
                (k - 1) * np.log(safe)
                - safe / theta
                - special.gammaln(k)
                - k * math.log(theta)
            )
            out = np.where(x > 0, val, -np.inf)
        elif fam == INVERSE_GAUSSIAN:
            mu, lam = params.mean, params.shape
            safe = np.where(x > 0, x, 1.0)
            val = 0.5 * np.log(lam / (2 * np.pi * safe**3)) - lam * (safe - mu) ** 2 / (
                2 * mu * mu * safe
            )
            out = np.where(x > 0, val, -np.inf)
        else:
            raise ValueError(f"unknown family {fam!r}")
    return out[()] if out.ndim == 0 else out


def pdf(params, x):
    return np.exp(log_pdf(params, x))


def cdf(params, x):
    """Cumulative distribution function, clipped to [0, 1]."""
    x = np.asarray(x, dtype=float)
    fam = params.family
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if fam == GAUSSIAN:
            out = special.ndtr((x - params.mean) / math.sqrt(params.variance))
        elif fam == EXPONENTIAL:
            out = np.where(x > 0, -np.expm1(-params.rate * np.maximum(x, 0.0)), 0.0)
        elif fam == GAMMA:
            out = np.where(x > 0, special.gammainc(params.shape, np.maximum(x, 0.0) / params.scale), 0.0)
        elif fam == INVERSE_GAUSSIAN:
            out = _inverse_gaussian_cdf(params.mean, params.shape, x)
        else:
            raise ValueError(f"unknown family {fam!r}")
    out = np.clip(out, 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def _inverse_gaussian_cdf(mu, lam, x):
    # Phi(r (x/mu - 1)) + exp(2 lam / mu) Phi(-r (x/mu + 1)), r = sqrt(lam / x).
    # The second term is evaluated in log space; exp(2 lam / mu) alone overflows.
    pos = x > 0
    safe = np.where(pos, x, 1.0)
    r = np.sqrt(lam / safe)
    first = special.ndtr(r * (safe / mu - 1.0))
    second = np.exp(2.0 * lam / mu + special.log_ndtr(-r * (safe / mu + 1.0)))
    out = np.where(pos, first + second, 0.0)
    return np.where(np.isposinf(x), 1.0, out)


def gaussian_entropy(params):
    """Differential entropy 0.5 * ln(2 pi e variance) in nats."""
    var = max(params.variance, VARIANCE_FLOOR)
    return 0.5 * math.log(2 * math.pi * math.e * var)


def aic(log_likelihood, k):
    if k < 1:
        raise ValueError("parameter count must be at least 1")
    return 2.0 * k - 2.0 * log_likelihood


def log_likelihood(params, samples):
    return float(np.sum(log_pdf(params, np.asarray(samples, dtype=float))))


def select_family(samples, candidates=FAMILIES):
    """Fit every applicable candidate and return the AIC minimizer.

    Returns ``(family, params, table)`` where ``table`` maps each candidate
    to its AIC, or to ``None`` when the sample falls outside the family's
    support.  Ties go to the family with fewer parameters, then to the
    earlier entry of ``FAMILIES``.
    """
    x = _as_sample(samples)
    table = {}
    fitted = {}
    for fam in candidates:
        try:
            params = fit(fam, x)
        except (NonPositiveSample, DegenerateSample):
            table[fam] = None
            continue
        ll = log_likelihood(params, x)
        table[fam] = aic(ll, params.n_params) if np.isfinite(ll) else None
        if table[fam] is not None:
            fitted[fam] = params
    if not fitted:
        raise NoApplicableFamily(f"no candidate in {list(candidates)} fits the sample")
    best = min(
        fitted,
        key=lambda f: (table[f], fitted[f].n_params, FAMILIES.index(f)),
    )
    return best, fitted[best], table
