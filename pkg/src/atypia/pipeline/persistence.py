"""One JSON document holding a trained engine.

Floats are written with ``repr`` precision, so a load of a persisted model
reproduces every numeric field bit for bit.  NaN is stored as ``null``.
"""

from __future__ import annotations

import json

import numpy as np

from .. import distributions as dist
from ..calibration import PlattParams
from ..evidence import CategoryVocab
from ..exceptions import AtypiaError, CorruptDocument, UnsupportedVersion
from ..reasoning import ReasoningModel
from ..surprise import REASONS
from ..typicality import LocationModel, TypicalityModel
from .config import EngineConfig
from .engine import Engine
from .io import atomic_write

SCHEMA_VERSION = "1.0.0"
SUPPORTED_VERSIONS = (SCHEMA_VERSION,)

_TYPICALITY_ARRAYS = (
    "object_attr_mean_",
    "object_attr_var_",
    "scene_attr_mean_",
    "scene_attr_var_",
    "object_given_scene_",
    "scene_relevance_",
    "object_relevance_",
    "scene_reliability_",
    "object_reliability_",
    "scene_prior_",
)


def _encode(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        v = float(a)
        return None if np.isnan(v) else v
    return [_encode(x) for x in a]


def _decode(x):
    def walk(v):
        if isinstance(v, list):
            return [walk(u) for u in v]
        return np.nan if v is None else float(v)

    return np.array(walk(x), dtype=float)


def typicality_to_dict(model):
    d = {"params": model.get_params(), "vocab": model.vocab_.to_dict()}
    for name in _TYPICALITY_ARRAYS:
        d[name.rstrip("_")] = _encode(getattr(model, name))
    d["location"] = {
        "grid_size": int(model.location_.grid_size),
        "zero_mass": _encode(model.location_.zero_mass),
        "rate": _encode(model.location_.rate),
    }
    d["size"] = [dist.params_to_record(model.size_params(c)) for c in range(model.size_shape_.size)]
    d["n_training_records"] = int(model.n_training_records_)
    return d


def typicality_from_dict(d):
    model = TypicalityModel(**d["params"])
    model.vocab_ = CategoryVocab.from_dict(d["vocab"])
    for name in _TYPICALITY_ARRAYS:
        setattr(model, name, _decode(d[name.rstrip("_")]))
    loc = d["location"]
    model.location_ = LocationModel(int(loc["grid_size"]), _decode(loc["zero_mass"]), _decode(loc["rate"]))
    sizes = [dist.params_from_record(r) for r in d["size"]]
    if any(not isinstance(p, dist.GammaParams) for p in sizes):
        raise CorruptDocument("size models must be gamma distributions")
    model.size_shape_ = np.array([p.shape for p in sizes], dtype=float)
    model.size_scale_ = np.array([p.scale for p in sizes], dtype=float)
    model.n_training_records_ = int(d["n_training_records"])
    _check_shapes(model)
    return model


def _check_shapes(model):
    V, J, n, m = model.vocab_.shape
    G2 = model.location_.grid_size ** 2
    expected = {
        "object_attr_mean_": (n, V),
        "object_attr_var_": (n, V),
        "scene_attr_mean_": (m, J),
        "scene_attr_var_": (m, J),
        "object_given_scene_": (V, J),
        "scene_relevance_": (m, J),
        "object_relevance_": (n, V),
        "scene_reliability_": (m,),
        "object_reliability_": (n,),
        "scene_prior_": (J,),
        "size_shape_": (V,),
    }
    for name, shape in expected.items():
        if getattr(model, name).shape != shape:
            raise CorruptDocument(f"{name.rstrip('_')} has shape {getattr(model, name).shape}, expected {shape}")
    if model.location_.zero_mass.shape != (V, G2):
        raise CorruptDocument("location model does not match the vocabulary")


def reasoning_to_dict(model):
    return {
        "threshold": float(model.threshold),
        "shift_eps": float(model.shift_eps),
        "shift_method": model.shift_method,
        "reasons": {
            name: {
                "shift": float(model.shift_[r]),
                "prior": dist.params_to_record(model.priors_[r]),
                "aic_report": model.aic_report_[name],
            }
            for r, name in enumerate(REASONS)
        },
    }


def reasoning_from_dict(d):
    model = ReasoningModel(threshold=float(d["threshold"]), shift_eps=float(d["shift_eps"]),
                           shift_method=d["shift_method"])
    reasons = d["reasons"]
    model.shift_ = np.array([float(reasons[r]["shift"]) for r in REASONS])
    model.priors_ = [dist.params_from_record(reasons[r]["prior"]) for r in REASONS]
    if any(not isinstance(p, dist.InverseGaussianParams) for p in model.priors_):
        raise CorruptDocument("priors must be inverse-Gaussian distributions")
    model.aic_report_ = {
        r: {fam: (None if v is None else float(v)) for fam, v in reasons[r]["aic_report"].items()}
        for r in REASONS
    }
    return model


def engine_to_document(engine, calibration=None):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": engine.config.to_dict(),
        "typicality": typicality_to_dict(engine.typicality),
        "reasoning": reasoning_to_dict(engine.reasoning),
    }
    if calibration:
        doc["calibration"] = {
            key: [p.to_dict() for p in values] for key, values in calibration.items()
        }
    return doc


def engine_from_document(doc):
    """Rebuild an :class:`Engine`; the second value is the calibration map, if any."""
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise CorruptDocument("model document has no schema_version")
    if doc["schema_version"] not in SUPPORTED_VERSIONS:
        raise UnsupportedVersion(
            f"schema_version {doc['schema_version']!r} is not one of {list(SUPPORTED_VERSIONS)}"
        )
    try:
        config = EngineConfig.from_dict(doc["config"])
        engine = Engine(config, typicality_from_dict(doc["typicality"]), reasoning_from_dict(doc["reasoning"]))
        calibration = {
            key: [PlattParams.from_dict(p) for p in values]
            for key, values in doc.get("calibration", {}).items()
        }
    except CorruptDocument:
        raise
    except (AtypiaError, KeyError, TypeError, ValueError, AttributeError, IndexError) as exc:
        raise CorruptDocument(f"malformed model document: {exc}") from None
    return engine, calibration


def dumps_model(engine, calibration=None):
    return json.dumps(engine_to_document(engine, calibration), allow_nan=False, indent=1) + "\n"


def loads_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptDocument(f"model document is not valid JSON: {exc.msg}") from None
    return engine_from_document(doc)


def save_model(path, engine, calibration=None):
    with atomic_write(path) as fh:
        fh.write(dumps_model(engine, calibration))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
