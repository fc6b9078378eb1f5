"""Line-delimited JSON records: evidence in, score records out.

One image per line.  An evidence line looks like::

    {"image_id": "img-1",
     "scene_probs": [...], "scene_attrs": [...],
     "objects": [{"object_probs": [...], "object_attrs": [...],
                  "bbox": [x, y, w, h], "relative_size": 0.04}],
     "scene_label": 2, "scene_attr_labels": [1, 0, null, ...]}

Training lines add ``scene_label`` and per-object ``object_label`` (an index
or a category name) plus optional 0/1/null attribute annotations.  Instead
of ``scene_attrs`` / ``object_attrs`` a line may carry uncalibrated
``scene_attr_scores`` / ``object_attr_scores``; these are mapped through the
matching Platt parameters passed to :func:`parse_evidence`.
"""

from __future__ import annotations

import contextlib
import json
import os
import tempfile

import numpy as np

from ..calibration import PlattParams, apply_platt
from ..evidence import ImageEvidence, NormalTrainingRecord, ObjectEvidence, check_against_vocab
from ..exceptions import InputError, ParseError, SimplexViolation, VocabMismatch

RENORMALIZE_TOL = 1e-6
# sums this close to 1 are rounding noise; leaving them alone keeps re-reads lossless
ROUNDING_TOL = 1e-12


def _renormalize(values, line, name):
    p = np.asarray(values, dtype=float)
    if np.any(p < 0):
        raise SimplexViolation(f"line {line}: {name} has negative entries")
    total = p.sum()
    if abs(total - 1.0) > RENORMALIZE_TOL:
        raise SimplexViolation(f"line {line}: {name} sums to {total:.9g}")
    if abs(total - 1.0) <= ROUNDING_TOL:
        return p
    return p / total


def _vector(obj, key, line, field=None, required=True):
    field = field or key
    if key not in obj or obj[key] is None:
        if required:
            raise ParseError(line, field, "missing")
        return None
    value = obj[key]
    if not isinstance(value, list) or not value:
        raise ParseError(line, field, "expected a non-empty list of numbers")
    try:
        out = np.array([float(v) for v in value], dtype=float)
    except (TypeError, ValueError):
        raise ParseError(line, field, "expected a list of numbers") from None
    if not np.all(np.isfinite(out)):
        raise ParseError(line, field, "non-finite value")
    return out


def _annotations(obj, key, line, field):
    value = obj.get(key)
    if value is None:
        return None
    if not isinstance(value, list):
        raise ParseError(line, field, "expected a list of 0, 1 or null")
    for v in value:
        if v is not None and v not in (0, 1):
            raise ParseError(line, field, f"annotation {v!r} is not 0, 1 or null")
    return value


def _label(value, names, line, field):
    if value is None:
        return None
    if isinstance(value, bool):
        raise ParseError(line, field, "expected an index or a category name")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        if names is None:
            raise ParseError(line, field, "category names need a vocabulary")
        try:
            return names.index(value)
        except ValueError:
            raise VocabMismatch(f"line {line}: unknown category {value!r} in {field}") from None
    raise ParseError(line, field, "expected an index or a category name")


def _calibrated(obj, key, raw_key, line, field, platt):
    values = _vector(obj, key, line, field, required=False)
    if values is not None:
        return values
    raw = _vector(obj, raw_key, line, field.replace(key, raw_key), required=False)
    if raw is None:
        raise ParseError(line, field, "missing")
    if platt is None:
        raise ParseError(line, field.replace(key, raw_key), "raw scores need calibration parameters")
    if len(platt) != raw.size:
        raise ParseError(line, field.replace(key, raw_key),
                         f"{raw.size} raw scores but {len(platt)} calibration maps")
    return np.array([apply_platt(p, s) for p, s in zip(platt, raw)], dtype=float)


def parse_record(obj, line=1, vocab=None, calibration=None):
    """Build an evidence object from one decoded JSON line."""
    if not isinstance(obj, dict):
        raise ParseError(line, "record", "expected a JSON object")
    calibration = calibration or {}
    obj_names = list(vocab.object_categories) if vocab is not None else None
    scene_names = list(vocab.scene_categories) if vocab is not None else None

    image_id = obj.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise ParseError(line, "image_id", "expected a non-empty string")

    objects_raw = obj.get("objects", [])
    if not isinstance(objects_raw, list):
        raise ParseError(line, "objects", "expected a list")
    objects = []
    for k, o in enumerate(objects_raw):
        where = f"objects[{k}]"
        if not isinstance(o, dict):
            raise ParseError(line, where, "expected a JSON object")
        probs = _renormalize(_vector(o, "object_probs", line, f"{where}.object_probs"), line,
                             f"{where}.object_probs")
        attrs = _calibrated(o, "object_attrs", "object_attr_scores", line, f"{where}.object_attrs",
                            calibration.get("object_attributes"))
        bbox = _vector(o, "bbox", line, f"{where}.bbox")
        size = o.get("relative_size")
        if size is not None and (isinstance(size, bool) or not isinstance(size, (int, float))):
            raise ParseError(line, f"{where}.relative_size", "expected a number")
        try:
            objects.append(ObjectEvidence(
                object_probs=probs,
                object_attrs=attrs,
                bbox=bbox,
                relative_size=size,
                object_label=_label(o.get("object_label"), obj_names, line, f"{where}.object_label"),
                attr_labels=_annotations(o, "attr_labels", line, f"{where}.attr_labels"),
                cell_ratios=_vector(o, "cell_ratios", line, f"{where}.cell_ratios", required=False),
            ))
        except (ParseError, SimplexViolation, VocabMismatch):
            raise
        except InputError as exc:
            raise ParseError(line, where, str(exc)) from None

    scene_probs = _renormalize(_vector(obj, "scene_probs", line), line, "scene_probs")
    scene_attrs = _calibrated(obj, "scene_attrs", "scene_attr_scores", line, "scene_attrs",
                              calibration.get("scene_attributes"))
    fields = dict(
        image_id=image_id,
        scene_probs=scene_probs,
        scene_attrs=scene_attrs,
        objects=objects,
        scene_label=_label(obj.get("scene_label"), scene_names, line, "scene_label"),
        scene_attr_labels=_annotations(obj, "scene_attr_labels", line, "scene_attr_labels"),
    )
    labeled = fields["scene_label"] is not None and all(o.object_label is not None for o in objects)
    cls = NormalTrainingRecord if labeled else ImageEvidence
    try:
        ev = cls(**fields)
    except (SimplexViolation, VocabMismatch):
        raise
    except InputError as exc:
        raise ParseError(line, "record", str(exc)) from None
    if vocab is not None:
        check_against_vocab(ev, vocab)
    return ev


def parse_evidence(stream, vocab=None, calibration=None):
    """Parse an iterable of JSON lines into evidence objects.

    Blank lines are skipped.  ``calibration`` maps ``"scene_attributes"`` and
    ``"object_attributes"`` to lists of :class:`PlattParams` (or their dict
    form), one per attribute.  Labeled lines become
    :class:`NormalTrainingRecord` instances.
    """
    calibration = _load_calibration(calibration)
    out = []
    for line_no, text in enumerate(stream, start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(line_no, "record", f"invalid JSON: {exc.msg}") from None
        out.append(parse_record(obj, line_no, vocab, calibration))
    return out


def _load_calibration(calibration):
    if not calibration:
        return {}
    out = {}
    for key in ("scene_attributes", "object_attributes"):
        if calibration.get(key) is not None:
            out[key] = [p if isinstance(p, PlattParams) else PlattParams.from_dict(p)
                        for p in calibration[key]]
    return out


def read_evidence(path, vocab=None, calibration=None):
    with open(path, encoding="utf-8") as fh:
        return parse_evidence(fh, vocab, calibration)


def _floats(a):
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def _maybe_labels(a):
    if a is None:
        return None
    return [None if np.isnan(v) else int(v) for v in a]


def evidence_to_record(ev):
    """Inverse of :func:`parse_record` for already-calibrated evidence."""
    objects = []
    for o in ev.objects:
        rec = {
            "object_probs": _floats(o.object_probs),
            "object_attrs": _floats(o.object_attrs),
            "bbox": _floats(o.bbox),
            "relative_size": float(o.relative_size),
        }
        if o.object_label is not None:
            rec["object_label"] = int(o.object_label)
        if o.attr_labels is not None:
            rec["attr_labels"] = _maybe_labels(o.attr_labels)
        if o.cell_ratios is not None:
            rec["cell_ratios"] = _floats(o.cell_ratios)
        objects.append(rec)
    rec = {
        "image_id": ev.image_id,
        "scene_probs": _floats(ev.scene_probs),
        "scene_attrs": _floats(ev.scene_attrs),
        "objects": objects,
    }
    if ev.scene_label is not None:
        rec["scene_label"] = int(ev.scene_label)
    if ev.scene_attr_labels is not None:
        rec["scene_attr_labels"] = _maybe_labels(ev.scene_attr_labels)
    return rec


def dumps_line(obj):
    return json.dumps(obj, allow_nan=False, separators=(",", ":")) + "\n"


def read_jsonl(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                rows.append(json.loads(text))
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, "record", f"invalid JSON: {exc.msg}") from None
    return rows


@contextlib.contextmanager
def atomic_write(path):
    """Write to a sibling temporary file and move it into place on success.

    Nothing is left behind at ``path`` when the body raises.
    """
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_jsonl(path, rows):
    with atomic_write(path) as fh:
        for row in rows:
            fh.write(dumps_line(row))


def write_json(path, obj):
    with atomic_write(path) as fh:
        json.dump(obj, fh, allow_nan=False, indent=1)
        fh.write("\n")
