import io
import json
import os

import numpy as np
import pytest

from atypia.calibration import PlattParams, apply_platt
from atypia.evidence import CategoryVocab, ImageEvidence, NormalTrainingRecord
from atypia.exceptions import DimensionMismatch, ParseError, SimplexViolation, VocabMismatch
from atypia.pipeline.io import (
    atomic_write,
    dumps_line,
    evidence_to_record,
    parse_evidence,
    read_evidence,
    read_jsonl,
    write_jsonl,
)


def _line(**overrides):
    rec = {
        "image_id": "img-1",
        "scene_probs": [0.5, 0.5],
        "scene_attrs": [0.2, 0.9],
        "objects": [{"object_probs": [0.7, 0.2, 0.1], "object_attrs": [0.4], "bbox": [0.1, 0.1, 0.2, 0.3]}],
    }
    rec.update(overrides)
    return json.dumps(rec)


def _vocab():
    return CategoryVocab(("car", "bed", "cow"), ("street", "farm"), ("wheel",), ("indoor", "green"))


class TestParse:
    def test_basic(self):
        [ev] = parse_evidence([_line()])
        assert isinstance(ev, ImageEvidence) and not isinstance(ev, NormalTrainingRecord)
        assert ev.objects[0].relative_size == pytest.approx(0.06)

    def test_small_drift_is_renormalized(self):
        [ev] = parse_evidence([_line(scene_probs=[0.5000005, 0.5])])
        assert ev.scene_probs.sum() == pytest.approx(1.0, abs=1e-15)

    def test_large_drift_rejected(self):
        with pytest.raises(SimplexViolation):
            parse_evidence([_line(scene_probs=[0.4, 0.4])])

    def test_negative_probability(self):
        with pytest.raises(SimplexViolation):
            parse_evidence([_line(scene_probs=[1.1, -0.1])])

    def test_empty_stream(self):
        assert parse_evidence([]) == []
        assert parse_evidence(["\n", "  \n"]) == []

    def test_parse_error_names_line_and_field(self):
        bad = json.loads(_line())
        del bad["objects"][0]["bbox"]
        with pytest.raises(ParseError) as info:
            parse_evidence(["", _line(), json.dumps(bad)])
        assert info.value.line == 3
        assert info.value.field == "objects[0].bbox"
        assert info.value.to_record()["field"] == "objects[0].bbox"

    def test_invalid_json(self):
        with pytest.raises(ParseError) as info:
            parse_evidence([_line(), "{not json"])
        assert info.value.line == 2

    def test_bad_types(self):
        with pytest.raises(ParseError):
            parse_evidence([_line(image_id="")])
        with pytest.raises(ParseError):
            parse_evidence([_line(scene_attrs=["a", 1])])
        with pytest.raises(ParseError):
            parse_evidence([_line(objects={})])

    def test_bbox_outside_image(self):
        with pytest.raises(ParseError) as info:
            parse_evidence([_line(objects=[{"object_probs": [1, 0, 0], "object_attrs": [0.4],
                                            "bbox": [0.9, 0.1, 0.2, 0.3]}])])
        assert info.value.field == "objects[0]"

    def test_labels_by_name(self):
        obj = {"object_probs": [0.7, 0.2, 0.1], "object_attrs": [0.4], "bbox": [0.1, 0.1, 0.2, 0.3],
               "object_label": "cow"}
        [ev] = parse_evidence([_line(scene_label="farm", objects=[obj])], vocab=_vocab())
        assert isinstance(ev, NormalTrainingRecord)
        assert ev.scene_label == 1 and ev.objects[0].object_label == 2

    def test_unknown_name(self):
        with pytest.raises(VocabMismatch):
            parse_evidence([_line(scene_label="beach")], vocab=_vocab())

    def test_vocab_length_check(self):
        with pytest.raises(DimensionMismatch):
            parse_evidence([_line(scene_attrs=[0.1])], vocab=_vocab())

    def test_raw_scores_are_calibrated(self):
        platt = {"scene_attributes": [PlattParams(-2.0, 1.0), PlattParams(-1.0, 0.0)],
                 "object_attributes": [{"slope": -1.0, "intercept": 0.5}]}
        rec = json.loads(_line())
        del rec["scene_attrs"]
        rec["scene_attr_scores"] = [2.0, 0.0]
        [ev] = parse_evidence([json.dumps(rec)], calibration=platt)
        np.testing.assert_allclose(ev.scene_attrs, [0.9526, 0.5], atol=1e-4)
        assert ev.scene_attrs[0] == apply_platt(PlattParams(-2.0, 1.0), 2.0)

    def test_raw_scores_without_calibration(self):
        rec = json.loads(_line())
        del rec["scene_attrs"]
        rec["scene_attr_scores"] = [2.0, 0.0]
        with pytest.raises(ParseError) as info:
            parse_evidence([json.dumps(rec)])
        assert info.value.field == "scene_attr_scores"


class TestRoundTrip:
    def test_serialization_is_lossless(self, tmp_path):
        rec = json.loads(_line(scene_probs=[0.1 + 0.2, 0.7 - 1e-16], scene_label=0, scene_attr_labels=[1, None]))
        rec["objects"][0]["object_label"] = 1
        rec["objects"][0]["attr_labels"] = [0]
        [ev] = parse_evidence([json.dumps(rec)])
        path = tmp_path / "ev.jsonl"
        write_jsonl(path, [evidence_to_record(ev)])
        [back] = read_evidence(path)
        assert evidence_to_record(back) == evidence_to_record(ev)
        np.testing.assert_array_equal(back.scene_probs, ev.scene_probs)
        assert back.scene_attr_labels is not None

    def test_dumps_line_rejects_nan(self):
        with pytest.raises(ValueError):
            dumps_line({"x": float("nan")})

    def test_read_jsonl(self, tmp_path):
        path = tmp_path / "rows.jsonl"
        path.write_text('{"a": 1}\n\n{"a": 2}\n')
        assert read_jsonl(path) == [{"a": 1}, {"a": 2}]
        path.write_text('{"a": 1}\n{"a": \n')
        with pytest.raises(ParseError):
            read_jsonl(path)


class TestAtomicWrite:
    def test_replaces_on_success(self, tmp_path):
        path = tmp_path / "out.txt"
        path.write_text("old")
        with atomic_write(path) as fh:
            fh.write("new")
        assert path.read_text() == "new"
        assert os.listdir(tmp_path) == ["out.txt"]

    def test_leaves_nothing_on_failure(self, tmp_path):
        path = tmp_path / "out.txt"
        with pytest.raises(RuntimeError):
            with atomic_write(path) as fh:
                fh.write("partial")
                raise RuntimeError("boom")
        assert os.listdir(tmp_path) == []

    def test_keeps_old_file_on_failure(self, tmp_path):
        path = tmp_path / "out.txt"
        path.write_text("old")
        with pytest.raises(RuntimeError):
            with atomic_write(path) as fh:
                fh.write("partial")
                raise RuntimeError("boom")
        assert path.read_text() == "old"


def test_parse_accepts_text_stream():
    stream = io.StringIO(_line() + "\n" + _line(image_id="img-2") + "\n")
    assert [ev.image_id for ev in parse_evidence(stream)] == ["img-1", "img-2"]
