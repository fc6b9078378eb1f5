import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from atypia import distributions as dist
from atypia.evidence import CategoryVocab, ImageEvidence, NormalTrainingRecord, ObjectEvidence
from atypia.exceptions import DimensionMismatch, InsufficientData, SimplexViolation, VocabMismatch
from atypia.typicality import (
    LocationModel,
    TypicalityModel,
    attribute_reliability,
    cell_ratios,
    in_holdout,
    object_attr_relevance,
    scene_attr_relevance,
)


def _obj(label, V=2, attrs=(0.5,), bbox=(0.25, 0.25, 0.5, 0.5), attr_labels=None):
    probs = np.eye(V)[label]
    return ObjectEvidence(probs, list(attrs), bbox, object_label=label, attr_labels=attr_labels)


def _record(i, scene, objects, J=2, scene_attrs=(0.5,), scene_attr_labels=None):
    return NormalTrainingRecord(
        image_id=f"r{i}",
        scene_probs=np.eye(J)[scene],
        scene_attrs=list(scene_attrs),
        objects=objects,
        scene_label=scene,
        scene_attr_labels=scene_attr_labels,
    )


class TestEvidence:
    def test_simplex_tolerance(self):
        with pytest.raises(SimplexViolation):
            ImageEvidence("x", [0.5, 0.4], [0.1])

    def test_bbox_outside(self):
        with pytest.raises(DimensionMismatch):
            ObjectEvidence([1.0], [0.5], [0.8, 0.0, 0.5, 0.5])

    def test_size_defaults_to_area(self):
        assert ObjectEvidence([1.0], [0.5], [0.0, 0.0, 0.5, 0.4]).relative_size == pytest.approx(0.2)

    def test_size_must_match_area(self):
        with pytest.raises(DimensionMismatch):
            ObjectEvidence([1.0], [0.5], [0.0, 0.0, 0.5, 0.4], relative_size=0.3)

    def test_training_record_needs_labels(self):
        with pytest.raises(VocabMismatch):
            NormalTrainingRecord("x", [1.0], [0.5], [ObjectEvidence([1.0], [0.5], [0, 0, 1, 1])], scene_label=0)

    def test_vocab_round_trip(self):
        v = CategoryVocab(("car", "bed"), ("street", "bedroom"), ("wheel",), ("indoor",))
        assert CategoryVocab.from_dict(v.to_dict()) == v
        assert v.shape == (2, 2, 1, 1)

    def test_duplicate_vocab_names(self):
        with pytest.raises(VocabMismatch):
            CategoryVocab(("a", "a"), ("s",), ("x",), ("y",))


class TestCellRatios:
    def test_full_image(self):
        np.testing.assert_allclose(cell_ratios([0, 0, 1, 1], 2), [1, 1, 1, 1])

    def test_top_left_cell(self):
        np.testing.assert_allclose(cell_ratios([0, 0, 0.5, 0.5], 2), [1, 0, 0, 0])

    def test_centered_box(self):
        np.testing.assert_allclose(cell_ratios([0.25, 0.25, 0.5, 0.5], 2), [0.25] * 4)

    def test_row_major_layout(self):
        # a box in the bottom-left cell lands on row 1, column 0
        np.testing.assert_allclose(cell_ratios([0, 0.5, 0.5, 0.5], 2), [0, 0, 1, 0])

    @given(
        x=st.floats(0, 0.9), y=st.floats(0, 0.9), w=st.floats(0.01, 1), h=st.floats(0.01, 1),
        G=st.integers(1, 12),
    )
    def test_coverage_sums_to_area(self, x, y, w, h, G):
        w, h = min(w, 1 - x), min(h, 1 - y)
        r = cell_ratios([x, y, w, h], G)
        assert np.all((r >= 0) & (r <= 1))
        assert r.sum() / (G * G) == pytest.approx(w * h, abs=1e-9)


class TestRelevanceReliability:
    def test_scene_relevance_unit_variance(self):
        assert scene_attr_relevance(dist.GaussianParams(0, 1)) == pytest.approx(1 / 1.418939, abs=1e-6)

    def test_scene_relevance_floor(self):
        v = 1 / (2 * math.pi * math.e)
        assert scene_attr_relevance(dist.GaussianParams(0, v)) == pytest.approx(20.0)

    def test_scene_relevance_decreases_with_variance(self):
        rel = [scene_attr_relevance(dist.GaussianParams(0, v)) for v in (0.5, 1, 2, 4)]
        assert all(a > b for a, b in zip(rel, rel[1:]))

    def test_object_relevance_counts(self):
        assert object_attr_relevance([1] * 8 + [0] * 2) == pytest.approx(0.8)
        assert object_attr_relevance([np.nan, np.nan]) == 0.0
        assert object_attr_relevance([1, 1, np.nan]) == 1.0

    def test_reliability_extremes(self):
        truth = np.array([0, 1, 0, 1, 1])
        assert attribute_reliability(truth * 0.8 + 0.1, truth) == 1.0
        assert attribute_reliability(1 - (truth * 0.8 + 0.1), truth) == 0.0
        assert attribute_reliability([0.9, 0.2], [1, 1]) == 0.5

    def test_reliability_of_uninformative_classifier(self):
        rng = np.random.default_rng(0)
        truth = rng.integers(0, 2, 4000)
        assert attribute_reliability(rng.random(4000), truth) == pytest.approx(0.5, abs=0.05)

    def test_holdout_is_deterministic(self):
        ids = [f"img-{i}" for i in range(5000)]
        a = [in_holdout(i, 0.2) for i in ids]
        assert a == [in_holdout(i, 0.2) for i in ids]
        assert np.mean(a) == pytest.approx(0.2, abs=0.02)


class TestLocationModel:
    def test_hand_built_two_by_two(self):
        # category 0: two training boxes covering cell 0 fully, one of them
        # also half of cell 1
        ratios = [np.array([[1.0, 0.0, 0.0, 0.0], [1.0, 0.5, 0.0, 0.0]])]
        loc = LocationModel.fit(ratios, 2)
        np.testing.assert_allclose(loc.zero_mass[0], [0.0, 0.5, 1.0, 1.0])
        np.testing.assert_allclose(loc.rate[0, :2], [1.0, 2.0])
        info = loc.cell_information([1.0, 0.0, 0.0, 0.0], 0)
        expected = [
            -math.log(1.0 * 1.0 * math.exp(-1.0)),
            -math.log(0.5),
            0.0,
            0.0,
        ]
        np.testing.assert_allclose(info, expected, atol=1e-12)

    def test_clamp_where_never_seen(self):
        loc = LocationModel.fit([np.array([[1.0, 0, 0, 0]] * 3)], 2)
        assert loc.cell_information([0, 0, 0, 0.7], 0)[3] == 30.0
        assert loc.cell_information([0, 0, 0, 0.7], 0, clamp_max=5.0)[3] == 5.0


def _toy_records(n=40, seed=0):
    """Two scenes, two object categories; object 0 lives in scene 0."""
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        s = i % 2
        c = s
        size = float(np.clip(rng.gamma(8, 0.01 + 0.01 * c), 0.01, 0.6))
        side = math.sqrt(size)
        x = 0.1 if c == 0 else 0.9 - side
        attr = rng.normal(0.7 if c == 0 else 0.3, 0.05)
        recs.append(_record(
            i, s,
            [_obj(c, attrs=(np.clip(attr, 0, 1),), bbox=(x, 0.2, side, side), attr_labels=[int(c == 0)])],
            scene_attrs=(np.clip(rng.normal(0.2 + 0.6 * s, 0.05), 0, 1),),
            scene_attr_labels=[s],
        ))
    return recs


class TestTypicalityModel:
    def test_cooccurrence_smoothing_by_hand(self):
        model = TypicalityModel().fit(_toy_records())
        # 20 objects of category 0 in scene 0, none in scene 1
        np.testing.assert_allclose(model.object_given_scene_[:, 0], [20.5 / 21, 0.5 / 21])
        np.testing.assert_allclose(model.object_given_scene_.sum(axis=0), 1.0)
        assert np.all(model.object_given_scene_ > 0)

    def test_fitted_shapes(self):
        m = TypicalityModel(grid_size=4).fit(_toy_records())
        assert m.object_attr_mean_.shape == (1, 2)
        assert m.scene_relevance_.shape == (1, 2)
        assert m.location_.zero_mass.shape == (2, 16)
        np.testing.assert_allclose(m.scene_prior_, [0.5, 0.5])
        assert m.object_relevance_[0, 0] == 1.0 and m.object_relevance_[0, 1] == 0.0

    def test_constant_responses_get_floored_variance(self):
        recs = _toy_records()
        for r in recs:
            r.scene_attrs = np.array([0.4])
        m = TypicalityModel().fit(recs)
        assert np.all(m.scene_attr_var_ == dist.VARIANCE_FLOOR)

    def test_scene_label_out_of_range(self):
        recs = _toy_records()
        recs[0].scene_label = 5
        with pytest.raises(VocabMismatch):
            TypicalityModel().fit(recs)

    def test_too_few_records_for_a_category(self):
        with pytest.raises(InsufficientData):
            TypicalityModel().fit(_toy_records(n=3))

    def test_retraining_is_bit_identical(self):
        a = TypicalityModel().fit(_toy_records())
        b = TypicalityModel().fit(_toy_records())
        for name in ("object_attr_mean_", "scene_attr_var_", "object_given_scene_", "size_shape_"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
        assert np.array_equal(a.location_.rate, b.location_.rate)

    def test_permutation_invariance(self):
        recs = _toy_records()
        a = TypicalityModel().fit(recs)
        b = TypicalityModel().fit(recs[::-1])
        np.testing.assert_allclose(a.object_reliability_, b.object_reliability_)
        np.testing.assert_allclose(a.object_relevance_, b.object_relevance_)
        np.testing.assert_allclose(a.scene_attr_mean_, b.scene_attr_mean_, rtol=1e-12)

    def test_get_params(self):
        assert TypicalityModel(grid_size=4).get_params()["grid_size"] == 4
