"""Classification, metrics, and analysis matrices."""
from __future__ import annotations

import numpy as np
import pytest

from conftest import make_record, make_set
from protoevolve.anchors import PrototypeSet
from protoevolve.inference import (
    classify,
    descriptor_alignment,
    evaluate,
    token_correlation,
)
from protoevolve.store import NUM_GRADES


def axis_prototypes(n_s=1, d_v=8):
    """Grade c's prototype points along axis c: orthogonal, forced winners."""
    mats = np.zeros((NUM_GRADES, n_s, d_v))
    for c in range(NUM_GRADES):
        mats[c, :, c] = 1.0
    return PrototypeSet(stage="dpe", matrices=mats)


def test_forced_winner():
    protos = axis_prototypes()
    query = make_record("q", None, protos.matrices[2].copy())
    pred = classify(query, protos)
    assert pred.grade == 2
    assert pred.scores[2] == pytest.approx(1.0)


def test_positive_scaling_keeps_prediction(rng):
    protos = PrototypeSet(stage="dpe", matrices=rng.normal(size=(NUM_GRADES, 3, 6)))
    tokens = rng.normal(size=(3, 6))
    base = classify(make_record("q", None, tokens), protos)
    scaled = classify(make_record("q", None, tokens * 3.0), protos)
    assert scaled.grade == base.grade
    np.testing.assert_allclose(scaled.scores, base.scores, atol=1e-12)


def test_exact_tie_goes_to_lowest_grade():
    mats = np.zeros((NUM_GRADES, 1, 6))
    mats[1, 0, 0] = 1.0
    mats[3, 0, 1] = 1.0
    mats[0, 0, 2] = 1.0
    mats[2, 0, 3] = 1.0
    mats[4, 0, 4] = 1.0
    protos = PrototypeSet(stage="dpe", matrices=mats)
    # query equidistant from grades 1 and 3, orthogonal to the rest
    query = make_record("q", None, np.array([[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]]))
    assert classify(query, protos).grade == 1


def test_evaluate_perfect_case():
    protos = axis_prototypes()
    records = [
        make_record(f"r{c}", c, protos.matrices[c].copy()) for c in range(NUM_GRADES)
    ]
    eset = make_set(records, n_s=1, d_v=8)
    report = evaluate(eset, protos)
    assert report.accuracy == 1.0
    assert report.macro_f1 == 1.0
    np.testing.assert_array_equal(np.diag(report.confusion), np.ones(NUM_GRADES))


def test_evaluate_two_class_toy_oracle():
    """Truth (0,1,1,1), predictions (0,0,1,1): accuracy 0.75, macro-F1 22/75."""
    protos = axis_prototypes()
    records = [
        make_record("a", 0, protos.matrices[0].copy()),
        make_record("b", 1, protos.matrices[0].copy()),
        make_record("c", 1, protos.matrices[1].copy()),
        make_record("d", 1, protos.matrices[1].copy()),
    ]
    eset = make_set(records, n_s=1, d_v=8)
    report = evaluate(eset, protos)
    assert report.accuracy == pytest.approx(0.75)
    assert report.f1[0] == pytest.approx(2.0 / 3.0)
    assert report.f1[1] == pytest.approx(4.0 / 5.0)
    np.testing.assert_array_equal(report.f1[2:], np.zeros(3))
    assert report.macro_f1 == pytest.approx((2.0 / 3.0 + 4.0 / 5.0) / 5.0)
    assert report.confusion.sum() == 4


def test_confusion_counts_partition_the_set(rng):
    protos = PrototypeSet(stage="dpe", matrices=rng.normal(size=(NUM_GRADES, 2, 5)))
    records = [
        make_record(f"r{k}", int(rng.integers(NUM_GRADES)), rng.normal(size=(2, 5)))
        for k in range(37)
    ]
    report = evaluate(make_set(records, n_s=2, d_v=5), protos)
    assert report.confusion.sum() == 37
    for c in range(NUM_GRADES):
        assert report.confusion[c].sum() == sum(1 for r in records if r.grade == c)


def test_evaluate_rejects_unlabeled_and_empty(rng):
    protos = axis_prototypes()
    with pytest.raises(ValueError, match="labeled"):
        evaluate(make_set([], n_s=1, d_v=8), protos)
    records = [make_record("q", None, protos.matrices[0].copy())]
    with pytest.raises(ValueError, match="labeled"):
        evaluate(make_set(records, n_s=1, d_v=8), protos)


class TestTokenCorrelation:
    def test_identical_rows_give_all_ones(self):
        mats = np.tile(np.array([1.0, 2.0, -1.0]), (NUM_GRADES, 4, 1))
        corr = token_correlation(PrototypeSet(stage="base", matrices=mats))
        np.testing.assert_allclose(corr, np.ones((NUM_GRADES, 4, 4)), atol=1e-12)

    def test_orthogonal_rows_give_identity(self):
        mats = np.zeros((NUM_GRADES, 3, 5))
        for c in range(NUM_GRADES):
            mats[c] = np.eye(3, 5) * (c + 1.0)
        corr = token_correlation(PrototypeSet(stage="dpe", matrices=mats))
        for c in range(NUM_GRADES):
            np.testing.assert_allclose(corr[c], np.eye(3), atol=1e-12)

    def test_symmetric_unit_diagonal(self, rng):
        mats = rng.normal(size=(NUM_GRADES, 6, 9))
        corr = token_correlation(PrototypeSet(stage="psi", matrices=mats))
        np.testing.assert_allclose(corr, corr.transpose(0, 2, 1), atol=1e-12)
        for c in range(NUM_GRADES):
            np.testing.assert_allclose(np.diag(corr[c]), np.ones(6), atol=1e-12)

    def test_zero_row_is_error(self):
        mats = np.ones((NUM_GRADES, 2, 3))
        mats[1, 0] = 0.0
        with pytest.raises(ValueError, match="zero-norm"):
            token_correlation(PrototypeSet(stage="base", matrices=mats))


class TestDescriptorAlignment:
    def test_aligned_and_orthogonal_descriptors(self, rng):
        protos = axis_prototypes(n_s=2, d_v=8)
        wp = rng.normal(size=(8, 4))
        query = make_record("q", None, protos.matrices[3].copy())
        g = protos.matrices[3, 0, :] @ wp
        aligned = g * 2.0
        orthogonal = np.zeros(4)
        orthogonal[np.argmin(np.abs(g))] = 1.0
        orthogonal -= g * (g @ orthogonal) / (g @ g)
        result = descriptor_alignment(query, [aligned, orthogonal], protos, wp)
        assert result.grade == 3
        assert result.similarities[0] == pytest.approx(1.0)
        assert result.similarities[1] == pytest.approx(0.0, abs=1e-12)

    def test_values_bounded(self, rng):
        protos = PrototypeSet(stage="dpe", matrices=rng.normal(size=(NUM_GRADES, 2, 6)))
        wp = rng.normal(size=(6, 5))
        query = make_record("q", None, rng.normal(size=(2, 6)))
        descriptors = [rng.normal(size=5) for _ in range(5)]
        result = descriptor_alignment(query, descriptors, protos, wp)
        assert result.similarities.shape == (5,)
        assert np.all(np.abs(result.similarities) <= 1.0 + 1e-12)

    def test_zero_descriptor_is_error(self, rng):
        protos = axis_prototypes()
        query = make_record("q", None, protos.matrices[0].copy())
        with pytest.raises(ValueError, match="zero"):
            descriptor_alignment(query, [np.zeros(4)], protos, np.ones((8, 4)))
