import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from odcmri.image_model import LabelMap
from odcmri.metrics import (
    SliceScores,
    UndefinedMetricError,
    build_confusion,
    generalization_index,
    kappa,
    kappa_spread,
    majority_mapping,
    overall_accuracy,
    scores_csv,
    volume_fractions,
)


def lm(rows, m):
    return LabelMap(np.array(rows), m)


def test_confusion_orientation():
    pred = lm([[0, 0, 1]], 2)
    truth = lm([[0, 1, 1]], 2)
    cm = build_confusion(pred, truth, 2)
    # row = predicted, column = truth
    np.testing.assert_array_equal(cm, [[1, 1], [0, 1]])
    assert cm.sum() == 3
    np.testing.assert_array_equal(build_confusion(truth, truth, 2), np.diag([1, 2]))
    only0 = build_confusion(lm([[0, 0, 0]], 2), truth, 2)
    assert only0[1].sum() == 0
    with pytest.raises(ValueError):
        build_confusion(lm([[0, 1]], 2), truth, 2)


def test_accuracy_and_kappa_examples():
    cm = np.array([[2, 1], [0, 3]])
    assert overall_accuracy(cm) == pytest.approx(5 / 6, abs=1e-12)
    assert kappa(cm) == pytest.approx(2 / 3, abs=1e-12)
    assert kappa(np.array([[1, 1], [1, 1]])) == pytest.approx(0.0, abs=1e-12)
    assert overall_accuracy(np.diag([3, 4])) == kappa(np.diag([3, 4])) == 1.0
    assert overall_accuracy(np.array([[0, 2], [5, 0]])) == 0.0


def test_metric_errors():
    with pytest.raises(UndefinedMetricError):
        overall_accuracy(np.zeros((2, 2)))
    with pytest.raises(UndefinedMetricError):
        kappa(np.array([[5, 0], [0, 0]]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.int64, (3, 3), elements=st.integers(0, 20)).filter(lambda a: a.sum() > 0),
       st.permutations([0, 1, 2]))
def test_invariant_under_label_permutation(cm, perm):
    perm = np.array(perm)
    permuted = cm[np.ix_(perm, perm)]
    assert overall_accuracy(permuted) == pytest.approx(overall_accuracy(cm))
    rho = (cm.sum(1) * cm.sum(0)).sum() / cm.sum() ** 2
    if rho < 1:
        assert kappa(permuted) == pytest.approx(kappa(cm))
        assert kappa(cm) <= overall_accuracy(cm) + 1e-12


def test_kappa_zero_under_independence():
    rows, cols = np.array([1, 2, 3]), np.array([2, 2, 1])
    assert kappa(np.outer(rows, cols)) == pytest.approx(0.0, abs=1e-12)


def test_volume_fractions():
    one = volume_fractions(lm([[2, 2], [2, 2]], 3), 3, fluid=0, matter=2)
    assert one.fractions == (0.0, 0.0, 100.0)
    split = lm(np.repeat([0, 1, 2, 2], 25).reshape(10, 10), 3)
    v = volume_fractions(split, 3, fluid=0, matter=2)
    assert v.fractions == pytest.approx((25, 25, 50))
    ratio = volume_fractions(lm([[1, 1, 2, 2, 2, 2]], 3), 3, fluid=1, matter=2)
    assert ratio.ratio == 0.5
    with pytest.raises(UndefinedMetricError):
        volume_fractions(lm([[1, 1]], 3), 3, fluid=1, matter=2)


def test_volume_fractions_over_slices_and_roles():
    maps = [lm([[0, 1], [2, 3]], 4), lm([[1, 1], [3, 3]], 4)]
    v = volume_fractions(maps, 4, fluid=[1], matter=[2, 3])
    assert sum(v.fractions) == pytest.approx(100.0, abs=1e-9)
    assert v.ratio == pytest.approx(3 / 4)


def test_generalization_index():
    assert generalization_index([0.9, 0.9, 0.9]) == 1.0
    assert generalization_index([0.8, 1.0, 0.9]) == pytest.approx(1 - 0.2 / 0.9)
    assert generalization_index([0.5, 0.5]) == 1.0
    assert generalization_index([0.01, 1.0]) == 0.0
    assert kappa_spread([0.8, 1.0, 0.9]) == pytest.approx((0.2, 0.9))
    with pytest.raises(UndefinedMetricError):
        generalization_index([-0.1, 0.0])
    with pytest.raises(ValueError):
        generalization_index([0.9])


def test_majority_mapping():
    pred = lm([[0, 0, 1, 2, 2, 3]], 4)
    truth = lm([[1, 1, 0, 2, 2, 2]], 3)
    assert majority_mapping(pred, truth) == {0: 1, 1: 0, 2: 2, 3: 2}


def test_scores_csv():
    scores = SliceScores()
    scores.add(np.array([[2, 1], [0, 3]]))
    scores.add(np.diag([1, 1]))
    lines = scores_csv(scores).splitlines()
    assert lines[0] == "s,phi,kappa" and lines[2] == "1,1.0,1.0"
