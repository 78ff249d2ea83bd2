import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import brute_metrics
from facade_revise import metrics


def test_hand_example():
    hist = np.array([[1, 1], [0, 2]])
    cm = metrics.ConfusionMatrix(2, hist)
    assert metrics.accuracy(cm) == pytest.approx(0.75)
    assert metrics.miou(cm) == pytest.approx(0.58333, abs=1e-5)
    assert metrics.class_average(cm) == pytest.approx(0.83333, abs=1e-5)
    assert metrics.precision_recall_f1(cm, 1)[2] == pytest.approx(0.8)


def test_hand_example_from_masks():
    gt = np.array([[0, 0], [1, 1]])
    pred = np.array([[0, 1], [1, 1]])
    cm = metrics.confusion_matrix(gt, pred, 2)
    assert cm.counts.tolist() == [[1, 1], [0, 2]]


@pytest.mark.parametrize("seed", range(10))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, 9, (32, 32))
    pred = np.where(rng.random((32, 32)) < 0.6, gt, rng.integers(0, 9, (32, 32)))
    cm = metrics.confusion_matrix(gt, pred, 9)
    acc, ca, f1, mi = brute_metrics(gt, pred, 9)
    assert abs(metrics.accuracy(cm) - acc) <= 1e-12
    assert abs(metrics.class_average(cm) - ca) <= 1e-12
    assert abs(metrics.f1_macro(cm) - f1) <= 1e-12
    assert abs(metrics.miou(cm) - mi) <= 1e-12


def test_absent_class_excluded():
    gt = np.array([0, 0, 2, 2])
    pred = np.array([0, 2, 2, 2])
    cm = metrics.confusion_matrix(gt, pred, 3)
    assert np.isnan(metrics.iou_per_class(cm)[1])
    assert metrics.precision_recall_f1(cm, 1) == (None, None, None)
    assert metrics.miou(cm) == pytest.approx((0.5 + 2 / 3) / 2)


def test_missed_class_has_zero_f1():
    cm = metrics.confusion_matrix(np.array([0, 1]), np.array([0, 0]), 2)
    p, r, f = metrics.precision_recall_f1(cm, 1)
    assert p is None and r == 0.0 and f == 0.0


def test_permuting_labels_keeps_scores():
    rng = np.random.default_rng(11)
    gt = rng.integers(0, 5, (20, 20))
    pred = rng.integers(0, 5, (20, 20))
    perm = rng.permutation(5)
    a = metrics.confusion_matrix(gt, pred, 5)
    b = metrics.confusion_matrix(perm[gt], perm[pred], 5)
    for f in (metrics.accuracy, metrics.miou, metrics.f1_macro, metrics.class_average):
        assert f(a) == pytest.approx(f(b), abs=1e-12)


def test_accumulate_is_additive():
    rng = np.random.default_rng(2)
    g1, p1, g2, p2 = (rng.integers(0, 4, (8, 8)) for _ in range(4))
    joint = metrics.confusion_matrix(np.stack([g1, g2]), np.stack([p1, p2]), 4)
    summed = metrics.confusion_matrix(g1, p1, 4) + metrics.confusion_matrix(g2, p2, 4)
    assert np.array_equal(joint.counts, summed.counts)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60))
def test_iou_below_precision_and_recall(pairs):
    gt = np.array([g for g, _ in pairs])
    pred = np.array([p for _, p in pairs])
    cm = metrics.confusion_matrix(gt, pred, 4)
    iou = metrics.iou_per_class(cm)
    for k in range(4):
        p, r, _ = metrics.precision_recall_f1(cm, k)
        if p is not None:
            assert iou[k] <= p + 1e-12
        if r is not None:
            assert iou[k] <= r + 1e-12


def test_shape_mismatch():
    with pytest.raises(metrics.MetricsError):
        metrics.confusion_matrix(np.zeros((2, 2)), np.zeros((2, 3)), 2)


def test_out_of_range_class():
    with pytest.raises(metrics.MetricsError):
        metrics.confusion_matrix(np.array([0, 5]), np.array([0, 1]), 3)


def test_empty_matrix():
    with pytest.raises(metrics.MetricsError):
        metrics.accuracy(metrics.ConfusionMatrix(3))


def test_report_names():
    cm = metrics.ConfusionMatrix(2, np.array([[1, 1], [0, 2]]))
    rep = metrics.report(cm, ["wall", "window"])
    assert rep.per_class[1]["class"] == "window"
    assert rep.to_dict()["acc"] == pytest.approx(0.75)
