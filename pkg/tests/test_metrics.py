"""Metric values against hand counts and an independent brute-force oracle."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tempcoh.metrics import (
    AggregateReport,
    MetricSummary,
    VideoMetrics,
    aggregate,
    confusion_matrix,
    video_metrics,
)

TOL = 1e-9


# ------------------------------------------------------------------- oracle

def brute_force_metrics(gt, pred, num_phases):
    """Pure-python recount of every metric, structured independently of the
    implementation: explicit per-phase counters, no numpy."""
    gt = [int(x) for x in gt]
    pred = [int(x) for x in pred]
    n = len(gt)
    correct = sum(1 for g, p in zip(gt, pred) if g == p)
    recall = {}
    precision = {}
    for k in range(num_phases):
        tp = sum(1 for g, p in zip(gt, pred) if g == k and p == k)
        fn = sum(1 for g, p in zip(gt, pred) if g == k and p != k)
        fp = sum(1 for g, p in zip(gt, pred) if g != k and p == k)
        if tp + fn > 0:
            recall[k] = tp / (tp + fn)
        if tp + fp > 0:
            precision[k] = tp / (tp + fp)
    macro_r = 100.0 * sum(recall.values()) / len(recall)
    macro_p = 100.0 * sum(precision.values()) / len(precision)

    def harmonic(p, r):
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    per_phase = {}
    for k in range(num_phases):
        if k in recall and k in precision:
            per_phase[k] = 100.0 * harmonic(precision[k], recall[k])
        else:
            per_phase[k] = None
    return {
        "accuracy": 100.0 * correct / n,
        "macro_recall": macro_r,
        "macro_precision": macro_p,
        "f1": harmonic(macro_p, macro_r),
        "per_phase_f1": per_phase,
    }


# ------------------------------------------------------------ confusion

def test_confusion_perfect_is_diagonal():
    gt = [0, 1, 2, 1, 0]
    m = confusion_matrix(gt, gt, 3)
    assert np.array_equal(m, np.diag([2, 2, 1]))


def test_confusion_hand_example():
    m = confusion_matrix([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert np.array_equal(m, np.array([[1, 1], [0, 2]]))


def test_confusion_empty_is_all_zero():
    m = confusion_matrix([], [], 3)
    assert m.shape == (3, 3) and not m.any()


def test_confusion_rejects_bad_input():
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0], 2)
    with pytest.raises(ValueError):
        confusion_matrix([0, 2], [0, 1], 2)
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0, -1], 2)


# --------------------------------------------------------------- per video

def test_video_metrics_hand_example():
    m = video_metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
    assert m.accuracy == pytest.approx(75.0, abs=TOL)
    assert m.macro_recall == pytest.approx(75.0, abs=TOL)
    assert m.macro_precision == pytest.approx(100.0 * (1.0 + 2.0 / 3.0) / 2.0, abs=TOL)
    expected_f1 = 2 * (250.0 / 3.0) * 75.0 / (250.0 / 3.0 + 75.0)
    assert m.f1 == pytest.approx(expected_f1, abs=TOL)
    assert m.f1 == pytest.approx(78.94736842105263, abs=1e-6)
    assert m.per_phase_f1[0] == pytest.approx(100.0 * 2 * 0.5 / 1.5, abs=TOL)
    assert m.per_phase_f1[1] == pytest.approx(80.0, abs=TOL)


def test_video_metrics_perfect_prediction():
    gt = [0, 0, 1, 2, 2, 2]
    m = video_metrics(gt, gt, 4)
    assert m.accuracy == m.macro_recall == m.macro_precision == m.f1 == 100.0
    assert m.per_phase_f1 == {0: 100.0, 1: 100.0, 2: 100.0, 3: None}


def test_video_metrics_empty_rejected():
    with pytest.raises(ValueError):
        video_metrics([], [], 2)


def test_video_metrics_match_brute_force_oracle(rng):
    for _ in range(200):
        k = int(rng.integers(2, 8))
        n = int(rng.integers(1, 501))
        # Draw labels from a random subset so some phases are absent.
        present = rng.choice(k, size=int(rng.integers(1, k + 1)), replace=False)
        gt = rng.choice(present, size=n)
        pred = rng.integers(0, k, size=n)
        got = video_metrics(gt, pred, k)
        want = brute_force_metrics(gt, pred, k)
        assert got.accuracy == pytest.approx(want["accuracy"], abs=TOL)
        assert got.macro_recall == pytest.approx(want["macro_recall"], abs=TOL)
        assert got.macro_precision == pytest.approx(want["macro_precision"], abs=TOL)
        assert got.f1 == pytest.approx(want["f1"], abs=TOL)
        for phase in range(k):
            if want["per_phase_f1"][phase] is None:
                assert got.per_phase_f1[phase] is None
            else:
                assert got.per_phase_f1[phase] == pytest.approx(
                    want["per_phase_f1"][phase], abs=TOL)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)),
                min_size=1, max_size=60),
       st.permutations(list(range(4))))
def test_relabeling_equivariance(pairs, perm):
    gt = [g for g, _ in pairs]
    pred = [p for _, p in pairs]
    base = video_metrics(gt, pred, 4)
    relabeled = video_metrics([perm[g] for g in gt], [perm[p] for p in pred], 4)
    assert relabeled.accuracy == pytest.approx(base.accuracy, abs=TOL)
    assert relabeled.macro_recall == pytest.approx(base.macro_recall, abs=TOL)
    assert relabeled.macro_precision == pytest.approx(base.macro_precision, abs=TOL)
    assert relabeled.f1 == pytest.approx(base.f1, abs=TOL)
    for k in range(4):
        a, b = base.per_phase_f1[k], relabeled.per_phase_f1[perm[k]]
        if a is None:
            assert b is None
        else:
            assert b == pytest.approx(a, abs=TOL)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)),
                min_size=1, max_size=80))
def test_f1_bounded_by_max_of_recall_precision(pairs):
    m = video_metrics([g for g, _ in pairs], [p for _, p in pairs], 5)
    assert m.f1 <= max(m.macro_recall, m.macro_precision) + 1e-12
    assert 0.0 <= m.accuracy <= 100.0
    assert 0.0 <= m.f1 <= 100.0


def test_f1_is_harmonic_mean_exactly(rng):
    for _ in range(50):
        gt = rng.integers(0, 3, size=40)
        pred = rng.integers(0, 3, size=40)
        m = video_metrics(gt, pred, 3)
        if m.macro_precision > 0 and m.macro_recall > 0:
            expected = (2 * m.macro_precision * m.macro_recall
                        / (m.macro_precision + m.macro_recall))
            assert m.f1 == pytest.approx(expected, abs=TOL)


# -------------------------------------------------------------- aggregation

def test_summary_of_values():
    assert MetricSummary.of([]) == MetricSummary(None, None, 0)
    assert MetricSummary.of([42.0]) == MetricSummary(42.0, 0.0, 1)
    s = MetricSummary.of([60.0, 80.0])
    assert s.mean == pytest.approx(70.0, abs=TOL)
    assert s.std == pytest.approx(np.sqrt(200.0), abs=TOL)  # sample std, n-1
    assert s.count == 2


def test_summary_of_constant_list():
    s = MetricSummary.of([55.5] * 8)
    assert s.mean == pytest.approx(55.5, abs=TOL)
    assert s.std == pytest.approx(0.0, abs=TOL)


def test_aggregate_two_video_hand_case():
    videos = [
        VideoMetrics(90.0, 70.0, 75.0, 60.0, {0: 50.0, 1: None}),
        VideoMetrics(95.0, 80.0, 85.0, 80.0, {0: 70.0, 1: 90.0}),
    ]
    report = aggregate(videos)
    assert isinstance(report, AggregateReport)
    assert report.num_videos == 2
    assert report.f1.mean == pytest.approx(70.0, abs=TOL)
    assert report.f1.std == pytest.approx(np.sqrt(200.0), abs=TOL)
    assert report.per_phase_f1[0].count == 2
    assert report.per_phase_f1[1] == MetricSummary(90.0, 0.0, 1)


def test_aggregate_phase_absent_everywhere():
    videos = [VideoMetrics(100.0, 100.0, 100.0, 100.0, {0: 100.0, 1: None}),
              VideoMetrics(100.0, 100.0, 100.0, 100.0, {0: 100.0, 1: None})]
    report = aggregate(videos)
    assert report.per_phase_f1[1] == MetricSummary(None, None, 0)


def test_aggregate_empty_rejected():
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_f1_can_sit_below_harmonic_mean_of_aggregates():
    # Per-video F1 is computed before averaging. With one balanced and one
    # skewed video the mean of per-video F1s falls strictly below the
    # harmonic mean of the aggregated precision/recall; averaging P and R
    # first and then taking the harmonic mean could never produce that.
    gt1 = [0] * 50 + [1] * 50
    video1 = video_metrics(gt1, gt1, 2)  # balanced: P = R = F1 = 100
    gt2 = [0] * 50 + [1] * 50
    pred2 = [0] * 99 + [1]  # recall collapses for phase 1, precision stays high
    video2 = video_metrics(gt2, pred2, 2)
    report = aggregate([video1, video2])
    p = report.macro_precision.mean
    r = report.macro_recall.mean
    harmonic_of_aggregates = 2 * p * r / (p + r)
    assert report.f1.mean < harmonic_of_aggregates - 1e-6
