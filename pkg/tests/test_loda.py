import math

import numpy as np
import pytest

from gga.loda import (
    LodaDetector,
    calibrate,
    fit,
    load_detector,
    order_statistic_index,
    save_detector,
    score,
)


def _single_projection_detector(counts, lo=0.0, hi=1.0, total=None):
    """One identity projection on a 1-D feature space, hand-set histogram."""
    counts = np.asarray(counts, dtype=np.int64)[None, :]
    return LodaDetector(
        projections=np.ones((1, 1)),
        lows=np.array([lo]),
        highs=np.array([hi]),
        counts=counts,
        total=int(counts.sum()) if total is None else total,
        mu=np.zeros(1),
        sigma=np.ones(1),
        standardize=False,
        seed=0,
        margin=0.0,
    )


def test_score_matches_hand_computation():
    # 4 bins on [0, 1], width 0.25, counts [6, 2, 0, 2], total 10.
    det = _single_projection_detector([6, 2, 0, 2])
    for x, count in [(0.1, 6), (0.3, 2), (0.6, 0), (0.9, 2)]:
        expected = -math.log((count + 1) / ((10 + 4) * 0.25))
        assert score(det, np.array([x])) == pytest.approx(expected, rel=1e-12)


def test_out_of_range_scores_as_empty_bin():
    det = _single_projection_detector([6, 2, 0, 2])
    empty = -math.log(1.0 / (14 * 0.25))
    assert score(det, np.array([-3.0])) == pytest.approx(empty)
    assert score(det, np.array([42.0])) == pytest.approx(empty)
    # and an in-range empty bin scores the same
    assert score(det, np.array([0.6])) == pytest.approx(empty)


def test_laplace_smoothing_keeps_scores_finite():
    det = _single_projection_detector([0, 0, 0, 0], total=0)
    s = score(det, np.array([0.5]))
    assert np.isfinite(s)


def test_score_decreases_with_count():
    # monotone: fuller bin -> lower anomaly score
    det = _single_projection_detector([1, 5, 25, 125])
    xs = np.array([[0.1], [0.35], [0.6], [0.85]])
    s = score(det, xs)
    assert np.all(np.diff(s) < 0)


def test_score_batch_matches_single():
    rng = np.random.default_rng(0)
    train = rng.normal(size=(200, 10))
    det = fit(train, k=20, bins=15, seed=3)
    queries = rng.normal(size=(7, 10))
    batch = score(det, queries)
    singles = np.array([score(det, q) for q in queries])
    np.testing.assert_allclose(batch, singles, rtol=1e-12)
    assert isinstance(score(det, queries[0]), float)


def test_fit_shapes_and_sparsity():
    rng = np.random.default_rng(1)
    train = rng.normal(size=(50, 10))
    det = fit(train, k=30, bins=12, seed=0)
    assert det.projections.shape == (30, 10)
    assert det.counts.shape == (30, 12)
    assert det.k == 30 and det.bins == 12
    nnz = (det.projections != 0).sum(axis=1)
    assert np.all(nnz == math.ceil(math.sqrt(10)))
    np.testing.assert_array_equal(det.counts.sum(axis=1), np.full(30, 50))


def test_fit_histogram_range_margin():
    train = np.linspace(0.0, 1.0, 11)[:, None]
    det = fit(train, k=5, bins=10, seed=2, standardize=False, margin=0.05)
    for i in range(det.k):
        w = abs(det.projections[i].sum())
        span = w * 1.0
        assert det.highs[i] - det.lows[i] == pytest.approx(span * 1.1, rel=1e-9)


def test_training_points_score_below_far_outlier():
    rng = np.random.default_rng(5)
    train = rng.normal(size=(300, 8))
    det = fit(train, k=40, bins=20, seed=0)
    s_in = score(det, train)
    s_out = score(det, np.full((1, 8), 50.0))
    assert s_out[0] > np.quantile(s_in, 0.99)


def test_standardize_toggle():
    rng = np.random.default_rng(6)
    train = rng.normal(size=(100, 4)) * np.array([1.0, 10.0, 100.0, 1000.0])
    det_on = fit(train, k=10, bins=10, seed=0, standardize=True)
    det_off = fit(train, k=10, bins=10, seed=0, standardize=False)
    np.testing.assert_allclose(det_on.mu, train.mean(axis=0))
    np.testing.assert_allclose(det_on.sigma, train.std(axis=0))
    np.testing.assert_array_equal(det_off.mu, np.zeros(4))
    np.testing.assert_array_equal(det_off.sigma, np.ones(4))


def test_constant_feature_column_is_safe():
    train = np.ones((30, 3))
    train[:, 0] = np.arange(30)
    det = fit(train, k=10, bins=5, seed=0)
    assert np.all(det.sigma > 0)
    assert np.isfinite(score(det, np.ones(3)))


def test_constant_projection_values_widen_range():
    # all training rows identical -> every projected value equal
    train = np.tile(np.array([1.0, 2.0]), (10, 1))
    det = fit(train, k=4, bins=6, seed=0, standardize=False)
    assert np.all(det.highs - det.lows == pytest.approx(1.0))
    assert np.isfinite(score(det, np.array([1.0, 2.0])))


def test_fit_requires_two_rows():
    with pytest.raises(ValueError, match="at least 2"):
        fit(np.ones((1, 5)))


def test_fit_determinism():
    rng = np.random.default_rng(7)
    train = rng.normal(size=(60, 6))
    a = fit(train, k=15, bins=10, seed=42)
    b = fit(train, k=15, bins=10, seed=42)
    np.testing.assert_array_equal(a.projections, b.projections)
    np.testing.assert_array_equal(a.counts, b.counts)
    c = fit(train, k=15, bins=10, seed=43)
    assert not np.array_equal(a.projections, c.projections)


def test_single_projection_single_bin():
    train = np.array([[0.0], [1.0]])
    det = fit(train, k=1, bins=1, seed=0, standardize=False)
    assert det.counts.shape == (1, 1)
    assert np.isfinite(score(det, np.array([0.5])))


def test_order_statistic_index_fixtures():
    assert order_statistic_index(0.95, 100) == 95
    assert order_statistic_index(0.95, 20) == 19
    assert order_statistic_index(0.95, 7) == 7
    assert order_statistic_index(0.5, 10) == 5
    assert order_statistic_index(0.001, 10) == 1
    assert order_statistic_index(0.999, 3) == 3


def test_calibrate_fixture_1_to_100():
    det = _single_projection_detector([1, 1])
    threshold = calibrate(det, np.arange(1.0, 101.0), tpr=0.95)
    assert threshold == 95.0
    assert det.threshold == 95.0


def test_calibrate_small_and_unsorted():
    det = _single_projection_detector([1, 1])
    assert calibrate(det, [5.0, 1.0, 3.0], tpr=0.95) == 5.0
    assert calibrate(det, [5.0, 1.0, 3.0], tpr=0.5) == 3.0


def test_calibrate_keeps_tpr_on_calibration_set():
    rng = np.random.default_rng(8)
    scores = rng.normal(size=500)
    det = _single_projection_detector([1, 1])
    for tpr in (0.9, 0.95, 0.99):
        threshold = calibrate(det, scores, tpr=tpr)
        kept = (scores <= threshold).mean()
        assert kept >= tpr
        # tightest such order statistic: one rank lower keeps too few
        below = (scores < threshold).mean()
        assert below < tpr


def test_calibrate_validation():
    det = _single_projection_detector([1, 1])
    with pytest.raises(ValueError, match="empty"):
        calibrate(det, [])
    with pytest.raises(ValueError, match="tpr"):
        calibrate(det, [1.0], tpr=1.0)
    with pytest.raises(ValueError, match="tpr"):
        calibrate(det, [1.0], tpr=0.0)


def test_is_anomalous_requires_threshold():
    det = _single_projection_detector([6, 2, 0, 2])
    with pytest.raises(ValueError, match="threshold"):
        det.is_anomalous(np.array([0.5]))
    calibrate(det, [0.1, 0.2, 0.9], tpr=0.5)
    assert det.is_anomalous(np.array([99.0]))


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    train = rng.normal(size=(80, 10))
    det = fit(train, k=25, bins=30, seed=11)
    calibrate(det, score(det, train), tpr=0.95)
    path = tmp_path / "det.gga"
    save_detector(path, det)
    back = load_detector(path)
    for field in ("projections", "lows", "highs", "counts", "mu", "sigma"):
        np.testing.assert_array_equal(getattr(back, field), getattr(det, field))
    assert back.total == det.total
    assert back.standardize == det.standardize
    assert back.seed == det.seed
    assert back.margin == det.margin
    assert back.threshold == det.threshold
    queries = rng.normal(size=(12, 10))
    np.testing.assert_array_equal(score(back, queries), score(det, queries))


def test_save_load_without_threshold(tmp_path):
    det = fit(np.random.default_rng(0).normal(size=(20, 4)), k=5, bins=5)
    path = tmp_path / "det.gga"
    save_detector(path, det)
    assert math.isnan(load_detector(path).threshold)
