"""Histogram-ensemble anomaly detector over sparse random projections.

Each of k projections keeps ceil(sqrt(d)) standard-normal weights on a
random coordinate subset. Training values of every projection fill an
equal-width histogram whose range is the observed [min, max] widened by
a relative margin per side. The anomaly score of a point is the negative
mean log of the Laplace-smoothed histogram densities,

    p = (count + 1) / ((total + bins) * bin_width),

with out-of-range values falling into virtual zero-count bins, so scores
stay finite everywhere and lower means more ordinary.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import container


@dataclass
class LodaDetector:
    projections: np.ndarray  # (k, d)
    lows: np.ndarray  # (k,)
    highs: np.ndarray  # (k,)
    counts: np.ndarray  # (k, bins)
    total: int
    mu: np.ndarray  # (d,) standardization shift
    sigma: np.ndarray  # (d,) standardization scale
    standardize: bool
    seed: int
    margin: float
    threshold: float = math.nan

    @property
    def k(self):
        return self.projections.shape[0]

    @property
    def bins(self):
        return self.counts.shape[1]

    def score(self, features):
        return score(self, features)

    def is_anomalous(self, features):
        if math.isnan(self.threshold):
            raise ValueError("detector has no threshold; run calibrate first")
        return self.score(features) > self.threshold


def _as_matrix(features):
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        return features[None, :], True
    return features, False


def fit(features, k=100, bins=100, seed=0, standardize=True, margin=0.05):
    """Fit the projection ensemble on rows of clean feature vectors."""
    features, _ = _as_matrix(features)
    n, d = features.shape
    if n < 2:
        raise ValueError(f"need at least 2 training vectors, got {n}")
    rng = np.random.default_rng(seed)
    if standardize:
        mu = features.mean(axis=0)
        sigma = features.std(axis=0)
        sigma = np.where(sigma == 0.0, 1.0, sigma)
    else:
        mu = np.zeros(d)
        sigma = np.ones(d)
    z = (features - mu) / sigma
    nnz = math.ceil(math.sqrt(d))
    projections = np.zeros((k, d))
    for i in range(k):
        support = rng.choice(d, size=nnz, replace=False)
        projections[i, support] = rng.standard_normal(nnz)
    values = z @ projections.T
    lows = np.empty(k)
    highs = np.empty(k)
    counts = np.empty((k, bins), dtype=np.int64)
    for i in range(k):
        lo = values[:, i].min()
        hi = values[:, i].max()
        if lo == hi:
            lo -= 0.5
            hi += 0.5
        else:
            span = hi - lo
            lo -= margin * span
            hi += margin * span
        counts[i], _ = np.histogram(values[:, i], bins=bins, range=(lo, hi))
        lows[i], highs[i] = lo, hi
    return LodaDetector(projections, lows, highs, counts, n, mu, sigma,
                        standardize, seed, margin)


def score(det, features):
    """Anomaly scores, higher = more anomalous. Accepts one row or a batch."""
    features, single = _as_matrix(features)
    z = (features - det.mu) / det.sigma
    values = z @ det.projections.T  # (n, k)
    widths = (det.highs - det.lows) / det.bins
    in_range = (values >= det.lows) & (values <= det.highs)
    # standardized projections can overflow to inf on near-constant training
    # columns; park those at the low edge, the mask discards them below
    safe = np.where(in_range, values, det.lows)
    idx = np.floor((safe - det.lows) / widths).astype(np.int64)
    idx = np.clip(idx, 0, det.bins - 1)
    hit = det.counts[np.arange(det.k)[None, :], idx]
    count = np.where(in_range, hit, 0)
    density = (count + 1.0) / ((det.total + det.bins) * widths)
    scores = -np.log(density).mean(axis=1)
    return float(scores[0]) if single else scores


def order_statistic_index(tpr, n):
    """ceil(tpr*n) as an exact integer, snapping float tpr to a rational.

    The snap keeps values like 0.95*100 from landing on 95.000000000000014
    and ceiling up to 96.
    """
    frac = Fraction(tpr).limit_denominator(10**6)
    return min(max(math.ceil(frac * n), 1), n)


def calibrate(det, clean_scores, tpr=0.95):
    """Threshold = the ceil(tpr*n)-th smallest clean score.

    This is the smallest order statistic keeping at least a `tpr` fraction
    of the calibration scores at or below the threshold. Stores the value
    on the detector and returns it.
    """
    clean_scores = np.sort(np.asarray(clean_scores, dtype=np.float64))
    if clean_scores.size == 0:
        raise ValueError("cannot calibrate on an empty score list")
    if not 0.0 < tpr < 1.0:
        raise ValueError(f"tpr must lie in (0, 1), got {tpr}")
    det.threshold = float(clean_scores[order_statistic_index(tpr, clean_scores.size) - 1])
    return det.threshold


def save_detector(path, det):
    meta = {
        "total": det.total,
        "standardize": det.standardize,
        "seed": det.seed,
        "margin": det.margin,
        "threshold": None if math.isnan(det.threshold) else det.threshold,
    }
    arrays = [
        ("projections", det.projections),
        ("lows", det.lows),
        ("highs", det.highs),
        ("counts", det.counts),
        ("mu", det.mu),
        ("sigma", det.sigma),
    ]
    container.write(path, "detector", meta, arrays)


def load_detector(path):
    _, meta, arrays = container.read(path, expect_kind="detector")
    threshold = meta["threshold"]
    return LodaDetector(
        arrays["projections"], arrays["lows"], arrays["highs"], arrays["counts"],
        int(meta["total"]), arrays["mu"], arrays["sigma"], bool(meta["standardize"]),
        int(meta["seed"]), float(meta["margin"]),
        math.nan if threshold is None else float(threshold),
    )
