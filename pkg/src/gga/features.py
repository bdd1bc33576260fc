"""CSM summary features.

The strict upper triangle of a CSM splits into S2, the entries whose row
or column is the predicted class, and S1, the entries between
non-predicted classes. Each set is reduced to (mean, max, min, population
std, energy), S1 first, giving the 10-dimensional detector input. Energy
is the mean of squared entries. Empty sets yield zeros and a degenerate
flag rather than an error.
"""

from dataclasses import dataclass

import numpy as np

from .saliency import batch_csm

FEATURE_NAMES = (
    "s1_mean", "s1_max", "s1_min", "s1_std", "s1_energy",
    "s2_mean", "s2_max", "s2_min", "s2_std", "s2_energy",
)


@dataclass
class FeatureVector:
    values: np.ndarray  # (10,)
    predicted_class: int
    degenerate: bool


@dataclass
class FeatureBatch:
    values: np.ndarray  # (n, 10)
    predicted: np.ndarray  # (n,)
    degenerate: np.ndarray  # (n,) bool

    def __len__(self):
        return self.values.shape[0]


def split_sets(matrix):
    """(S1, S2) entry arrays from a Csm or a raw matrix with predicted row 0."""
    if hasattr(matrix, "entries"):
        entries, pred = matrix.entries, matrix.predicted_index
    else:
        entries, pred = np.asarray(matrix), 0
    m = entries.shape[0]
    rows, cols = np.triu_indices(m, k=1)
    vals = entries[rows, cols]
    with_pred = (rows == pred) | (cols == pred)
    return vals[~with_pred], vals[with_pred]


def set_stats(values):
    """(mean, max, min, population std, mean of squares); zeros when empty."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return np.zeros(5)
    return np.array([
        values.mean(),
        values.max(),
        values.min(),
        values.std(),
        (values * values).mean(),
    ])


def features(matrix):
    s1, s2 = split_sets(matrix)
    vec = np.concatenate([set_stats(s1), set_stats(s2)])
    degenerate = s1.size == 0 or s2.size == 0
    if hasattr(matrix, "degenerate"):
        degenerate = degenerate or bool(matrix.degenerate.any())
        pred = matrix.predicted_class
    else:
        pred = 0
    return FeatureVector(vec, pred, degenerate)


def extract(model, xs, top_n=None, loss="sce"):
    """Full pipeline for a batch: CSMs then features, one row per sample."""
    vectors = [features(m) for m in batch_csm(model, xs, top_n=top_n, loss=loss)]
    return FeatureBatch(
        np.stack([v.values for v in vectors]),
        np.array([v.predicted_class for v in vectors], dtype=np.int64),
        np.array([v.degenerate for v in vectors], dtype=bool),
    )


def save_features_csv(path, batch, labels=None, source_tag="clean"):
    header = ",".join(FEATURE_NAMES) + ",predicted_class,label,source_tag"
    labels = np.full(len(batch), -1, dtype=np.int64) if labels is None else np.asarray(labels)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, pred, label in zip(batch.values, batch.predicted, labels):
            cells = [repr(float(v)) for v in row]
            fh.write(",".join(cells + [str(int(pred)), str(int(label)), source_tag]) + "\n")
