"""Detection metrics and the end-to-end evaluation report.

Score convention throughout: lower = more trustworthy. Positives are
clean, correctly classified samples; negatives are OOD inputs or
successful attacks. All public metrics return percentages in [0, 100].
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .features import extract
from .loda import order_statistic_index
from .nn.losses import softmax

# Report column order for per-source rows; unknown tags follow alphabetically.
TAG_ORDER = ("noise", "pgd", "rotation", "boundary", "boundary-l2", "ood")


def _scores(v):
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("metric input must be nonempty")
    return v


def threshold_at_tpr(positives, tpr=0.95):
    """Smallest positive order statistic accepting at least a tpr fraction."""
    positives = np.sort(_scores(positives))
    return float(positives[order_statistic_index(tpr, positives.size) - 1])


def tnr_at_tpr(positives, negatives, tpr=0.95):
    """Percent of negatives above the tpr-calibrated positive threshold."""
    thr = threshold_at_tpr(positives, tpr)
    return float((_scores(negatives) > thr).mean() * 100.0)


def _average_ranks(values):
    order = np.argsort(values, kind="mergesort")
    sorted_vals = values[order]
    boundaries = np.nonzero(np.diff(sorted_vals))[0] + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [values.size]])
    group_rank = (starts + ends - 1) / 2.0 + 1.0
    ranks = np.empty(values.size)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def auroc(positives, negatives):
    """Mann-Whitney AUROC in percent: P(neg > pos) + 0.5 P(neg == pos)."""
    positives = _scores(positives)
    negatives = _scores(negatives)
    ranks = _average_ranks(np.concatenate([positives, negatives]))
    n_pos, n_neg = positives.size, negatives.size
    rank_sum = ranks[n_pos:].sum()
    u = rank_sum - n_neg * (n_neg + 1) / 2.0
    return float(u / (n_pos * n_neg) * 100.0)


def average_precision(scores, labels):
    """Step-interpolated AP: sum of precision * recall increments over
    descending distinct score thresholds, with label 1 the positive class."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    total_pos = int(labels.sum())
    if total_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    hits = np.cumsum(labels[order])
    seen = np.arange(1, scores.size + 1)
    # evaluate only at the last index of each tied-score run
    last_of_run = np.ones(scores.size, dtype=bool)
    last_of_run[:-1] = sorted_scores[:-1] != sorted_scores[1:]
    precision = hits[last_of_run] / seen[last_of_run]
    recall = hits[last_of_run] / total_pos
    recall_prev = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - recall_prev) * precision).sum())


def aupr(positives, negatives, positive_side="out"):
    """Area under precision-recall in percent.

    positive_side "out" takes untrustworthy samples as the positive class
    scored by the raw anomaly score; "in" takes trustworthy samples as
    positive scored by the negated score.
    """
    positives = _scores(positives)
    negatives = _scores(negatives)
    scores = np.concatenate([positives, negatives])
    is_neg = np.concatenate([np.zeros(positives.size, bool), np.ones(negatives.size, bool)])
    if positive_side == "out":
        return average_precision(scores, is_neg) * 100.0
    if positive_side == "in":
        return average_precision(-scores, ~is_neg) * 100.0
    raise ValueError(f"positive_side must be 'in' or 'out', got {positive_side!r}")


def msp_score(model, x, batch_size=256):
    """Negated maximum softmax probability, one score per sample."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], batch_size):
        probs = softmax(model.forward(x[start : start + batch_size]))
        out[start : start + batch_size] = -probs.max(axis=1)
    return out


@dataclass
class DetectionReport:
    rows: dict  # tag -> {"tnr_at_tpr": %, "auroc": %, "n": int}
    auroc: float  # pooled, percent
    aupr_in: float
    aupr_out: float
    tpr: float
    threshold: float
    n_positives: int
    n_excluded: int  # clean but misclassified, kept out of positives
    method: str = "gga"
    warnings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "rows": self.rows,
            "auroc": self.auroc,
            "aupr_in": self.aupr_in,
            "aupr_out": self.aupr_out,
            "tpr": self.tpr,
            "threshold": self.threshold,
            "n_positives": self.n_positives,
            "n_excluded": self.n_excluded,
            "method": self.method,
            "warnings": list(self.warnings),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def ordered_tags(self):
        known = [t for t in TAG_ORDER if t in self.rows]
        return known + sorted(set(self.rows) - set(TAG_ORDER))

    def save_csv(self, path):
        tags = self.ordered_tags()
        header = [f"tnr95_{t}" for t in tags] + ["auroc", "aupr_in", "aupr_out"]
        values = [repr(self.rows[t]["tnr_at_tpr"]) for t in tags]
        values += [repr(self.auroc), repr(self.aupr_in), repr(self.aupr_out)]
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            fh.write(",".join(values) + "\n")

    def __str__(self):
        lines = [f"method={self.method} tpr={self.tpr:.2f} positives={self.n_positives}"]
        for tag in self.ordered_tags():
            row = self.rows[tag]
            lines.append(
                f"  {tag:<12} TNR@{self.tpr:.0%}TPR {row['tnr_at_tpr']:6.2f}%"
                f"  AUROC {row['auroc']:6.2f}%  (n={row['n']})"
            )
        lines.append(
            f"  pooled       AUROC {self.auroc:6.2f}%  AUPR-In {self.aupr_in:6.2f}%"
            f"  AUPR-Out {self.aupr_out:6.2f}%"
        )
        return "\n".join(lines)


def evaluate(model, detector, clean, untrusted, tpr=0.95, top_n=None, loss="sce",
             method="gga", meta=None):
    """Score clean and untrustworthy inputs and collect detection metrics.

    clean: LabeledDataset; only correctly classified samples become
    positives. untrusted: mapping tag -> input batch (already filtered to
    successful attacks / genuine OOD). method "gga" scores through
    csm -> features -> detector; "msp" scores by negated max softmax.
    """

    def scorer(x):
        if method == "gga":
            return detector.score(extract(model, x, top_n=top_n, loss=loss).values)
        if method == "msp":
            return msp_score(model, x)
        raise ValueError(f"unknown method {method!r}")

    correct = model.predict(clean.x) == clean.y
    if not correct.any():
        raise ValueError("no correctly classified clean samples to calibrate on")
    positives = scorer(clean.x[correct])
    threshold = threshold_at_tpr(positives, tpr)
    rows = {}
    warnings = []
    pooled = []
    for tag, x in untrusted.items():
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] == 0:
            warnings.append(f"tag {tag!r} is empty, skipped")
            continue
        scores = scorer(x)
        pooled.append(scores)
        rows[tag] = {
            "tnr_at_tpr": float((scores > threshold).mean() * 100.0),
            "auroc": auroc(positives, scores),
            "n": int(scores.size),
        }
    if not pooled:
        raise ValueError("no nonempty untrustworthy sets given")
    pooled = np.concatenate(pooled)
    return DetectionReport(
        rows=rows,
        auroc=auroc(positives, pooled),
        aupr_in=aupr(positives, pooled, "in"),
        aupr_out=aupr(positives, pooled, "out"),
        tpr=tpr,
        threshold=threshold,
        n_positives=int(correct.sum()),
        n_excluded=int((~correct).sum()),
        method=method,
        warnings=warnings,
        meta=dict(meta or {}),
    )
