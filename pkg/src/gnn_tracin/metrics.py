"""Binary classification metrics and multi-seed aggregation (positive class = 1)."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "auroc")


class MetricError(ValueError):
    pass


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auroc: float
    std: dict[str, float] | None = None
    n: int = 1
    notes: list[str] = field(default_factory=list)

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_metrics(predictions, truths) -> tuple[float, float, float, float]:
    """Accuracy, precision, recall and F1.

    Precision or recall with a zero denominator is reported as 0, and F1 is
    then 0 too.
    """
    pred = np.asarray(predictions).astype(np.int64)
    true = np.asarray(truths).astype(np.int64)
    if pred.shape != true.shape:
        raise MetricError(f"length mismatch: {pred.shape} predictions vs {true.shape} truths")
    if pred.size == 0:
        raise MetricError("no samples")
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    accuracy = float(np.mean(pred == true))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return accuracy, precision, recall, f1


def auroc(scores, truths) -> float:
    """Area under the ROC curve via the Mann-Whitney U statistic (ties count half)."""
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths).astype(np.int64)
    if scores.shape != truths.shape:
        raise MetricError(f"length mismatch: {scores.shape} scores vs {truths.shape} truths")
    pos = int(np.sum(truths == 1))
    neg = int(np.sum(truths == 0))
    if pos == 0 or neg == 0:
        raise MetricError("AUROC is undefined when only one class is present")
    # average ranks are exact half-integers, so U is computed exactly
    ranks = rankdata(scores, method="average")
    u = float(np.sum(ranks[truths == 1])) - pos * (pos + 1) / 2.0
    return u / (pos * neg)


def evaluate(scores, predictions, truths) -> MetricsReport:
    accuracy, precision, recall, f1 = confusion_metrics(predictions, truths)
    report = MetricsReport(accuracy, precision, recall, f1, auroc(scores, truths))
    pred = np.asarray(predictions)
    true = np.asarray(truths)
    if not np.any(pred == 1):
        report.notes.append("no positive predictions: precision set to 0")
    if not np.any(true == 1):
        report.notes.append("no positive truths: recall set to 0")
    return report


def aggregate(reports) -> MetricsReport:
    """Mean and sample (n-1) standard deviation of each metric over seeds."""
    reports = list(reports)
    if len(reports) < 2:
        raise MetricError("aggregation needs at least two reports")
    means, stds = {}, {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r, name) for r in reports], dtype=np.float64)
        means[name] = float(np.clip(vals.mean(), vals.min(), vals.max()))
        stds[name] = float(vals.std(ddof=1))
    notes = ["std is the sample standard deviation (n-1)"]
    return MetricsReport(**means, std=stds, n=len(reports), notes=notes)


def format_mean_std(report: MetricsReport, name: str, scale: float = 100.0) -> str:
    value = getattr(report, name) * scale
    if report.std is None:
        return f"{value:.2f}"
    return f"{value:.2f} ± {report.std[name] * scale:.2f}"
