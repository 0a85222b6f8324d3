"""Binary-classification evaluation: confusion counts, summary metrics,
ROC and precision-recall curves.

Zero-denominator ratios are reported as 0.0 and flagged in
``MetricSummary.degenerate`` instead of producing NaN, so rendered tables
stay numeric. Curves place one point per distinct score value (threshold
descending); ROC AUC uses the trapezoid rule, which on this construction
equals the pairwise-ranking (Mann-Whitney) probability.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValidationError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


@dataclass(frozen=True)
class MetricSummary:
    accuracy: float
    balanced_accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: frozenset = field(default_factory=frozenset)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "degenerate": sorted(self.degenerate),
        }


def _as_binary(values, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if arr.size == 0:
        raise ValidationError(f"{name} must be non-empty")
    arr = arr.astype(np.int64)
    if not np.isin(arr, (0, 1)).all():
        raise ValidationError(f"{name} must contain only 0/1 values")
    return arr


def confusion(labels, predictions) -> ConfusionMatrix:
    """Exact confusion counts for binary labels vs binary predictions."""
    y = _as_binary(labels, "labels")
    p = _as_binary(predictions, "predictions")
    if y.shape != p.shape:
        raise ValidationError(
            f"labels and predictions differ in length ({y.size} vs {p.size})"
        )
    tp = int(np.sum((y == 1) & (p == 1)))
    fp = int(np.sum((y == 0) & (p == 1)))
    tn = int(np.sum((y == 0) & (p == 0)))
    fn = int(np.sum((y == 1) & (p == 0)))
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def confusion_at_threshold(labels, scores, threshold: float = 0.5) -> ConfusionMatrix:
    """Confusion counts after thresholding scores (positive when >= t)."""
    scores = np.asarray(scores, dtype=np.float64)
    return confusion(labels, (scores >= threshold).astype(np.int64))


def summary_metrics(cm: ConfusionMatrix) -> MetricSummary:
    """Accuracy, balanced accuracy, precision, recall and F1 from counts."""
    degenerate = set()

    def ratio(num, den, name):
        if den == 0:
            degenerate.add(name)
            return 0.0
        return num / den

    if cm.total == 0:
        raise ValidationError("confusion matrix has no samples")
    accuracy = (cm.tp + cm.tn) / cm.total
    tpr = ratio(cm.tp, cm.tp + cm.fn, "recall")
    tnr = ratio(cm.tn, cm.tn + cm.fp, "specificity")
    balanced = (tpr + tnr) / 2
    if degenerate & {"recall", "specificity"}:
        degenerate.add("balanced_accuracy")
    precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
    if precision + tpr == 0:
        degenerate.add("f1")
        f1 = 0.0
    else:
        f1 = 2 * precision * tpr / (precision + tpr)
    return MetricSummary(
        accuracy=accuracy,
        balanced_accuracy=balanced,
        precision=precision,
        recall=tpr,
        f1=f1,
        degenerate=frozenset(degenerate),
    )


def balanced_accuracy(labels, predictions) -> float:
    return summary_metrics(confusion(labels, predictions)).balanced_accuracy


def f1_from_precision_recall(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall (0 when both are 0)."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # descending; + inf sentinel at the (0, 0) point
    auc: float
    defined: bool

    def as_dict(self) -> dict:
        return {
            "fpr": self.fpr.tolist(),
            "tpr": self.tpr.tolist(),
            "thresholds": [None if np.isinf(t) else t for t in self.thresholds],
            "auc": self.auc,
            "defined": self.defined,
        }


@dataclass(frozen=True)
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    thresholds: np.ndarray  # descending
    average_precision: float
    defined: bool

    def as_dict(self) -> dict:
        return {
            "recall": self.recall.tolist(),
            "precision": self.precision.tolist(),
            "thresholds": self.thresholds.tolist(),
            "average_precision": self.average_precision,
            "defined": self.defined,
        }


def _score_sweep(labels, scores):
    """Cumulative tp/fp counts at each distinct score, descending."""
    y = _as_binary(labels, "labels")
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise ValidationError("labels and scores differ in length")
    if not np.isfinite(s).all():
        raise ValidationError("scores must be finite")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of each tie group of equal scores
    distinct = np.nonzero(np.diff(s_sorted))[0]
    cut = np.concatenate([distinct, [y.size - 1]])
    tps = np.cumsum(y_sorted)[cut].astype(np.float64)
    fps = (cut + 1) - tps
    return s_sorted[cut], tps, fps, int(y.sum()), int((1 - y).sum())


def roc_curve(labels, scores) -> RocCurve:
    """ROC points at distinct thresholds plus trapezoid AUC.

    With only one class present the curve degenerates and the AUC is
    reported as 0.0 with ``defined=False``.
    """
    thr, tps, fps, n_pos, n_neg = _score_sweep(labels, scores)
    defined = n_pos > 0 and n_neg > 0
    tpr = tps / n_pos if n_pos else np.zeros_like(tps)
    fpr = fps / n_neg if n_neg else np.zeros_like(fps)
    tpr = np.concatenate([[0.0], tpr])
    fpr = np.concatenate([[0.0], fpr])
    thresholds = np.concatenate([[np.inf], thr])
    if defined:
        auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    else:
        auc = 0.0
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc, defined=defined)


def pr_curve(labels, scores) -> PrCurve:
    """Precision-recall points at distinct thresholds plus step-summed AP.

    AP = sum over sweep points of (recall_i - recall_{i-1}) * precision_i.
    Undefined (flagged, value 0.0) when there are no positive labels.
    """
    thr, tps, fps, n_pos, _ = _score_sweep(labels, scores)
    defined = n_pos > 0
    recall = tps / n_pos if n_pos else np.zeros_like(tps)
    precision = tps / (tps + fps)
    if defined:
        ap = float(np.sum(np.diff(np.concatenate([[0.0], recall])) * precision))
    else:
        ap = 0.0
    return PrCurve(
        recall=recall,
        precision=precision,
        thresholds=thr,
        average_precision=ap,
        defined=defined,
    )


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalReport:
    confusion: ConfusionMatrix
    metrics: MetricSummary
    roc: RocCurve
    pr: PrCurve
    threshold: float

    def as_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "confusion": self.confusion.as_dict(),
            "metrics": self.metrics.as_dict(),
            "roc_auc": self.roc.auc,
            "roc_auc_defined": self.roc.defined,
            "average_precision": self.pr.average_precision,
            "average_precision_defined": self.pr.defined,
        }


def evaluate(labels, scores, threshold: float = 0.5) -> EvalReport:
    """Full evaluation of probability scores against binary labels."""
    cm = confusion_at_threshold(labels, scores, threshold)
    return EvalReport(
        confusion=cm,
        metrics=summary_metrics(cm),
        roc=roc_curve(labels, scores),
        pr=pr_curve(labels, scores),
        threshold=threshold,
    )


def render_metrics_table(report: EvalReport, loss: float | None = None) -> str:
    """Two-column metric/value text table."""
    rows = []
    if loss is not None:
        rows.append(("Test Loss", loss))
    m = report.metrics
    rows.extend(
        [
            ("Test Accuracy", m.accuracy),
            ("Balanced Accuracy", m.balanced_accuracy),
            ("Precision", m.precision),
            ("Recall", m.recall),
            ("F1 Score", m.f1),
            ("ROC AUC", report.roc.auc),
        ]
    )
    width = max(len(name) for name, _ in rows)
    lines = [f"{'Metric':<{width}}  Value", "-" * (width + 8)]
    lines.extend(f"{name:<{width}}  {value:.4f}" for name, value in rows)
    return "\n".join(lines) + "\n"


def render_comparison_table(rows: list[tuple[str, MetricSummary]]) -> str:
    """Model-per-row comparison (Balanced Accuracy, F1, Precision, Recall)."""
    name_w = max([len("Model")] + [len(name) for name, _ in rows])
    header = (
        f"{'Model':<{name_w}}  Balanced Accuracy  F1 Score  Precision  Recall"
    )
    lines = [header, "-" * len(header)]
    for name, m in rows:
        lines.append(
            f"{name:<{name_w}}  {m.balanced_accuracy:>17.3f}  {m.f1:>8.3f}"
            f"  {m.precision:>9.3f}  {m.recall:>6.3f}"
        )
    return "\n".join(lines) + "\n"


def curve_samples_text(report: EvalReport) -> dict[str, str]:
    """Curve samples as delimited text, keyed by curve name."""
    roc_lines = ["fpr,tpr,threshold"]
    for f, t, thr in zip(report.roc.fpr, report.roc.tpr, report.roc.thresholds):
        thr_txt = "inf" if np.isinf(thr) else repr(float(thr))
        roc_lines.append(f"{float(f)!r},{float(t)!r},{thr_txt}")
    pr_lines = ["recall,precision,threshold"]
    for r, p, thr in zip(report.pr.recall, report.pr.precision, report.pr.thresholds):
        pr_lines.append(f"{float(r)!r},{float(p)!r},{float(thr)!r}")
    return {"roc": "\n".join(roc_lines) + "\n", "pr": "\n".join(pr_lines) + "\n"}
