"""Confusion-matrix segmentation metrics: Acc, Class_avg, F1 and mIoU.

Rows of the matrix are ground-truth classes, columns predicted classes.
Per-class quantities whose denominator is zero are reported as ``None`` and
left out of the macro averages.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    num_classes: int
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (self.num_classes, self.num_classes):
                raise MetricsError("counts shape does not match class count")
            if (self.counts < 0).any():
                raise MetricsError("negative counts")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, gt: np.ndarray, pred: np.ndarray) -> "ConfusionMatrix":
        gt = np.asarray(gt)
        pred = np.asarray(pred)
        if gt.shape != pred.shape:
            raise MetricsError(f"shape mismatch: gt {gt.shape} vs pred {pred.shape}")
        k = self.num_classes
        g = gt.ravel().astype(np.int64)
        p = pred.ravel().astype(np.int64)
        if g.size and (g.min() < 0 or g.max() >= k or p.min() < 0 or p.max() >= k):
            raise MetricsError(f"class index out of range for {k} classes")
        self.counts += np.bincount(k * g + p, minlength=k * k).reshape(k, k)
        return self

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise MetricsError("class counts differ")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)


def confusion_matrix(gt, pred, num_classes: int) -> ConfusionMatrix:
    return ConfusionMatrix(num_classes).accumulate(gt, pred)


def _counts(cm) -> np.ndarray:
    return cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm, dtype=np.int64)


def accuracy(cm) -> float:
    c = _counts(cm)
    total = c.sum()
    if total == 0:
        raise MetricsError("empty matrix")
    return float(np.trace(c) / total)


def precision_recall_f1(cm, k: int):
    """One-vs-rest precision, recall and F1 of class ``k`` (``None`` when undefined).

    F1 is computed as 2TP / (2TP + FP + FN), which equals the harmonic mean of
    precision and recall whenever both are defined, and is 0 for a class that
    occurs but is never hit.
    """
    c = _counts(cm)
    tp = c[k, k]
    fp = c[:, k].sum() - tp
    fn = c[k, :].sum() - tp
    precision = float(tp / (tp + fp)) if tp + fp else None
    recall = float(tp / (tp + fn)) if tp + fn else None
    f1 = float(2 * tp / (2 * tp + fp + fn)) if 2 * tp + fp + fn else None
    return precision, recall, f1


def class_average(cm) -> float:
    """Mean of diag / column sum over classes that were predicted at least once."""
    c = _counts(cm)
    col = c.sum(axis=0)
    ok = col > 0
    if not ok.any():
        raise MetricsError("empty matrix")
    return float(np.mean(np.diag(c)[ok] / col[ok]))


def iou_per_class(cm) -> np.ndarray:
    """IoU per class, NaN for classes absent from both gt and prediction."""
    c = _counts(cm)
    tp = np.diag(c).astype(np.float64)
    denom = c.sum(axis=0) + c.sum(axis=1) - tp
    out = np.full(len(tp), np.nan)
    ok = denom > 0
    out[ok] = tp[ok] / denom[ok]
    return out


def miou(cm) -> float:
    iou = iou_per_class(cm)
    if np.all(np.isnan(iou)):
        raise MetricsError("empty matrix")
    return float(np.nanmean(iou))


def f1_macro(cm) -> float:
    c = _counts(cm)
    vals = [f for f in (precision_recall_f1(c, k)[2] for k in range(len(c))) if f is not None]
    if not vals:
        raise MetricsError("empty matrix")
    return float(np.mean(vals))


@dataclass
class MetricsReport:
    acc: float
    class_avg: float
    f1_macro: float
    miou: float
    per_class: list
    evaluated_classes: dict

    def to_dict(self) -> dict:
        return {
            "acc": self.acc,
            "class_avg": self.class_avg,
            "f1_macro": self.f1_macro,
            "miou": self.miou,
            "per_class": self.per_class,
            "evaluated_classes": self.evaluated_classes,
        }


def report(cm, class_names=None) -> MetricsReport:
    c = _counts(cm)
    k = len(c)
    names = list(class_names) if class_names is not None else [str(i) for i in range(k)]
    ious = iou_per_class(c)
    per_class = []
    for i in range(k):
        p, r, f = precision_recall_f1(c, i)
        per_class.append({
            "class": names[i],
            "index": i,
            "precision": p,
            "recall": r,
            "f1": f,
            "iou": None if np.isnan(ious[i]) else float(ious[i]),
            "support": int(c[i].sum()),
        })
    col = c.sum(axis=0)
    evaluated = {
        "class_avg": [i for i in range(k) if col[i] > 0],
        "f1": [i for i in range(k) if per_class[i]["f1"] is not None],
        "miou": [i for i in range(k) if not np.isnan(ious[i])],
    }
    return MetricsReport(acc=accuracy(c), class_avg=class_average(c), f1_macro=f1_macro(c),
                         miou=miou(c), per_class=per_class, evaluated_classes=evaluated)
