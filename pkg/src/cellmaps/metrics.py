"""Exact evaluation metrics: accuracy, macro F1, one-vs-rest macro AUC-ROC.

AUC uses the Mann-Whitney pair-counting form with half credit for ties,
computed by a sort-and-sweep in integer arithmetic so results are exact.
Classes absent from both truth and predictions are excluded from macro F1;
classes without both a positive and a negative sample are excluded from
macro AUC.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .splits import GROWTH_PATTERNS, GrowthPattern


def _check_lengths(truth, predicted) -> None:
    if len(truth) == 0:
        raise ValueError("empty evaluation set")
    if len(truth) != len(predicted):
        raise ValueError(f"length mismatch: {len(truth)} truth vs {len(predicted)} predicted")


def accuracy(truth: list, predicted: list) -> float:
    _check_lengths(truth, predicted)
    return sum(1 for t, p in zip(truth, predicted) if t == p) / len(truth)


def confusion_matrix(
    truth: list[GrowthPattern],
    predicted: list[GrowthPattern],
    classes: tuple[GrowthPattern, ...] = GROWTH_PATTERNS,
) -> np.ndarray:
    """counts[i, j] = samples with true class i predicted as class j."""
    _check_lengths(truth, predicted)
    index = {cls: i for i, cls in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        counts[index[t], index[p]] += 1
    return counts


def per_class_prf(
    truth: list[GrowthPattern],
    predicted: list[GrowthPattern],
    classes: tuple[GrowthPattern, ...] = GROWTH_PATTERNS,
) -> dict[GrowthPattern, tuple[float, float, float]]:
    """(precision, recall, F1) per class; zero denominators give 0."""
    cm = confusion_matrix(truth, predicted, classes)
    out = {}
    for i, cls in enumerate(classes):
        tp = int(cm[i, i])
        fp = int(cm[:, i].sum()) - tp
        fn = int(cm[i, :].sum()) - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        out[cls] = (precision, recall, f1)
    return out


def f1_macro(
    truth: list[GrowthPattern],
    predicted: list[GrowthPattern],
    classes: tuple[GrowthPattern, ...] = GROWTH_PATTERNS,
) -> float:
    """Mean F1 over classes present in truth or predictions."""
    prf = per_class_prf(truth, predicted, classes)
    seen = set(truth) | set(predicted)
    present = [cls for cls in classes if cls in seen]
    return sum(prf[cls][2] for cls in present) / len(present)


def binary_auc(positive: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney AUC: (wins + ties/2) / (P*N) over positive/negative pairs.

    `positive` is a boolean mask. Exact: counts stay integers and the single
    division happens once.
    """
    positive = np.asarray(positive, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(scores).all():
        raise DataError("non-finite scores in AUC computation")
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="stable")
    s_sorted = scores[order]
    p_sorted = positive[order]
    twice_wins = 0  # 2*wins + ties, accumulated per tie group
    neg_below = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        group_pos = 0
        group_neg = 0
        while j < n and s_sorted[j] == s_sorted[i]:
            if p_sorted[j]:
                group_pos += 1
            else:
                group_neg += 1
            j += 1
        twice_wins += 2 * group_pos * neg_below + group_pos * group_neg
        neg_below += group_neg
        i = j
    return twice_wins / (2 * n_pos * n_neg)


def auc_ovr_macro(
    truth: list[GrowthPattern],
    scores: np.ndarray,
    classes: tuple[GrowthPattern, ...] = GROWTH_PATTERNS,
) -> float:
    """Unweighted mean of per-class one-vs-rest AUC over eligible classes."""
    scores = np.asarray(scores, dtype=np.float64)
    _check_lengths(truth, scores)
    if scores.ndim != 2 or scores.shape[1] != len(classes):
        raise ValueError(f"scores must be (n, {len(classes)}), got {scores.shape}")
    aucs = []
    for ci, cls in enumerate(classes):
        positive = np.array([t is cls for t in truth])
        if positive.all() or not positive.any():
            continue
        aucs.append(binary_auc(positive, scores[:, ci]))
    if not aucs:
        raise ValueError("no class has both positive and negative samples")
    return sum(aucs) / len(aucs)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    f1_macro: float
    aucroc_macro: float
    per_class: dict[GrowthPattern, tuple[float, float, float]]
    confusion: np.ndarray
    n_samples: int


def evaluate(
    truth: list[GrowthPattern],
    predicted: list[GrowthPattern],
    scores: np.ndarray,
    classes: tuple[GrowthPattern, ...] = GROWTH_PATTERNS,
) -> EvalReport:
    return EvalReport(
        accuracy=accuracy(truth, predicted),
        f1_macro=f1_macro(truth, predicted, classes),
        aucroc_macro=auc_ovr_macro(truth, scores, classes),
        per_class=per_class_prf(truth, predicted, classes),
        confusion=confusion_matrix(truth, predicted, classes),
        n_samples=len(truth),
    )


METRIC_NAMES = ("aucroc_macro", "f1_macro", "accuracy")


def aggregate_trials(reports: list[EvalReport]) -> dict[str, tuple[float, float]]:
    """Per metric: (mean, sample standard deviation); a single trial gets std 0."""
    if not reports:
        raise ValueError("no reports to aggregate")
    out = {}
    for name in METRIC_NAMES:
        vals = [getattr(r, name) for r in reports]
        mean = sum(vals) / len(vals)
        if len(vals) > 1:
            var = sum((v - mean) ** 2 for v in vals) / (len(vals) - 1)
            std = math.sqrt(var)
        else:
            std = 0.0
        out[name] = (mean, std)
    return out


def format_mean_std(mean: float, std: float, digits: int = 2) -> str:
    return f"{mean:.{digits}f} ± {std:.{digits}f}"


# --- CSV artifacts -------------------------------------------------------------

EVAL_CSV_HEADER = [
    "protocol",
    "trial",
    "n_samples",
    "accuracy",
    "f1_macro",
    "aucroc_macro",
]


def write_eval_csv(path: str | Path, protocol: str, trial: int, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVAL_CSV_HEADER)
        writer.writerow(
            [
                protocol,
                trial,
                report.n_samples,
                repr(report.accuracy),
                repr(report.f1_macro),
                repr(report.aucroc_macro),
            ]
        )


def read_eval_csv(path: str | Path) -> tuple[str, int, dict[str, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EVAL_CSV_HEADER:
            raise DataError(f"{path}: unexpected eval header {header}")
        row = next(reader, None)
        if row is None:
            raise DataError(f"{path}: empty eval file")
    protocol, trial, n_samples, acc, f1, auc = row
    return protocol, int(trial), {
        "accuracy": float(acc),
        "f1_macro": float(f1),
        "aucroc_macro": float(auc),
        "n_samples": int(n_samples),
    }


def write_confusion_csv(path: str | Path, confusion: np.ndarray) -> None:
    classes = [c.value for c in GROWTH_PATTERNS]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred", *classes])
        for i, name in enumerate(classes):
            writer.writerow([name, *(int(v) for v in confusion[i])])
