"""Evaluation metrics: accuracy, P/R/F1, confusion matrices, ROC and AUC.

Conventions:

- Zero-denominator precision/recall are reported as 0.0 with a ``degenerate``
  flag rather than NaN.
- The weighted-average recall is computed from the integer confusion counts
  (sum of diagonal over N), making it *exactly* equal to accuracy — the
  algebraic identity would otherwise be blurred by per-class rounding.
- ROC scores are exponentiated log-probabilities; the transform is monotone,
  so AUC is identical either way.
- The macro ROC *curve* averages per-class TPR over a fixed 101-point FPR
  grid with linear interpolation; the macro *AUC* is the unweighted mean of
  the exact per-class AUCs, not the area under that averaged curve.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import CLASS_NAMES, NUM_CLASSES, Corpus
from .encoder import Charset, DEFAULT_CHARSET
from .engine import Tape
from .errors import (
    BadTargetError,
    DegenerateLabelsError,
    LengthMismatchError,
)
from .model import ModelParams, bind, forward
from .trainer import encode_subset

FPR_GRID = np.linspace(0.0, 1.0, 101)


# ----------------------------------------------------------------------
# Report containers


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    degenerate_precision: bool = False
    degenerate_recall: bool = False


@dataclass
class RocCurve:
    """One-vs-rest ROC curve: parallel fpr/tpr/threshold arrays plus AUC."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


@dataclass
class MetricsReport:
    accuracy: float
    per_class: list[ClassMetrics]
    macro_avg: dict[str, float]
    weighted_avg: dict[str, float]
    confusion: np.ndarray
    confusion_normalized: np.ndarray
    zero_support_classes: tuple[int, ...]
    roc: dict[int, RocCurve] | None = None
    macro_auc: float | None = None
    macro_curve_fpr: np.ndarray | None = None
    macro_curve_tpr: np.ndarray | None = None

    def to_dict(self) -> dict:
        roc = None
        if self.roc is not None:
            roc = {
                CLASS_NAMES[c]: {
                    "fpr": curve.fpr.tolist(),
                    "tpr": curve.tpr.tolist(),
                    "thresholds": curve.thresholds.tolist(),
                    "auc": curve.auc,
                }
                for c, curve in sorted(self.roc.items())
            }
        macro_curve = None
        if self.macro_curve_fpr is not None:
            macro_curve = {
                "fpr": self.macro_curve_fpr.tolist(),
                "tpr": self.macro_curve_tpr.tolist(),
            }
        return {
            "accuracy": self.accuracy,
            "classes": [
                {
                    "name": CLASS_NAMES[c],
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "support": m.support,
                    "degenerate_precision": m.degenerate_precision,
                    "degenerate_recall": m.degenerate_recall,
                }
                for c, m in enumerate(self.per_class)
            ],
            "macro_avg": dict(self.macro_avg),
            "weighted_avg": dict(self.weighted_avg),
            "confusion": self.confusion.tolist(),
            "confusion_normalized": self.confusion_normalized.tolist(),
            "zero_support_classes": list(self.zero_support_classes),
            "roc": roc,
            "macro_auc": self.macro_auc,
            "macro_curve": macro_curve,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> MetricsReport:
        roc = None
        if payload.get("roc") is not None:
            roc = {
                CLASS_NAMES.index(name): RocCurve(
                    fpr=np.asarray(entry["fpr"], dtype=np.float64),
                    tpr=np.asarray(entry["tpr"], dtype=np.float64),
                    thresholds=np.asarray(entry["thresholds"], dtype=np.float64),
                    auc=entry["auc"],
                )
                for name, entry in payload["roc"].items()
            }
        macro_curve = payload.get("macro_curve")
        return cls(
            accuracy=payload["accuracy"],
            per_class=[
                ClassMetrics(
                    precision=m["precision"],
                    recall=m["recall"],
                    f1=m["f1"],
                    support=m["support"],
                    degenerate_precision=m["degenerate_precision"],
                    degenerate_recall=m["degenerate_recall"],
                )
                for m in payload["classes"]
            ],
            macro_avg=dict(payload["macro_avg"]),
            weighted_avg=dict(payload["weighted_avg"]),
            confusion=np.asarray(payload["confusion"], dtype=np.int64),
            confusion_normalized=np.asarray(
                payload["confusion_normalized"], dtype=np.float64
            ),
            zero_support_classes=tuple(payload["zero_support_classes"]),
            roc=roc,
            macro_auc=payload.get("macro_auc"),
            macro_curve_fpr=(
                None if macro_curve is None
                else np.asarray(macro_curve["fpr"], dtype=np.float64)
            ),
            macro_curve_tpr=(
                None if macro_curve is None
                else np.asarray(macro_curve["tpr"], dtype=np.float64)
            ),
        )

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        return cls.from_dict(json.loads(text))


# ----------------------------------------------------------------------
# Classification metrics


def _as_class_ids(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64).reshape(-1)
    if arr.size and (arr.min() < 0 or arr.max() >= NUM_CLASSES):
        raise BadTargetError(f"{name} contains ids outside 0..{NUM_CLASSES - 1}")
    return arr


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    """4x4 counts with entry [i, j] = #(true == i and predicted == j)."""
    t = _as_class_ids(y_true, "y_true")
    p = _as_class_ids(y_pred, "y_pred")
    if t.size != p.size:
        raise LengthMismatchError(
            f"y_true has {t.size} entries, y_pred has {p.size}"
        )
    if t.size == 0:
        raise LengthMismatchError("need at least one prediction")
    matrix = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(matrix, (t, p), 1)
    return matrix


def classification_report(y_true, y_pred) -> MetricsReport:
    """Accuracy, per-class P/R/F1/support, macro and weighted averages."""
    matrix = confusion_matrix(y_true, y_pred)
    support = matrix.sum(axis=1)
    predicted = matrix.sum(axis=0)
    diagonal = np.diag(matrix)
    n = int(support.sum())

    per_class: list[ClassMetrics] = []
    for c in range(NUM_CLASSES):
        tp = int(diagonal[c])
        p_den = int(predicted[c])
        r_den = int(support[c])
        precision = tp / p_den if p_den else 0.0
        recall = tp / r_den if r_den else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(
            ClassMetrics(
                precision=precision,
                recall=recall,
                f1=f1,
                support=r_den,
                degenerate_precision=p_den == 0,
                degenerate_recall=r_den == 0,
            )
        )

    macro_avg = {
        key: float(np.mean([getattr(m, key) for m in per_class]))
        for key in ("precision", "recall", "f1")
    }
    weighted_avg = {
        key: float(
            sum(m.support * getattr(m, key) for m in per_class) / n
        )
        for key in ("precision", "f1")
    }
    # Weighted recall reduces to sum(tp)/N in exact integer arithmetic,
    # which is the same expression as accuracy; evaluating it that way
    # keeps the identity exact instead of within rounding.
    weighted_avg["recall"] = int(diagonal.sum()) / n
    accuracy = int(diagonal.sum()) / n

    normalized = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.float64)
    zero_rows = []
    for c in range(NUM_CLASSES):
        if support[c]:
            normalized[c] = matrix[c] / support[c]
        else:
            zero_rows.append(c)

    return MetricsReport(
        accuracy=accuracy,
        per_class=per_class,
        macro_avg=macro_avg,
        weighted_avg=weighted_avg,
        confusion=matrix,
        confusion_normalized=normalized,
        zero_support_classes=tuple(zero_rows),
    )


# ----------------------------------------------------------------------
# ROC / AUC


def roc_curve(y_true_binary, scores) -> RocCurve:
    """One-vs-rest ROC points at each distinct score, descending.

    The first point is (0, 0) at a sentinel threshold above the maximum
    score; the last is always (1, 1).  Tied scores collapse into a single
    threshold, which makes the trapezoidal area equal to the tie-aware
    Mann-Whitney statistic.
    """
    y = np.asarray(y_true_binary).reshape(-1)
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    if y.size != s.size:
        raise LengthMismatchError(f"{y.size} labels vs {s.size} scores")
    if not np.isin(y, (0, 1)).all():
        raise DegenerateLabelsError("labels must be 0 or 1")
    y = y.astype(np.int64)
    positives = int(y.sum())
    negatives = y.size - positives
    if positives == 0 or negatives == 0:
        raise DegenerateLabelsError(
            "ROC needs at least one positive and one negative label"
        )

    order = np.argsort(-s, kind="stable")
    y_sorted = y[order]
    s_sorted = s[order]
    # Last index of each run of equal scores.
    last_of_run = np.flatnonzero(np.append(np.diff(s_sorted) != 0.0, True))
    tp = np.cumsum(y_sorted)[last_of_run]
    fp = (last_of_run + 1) - tp

    fpr = np.concatenate(([0.0], fp / negatives))
    tpr = np.concatenate(([0.0], tp / positives))
    thresholds = np.concatenate(([s_sorted[0] + 1.0], s_sorted[last_of_run]))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc(fpr, tpr))


def auc(fpr, tpr) -> float:
    """Trapezoidal area under a curve given by parallel fpr/tpr arrays."""
    fpr = np.asarray(fpr, dtype=np.float64).reshape(-1)
    tpr = np.asarray(tpr, dtype=np.float64).reshape(-1)
    if fpr.size != tpr.size:
        raise LengthMismatchError(f"{fpr.size} fpr values vs {tpr.size} tpr")
    if fpr.size < 2:
        raise ValueError("AUC needs at least two curve points")
    return float(np.trapezoid(tpr, fpr))


def macro_auc(per_class_aucs: Sequence[float]) -> float:
    """Unweighted mean of one-vs-rest AUCs."""
    values = [a for a in per_class_aucs if a is not None]
    if not values:
        raise ValueError("macro AUC needs at least one per-class AUC")
    return float(np.mean(values))


def macro_roc_curve(curves: Sequence[RocCurve]) -> tuple[np.ndarray, np.ndarray]:
    """Mean TPR over a fixed 101-point FPR grid with linear interpolation."""
    if not curves:
        raise ValueError("macro curve needs at least one ROC curve")
    stacked = np.zeros((len(curves), FPR_GRID.size))
    for k, curve in enumerate(curves):
        # Collapse vertical segments (duplicate fpr) to their top tpr so
        # interpolation is well defined.
        fpr_unique, last_index = np.unique(curve.fpr[::-1], return_index=True)
        tpr_at = curve.tpr[::-1][last_index]
        stacked[k] = np.interp(FPR_GRID, fpr_unique, tpr_at)
    return FPR_GRID.copy(), stacked.mean(axis=0)


# ----------------------------------------------------------------------
# Model evaluation


def evaluate_model(
    params: ModelParams,
    corpus: Corpus,
    indices,
    batch_size: int = 32,
    charset: Charset = DEFAULT_CHARSET,
) -> MetricsReport:
    """Full MetricsReport for the model on the given record indices.

    Runs forward passes without tape recording, in index order, batched
    only for bookkeeping (evaluation math is per-example).  Scores for the
    ROC analysis are the exponentiated log-probabilities.  A class with no
    positives or no negatives in ``indices`` gets no ROC curve and is
    excluded from the macro AUC.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    graphs, y_true = encode_subset(corpus, indices, charset, params.config.extended)
    if not graphs:
        raise LengthMismatchError("evaluation needs at least one record")
    tape = Tape(record=False)
    model = bind(tape, params, trainable=False)
    probs = np.zeros((len(graphs), NUM_CLASSES))
    for start in range(0, len(graphs), batch_size):
        for k in range(start, min(start + batch_size, len(graphs))):
            probs[k] = np.exp(forward(tape, graphs[k], model).data[0])
    y_pred = np.argmax(probs, axis=1)

    report = classification_report(y_true, y_pred)
    curves: dict[int, RocCurve] = {}
    for c in range(NUM_CLASSES):
        binary = (y_true == c).astype(np.int64)
        if 0 < binary.sum() < binary.size:
            curves[c] = roc_curve(binary, probs[:, c])
    if curves:
        report.roc = curves
        report.macro_auc = macro_auc([curve.auc for curve in curves.values()])
        grid, mean_tpr = macro_roc_curve(list(curves.values()))
        report.macro_curve_fpr = grid
        report.macro_curve_tpr = mean_tpr
    return report


# ----------------------------------------------------------------------
# Report files


def write_report(report: MetricsReport, out_dir, split: str = "test") -> dict[str, Path]:
    """Write report.json plus ROC and confusion CSVs; returns the paths.

    ``report.json`` carries every MetricsReport field plus the evaluated
    split's name.  ``roc_points.csv`` has one row per curve point in class
    order (`class,fpr,tpr,threshold`); the two confusion CSVs put true
    classes on rows and predicted classes on columns.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "roc": out / "roc_points.csv",
        "confusion": out / "confusion.csv",
        "confusion_normalized": out / "confusion_normalized.csv",
    }

    payload = report.to_dict()
    payload["split"] = split
    paths["report"].write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    with open(paths["roc"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("class", "fpr", "tpr", "threshold"))
        for c, curve in sorted((report.roc or {}).items()):
            for fpr, tpr, threshold in zip(curve.fpr, curve.tpr, curve.thresholds):
                writer.writerow(
                    (
                        CLASS_NAMES[c],
                        repr(float(fpr)),
                        repr(float(tpr)),
                        repr(float(threshold)),
                    )
                )

    for key, matrix in (
        ("confusion", report.confusion),
        ("confusion_normalized", report.confusion_normalized),
    ):
        with open(paths[key], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(("true\\pred", *CLASS_NAMES))
            for c in range(NUM_CLASSES):
                row = [
                    repr(v) if isinstance(v, float) else str(int(v))
                    for v in matrix[c].tolist()
                ]
                writer.writerow((CLASS_NAMES[c], *row))
    return paths
