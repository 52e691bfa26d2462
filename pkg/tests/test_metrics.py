"""Tests for classification metrics, ROC/AUC, and report emission."""

from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from urlgraphnet.data import CLASS_NAMES, Corpus, Record
from urlgraphnet.errors import (
    BadTargetError,
    DegenerateLabelsError,
    LengthMismatchError,
)
from urlgraphnet.metrics import (
    FPR_GRID,
    MetricsReport,
    auc,
    classification_report,
    confusion_matrix,
    evaluate_model,
    macro_auc,
    macro_roc_curve,
    roc_curve,
    write_report,
)
from urlgraphnet.model import ModelConfig, ModelParams, init_params, param_shapes, predict


def mann_whitney_auc(y: np.ndarray, s: np.ndarray) -> float:
    """Brute-force pairwise concordance with ties scored 0.5."""
    pos = s[y == 1]
    neg = s[y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


def zero_params(config: ModelConfig) -> ModelParams:
    """All-zero weights: the model outputs uniform probabilities."""
    return ModelParams(
        config, {name: np.zeros(shape) for name, shape in param_shapes(config).items()}
    )


def mixed_corpus() -> Corpus:
    """Twelve short records covering all four classes (benign majority)."""
    urls = {
        0: ["alpha", "beta", "gamma", "delta", "epsilon"],
        1: ["z=1", "q=2", "r=3"],
        2: ["9.9.9.9/x.exe", "1.2.3.4/y.exe"],
        3: ["pay-pal", "log-in"],
    }
    return Corpus(
        [Record(url, label) for label, group in urls.items() for url in group]
    )


class TestConfusionMatrix:
    def test_hand_count(self):
        matrix = confusion_matrix([0, 1, 1], [0, 1, 0])
        expected = np.zeros((4, 4), dtype=np.int64)
        expected[0, 0] = 1
        expected[1, 0] = 1
        expected[1, 1] = 1
        np.testing.assert_array_equal(matrix, expected)

    def test_perfect_predictions_are_diagonal(self):
        y = [0, 0, 1, 2, 3, 3, 3]
        matrix = confusion_matrix(y, y)
        np.testing.assert_array_equal(matrix, np.diag([2, 1, 1, 3]))

    def test_constant_predictor_fills_one_column(self):
        matrix = confusion_matrix([0, 1, 2, 3], [0, 0, 0, 0])
        assert matrix[:, 0].tolist() == [1, 1, 1, 1]
        assert matrix[:, 1:].sum() == 0

    def test_length_mismatch_rejected(self):
        with pytest.raises(LengthMismatchError):
            confusion_matrix([0, 1], [0])

    def test_empty_rejected(self):
        with pytest.raises(LengthMismatchError):
            confusion_matrix([], [])

    def test_out_of_range_ids_rejected(self):
        with pytest.raises(BadTargetError):
            confusion_matrix([0, 4], [0, 0])
        with pytest.raises(BadTargetError):
            confusion_matrix([0, 1], [-1, 0])


class TestClassificationReport:
    def test_hand_count_class_zero(self):
        report = classification_report([0, 1, 1], [0, 1, 0])
        c0 = report.per_class[0]
        assert c0.precision == 0.5
        assert c0.recall == 1.0
        assert abs(c0.f1 - 2.0 / 3.0) < 1e-15
        assert c0.support == 1

    def test_perfect_predictions_score_one(self):
        y = [0, 1, 2, 3, 0, 1]
        report = classification_report(y, y)
        assert report.accuracy == 1.0
        for c, m in enumerate(report.per_class):
            assert (m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0)
        assert report.macro_avg["f1"] == 1.0
        assert report.weighted_avg["f1"] == 1.0

    def test_accuracy_is_trace_over_n(self):
        rng = np.random.default_rng(3)
        y = rng.integers(0, 4, size=200)
        p = rng.integers(0, 4, size=200)
        report = classification_report(y, p)
        assert report.accuracy == np.trace(report.confusion) / 200

    def test_weighted_recall_equals_accuracy_exactly(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(1, 120))
            y = rng.integers(0, 4, size=n)
            p = rng.integers(0, 4, size=n)
            report = classification_report(y, p)
            assert report.weighted_avg["recall"] == report.accuracy

    def test_supports_sum_to_n(self):
        rng = np.random.default_rng(7)
        y = rng.integers(0, 4, size=57)
        p = rng.integers(0, 4, size=57)
        report = classification_report(y, p)
        assert sum(m.support for m in report.per_class) == 57

    def test_zero_denominators_are_flagged(self):
        # Class 3 never occurs and is never predicted; class 2 is never
        # predicted but does occur.
        report = classification_report([0, 1, 2], [0, 1, 1])
        assert report.per_class[3].degenerate_precision
        assert report.per_class[3].degenerate_recall
        assert report.per_class[3].precision == 0.0
        assert report.per_class[2].degenerate_precision
        assert not report.per_class[2].degenerate_recall
        assert report.zero_support_classes == (3,)

    def test_normalized_rows_sum_to_one_or_zero(self):
        report = classification_report([0, 0, 1, 2], [0, 1, 1, 0])
        sums = report.confusion_normalized.sum(axis=1)
        for c in range(4):
            if c in report.zero_support_classes:
                assert sums[c] == 0.0
            else:
                assert abs(sums[c] - 1.0) < 1e-12

    def test_rates_lie_in_unit_interval(self):
        rng = np.random.default_rng(11)
        y = rng.integers(0, 4, size=80)
        p = rng.integers(0, 4, size=80)
        report = classification_report(y, p)
        values = [report.accuracy]
        for m in report.per_class:
            values += [m.precision, m.recall, m.f1]
        values += list(report.macro_avg.values())
        values += list(report.weighted_avg.values())
        assert all(0.0 <= v <= 1.0 for v in values)


class TestRocCurve:
    def test_perfect_separation(self):
        curve = roc_curve([1, 1, 0, 0], [0.9, 0.8, 0.3, 0.2])
        points = set(zip(curve.fpr.tolist(), curve.tpr.tolist()))
        assert (0.0, 1.0) in points
        assert curve.auc == 1.0

    def test_three_quarters_concordance(self):
        curve = roc_curve([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.2])
        assert abs(curve.auc - 0.75) < 1e-12

    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(3, 30))
            y = rng.integers(0, 2, size=n)
            if y.sum() in (0, n):
                y[0] = 1 - y[0]
            curve = roc_curve(y, rng.random(n))
            assert (curve.fpr[0], curve.tpr[0]) == (0.0, 0.0)
            assert (curve.fpr[-1], curve.tpr[-1]) == (1.0, 1.0)
            assert (np.diff(curve.fpr) >= 0).all()
            assert (np.diff(curve.tpr) >= 0).all()
            assert 0.0 <= curve.auc <= 1.0

    def test_thresholds_descend_from_sentinel(self):
        curve = roc_curve([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.2])
        assert curve.thresholds[0] > 0.9
        assert (np.diff(curve.thresholds) < 0).all()

    def test_tied_scores_collapse_to_one_threshold(self):
        curve = roc_curve([1, 0], [0.5, 0.5])
        assert curve.thresholds.tolist() == [1.5, 0.5]
        assert curve.auc == 0.5

    def test_degenerate_labels_rejected(self):
        with pytest.raises(DegenerateLabelsError):
            roc_curve([1, 1], [0.2, 0.3])
        with pytest.raises(DegenerateLabelsError):
            roc_curve([0, 0], [0.2, 0.3])
        with pytest.raises(DegenerateLabelsError):
            roc_curve([0, 2], [0.2, 0.3])

    def test_length_mismatch_rejected(self):
        with pytest.raises(LengthMismatchError):
            roc_curve([0, 1], [0.5])


class TestAuc:
    def test_chance_diagonal(self):
        assert auc([0.0, 1.0], [0.0, 1.0]) == 0.5

    def test_perfect_curve(self):
        assert auc([0.0, 0.0, 1.0], [0.0, 1.0, 1.0]) == 1.0

    def test_matches_mann_whitney_on_random_sets(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(4, 40))
            y = rng.integers(0, 2, size=n)
            if y.sum() in (0, n):
                y[0] = 1 - y[0]
            # One-decimal scores force plenty of ties.
            s = np.round(rng.random(n), 1)
            curve = roc_curve(y, s)
            assert abs(curve.auc - mann_whitney_auc(y, s)) < 1e-9

    def test_too_few_points_rejected(self):
        with pytest.raises(ValueError):
            auc([0.0], [0.0])

    def test_macro_auc_is_unweighted_mean(self):
        assert macro_auc([1.0, 0.5]) == 0.75
        assert macro_auc([0.9]) == 0.9
        with pytest.raises(ValueError):
            macro_auc([])


class TestMacroRocCurve:
    def test_grid_and_identical_curves(self):
        curve = roc_curve([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.2])
        grid, mean_tpr = macro_roc_curve([curve, curve])
        np.testing.assert_array_equal(grid, FPR_GRID)
        single_grid, single_tpr = macro_roc_curve([curve])
        np.testing.assert_allclose(mean_tpr, single_tpr, atol=1e-15)
        assert mean_tpr[-1] == 1.0

    def test_mean_of_two_distinct_curves(self):
        a = roc_curve([1, 1, 0, 0], [0.9, 0.8, 0.3, 0.2])
        b = roc_curve([1, 0, 1, 0], [0.9, 0.8, 0.3, 0.2])
        _, tpr_a = macro_roc_curve([a])
        _, tpr_b = macro_roc_curve([b])
        _, tpr_ab = macro_roc_curve([a, b])
        np.testing.assert_allclose(tpr_ab, (tpr_a + tpr_b) / 2.0, atol=1e-15)


class TestEvaluateModel:
    def test_constant_head_accuracy_is_majority_share(self):
        corpus = mixed_corpus()
        params = zero_params(ModelConfig(hidden=8))
        report = evaluate_model(params, corpus, np.arange(len(corpus.records)))
        share = corpus.class_counts[0] / len(corpus.records)
        assert report.accuracy == share
        # Uniform scores: every class ROC is pure ties, AUC 0.5.
        for curve in report.roc.values():
            assert curve.auc == 0.5

    def test_accuracy_equals_confusion_trace(self):
        corpus = mixed_corpus()
        params = init_params(ModelConfig(hidden=8, seed=1))
        report = evaluate_model(params, corpus, np.arange(len(corpus.records)))
        n = report.confusion.sum()
        assert report.accuracy == np.trace(report.confusion) / n

    def test_matches_external_recomputation(self):
        corpus = mixed_corpus()
        params = init_params(ModelConfig(hidden=8, seed=2))
        indices = np.arange(len(corpus.records))
        report = evaluate_model(params, corpus, indices)
        y_true = [corpus.records[i].label for i in indices]
        y_pred = [predict(corpus.records[i].url, params)[0] for i in indices]
        external = classification_report(y_true, y_pred)
        assert report.accuracy == external.accuracy
        assert report.per_class == external.per_class
        np.testing.assert_array_equal(report.confusion, external.confusion)

    def test_macro_auc_is_mean_of_class_aucs(self):
        corpus = mixed_corpus()
        params = init_params(ModelConfig(hidden=8, seed=3))
        report = evaluate_model(params, corpus, np.arange(len(corpus.records)))
        assert set(report.roc) == {0, 1, 2, 3}
        expected = np.mean([report.roc[c].auc for c in range(4)])
        assert abs(report.macro_auc - expected) < 1e-15
        assert report.macro_curve_fpr.size == 101

    def test_absent_class_has_no_curve(self):
        corpus = mixed_corpus()
        params = init_params(ModelConfig(hidden=8, seed=4))
        # Only benign and defacement records selected.
        report = evaluate_model(params, corpus, np.arange(8))
        assert set(report.roc) == {0, 1}
        assert report.macro_auc == macro_auc(
            [report.roc[0].auc, report.roc[1].auc]
        )

    def test_batch_size_does_not_change_results(self):
        corpus = mixed_corpus()
        params = init_params(ModelConfig(hidden=8, seed=5))
        indices = np.arange(len(corpus.records))
        a = evaluate_model(params, corpus, indices, batch_size=3)
        b = evaluate_model(params, corpus, indices, batch_size=32)
        assert a.to_dict() == b.to_dict()

    def test_empty_selection_rejected(self):
        corpus = mixed_corpus()
        params = init_params(ModelConfig(hidden=8))
        with pytest.raises(LengthMismatchError):
            evaluate_model(params, corpus, [])


class TestReportSerialization:
    def build_report(self) -> MetricsReport:
        corpus = mixed_corpus()
        params = init_params(ModelConfig(hidden=8, seed=6))
        return evaluate_model(params, corpus, np.arange(len(corpus.records)))

    def test_json_roundtrip_is_lossless(self):
        report = self.build_report()
        back = MetricsReport.from_json(report.to_json())
        assert back.to_dict() == report.to_dict()

    def test_classification_only_roundtrip(self):
        report = classification_report([0, 1, 2, 3], [0, 1, 1, 3])
        back = MetricsReport.from_json(report.to_json())
        assert back.to_dict() == report.to_dict()

    def test_write_report_files(self, tmp_path):
        report = self.build_report()
        paths = write_report(report, tmp_path, split="test")
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            "confusion.csv",
            "confusion_normalized.csv",
            "report.json",
            "roc_points.csv",
        ]
        payload = json.loads(paths["report"].read_text())
        assert payload["split"] == "test"
        assert payload["accuracy"] == report.accuracy

        with open(paths["roc"], newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["class", "fpr", "tpr", "threshold"]
        assert all(row[0] in CLASS_NAMES for row in rows[1:])
        total_points = sum(curve.fpr.size for curve in report.roc.values())
        assert len(rows) == 1 + total_points

        with open(paths["confusion"], newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["true\\pred", *CLASS_NAMES]
        parsed = np.array([[int(v) for v in row[1:]] for row in rows[1:]])
        np.testing.assert_array_equal(parsed, report.confusion)

    def test_roc_csv_floats_roundtrip(self, tmp_path):
        report = self.build_report()
        paths = write_report(report, tmp_path)
        with open(paths["roc"], newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        by_class: dict[str, list[tuple[float, float, float]]] = {}
        for name, fpr, tpr, threshold in rows:
            by_class.setdefault(name, []).append(
                (float(fpr), float(tpr), float(threshold))
            )
        for c, curve in report.roc.items():
            got = by_class[CLASS_NAMES[c]]
            np.testing.assert_array_equal([p[0] for p in got], curve.fpr)
            np.testing.assert_array_equal([p[1] for p in got], curve.tpr)
            np.testing.assert_array_equal([p[2] for p in got], curve.thresholds)
