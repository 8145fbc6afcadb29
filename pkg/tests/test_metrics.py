import numpy as np
import pytest

from cellmaps.metrics import (
    EvalReport,
    accuracy,
    aggregate_trials,
    auc_ovr_macro,
    binary_auc,
    confusion_matrix,
    evaluate,
    f1_macro,
    format_mean_std,
    per_class_prf,
    read_eval_csv,
    write_confusion_csv,
    write_eval_csv,
)
from cellmaps.splits import GROWTH_PATTERNS, GrowthPattern

A, B, C = GrowthPattern.LEPIDIC, GrowthPattern.ACINAR, GrowthPattern.PAPILLARY


def trapezoid_auc(positive, scores):
    """Independent oracle: trapezoidal integration of the tie-grouped ROC curve."""
    positive = np.asarray(positive, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], positive[order]
    n_pos = int(p.sum())
    n_neg = len(p) - n_pos
    pts = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    while i < len(s):
        j = i
        while j < len(s) and s[j] == s[i]:
            j += 1
        tp += int(p[i:j].sum())
        fp += (j - i) - int(p[i:j].sum())
        pts.append((fp / n_neg, tp / n_pos))
        i = j
    area = 0.0
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


class TestAccuracy:
    def test_two_of_three(self):
        assert accuracy([A, B, B], [A, A, B]) == pytest.approx(2 / 3)

    def test_perfect(self):
        assert accuracy([A, B, C], [A, B, C]) == 1.0

    def test_disjoint(self):
        assert accuracy([A, A], [B, B]) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            accuracy([], [])
        with pytest.raises(ValueError):
            accuracy([A], [A, B])

    def test_equals_confusion_trace(self):
        rng = np.random.default_rng(1)
        truth = [GROWTH_PATTERNS[i] for i in rng.integers(0, 6, 100)]
        pred = [GROWTH_PATTERNS[i] for i in rng.integers(0, 6, 100)]
        cm = confusion_matrix(truth, pred)
        assert accuracy(truth, pred) == np.trace(cm) / 100
        assert cm.sum() == 100


class TestF1Macro:
    def test_half_fixture(self):
        # truth AABB vs pred ABAB: both classes get P=R=F1=0.5, macro 0.5.
        assert f1_macro([A, A, B, B], [A, B, A, B]) == pytest.approx(0.5)

    def test_perfect_all_classes(self):
        truth = list(GROWTH_PATTERNS) * 3
        assert f1_macro(truth, truth) == 1.0

    def test_absent_classes_excluded(self):
        assert f1_macro([A, A, A], [A, A, A]) == 1.0

    def test_predicted_only_class_included(self):
        # B appears only in predictions: F1_B = 0 and B still counts.
        assert f1_macro([A, A], [A, B]) == pytest.approx((2 / 3) / 2)

    def test_zero_denominators_give_zero(self):
        prf = per_class_prf([A, A], [B, B])
        assert prf[A] == (0.0, 0.0, 0.0)
        assert prf[C] == (0.0, 0.0, 0.0)


class TestBinaryAuc:
    def test_three_quarters_fixture(self):
        # pairs: (.8,.7) win, (.8,.1) win, (.6,.7) loss, (.6,.1) win -> 3/4
        scores = np.array([0.8, 0.6, 0.7, 0.1])
        positive = np.array([True, True, False, False])
        assert binary_auc(positive, scores) == 0.75

    def test_perfect_ranking(self):
        assert binary_auc(np.array([True, True, False]), np.array([3.0, 2.0, 1.0])) == 1.0

    def test_all_ties_half(self):
        assert binary_auc(np.array([True, False, True, False]), np.zeros(4)) == 0.5

    def test_needs_both_sides(self):
        with pytest.raises(ValueError):
            binary_auc(np.array([True, True]), np.array([1.0, 2.0]))

    def test_matches_trapezoid_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(300):
            n = int(rng.integers(2, 60))
            positive = rng.random(n) < rng.uniform(0.2, 0.8)
            if positive.all() or not positive.any():
                continue
            # Coarse grid of scores forces plenty of ties.
            scores = np.round(rng.normal(size=n) * 4) / 4
            assert abs(binary_auc(positive, scores) - trapezoid_auc(positive, scores)) < 1e-12

    def test_invariant_under_strictly_increasing_transform(self):
        rng = np.random.default_rng(77)
        positive = rng.random(50) < 0.4
        positive[0] = True
        positive[1] = False
        scores = np.round(rng.uniform(-3, 3, 50) * 4) / 4
        base = binary_auc(positive, scores)
        for transform in (lambda s: 3.0 * s + 2.0, np.arctan, lambda s: s**3):
            assert binary_auc(positive, transform(scores)) == base


class TestAucOvrMacro:
    def test_macro_is_mean_of_eligible(self):
        truth = [A, A, B, B, C]
        rng = np.random.default_rng(3)
        scores = rng.normal(size=(5, 6))
        per = []
        for ci, cls in enumerate(GROWTH_PATTERNS):
            mask = np.array([t is cls for t in truth])
            if mask.any() and not mask.all():
                per.append(binary_auc(mask, scores[:, ci]))
        assert auc_ovr_macro(truth, scores) == pytest.approx(sum(per) / len(per))

    def test_single_class_truth_rejected(self):
        with pytest.raises(ValueError):
            auc_ovr_macro([A, A], np.zeros((2, 6)))

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            auc_ovr_macro([A, B], np.zeros((2, 4)))


class TestLabelPermutationInvariance:
    def test_all_metrics_stable_under_relabeling(self):
        rng = np.random.default_rng(8)
        truth = [GROWTH_PATTERNS[i] for i in rng.integers(0, 6, 120)]
        scores = rng.normal(size=(120, 6))
        pred = [GROWTH_PATTERNS[int(np.argmax(s))] for s in scores]
        perm = list(range(6))
        rng.shuffle(perm)
        relabel = {GROWTH_PATTERNS[i]: GROWTH_PATTERNS[perm[i]] for i in range(6)}
        truth_p = [relabel[t] for t in truth]
        pred_p = [relabel[p] for p in pred]
        scores_p = np.empty_like(scores)
        for i, j in enumerate(perm):
            scores_p[:, j] = scores[:, i]
        assert accuracy(truth_p, pred_p) == accuracy(truth, pred)
        assert f1_macro(truth_p, pred_p) == pytest.approx(f1_macro(truth, pred))
        assert auc_ovr_macro(truth_p, scores_p) == pytest.approx(auc_ovr_macro(truth, scores))


class TestAggregateTrials:
    def _report(self, acc):
        return EvalReport(acc, acc, acc, {}, np.zeros((6, 6), dtype=np.int64), 10)

    def test_constant_sequence(self):
        agg = aggregate_trials([self._report(0.6)] * 5)
        assert agg["accuracy"] == (0.6, 0.0)

    def test_two_point_std(self):
        agg = aggregate_trials([self._report(0.0), self._report(1.0)])
        mean, std = agg["accuracy"]
        assert mean == 0.5
        assert abs(std - 0.7071) < 1e-4

    def test_single_report(self):
        agg = aggregate_trials([self._report(0.63)])
        assert agg["accuracy"] == (0.63, 0.0)
        assert format_mean_std(0.63, 0.0) == "0.63 ± 0.00"

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_trials([])


def test_eval_csv_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    truth = [GROWTH_PATTERNS[i] for i in rng.integers(0, 6, 60)]
    scores = rng.normal(size=(60, 6))
    pred = [GROWTH_PATTERNS[int(np.argmax(s))] for s in scores]
    report = evaluate(truth, pred, scores)
    path = tmp_path / "eval.csv"
    write_eval_csv(path, "wsi", 3, report)
    protocol, trial, values = read_eval_csv(path)
    assert (protocol, trial) == ("wsi", 3)
    assert values["accuracy"] == report.accuracy
    assert values["f1_macro"] == report.f1_macro
    assert values["aucroc_macro"] == report.aucroc_macro
    write_confusion_csv(tmp_path / "confusion.csv", report.confusion)
    text = (tmp_path / "confusion.csv").read_text()
    assert text.count("\n") == 7
