import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from camchex.data import ClassGroup, LabelVector, PrevalenceTable, DEFAULT_LABEL_NAMES
from camchex.metrics import (
    UndefinedMetricError,
    average_precision,
    auroc,
    evaluate,
    read_predictions_csv,
    write_predictions_csv,
)


# ------------------------------------------------------------ brute oracles

def ap_oracle(scores, labels):
    """Direct precision/recall table walk; AP = sum of recall steps times precision."""
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    total_pos = sum(bool(l) for l in labels)
    if total_pos == 0:
        raise UndefinedMetricError("no positives")
    ap = 0.0
    hits = 0
    prev_recall = 0.0
    for rank, i in enumerate(order, start=1):
        if labels[i]:
            hits += 1
        precision = hits / rank
        recall = hits / total_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def auroc_oracle(scores, labels):
    """Quadratic pair counting with half-credit ties."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    if not pos or not neg:
        raise UndefinedMetricError("one class")
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


# ------------------------------------------------------------ worked values

def test_ap_worked_example():
    scores = np.array([0.9, 0.8, 0.7])
    labels = np.array([True, False, True])
    assert average_precision(scores, labels) == pytest.approx(5.0 / 6.0, abs=1e-12)


def test_auroc_worked_example():
    scores = np.array([0.9, 0.8, 0.7])
    labels = np.array([True, False, True])
    assert auroc(scores, labels) == pytest.approx(0.5, abs=1e-12)


def test_ap_perfect_ranking():
    scores = np.array([0.9, 0.8, 0.2, 0.1])
    labels = np.array([True, True, False, False])
    assert average_precision(scores, labels) == 1.0


def test_ap_single_positive_ranked_last():
    scores = np.array([0.9, 0.8, 0.7, 0.1])
    labels = np.array([False, False, False, True])
    assert average_precision(scores, labels) == pytest.approx(0.25, abs=1e-12)


def test_auroc_perfect_and_all_ties():
    assert auroc(np.array([0.9, 0.8, 0.2]), np.array([True, True, False])) == 1.0
    assert auroc(np.array([0.5, 0.5, 0.5, 0.5]), np.array([True, False, True, False])) == 0.5


def test_skip_signals():
    with pytest.raises(UndefinedMetricError):
        average_precision(np.array([0.5, 0.4]), np.array([False, False]))
    with pytest.raises(UndefinedMetricError):
        auroc(np.array([0.5, 0.4]), np.array([True, True]))


def test_metrics_match_oracles_on_random_instances():
    rng = np.random.default_rng(77)
    for trial in range(1000):
        n = int(rng.integers(2, 51))
        if trial % 2:
            scores = rng.random(n)
        else:
            scores = rng.integers(0, 5, size=n).astype(float)  # force ties
        labels = rng.random(n) < 0.4
        if labels.any():
            assert average_precision(scores, labels) == pytest.approx(
                ap_oracle(list(scores), list(labels)), abs=1e-9
            )
        if labels.any() and not labels.all():
            assert auroc(scores, labels) == pytest.approx(
                auroc_oracle(list(scores), list(labels)), abs=1e-9
            )


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 30))
    scores = rng.normal(size=n)
    labels = rng.random(n) < 0.5
    if not labels.any() or labels.all():
        return
    for transform in (np.exp, lambda s: 3.0 * s + 7.0):
        assert average_precision(transform(scores), labels) == pytest.approx(
            average_precision(scores, labels), abs=1e-12
        )
        assert auroc(transform(scores), labels) == pytest.approx(
            auroc(scores, labels), abs=1e-12
        )


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_auroc_complement_without_ties(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 40))
    scores = rng.permutation(np.arange(n)).astype(float)  # distinct scores
    labels = rng.random(n) < 0.5
    if not labels.any() or labels.all():
        return
    assert auroc(scores, labels) + auroc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


# ------------------------------------------------------------------ evaluate

def _prevalence(names, values):
    return PrevalenceTable(label_names=tuple(names), prevalence=np.asarray(values))


def _label_vectors(values, mask=None):
    values = np.asarray(values, dtype=np.float32)
    if mask is None:
        mask = np.ones_like(values, dtype=bool)
    return [LabelVector(values=v, mask=m) for v, m in zip(values, np.asarray(mask, dtype=bool))]


def test_evaluate_oracle_predictions():
    rng = np.random.default_rng(3)
    labels = (rng.random((40, 3)) < 0.4).astype(np.float32)
    labels[0] = [1, 1, 1]
    labels[1] = [0, 0, 0]
    report = evaluate(labels.copy(), _label_vectors(labels), _prevalence("abc", [0.4, 0.4, 0.4]))
    assert report.mAP == pytest.approx(1.0)
    assert report.macro_auroc == pytest.approx(1.0)


def test_evaluate_null_scores_give_half_auroc():
    rng = np.random.default_rng(12)
    n = 10_000
    labels = (rng.random((n, 2)) < 0.5).astype(np.float32)
    scores = rng.random((n, 2))
    report = evaluate(scores, _label_vectors(labels), _prevalence(["a", "b"], [0.5, 0.5]))
    assert report.macro_auroc == pytest.approx(0.5, abs=0.02)


def test_evaluate_head_body_tail_partition_for_26_labels():
    prevalences = [0.15] * 8 + [0.05] * 10 + [0.005] * 8
    table = _prevalence(DEFAULT_LABEL_NAMES, prevalences)
    counts = {g: sum(1 for x in table.groups if x is g) for g in ClassGroup}
    assert counts == {ClassGroup.HEAD: 8, ClassGroup.BODY: 10, ClassGroup.TAIL: 8}

    rng = np.random.default_rng(0)
    labels = (rng.random((60, 26)) < np.asarray(prevalences)).astype(np.float32)
    labels[0] = 1.0  # make sure every class has a positive
    scores = rng.random((60, 26))
    report = evaluate(scores, _label_vectors(labels), table)
    groups = {m.label: m.group for m in report.per_class}
    assert sum(1 for g in groups.values() if g is ClassGroup.HEAD) == 8
    assert sum(1 for g in groups.values() if g is ClassGroup.BODY) == 10
    assert sum(1 for g in groups.values() if g is ClassGroup.TAIL) == 8


def test_evaluate_respects_mask():
    values = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]], dtype=np.float32)
    mask = np.array([[True, False], [True, False], [True, False], [True, False]])
    scores = np.array([[0.9, 0.1], [0.2, 0.9], [0.8, 0.5], [0.1, 0.6]])
    report = evaluate(scores, _label_vectors(values, mask), _prevalence(["a", "b"], [0.5, 0.5]))
    names = {(name, reason.split(":")[0]) for name, reason in report.skipped_classes}
    assert ("b", "AP") in names and ("b", "AUROC") in names
    assert report.per_class[0].ap == pytest.approx(1.0)
    assert report.per_class[1].ap is None


def test_evaluate_permutation_invariant_over_studies():
    rng = np.random.default_rng(5)
    labels = (rng.random((30, 4)) < 0.5).astype(np.float32)
    labels[0] = 1.0
    scores = rng.random((30, 4))
    table = _prevalence("abcd", [0.5] * 4)
    report = evaluate(scores, _label_vectors(labels), table)
    perm = rng.permutation(30)
    report_p = evaluate(scores[perm], _label_vectors(labels[perm]), table)
    assert report.mAP == pytest.approx(report_p.mAP, abs=1e-12)
    assert report.macro_auroc == pytest.approx(report_p.macro_auroc, abs=1e-12)


def test_evaluate_all_skipped_raises():
    values = np.zeros((5, 2), dtype=np.float32)
    scores = np.random.default_rng(0).random((5, 2))
    with pytest.raises(UndefinedMetricError):
        evaluate(scores, _label_vectors(values), _prevalence(["a", "b"], [0.5, 0.5]))


def test_report_round_trip_and_invariants(tmp_path):
    rng = np.random.default_rng(8)
    labels = (rng.random((50, 5)) < 0.4).astype(np.float32)
    labels[0] = 1.0
    scores = rng.random((50, 5))
    report = evaluate(scores, _label_vectors(labels), _prevalence("abcde", [0.4] * 5))
    aps = [m.ap for m in report.per_class if m.ap is not None]
    assert report.mAP == pytest.approx(float(np.mean(aps)), abs=1e-12)
    report.save(tmp_path / "metrics.json")
    import json

    raw = json.loads((tmp_path / "metrics.json").read_text())
    assert set(raw) == {"per_class", "mAP", "macro_auroc", "group_map", "skipped_classes"}
    assert report.render_table()


def test_predictions_csv_round_trip(tmp_path):
    scores = np.random.default_rng(1).random((4, 3))
    ids = [f"study-{i}" for i in range(4)]
    write_predictions_csv(tmp_path / "p.csv", ids, scores, ["x", "y", "z"])
    back_ids, back, names = read_predictions_csv(tmp_path / "p.csv")
    assert back_ids == ids and names == ["x", "y", "z"]
    np.testing.assert_allclose(back, scores, atol=1e-6)
