import numpy as np
import pytest

from lastmile import metrics
from lastmile.exceptions import ContractError
from lastmile.metrics import (METRIC_ROWS, LengthPair, RougeTriple, evaluate,
                              excess_length, length_adjust, length_pair,
                              rouge_l, rouge_n)


def test_rouge1_hand_case():
    t = rouge_n("the cat sat", "the cat slept", 1)
    assert t.precision == t.recall == pytest.approx(2 / 3, abs=1e-15)
    assert t.f1 == pytest.approx(2 / 3, abs=1e-15)


def test_rouge2_hand_case():
    t = rouge_n("the cat sat", "the cat slept", 2)
    assert t.precision == t.recall == t.f1 == pytest.approx(0.5, abs=1e-15)


def test_rouge_identical_strings():
    for fn in (lambda p, r: rouge_n(p, r, 1), lambda p, r: rouge_n(p, r, 2), rouge_l):
        t = fn("a b c", "a b c")
        assert t.precision == t.recall == t.f1 == 1.0


def test_rouge_disjoint_vocab():
    t = rouge_n("a b", "c d", 1)
    assert t.precision == t.recall == t.f1 == 0.0


def test_rouge_empty_pred():
    assert rouge_l("", "a b").precision == 0.0
    assert rouge_n("", "a b", 1).f1 == 0.0


def test_rouge_l_hand_case():
    t = rouge_l("the cat sat", "the cat slept")
    assert t.precision == t.recall == pytest.approx(2 / 3, abs=1e-15)


def test_rouge_l_subsequence_recall_one():
    assert rouge_l("x a y b z c", "a b c").recall == 1.0
    assert rouge_l("a b c", "a b c").recall == 1.0


def test_length_adjust_longer_prediction():
    adj = length_adjust(RougeTriple(0.5, 1.0, 2 / 3), LengthPair(4, 2))
    assert adj.precision == 0.5 and adj.recall == 0.5 and adj.f1 == 0.5


def test_length_adjust_shorter_prediction():
    adj = length_adjust(RougeTriple(1.0, 0.25, 0.4), LengthPair(1, 4))
    assert adj.precision == 0.25 and adj.recall == 0.25


def test_length_adjust_equal_lengths_identity():
    t = RougeTriple(0.7, 0.6, metrics._f1(0.7, 0.6))
    assert length_adjust(t, LengthPair(3, 3)) == t


def test_length_adjust_degenerate_zero():
    assert length_adjust(RougeTriple(1.0, 1.0, 1.0), LengthPair(0, 3)) == \
        RougeTriple(0.0, 0.0, 0.0)


def test_length_adjust_never_increases():
    rng = np.random.default_rng(0)
    words = [f"w{i}" for i in range(8)]
    for _ in range(100):
        pred = " ".join(rng.choice(words, size=rng.integers(1, 10)))
        ref = " ".join(rng.choice(words, size=rng.integers(1, 10)))
        lp = length_pair(pred, ref)
        for t in (rouge_n(pred, ref, 1), rouge_n(pred, ref, 2), rouge_l(pred, ref)):
            adj = length_adjust(t, lp)
            assert adj.precision <= t.precision + 1e-15
            assert adj.recall <= t.recall + 1e-15
            assert adj.f1 <= t.f1 + 1e-12
            for v in (adj.precision, adj.recall, adj.f1):
                assert 0.0 <= v <= 1.0


def test_la_rouge1_precision_equals_recall():
    rng = np.random.default_rng(1)
    words = [f"w{i}" for i in range(12)]
    for _ in range(200):
        pred = " ".join(rng.choice(words, size=rng.integers(1, 15)))
        ref = " ".join(rng.choice(words, size=rng.integers(1, 15)))
        adj = length_adjust(rouge_n(pred, ref, 1), length_pair(pred, ref))
        assert adj.precision == pytest.approx(adj.recall, abs=1e-12)


def test_excess_length():
    assert excess_length(["a b"], ["a b"]) == 0.0
    assert excess_length(["a b c"], ["a"]) == 2.0
    assert excess_length(["a"], ["a b c"]) == -2.0


def test_excess_length_translation_consistent():
    preds = ["a b", "c", "d e f"]
    refs = ["a", "c c", "d"]
    base = excess_length(preds, refs)
    longer = [p + " x y" for p in preds]
    assert excess_length(longer, refs) == pytest.approx(base + 2.0)


def test_excess_length_mismatch():
    with pytest.raises(ContractError):
        excess_length(["a"], ["a", "b"])


def test_evaluate_identical_pair():
    report = evaluate(["the cat"], ["the cat"])
    for name, value in report.items():
        if name == "excess-length":
            assert value == 0.0
        else:
            assert value == 1.0


def test_evaluate_row_count():
    report = evaluate(["a"], ["a"])
    assert len(report) == 19
    assert len(METRIC_ROWS) == 19
    assert set(report) == set(METRIC_ROWS)


def test_evaluate_averaging():
    report = evaluate(["a b", "x"], ["a b", "q"])
    assert report["rouge1-F1"] == pytest.approx(0.5)


def test_report_serialization(tmp_path):
    reports = {"base": evaluate(["a b"], ["a"]), "rl": evaluate(["a"], ["a"])}
    metrics.write_report_csv(reports, tmp_path / "r.csv")
    metrics.write_report_markdown(reports, tmp_path / "r.md")
    csv_lines = (tmp_path / "r.csv").read_text().strip().split("\n")
    assert csv_lines[0] == "metric,base,rl"
    assert len(csv_lines) == 1 + 19
    md_lines = (tmp_path / "r.md").read_text().strip().split("\n")
    assert len(md_lines) == 2 + 19
