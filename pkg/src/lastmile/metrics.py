"""ROUGE-1/2/L, length-adjusted variants, and excess-length statistics.

Metric tokenization is lowercased whitespace splitting; n-gram overlap uses
the clipped multiset convention. Length adjustment scales recall by ng/np
when the prediction is longer than the reference and precision by np/ng when
it is shorter, where np/ng count whitespace entities.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

from .exceptions import ContractError


@dataclass(frozen=True)
class RougeTriple:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class LengthPair:
    np_: int  # whitespace entities in the prediction
    ng: int   # whitespace entities in the ground truth


def _tokenize(text):
    return text.lower().split()


def _ngrams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def _triple(overlap, pred_total, ref_total):
    p = overlap / pred_total if pred_total else 0.0
    r = overlap / ref_total if ref_total else 0.0
    return RougeTriple(p, r, _f1(p, r))


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r else 0.0


def rouge_n(pred, ref, n):
    pred_counts = Counter(_ngrams(_tokenize(pred), n))
    ref_counts = Counter(_ngrams(_tokenize(ref), n))
    overlap = sum(min(c, ref_counts.get(gram, 0)) for gram, c in pred_counts.items())
    return _triple(overlap, sum(pred_counts.values()), sum(ref_counts.values()))


def _lcs_len(xs, ys):
    dp = [0] * (len(ys) + 1)
    for x in xs:
        prev = 0
        for j, y in enumerate(ys, start=1):
            cur = dp[j]
            dp[j] = prev + 1 if x == y else max(dp[j], dp[j - 1])
            prev = cur
    return dp[-1]


def rouge_l(pred, ref):
    pred_t = _tokenize(pred)
    ref_t = _tokenize(ref)
    lcs = _lcs_len(pred_t, ref_t)
    return _triple(lcs, len(pred_t), len(ref_t))


def length_pair(pred, ref):
    return LengthPair(len(pred.split()), len(ref.split()))


def length_adjust(t, lp):
    """Scale away the length confound; zero out degenerate pairs."""
    if lp.np_ == 0 or lp.ng == 0:
        return RougeTriple(0.0, 0.0, 0.0)
    recall = t.recall * (lp.ng / lp.np_ if lp.np_ > lp.ng else 1.0)
    precision = t.precision * (lp.np_ / lp.ng if lp.np_ < lp.ng else 1.0)
    return RougeTriple(precision, recall, _f1(precision, recall))


def excess_length(preds, refs):
    """Mean difference in whitespace-entity counts, prediction minus reference."""
    if len(preds) != len(refs):
        raise ContractError("preds and refs must align")
    diffs = [len(p.split()) - len(r.split()) for p, r in zip(preds, refs)]
    return sum(diffs) / len(diffs) if diffs else 0.0


METRIC_ROWS = (
    [f"la-rouge{k}-{which}" for k in ("1", "2", "L")
     for which in ("F1", "precision", "recall")]
    + [f"rouge{k}-{which}" for k in ("1", "2", "L")
       for which in ("F1", "precision", "recall")]
    + ["excess-length"]
)


def evaluate(outputs, refs):
    """Arithmetic mean of per-pair metrics; dict keyed by METRIC_ROWS."""
    if len(outputs) != len(refs):
        raise ContractError("outputs and refs must align")
    if not outputs:
        raise ContractError("nothing to evaluate")
    sums = {name: 0.0 for name in METRIC_ROWS if name != "excess-length"}
    for pred, ref in zip(outputs, refs):
        lp = length_pair(pred, ref)
        for key, triple in (("1", rouge_n(pred, ref, 1)),
                            ("2", rouge_n(pred, ref, 2)),
                            ("L", rouge_l(pred, ref))):
            adj = length_adjust(triple, lp)
            sums[f"rouge{key}-F1"] += triple.f1
            sums[f"rouge{key}-precision"] += triple.precision
            sums[f"rouge{key}-recall"] += triple.recall
            sums[f"la-rouge{key}-F1"] += adj.f1
            sums[f"la-rouge{key}-precision"] += adj.precision
            sums[f"la-rouge{key}-recall"] += adj.recall
    report = {name: sums[name] / len(outputs) for name in sums}
    report["excess-length"] = excess_length(outputs, refs)
    return report


def write_report_csv(reports, path):
    """reports: ordered dict column-name -> metric dict."""
    columns = list(reports)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric"] + columns)
        for row in METRIC_ROWS:
            writer.writerow([row] + [f"{reports[c][row]:.6f}" for c in columns])


def write_report_markdown(reports, path):
    columns = list(reports)
    lines = ["| metric | " + " | ".join(columns) + " |",
             "|" + "---|" * (len(columns) + 1)]
    for row in METRIC_ROWS:
        cells = " | ".join(f"{reports[c][row]:.3f}" for c in columns)
        lines.append(f"| {row} | {cells} |")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
