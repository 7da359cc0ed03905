"""Synthetic negative examples for reward-model training.

Five corruption categories, each producing one negative per source example:
random output tokens, re-paired outputs, shuffled output words, repetitive
tails, and input echoes. Positives carry weight 1.0 and all-ones token
targets; negatives carry weight 1/5 and all-zero targets.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .corpus import EOS, Example, ExampleSet
from .exceptions import CategoryInfeasibleError, ContractError

NEGATIVE_WEIGHT = 1.0 / 5.0
DEFAULT_OUTPUT_CAP = 100


class NegCategory(IntEnum):
    RANDOM_TOKENS = 1
    RE_PAIRED = 2
    SHUFFLED = 3
    REPETITIVE_TAIL = 4
    INPUT_ECHO = 5


@dataclass
class RewardDatum:
    example: Example
    label: int  # 0 = positive, else NegCategory value
    weight: float
    token_targets: np.ndarray  # one target per output token (EOS included)

    @property
    def is_positive(self):
        return self.label == 0


def _as_datum(source, new_output_ids, category, vocab):
    body = [i for i in new_output_ids if i != EOS]
    ex = Example(
        id=source.id,
        input_text=source.input_text,
        output_text=vocab.decode(body),
        input_tokens=list(source.input_tokens),
        output_tokens=body + [EOS],
    )
    targets = np.zeros(len(ex.output_tokens))
    return RewardDatum(ex, int(category), NEGATIVE_WEIGHT, targets)


def positive_datum(example):
    targets = np.ones(len(example.output_tokens))
    return RewardDatum(example, 0, 1.0, targets)


def _random_tokens(ex, vocab_ids, rng):
    k = len(ex.output_tokens) - 1  # body length, EOS excluded
    return rng.choice(vocab_ids, size=max(k, 1)).tolist()


def _derangement(n, rng):
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def _shuffled(ex, rng):
    body = ex.output_tokens[:-1]
    if len(set(body)) < 2:
        # every permutation is identical; nothing different to sample
        return list(body)
    while True:
        perm = rng.permutation(len(body))
        shuffled = [body[i] for i in perm]
        if shuffled != list(body):
            return shuffled


def _repetitive_tail(ex, rng, output_cap):
    body = ex.output_tokens[:-1]
    frac = rng.uniform(0.3, 0.7)
    keep = max(1, int(round(frac * len(body))))
    prefix = list(body[:keep])
    k = min(int(rng.integers(1, 6)), len(prefix))
    block = prefix[-k:]
    out = list(prefix)
    while len(out) < output_cap - 1:
        out.extend(block)
    return out[: output_cap - 1]


def _input_echo(ex, output_cap):
    return list(ex.input_tokens[: output_cap - 1])


def synthesize(category, source, seed, output_cap=DEFAULT_OUTPUT_CAP):
    """One negative per source example, deterministic per seed."""
    if len(source) == 0:
        raise ContractError("source set is empty")
    category = NegCategory(category)
    if category is NegCategory.RE_PAIRED and len(source) < 2:
        raise CategoryInfeasibleError("re-pairing needs at least 2 examples")
    rng = np.random.default_rng(seed)
    vocab = source.vocab
    vocab_ids = np.array(vocab.non_reserved_ids())
    out = []
    if category is NegCategory.RE_PAIRED:
        perm = _derangement(len(source), rng)
        for i, ex in enumerate(source):
            donor = source[int(perm[i])]
            out.append(_as_datum(ex, donor.output_tokens[:-1], category, vocab))
        return out
    for ex in source:
        if category is NegCategory.RANDOM_TOKENS:
            body = _random_tokens(ex, vocab_ids, rng)
        elif category is NegCategory.SHUFFLED:
            body = _shuffled(ex, rng)
        elif category is NegCategory.REPETITIVE_TAIL:
            body = _repetitive_tail(ex, rng, output_cap)
        else:
            body = _input_echo(ex, output_cap)
        out.append(_as_datum(ex, body, category, vocab))
    return out


def build_reward_dataset(positives, negative_seed, output_cap=DEFAULT_OUTPUT_CAP):
    """Positives plus all five negative classes, shuffled deterministically."""
    if len(positives) == 0:
        raise ContractError("positives set is empty")
    data = [positive_datum(ex) for ex in positives]
    for category in NegCategory:
        data.extend(synthesize(category, positives, negative_seed + int(category),
                               output_cap=output_cap))
    order = np.random.default_rng(negative_seed).permutation(len(data))
    return [data[i] for i in order]


def export_jsonl(data, path):
    """Inspection dump of the assembled reward dataset."""
    with open(path, "w", encoding="utf-8") as fh:
        for d in data:
            fh.write(json.dumps({
                "input": d.example.input_text,
                "output": d.example.output_text,
                "label": "positive" if d.is_positive else NegCategory(d.label).name.lower(),
                "weight": d.weight,
            }) + "\n")
