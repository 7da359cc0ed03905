import numpy as np
import pytest

from lastmile.corpus import EOS, ExampleSet, TaskConfig, Vocab, gen_extraction_task, make_example
from lastmile.exceptions import CategoryInfeasibleError
from lastmile.negatives import (NEGATIVE_WEIGHT, NegCategory, build_reward_dataset,
                                export_jsonl, synthesize)
from lastmile.verify import _has_repetitive_tail


@pytest.fixture(scope="module")
def positives():
    return gen_extraction_task(0, 40)


def test_category_codes_match_listing_order():
    assert [int(c) for c in NegCategory] == [1, 2, 3, 4, 5]
    assert NegCategory.RANDOM_TOKENS == 1 and NegCategory.INPUT_ECHO == 5


def test_input_echo_copies_input():
    vocab = Vocab(["a", "b", "c"])
    ex = make_example(0, "a b c", "a", vocab)
    source = ExampleSet([ex, make_example(1, "b", "b", vocab)], vocab)
    d = synthesize(NegCategory.INPUT_ECHO, source, seed=0)[0]
    assert d.example.output_tokens[:-1] == ex.input_tokens
    assert d.example.output_text == "a b c"


def test_shuffled_preserves_multiset_and_differs(positives):
    for d, ex in zip(synthesize(NegCategory.SHUFFLED, positives, 1), positives):
        body = d.example.output_tokens[:-1]
        orig = ex.output_tokens[:-1]
        assert sorted(body) == sorted(orig)
        if len(set(orig)) > 1:
            assert body != orig


def test_repaired_is_a_derangement(positives):
    negs = synthesize(NegCategory.RE_PAIRED, positives, 2)
    assert all(d.example.output_tokens != ex.output_tokens
               for d, ex in zip(negs, positives))
    donor_outputs = {tuple(ex.output_tokens) for ex in positives}
    assert all(tuple(d.example.output_tokens) in donor_outputs for d in negs)


def test_repaired_needs_two_examples():
    es = gen_extraction_task(0, 1)
    with pytest.raises(CategoryInfeasibleError):
        synthesize(NegCategory.RE_PAIRED, es, 0)


def test_random_tokens_length_and_vocab(positives):
    reserved_max = 4
    for d, ex in zip(synthesize(NegCategory.RANDOM_TOKENS, positives, 3), positives):
        body = d.example.output_tokens[:-1]
        assert len(body) == len(ex.output_tokens) - 1
        assert all(t > reserved_max for t in body)


def test_repetitive_tail_periodic(positives):
    for d in synthesize(NegCategory.REPETITIVE_TAIL, positives, 4):
        body = d.example.output_tokens[:-1]
        assert len(body) == 99  # fills to the output cap
        assert _has_repetitive_tail(body)


def test_synthesize_deterministic(positives):
    for cat in NegCategory:
        a = synthesize(cat, positives, 5)
        b = synthesize(cat, positives, 5)
        assert [d.example.output_tokens for d in a] == \
               [d.example.output_tokens for d in b]


def test_negative_weight_and_targets(positives):
    for cat in NegCategory:
        for d in synthesize(cat, positives, 6):
            assert d.weight == NEGATIVE_WEIGHT
            assert np.all(d.token_targets == 0.0)
            assert len(d.token_targets) == len(d.example.output_tokens)


def test_build_reward_dataset_counts_and_weights():
    positives = gen_extraction_task(1, 10)
    data = build_reward_dataset(positives, negative_seed=7)
    assert len(data) == 60
    assert sum(d.weight == 1.0 for d in data) == 10
    assert sum(d.weight == 0.2 for d in data) == 50
    assert abs(sum(d.weight for d in data) - 2 * 10) < 1e-12
    for cat in NegCategory:
        assert sum(d.label == int(cat) for d in data) == 10


def test_positive_targets_all_one():
    positives = gen_extraction_task(2, 5)
    data = build_reward_dataset(positives, negative_seed=8)
    for d in data:
        if d.is_positive:
            assert np.all(d.token_targets == 1.0)
            assert len(d.token_targets) == len(d.example.output_tokens)


def test_build_reward_dataset_shuffle_deterministic():
    positives = gen_extraction_task(3, 12)
    a = build_reward_dataset(positives, 9)
    b = build_reward_dataset(positives, 9)
    assert [(d.label, d.example.id) for d in a] == [(d.label, d.example.id) for d in b]


def test_export_jsonl(tmp_path):
    positives = gen_extraction_task(4, 6)
    data = build_reward_dataset(positives, 10)
    path = tmp_path / "reward.jsonl"
    export_jsonl(data, path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == len(data)
    import json
    row = json.loads(lines[0])
    assert set(row) == {"input", "output", "label", "weight"}
