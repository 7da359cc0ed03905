import json

import pytest

from lastmile import corpus
from lastmile.corpus import EOS, TaskConfig, Vocab, build_vocab, gen_extraction_task, split
from lastmile.exceptions import (ConfigError, EmptyDatasetError,
                                 MalformedRecordError)


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")


def test_build_vocab_keeps_tokens():
    v = build_vocab(["a b a"], 10)
    assert "a" in v and "b" in v
    assert len(v) == corpus.NUM_RESERVED + 2


def test_build_vocab_frequency_cut():
    v = build_vocab(["x y", "y z"], 6)
    assert "y" in v and "x" not in v and "z" not in v


def test_build_vocab_empty_corpus():
    assert len(build_vocab([], 100)) == corpus.NUM_RESERVED


def test_build_vocab_too_small():
    with pytest.raises(ConfigError):
        build_vocab(["a"], 5)


def test_vocab_roundtrip_and_persistence(tmp_path):
    v = build_vocab(["alpha beta\ngamma"], 100)
    text = "alpha beta\ngamma"
    assert v.decode(v.encode(text)) == corpus.normalize(text) == text
    v.save(tmp_path / "vocab.tsv")
    loaded = Vocab.load(tmp_path / "vocab.tsv")
    assert loaded.token_to_id == v.token_to_id


def test_load_examples_smallest_record(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [{"input": "a b", "output": "a"}])
    es = corpus.load_examples(path)
    assert len(es) == 1
    ex = es[0]
    assert len(ex.input_tokens) == 2
    assert ex.output_tokens[-1] == EOS
    assert len(ex.output_tokens) == 2


def test_load_examples_drops_overlong(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [{"input": " ".join(["w"] * 500), "output": "w"}])
    es = corpus.load_examples(path, input_cap=400)
    assert len(es) == 0 and es.n_dropped == 1


def test_load_examples_ids_dense(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(path, [{"input": f"tok{i}", "output": "x"} for i in range(3)])
    es = corpus.load_examples(path)
    assert [ex.id for ex in es] == [0, 1, 2]


def test_load_examples_missing_field_reports_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"input": "a", "output": "b"}\n{"input": "only"}\n')
    with pytest.raises(MalformedRecordError, match="line 2"):
        corpus.load_examples(path)


def test_load_examples_empty_file(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text("")
    with pytest.raises(EmptyDatasetError):
        corpus.load_examples(path)


def test_extraction_task_definition():
    es = gen_extraction_task(0, 50)
    marker = es.vocab.token_to_id["*"]
    for ex in es:
        expected = [ex.input_tokens[i + 1] for i, t in enumerate(ex.input_tokens)
                    if t == marker]
        assert ex.output_tokens == expected + [EOS]


def test_extraction_task_determinism():
    a = gen_extraction_task(1, 100)
    b = gen_extraction_task(1, 100)
    assert [(x.input_text, x.output_text) for x in a] == \
           [(x.input_text, x.output_text) for x in b]


def test_extraction_task_output_lengths_in_range():
    cfg = TaskConfig(marked=(3, 8))
    for ex in gen_extraction_task(2, 200, cfg):
        assert 3 <= len(ex.output_tokens) - 1 <= 8


def test_extraction_task_roundtrip():
    es = gen_extraction_task(3, 50)
    for ex in es:
        assert es.vocab.decode(es.vocab.encode(ex.input_text)) == ex.input_text


def test_task_config_rejects_infeasible_marking():
    with pytest.raises(ConfigError):
        TaskConfig(input_len=(4, 10), marked=(3, 8))


def test_split_sizes_and_partition():
    es = gen_extraction_task(4, 10)
    train, test = split(es, 0.2, seed=7)
    assert (len(train), len(test)) == (8, 2)
    assert {ex.id for ex in train} | {ex.id for ex in test} == {ex.id for ex in es}
    assert not ({ex.id for ex in train} & {ex.id for ex in test})


def test_split_determinism():
    es = gen_extraction_task(5, 40)
    a = split(es, 0.25, seed=3)
    b = split(es, 0.25, seed=3)
    assert [x.id for x in a[0]] == [x.id for x in b[0]]
    assert [x.id for x in a[1]] == [x.id for x in b[1]]


def test_split_rejects_bad_fraction():
    es = gen_extraction_task(6, 10)
    for frac in (0.0, 1.0, -0.5):
        with pytest.raises(ConfigError):
            split(es, frac, seed=0)


def test_save_and_reload_examples(tmp_path):
    es = gen_extraction_task(7, 20)
    corpus.save_examples(es, tmp_path / "d.jsonl")
    back = corpus.load_examples_with_vocab(tmp_path / "d.jsonl", es.vocab)
    assert [(x.input_text, x.output_text) for x in back] == \
           [(x.input_text, x.output_text) for x in es]
    assert [x.input_tokens for x in back] == [x.input_tokens for x in es]
