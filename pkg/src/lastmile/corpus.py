"""Datasets: vocabulary, tokenization, JSONL ingestion, synthetic extraction task.

Tokenization is whitespace word-level. Newlines become a reserved token so
post-processing heuristics can operate on token sequences. Reserved ids:
PAD=0, UNK=1, BOS=2, EOS=3, NEWLINE=4.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, EmptyDatasetError, MalformedRecordError

PAD, UNK, BOS, EOS, NEWLINE = 0, 1, 2, 3, 4
RESERVED = {"<pad>": PAD, "<unk>": UNK, "<bos>": BOS, "<eos>": EOS, "<nl>": NEWLINE}
NUM_RESERVED = len(RESERVED)

DEFAULT_INPUT_CAP_SYNTHETIC = 64
DEFAULT_INPUT_CAP_LOADED = 400


def _split_words(text):
    """Whitespace split with newlines surfaced as the <nl> token."""
    return text.replace("\n", " <nl> ").split()


def normalize(text):
    """Whitespace-normalized form of a text (what decode(encode(x)) returns)."""
    joined = " ".join(_split_words(text))
    return joined.replace(" <nl> ", "\n").replace(" <nl>", "\n").replace("<nl> ", "\n").replace("<nl>", "\n")


class Vocab:
    """Token-string <-> id map with fixed reserved ids 0..4."""

    def __init__(self, tokens=()):
        self.token_to_id = dict(RESERVED)
        for tok in tokens:
            if tok not in self.token_to_id:
                self.token_to_id[tok] = len(self.token_to_id)
        self.id_to_token = {i: t for t, i in self.token_to_id.items()}

    def __len__(self):
        return len(self.token_to_id)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, text):
        return [self.token_to_id.get(w, UNK) for w in _split_words(text)]

    def decode(self, ids, skip_special=True):
        words = []
        for i in ids:
            if skip_special and i in (PAD, BOS, EOS):
                continue
            words.append("\n" if i == NEWLINE else self.id_to_token.get(i, "<unk>"))
        return " ".join(words).replace(" \n ", "\n").replace(" \n", "\n").replace("\n ", "\n")

    def non_reserved_ids(self):
        return list(range(NUM_RESERVED, len(self.token_to_id)))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(len(self.token_to_id)):
                fh.write(f"{self.id_to_token[i]}\t{i}\n")

    @classmethod
    def load(cls, path):
        vocab = cls()
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                token, idx = line.rstrip("\n").split("\t")
                idx = int(idx)
                vocab.token_to_id[token] = idx
                vocab.id_to_token[idx] = token
        return vocab


def build_vocab(texts, max_size):
    """Keep the most frequent whitespace tokens (ties lexicographic) up to max_size."""
    if max_size <= NUM_RESERVED:
        raise ConfigError(f"max_size must exceed {NUM_RESERVED}, got {max_size}")
    counts = Counter()
    for text in texts:
        for w in _split_words(text):
            if w not in RESERVED:
                counts[w] += 1
    keep = sorted(counts, key=lambda w: (-counts[w], w))[: max_size - NUM_RESERVED]
    return Vocab(sorted(keep))


@dataclass
class Example:
    """One input/output text pair and its token encodings."""

    id: int
    input_text: str
    output_text: str
    input_tokens: list[int]
    output_tokens: list[int]  # ends with EOS


@dataclass
class ExampleSet:
    examples: list[Example]
    vocab: Vocab
    provenance: str = "loaded"  # loaded | synthetic
    seed: int | None = None
    n_dropped: int = 0

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    def __getitem__(self, i):
        return self.examples[i]


def make_example(idx, input_text, output_text, vocab):
    return Example(
        id=idx,
        input_text=input_text,
        output_text=output_text,
        input_tokens=vocab.encode(input_text),
        output_tokens=vocab.encode(output_text) + [EOS],
    )


def load_examples(path, vocab_budget=8000, input_cap=DEFAULT_INPUT_CAP_LOADED):
    """Load a JSONL dataset ({"input", "output"} per line) and build its vocab.

    Records whose input exceeds `input_cap` tokens are dropped; the count is
    recorded on the returned set.
    """
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecordError(line_no, f"invalid JSON: {e.msg}")
            if not isinstance(obj, dict):
                raise MalformedRecordError(line_no, "record is not an object")
            for key in ("input", "output"):
                if key not in obj or not isinstance(obj[key], str):
                    raise MalformedRecordError(line_no, f'missing string field "{key}"')
            records.append((obj["input"], obj["output"]))
    if not records:
        raise EmptyDatasetError(f"{path}: no records")

    vocab = build_vocab([t for pair in records for t in pair], vocab_budget)
    examples = []
    dropped = 0
    for inp, out in records:
        if len(vocab.encode(inp)) > input_cap:
            dropped += 1
            continue
        examples.append(make_example(len(examples), inp, out, vocab))
    return ExampleSet(examples, vocab, provenance="loaded", n_dropped=dropped)


@dataclass
class TaskConfig:
    """Synthetic extraction task: copy out the tokens that follow a marker."""

    alphabet_size: int = 50
    input_len: tuple[int, int] = (20, 40)
    marked: tuple[int, int] = (3, 8)
    input_cap: int = DEFAULT_INPUT_CAP_SYNTHETIC
    marker: str = "*"

    def __post_init__(self):
        if self.alphabet_size < 1:
            raise ConfigError("alphabet_size must be positive")
        if self.input_len[0] > self.input_len[1] or self.marked[0] > self.marked[1]:
            raise ConfigError("ranges must be (lo, hi) with lo <= hi")
        if self.marked[1] > self.input_len[0]:
            raise ConfigError(
                f"marked count up to {self.marked[1]} may exceed the shortest "
                f"input length {self.input_len[0]}"
            )
        if self.input_len[1] + self.marked[1] > self.input_cap:
            raise ConfigError("input_cap too small for input_len + marked range")

    def symbols(self):
        return [f"s{i}" for i in range(self.alphabet_size)]


def gen_extraction_task(seed, n, cfg=None):
    """Generate n examples where the target is the marker-flagged tokens, in order."""
    cfg = cfg or TaskConfig()
    rng = np.random.default_rng(seed)
    symbols = cfg.symbols()
    vocab = Vocab(sorted(symbols + [cfg.marker]))
    examples = []
    for idx in range(n):
        length = int(rng.integers(cfg.input_len[0], cfg.input_len[1] + 1))
        m = int(rng.integers(cfg.marked[0], cfg.marked[1] + 1))
        base = [symbols[j] for j in rng.integers(0, cfg.alphabet_size, size=length)]
        marked_at = sorted(rng.choice(length, size=m, replace=False).tolist())
        words = []
        target = []
        marked_set = set(marked_at)
        for pos, word in enumerate(base):
            if pos in marked_set:
                words.append(cfg.marker)
                target.append(word)
            words.append(word)
        examples.append(make_example(idx, " ".join(words), " ".join(target), vocab))
    return ExampleSet(examples, vocab, provenance="synthetic", seed=seed)


def split(example_set, test_fraction, seed):
    """Deterministic disjoint (train, test) partition; examples keep their ids."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = len(example_set)
    n_test = int(n * test_fraction)
    order = np.random.default_rng(seed).permutation(n)
    test_idx = set(order[:n_test].tolist())
    train = [ex for i, ex in enumerate(example_set.examples) if i not in test_idx]
    test = [ex for i, ex in enumerate(example_set.examples) if i in test_idx]
    common = dict(vocab=example_set.vocab, provenance=example_set.provenance,
                  seed=example_set.seed)
    return ExampleSet(train, **common), ExampleSet(test, **common)


def save_examples(example_set, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in example_set:
            fh.write(json.dumps({"input": ex.input_text, "output": ex.output_text}) + "\n")


def load_examples_with_vocab(path, vocab, input_cap=DEFAULT_INPUT_CAP_LOADED):
    """Re-load a JSONL file against an existing vocabulary (pipeline stages)."""
    examples = []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if len(vocab.encode(obj["input"])) > input_cap:
                dropped += 1
                continue
            examples.append(make_example(len(examples), obj["input"], obj["output"], vocab))
    if not examples:
        raise EmptyDatasetError(f"{path}: no records")
    return ExampleSet(examples, vocab, provenance="loaded", n_dropped=dropped)
