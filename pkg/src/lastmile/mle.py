"""Maximum-likelihood fine-tuning baseline and output post-processing heuristics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import BOS
from .exceptions import ConfigError, ContractError
from .model import forward_logits, log_prob
from .optim import AdamW, cosine_lr


@dataclass
class MLEConfig:
    learning_rate: float = 3e-4  # production-scale runs use 1e-5
    batch_size: int = 7
    epochs: int = 1
    seed: int = 0
    weight_decay: float = 0.01
    max_steps: int | None = None  # exact optimizer-step budget; overrides epochs

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


def example_nll(params, example):
    """Mean next-token negative log-likelihood over the output span (EOS included)."""
    n = len(example.input_tokens)
    t_len = len(example.output_tokens)
    seq = [BOS] + example.input_tokens + example.output_tokens
    rows = forward_logits(params, seq)
    logp = log_prob(ad.slice_axis(rows, 0, n, n + t_len), example.output_tokens)
    return ad.tmean(logp) * -1.0


def train_mle(params, data, cfg):
    """Teacher-forced cross-entropy, one epoch (default), cosine schedule."""
    if params.config.head != "logits":
        raise ConfigError("train_mle requires a logits-head model")
    examples = list(data)
    if not examples:
        raise ContractError("empty training set")
    opt = AdamW(params.tensors, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    batches = [examples[i:i + cfg.batch_size]
               for i in range(0, len(examples), cfg.batch_size)]
    total_steps = len(batches) * cfg.epochs
    if cfg.max_steps is not None:
        total_steps = cfg.max_steps  # step budget; cycles the data as needed
    step = 0
    while step < total_steps:
        for batch in batches:
            if step >= total_steps:
                break
            opt.zero_grad()
            for ex in batch:
                ad.backward(example_nll(params, ex) * (1.0 / len(batch)))
            opt.step(lr=cosine_lr(cfg.learning_rate, step, total_steps))
            step += 1
    return params


def mle_loss(params, examples):
    """Numeric mean NLL over a list of examples (no update)."""
    with ad.no_grad():
        return float(np.mean([float(example_nll(params, ex).data) for ex in examples]))


def strip_sure_preamble(text):
    """Drop the first line when the output opens with a "Sure," style preamble."""
    if text.startswith("Sure,") and "\n" in text:
        return text.split("\n", 1)[1]
    return text


def truncate_after_newline(text):
    """Keep only the text before the first newline."""
    return text.split("\n", 1)[0]
