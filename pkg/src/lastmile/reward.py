"""Reward-model training and the per-token reward function used during PPO."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .corpus import BOS
from .exceptions import ConfigError, ContractError
from .model import ModelParams, forward_scalar
from .negatives import DEFAULT_OUTPUT_CAP
from .optim import AdamW, cosine_lr

LENGTH_PENALTY = -2.5


@dataclass
class RewardTrainConfig:
    learning_rate: float = 8e-4  # desk-scale; production-scale runs use 1e-5
    batch_size: int = 14
    epochs: int = 1
    seed: int = 0
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")


@dataclass
class RewardFn:
    """Trained scalar model plus the per-excess-token length penalty."""

    params: ModelParams
    length_penalty: float = LENGTH_PENALTY
    output_cap: int = DEFAULT_OUTPUT_CAP
    exclusive: bool = False  # score token t without conditioning on it

    def __post_init__(self):
        if self.length_penalty > 0:
            raise ConfigError("length penalty must be <= 0")
        if self.params.config.head != "scalar":
            raise ConfigError("reward model must have a scalar head")


def output_scalar_slice(scalars, n_input, n_output, exclusive=False):
    """Scalar-head entries scoring each output token.

    The sequence is [BOS] + input + output, so output token t (1-based) sits
    at position n_input + t. Inclusive conditioning reads the scalar at that
    position; exclusive reads the one just before it.
    """
    start = n_input if exclusive else n_input + 1
    return ad.slice_axis(scalars, 0, start, start + n_output)


def datum_loss(params, datum, exclusive=False):
    """Weighted mean squared error over the datum's output-token positions."""
    ex = datum.example
    seq = [BOS] + ex.input_tokens + ex.output_tokens
    scalars = forward_scalar(params, seq)
    preds = output_scalar_slice(scalars, len(ex.input_tokens), len(ex.output_tokens),
                                exclusive=exclusive)
    err = preds - ad.Tensor(datum.token_targets)
    return ad.tmean(ad.square(err)) * datum.weight


def train_reward(params, data, cfg, exclusive=False, progress=None):
    """One (or more) epochs of weighted squared-error training, cosine schedule.

    Gradients are accumulated example-by-example within each mini-batch; the
    batch loss is the mean of weighted per-datum losses.
    """
    if params.config.head != "scalar":
        raise ConfigError("train_reward requires a scalar-head model")
    if not data:
        raise ContractError("empty reward dataset")
    opt = AdamW(params.tensors, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    batches = [data[i:i + cfg.batch_size] for i in range(0, len(data), cfg.batch_size)]
    total_steps = len(batches) * cfg.epochs
    step = 0
    for _ in range(cfg.epochs):
        for batch in batches:
            opt.zero_grad()
            for datum in batch:
                ad.backward(datum_loss(params, datum, exclusive=exclusive)
                            * (1.0 / len(batch)))
            opt.step(lr=cosine_lr(cfg.learning_rate, step, total_steps))
            step += 1
            if progress is not None:
                progress(step, total_steps)
    return params


def batch_loss(params, batch, exclusive=False):
    """Numeric value of the mini-batch loss (no parameter update)."""
    with ad.no_grad():
        vals = [float(datum_loss(params, d, exclusive=exclusive).data) for d in batch]
    return float(np.mean(vals))


def token_rewards(fn, input_ids, output_ids):
    """Raw reward-model scores for each output token (length penalty excluded)."""
    if len(output_ids) < 1:
        raise ContractError("output must have at least one token")
    seq = [BOS] + list(input_ids) + list(output_ids)
    with ad.no_grad():
        scalars = forward_scalar(fn.params, seq)
        sliced = output_scalar_slice(scalars, len(input_ids), len(output_ids),
                                     exclusive=fn.exclusive)
        return sliced.data.copy()


def apply_length_penalty(rewards, out_len, gt_len, penalty=LENGTH_PENALTY):
    """Add the penalty at every output position past the ground-truth length."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape[0] != out_len:
        raise ContractError(f"{rewards.shape[0]} rewards for out_len {out_len}")
    out = rewards.copy()
    if out_len > gt_len:
        out[gt_len:] += penalty
    return out


def mean_token_score(fn, example):
    """Mean reward-model score over one example's output tokens."""
    return float(np.mean(token_rewards(fn, example.input_tokens, example.output_tokens)))
