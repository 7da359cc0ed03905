"""Clipped policy optimization with GAE over hybrid sampled/ground-truth batches.

One epoch over the training set, outer batches of 7, a single gradient update
per outer batch (policy and value each take one AdamW step). Even-indexed
batches sample outputs from the policy; odd-indexed batches use the
ground-truth outputs.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import BOS
from .exceptions import ConfigError, ContractError, NumericError
from .model import forward_logits, forward_scalar, log_prob, sample
from .optim import AdamW, cosine_lr
from .reward import apply_length_penalty, token_rewards


@dataclass
class PPOConfig:
    gamma: float = 0.99999
    lam: float = 0.95
    clip_eps: float = 0.2
    batch_size: int = 7
    epochs: int = 1
    learning_rate: float = 3e-4  # shared by policy and value; production-scale 1e-5
    output_cap: int = 100
    temperature: float = 1.0
    normalize_advantages: bool = False
    seed: int = 0
    weight_decay: float = 0.01

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ConfigError("lambda must be in (0, 1]")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must be in (0, 1]")
        if self.clip_eps <= 0:
            raise ConfigError("clip epsilon must be positive")


@dataclass
class Trajectory:
    input_ids: list[int]
    actions: list[int]
    old_logp: np.ndarray        # length T
    rewards: np.ndarray         # r_1..r_T
    values: np.ndarray          # V(s_0)..V(s_T), length T+1
    advantages: np.ndarray = None
    value_targets: np.ndarray = None
    source: str = "sampled"     # sampled | ground-truth

    def __post_init__(self):
        t = len(self.actions)
        if not (len(self.old_logp) == len(self.rewards) == t
                and len(self.values) == t + 1):
            raise ContractError("trajectory field lengths are inconsistent")
        for arr in (self.old_logp, self.rewards, self.values):
            if not np.all(np.isfinite(arr)):
                raise NumericError("non-finite value in trajectory")


def gae(rewards, values, gamma, lam):
    """Advantages by backward recursion A_t = delta_t + gamma*lam*A_{t+1}."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if values.shape[0] != rewards.shape[0] + 1:
        raise ContractError(
            f"need len(values) == len(rewards)+1, got {values.shape[0]} vs {rewards.shape[0]}"
        )
    t_len = rewards.shape[0]
    adv = np.zeros(t_len)
    running = 0.0
    for t in range(t_len - 1, -1, -1):
        delta = rewards[t] + gamma * values[t + 1] - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv


def value_targets(rewards, gamma):
    """Discounted reward-to-go per state, terminal target fixed at 0 (length T+1)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    t_len = rewards.shape[0]
    if t_len < 1:
        raise ContractError("need at least one reward")
    targets = np.zeros(t_len + 1)
    running = 0.0
    for t in range(t_len - 1, -1, -1):
        running = rewards[t] + gamma * running
        targets[t] = running
    return targets


def ppo_objective(logp_new, logp_old, advantages, clip_eps):
    """Mean over tokens of min(w*A, clip(w, 1-eps, 1+eps)*A); w = exp(new - old)."""
    logp_old = np.asarray(logp_old, dtype=np.float64)
    advantages = np.asarray(advantages, dtype=np.float64)
    if not isinstance(logp_new, Tensor):
        logp_new = Tensor(logp_new)
    if logp_new.shape[0] != logp_old.shape[0] or logp_old.shape[0] != advantages.shape[0]:
        raise ContractError("logp_new, logp_old, advantages must share length")
    w = ad.exp(logp_new - Tensor(logp_old))
    if not np.all(np.isfinite(w.data)):
        raise NumericError("non-finite probability ratio")
    adv = Tensor(advantages)
    unclipped = ad.mul(w, adv)
    clipped = ad.mul(ad.clip(w, 1.0 - clip_eps, 1.0 + clip_eps), adv)
    return ad.tmean(ad.minimum(unclipped, clipped))


def value_loss(predicted, targets):
    """Mean squared error over the T+1 state values."""
    targets = np.asarray(targets, dtype=np.float64)
    if not isinstance(predicted, Tensor):
        predicted = Tensor(predicted)
    if predicted.shape[0] != targets.shape[0]:
        raise ContractError("predicted/target length mismatch")
    return ad.tmean(ad.square(predicted - Tensor(targets)))


def state_value_slice(scalars, n_input, n_actions):
    """Value-network entries for states s_0..s_T within [BOS]+input+actions."""
    return ad.slice_axis(scalars, 0, n_input, n_input + n_actions + 1)


def rollout(policy, value, fn, batch, mode, seed, cfg):
    """Build trajectories for one outer batch (no gradients recorded)."""
    if not batch:
        raise ContractError("empty rollout batch")
    rng = np.random.default_rng(seed)
    sample_seeds = rng.integers(0, 2**31 - 1, size=len(batch))
    trajectories = []
    with ad.no_grad():
        for ex, s in zip(batch, sample_seeds):
            if mode == "ground-truth":
                actions = list(ex.output_tokens)
            elif mode == "sampled":
                actions = sample(policy, ex.input_tokens, cfg.output_cap,
                                 temperature=cfg.temperature, seed=int(s))
            else:
                raise ConfigError(f"unknown rollout mode {mode!r}")
            n = len(ex.input_tokens)
            t_len = len(actions)
            seq = [BOS] + ex.input_tokens + actions
            rows = forward_logits(policy, seq)
            old_logp = log_prob(ad.slice_axis(rows, 0, n, n + t_len), actions).data.copy()
            raw = token_rewards(fn, ex.input_tokens, actions)
            rewards = apply_length_penalty(raw, t_len, len(ex.output_tokens),
                                           penalty=fn.length_penalty)
            vals = state_value_slice(forward_scalar(value, seq), n, t_len).data.copy()
            trajectories.append(Trajectory(
                input_ids=list(ex.input_tokens), actions=actions, old_logp=old_logp,
                rewards=rewards, values=vals, source=mode,
            ))
    return trajectories


@dataclass
class BatchRecord:
    index: int
    mode: str
    mean_reward: float
    mean_advantage: float
    policy_objective: float
    value_loss: float
    learning_rate: float
    unclipped_objective: float
    max_ratio_gap: float  # max |exp(logp_new - logp_old) - 1| at update time


def _update(policy, value, pol_opt, val_opt, trajectories, cfg, lr):
    """Single gradient update on the combined mini-batch of trajectories."""
    advs = np.concatenate([t.advantages for t in trajectories])
    if cfg.normalize_advantages:
        advs = (advs - advs.mean()) / (advs.std() + 1e-8)
        offset = 0
        for t in trajectories:
            t.advantages = advs[offset:offset + len(t.actions)]
            offset += len(t.actions)
    total_tokens = sum(len(t.actions) for t in trajectories)
    total_states = sum(len(t.values) for t in trajectories)

    pol_opt.zero_grad()
    objective_sum = 0.0
    unclipped_sum = 0.0
    max_gap = 0.0
    for t in trajectories:
        n = len(t.input_ids)
        seq = [BOS] + t.input_ids + t.actions
        rows = forward_logits(policy, seq)
        logp_new = log_prob(ad.slice_axis(rows, 0, n, n + len(t.actions)), t.actions)
        obj = ppo_objective(logp_new, t.old_logp, t.advantages, cfg.clip_eps)
        # mean over this trajectory -> token-sum contribution to the batch mean
        contribution = obj * (len(t.actions) / total_tokens)
        objective_sum += float(contribution.data)
        with ad.no_grad():
            w = np.exp(logp_new.data - t.old_logp)
            max_gap = max(max_gap, float(np.max(np.abs(w - 1.0))))
            # same float grouping as the tracked objective (sum * 1/n, then scale)
            unclipped = np.sum(w * t.advantages) * (1.0 / len(t.actions))
            unclipped_sum += float(unclipped) * (len(t.actions) / total_tokens)
        ad.backward(contribution * -1.0)  # ascend the objective
    pol_opt.step(lr=lr)

    val_opt.zero_grad()
    vloss_sum = 0.0
    for t in trajectories:
        n = len(t.input_ids)
        seq = [BOS] + t.input_ids + t.actions
        preds = state_value_slice(forward_scalar(value, seq), n, len(t.actions))
        vloss = value_loss(preds, t.value_targets)
        contribution = vloss * (len(t.values) / total_states)
        vloss_sum += float(contribution.data)
        ad.backward(contribution)
    val_opt.step(lr=lr)
    return objective_sum, unclipped_sum, vloss_sum, max_gap


def train(policy, value, fn, data, cfg, log_path=None):
    """One epoch of outer batches; returns (policy, value, per-batch records)."""
    if policy.config.head != "logits":
        raise ConfigError("policy must have a logits head")
    if value.config.head != "scalar":
        raise ConfigError("value network must have a scalar head")
    examples = list(data)
    if not examples:
        raise ContractError("empty training set")
    pol_opt = AdamW(policy.tensors, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    val_opt = AdamW(value.tensors, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    batches = [examples[i:i + cfg.batch_size]
               for i in range(0, len(examples), cfg.batch_size)]
    total_steps = len(batches) * cfg.epochs
    records = []
    step = 0
    for epoch in range(cfg.epochs):
        for b_idx, batch in enumerate(batches):
            mode = "sampled" if b_idx % 2 == 0 else "ground-truth"
            trajectories = rollout(policy, value, fn, batch, mode,
                                   seed=cfg.seed + step * 7919, cfg=cfg)
            for t in trajectories:
                t.advantages = gae(t.rewards, t.values, cfg.gamma, cfg.lam)
                t.value_targets = value_targets(t.rewards, cfg.gamma)
            lr = cosine_lr(cfg.learning_rate, step, total_steps)
            obj, unclipped, vloss, max_gap = _update(
                policy, value, pol_opt, val_opt, trajectories, cfg, lr)
            if not (np.isfinite(obj) and np.isfinite(vloss)):
                raise NumericError(
                    f"non-finite loss at batch {step}: objective={obj} value={vloss}; "
                    f"rewards={[t.rewards.tolist() for t in trajectories]}"
                )
            records.append(BatchRecord(
                index=step, mode=mode,
                mean_reward=float(np.mean(np.concatenate([t.rewards for t in trajectories]))),
                mean_advantage=float(np.mean(np.concatenate([t.advantages for t in trajectories]))),
                policy_objective=obj, value_loss=vloss, learning_rate=lr,
                unclipped_objective=unclipped, max_ratio_gap=max_gap,
            ))
            step += 1
    if log_path is not None:
        write_log(records, log_path)
    return policy, value, records


def write_log(records, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["batch", "mode", "mean_reward", "mean_advantage",
                         "policy_objective", "value_loss", "learning_rate",
                         "unclipped_objective", "max_ratio_gap"])
        for r in records:
            writer.writerow([r.index, r.mode, repr(r.mean_reward), repr(r.mean_advantage),
                             repr(r.policy_objective), repr(r.value_loss),
                             repr(r.learning_rate), repr(r.unclipped_objective),
                             repr(r.max_ratio_gap)])
