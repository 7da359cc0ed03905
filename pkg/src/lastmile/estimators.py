"""Scikit-learn style estimators wrapping the training pipeline.

These expose the reward model, the maximum-likelihood baseline, and the
RL fine-tuner with fit/predict and get_params/set_params so they compose
with the wider ecosystem (cloning, grid search over hyperparameters, etc.).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from . import mle as mle_mod
from . import ppo as ppo_mod
from . import reward as reward_mod
from .corpus import ExampleSet
from .exceptions import ContractError
from .model import ModelConfig, ModelParams, greedy, init_params
from .negatives import build_reward_dataset
from .validation import check_example_set, check_is_fitted


def _model_config(vocab_size, d_model, n_layers, n_heads, d_ff, max_seq, head,
                  init_scale, attn_prior="none"):
    return ModelConfig(vocab_size=vocab_size, d_model=d_model, n_layers=n_layers,
                       n_heads=n_heads, d_ff=d_ff, max_seq=max_seq, head=head,
                       init_scale=init_scale, attn_prior=attn_prior)


class RewardScorer(BaseEstimator):
    """Token-level reward model trained on positives plus synthetic negatives.

    fit(X) takes an ExampleSet of positives (negatives are synthesized
    internally); predict(X) returns the mean token score per example.
    """

    def __init__(self, d_model=128, n_layers=2, n_heads=2, d_ff=256, max_seq=256,
                 init_scale=0.05, attn_prior="matching", learning_rate=8e-4,
                 batch_size=14, epochs=1, seed=0, negative_seed=0,
                 length_penalty=-2.5, output_cap=100, exclusive=False,
                 init_from=None):
        self.init_scale = init_scale
        self.attn_prior = attn_prior
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_seq = max_seq
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.negative_seed = negative_seed
        self.length_penalty = length_penalty
        self.output_cap = output_cap
        self.exclusive = exclusive
        self.init_from = init_from  # optional ModelParams backbone to start from

    def fit(self, X, y=None):
        examples = check_example_set(X, min_size=2)
        if not isinstance(X, ExampleSet):
            raise ContractError("RewardScorer.fit needs an ExampleSet (for the vocab)")
        data = build_reward_dataset(X, self.negative_seed, output_cap=self.output_cap)
        if self.init_from is not None:
            params = self.init_from.copy(head="scalar", seed=self.seed)
        else:
            params = init_params(_model_config(len(X.vocab), self.d_model,
                                               self.n_layers, self.n_heads, self.d_ff,
                                               self.max_seq, "scalar",
                                               self.init_scale, self.attn_prior),
                                 self.seed)
        cfg = reward_mod.RewardTrainConfig(learning_rate=self.learning_rate,
                                           batch_size=self.batch_size,
                                           epochs=self.epochs, seed=self.seed)
        reward_mod.train_reward(params, data, cfg, exclusive=self.exclusive)
        self.reward_fn_ = reward_mod.RewardFn(params, self.length_penalty,
                                              self.output_cap, self.exclusive)
        return self

    def predict(self, X):
        check_is_fitted(self, "reward_fn_")
        examples = check_example_set(X)
        return np.array([reward_mod.mean_token_score(self.reward_fn_, ex)
                         for ex in examples])

    def score_tokens(self, input_ids, output_ids):
        check_is_fitted(self, "reward_fn_")
        return reward_mod.token_rewards(self.reward_fn_, input_ids, output_ids)


class _GenerativeMixin:
    """Shared greedy decoding for fitted generators."""

    def predict(self, X):
        check_is_fitted(self, "params_")
        examples = check_example_set(X)
        vocab = self.vocab_
        outputs = []
        for ex in examples:
            ids = greedy(self.params_, ex.input_tokens, self.output_cap)
            outputs.append(vocab.decode(ids))
        return outputs


class MLEFineTuner(_GenerativeMixin, BaseEstimator):
    """Teacher-forced cross-entropy fine-tuning of a token-logits model."""

    def __init__(self, d_model=64, n_layers=2, n_heads=2, d_ff=256, max_seq=256,
                 init_scale=0.05, learning_rate=3e-4, batch_size=7, epochs=1,
                 seed=0, max_steps=None, output_cap=100, init_from=None):
        self.init_scale = init_scale
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_ff = d_ff
        self.max_seq = max_seq
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.max_steps = max_steps
        self.output_cap = output_cap
        self.init_from = init_from

    def fit(self, X, y=None):
        if not isinstance(X, ExampleSet):
            raise ContractError("MLEFineTuner.fit needs an ExampleSet")
        check_example_set(X)
        if self.init_from is not None:
            params = self.init_from.copy()
        else:
            params = init_params(_model_config(len(X.vocab), self.d_model,
                                               self.n_layers, self.n_heads, self.d_ff,
                                               self.max_seq, "logits",
                                               self.init_scale), self.seed)
        cfg = mle_mod.MLEConfig(learning_rate=self.learning_rate,
                                batch_size=self.batch_size, epochs=self.epochs,
                                seed=self.seed, max_steps=self.max_steps)
        mle_mod.train_mle(params, X, cfg)
        self.params_ = params
        self.vocab_ = X.vocab
        return self


class PPOFineTuner(_GenerativeMixin, BaseEstimator):
    """RL fine-tuning against a fitted RewardScorer, starting from a base policy."""

    def __init__(self, reward_scorer=None, base_params=None, gamma=0.99999,
                 lam=0.95, clip_eps=0.2, batch_size=7, epochs=1,
                 learning_rate=3e-4, output_cap=100, temperature=1.0,
                 value_seed=1, seed=0, normalize_advantages=False):
        self.reward_scorer = reward_scorer
        self.base_params = base_params
        self.gamma = gamma
        self.lam = lam
        self.clip_eps = clip_eps
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.output_cap = output_cap
        self.temperature = temperature
        self.value_seed = value_seed
        self.seed = seed
        self.normalize_advantages = normalize_advantages

    def fit(self, X, y=None):
        if not isinstance(X, ExampleSet):
            raise ContractError("PPOFineTuner.fit needs an ExampleSet")
        check_example_set(X)
        if self.reward_scorer is None or getattr(self.reward_scorer, "reward_fn_", None) is None:
            raise ContractError("reward_scorer must be a fitted RewardScorer")
        if not isinstance(self.base_params, ModelParams):
            raise ContractError("base_params must be the pretrained policy ModelParams")
        policy = self.base_params.copy()
        value = self.base_params.copy(head="scalar", seed=self.value_seed)
        cfg = ppo_mod.PPOConfig(gamma=self.gamma, lam=self.lam, clip_eps=self.clip_eps,
                                batch_size=self.batch_size, epochs=self.epochs,
                                learning_rate=self.learning_rate,
                                output_cap=self.output_cap, temperature=self.temperature,
                                normalize_advantages=self.normalize_advantages,
                                seed=self.seed)
        policy, value, records = ppo_mod.train(policy, value,
                                               self.reward_scorer.reward_fn_, X, cfg)
        self.params_ = policy
        self.value_params_ = value
        self.records_ = records
        self.vocab_ = X.vocab
        return self
