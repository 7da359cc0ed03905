"""RL-based last-mile fine-tuning for sequence generation, at desk scale.

Pipeline: synthesize negative examples, train a token-level reward model,
fine-tune a policy with clipped policy optimization against it, and compare
with a maximum-likelihood baseline using length-adjusted ROUGE.
"""
from .corpus import (Example, ExampleSet, TaskConfig, Vocab, build_vocab,
                     gen_extraction_task, load_examples, split)
from .estimators import MLEFineTuner, PPOFineTuner, RewardScorer
from .metrics import evaluate, excess_length, length_adjust, rouge_l, rouge_n
from .mle import strip_sure_preamble, truncate_after_newline
from .model import ModelConfig, ModelParams, greedy, init_params, sample
from .negatives import NegCategory, RewardDatum, build_reward_dataset, synthesize
from .ppo import PPOConfig, Trajectory, gae, ppo_objective, value_targets
from .reward import RewardFn, apply_length_penalty, token_rewards, train_reward

__version__ = "0.1.0"

__all__ = [
    "Example", "ExampleSet", "TaskConfig", "Vocab", "build_vocab",
    "gen_extraction_task", "load_examples", "split",
    "MLEFineTuner", "PPOFineTuner", "RewardScorer",
    "evaluate", "excess_length", "length_adjust", "rouge_l", "rouge_n",
    "strip_sure_preamble", "truncate_after_newline",
    "ModelConfig", "ModelParams", "greedy", "init_params", "sample",
    "NegCategory", "RewardDatum", "build_reward_dataset", "synthesize",
    "PPOConfig", "Trajectory", "gae", "ppo_objective", "value_targets",
    "RewardFn", "apply_length_penalty", "token_rewards", "train_reward",
]
