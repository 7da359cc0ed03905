"""Independent oracle suites: gradient checks, advantage/value-target brute
force, metric hand cases, and negative-generator properties.

Each check returns (name, ok, detail). The CLI `verify` subcommand runs them
all and exits nonzero on any failure; the acceptance tests reuse the same
functions at their full sizes.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from . import metrics
from .corpus import EOS, TaskConfig, gen_extraction_task
from .mle import example_nll
from .model import ModelConfig, init_params
from .negatives import NegCategory, positive_datum, synthesize
from .ppo import gae, ppo_objective, value_loss, value_targets
from .reward import datum_loss


def gae_double_sum(rewards, values, gamma, lam):
    """Direct evaluation of the advantage as a double sum of TD residuals."""
    t_len = len(rewards)
    deltas = [rewards[t] + gamma * values[t + 1] - values[t] for t in range(t_len)]
    return np.array([
        sum((gamma * lam) ** (tp - t) * deltas[tp] for tp in range(t, t_len))
        for t in range(t_len)
    ])


def value_targets_brute(rewards, gamma):
    """Geometric reward-to-go sums, terminal target 0."""
    t_len = len(rewards)
    out = [sum(gamma ** (tp - t) * rewards[tp] for tp in range(t, t_len))
           for t in range(t_len)]
    return np.array(out + [0.0])


def check_gae(cases=100, max_t=8, tol=1e-10, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(cases):
        t_len = int(rng.integers(1, max_t + 1))
        rewards = rng.uniform(-2, 2, size=t_len)
        values = rng.uniform(-2, 2, size=t_len + 1)
        gamma = [0.5, 0.99999][i % 2]
        lam = [0.0, 0.95, 1.0][i % 3]
        got = gae(rewards, values, gamma, lam)
        want = gae_double_sum(rewards, values, gamma, lam)
        worst = max(worst, float(np.max(np.abs(got - want))))
    return "gae-double-sum", worst < tol, f"max abs diff {worst:.3e}"


def check_value_targets(cases=100, max_t=8, tol=1e-10, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(cases):
        t_len = int(rng.integers(1, max_t + 1))
        rewards = rng.uniform(-2, 2, size=t_len)
        gamma = [0.5, 0.99999, 1.0][i % 3]
        diff = np.abs(value_targets(rewards, gamma) - value_targets_brute(rewards, gamma))
        worst = max(worst, float(np.max(diff)))
    return "value-targets-brute-force", worst < tol, f"max abs diff {worst:.3e}"


def _toy_setup(seed=0):
    cfg = TaskConfig(alphabet_size=10, input_len=(4, 6), marked=(2, 3), input_cap=16)
    data = gen_extraction_task(seed, 4, cfg)
    vocab_size = len(data.vocab)
    mc = dict(vocab_size=vocab_size, d_model=16, n_layers=1, n_heads=2,
              d_ff=32, max_seq=64)
    policy = init_params(ModelConfig(head="logits", **mc), seed=1)
    scalar = init_params(ModelConfig(head="scalar", **mc), seed=2)
    return data, policy, scalar


def check_gradients(tol=1e-4, max_coords=6):
    """Finite-difference check of the three training losses on a toy batch."""
    data, policy, scalar = _toy_setup()
    results = []

    def mle_batch_loss():
        terms = [example_nll(policy, ex) * 0.25 for ex in data]
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total

    def reward_batch_loss():
        data_pts = [positive_datum(ex) for ex in data[:2]]
        data_pts += synthesize(NegCategory.SHUFFLED, data, seed=3)[:2]
        terms = [datum_loss(scalar, d) * 0.25 for d in data_pts]
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total

    # freeze old log-probs and advantages so only the live policy varies
    rng = np.random.default_rng(7)
    from .corpus import BOS
    from .model import forward_logits, forward_scalar, log_prob
    from .ppo import state_value_slice
    frozen = []
    with ad.no_grad():
        for ex in data:
            n = len(ex.input_tokens)
            t_len = len(ex.output_tokens)
            seq = [BOS] + ex.input_tokens + ex.output_tokens
            rows = forward_logits(policy, seq)
            logp = log_prob(ad.slice_axis(rows, 0, n, n + t_len), ex.output_tokens)
            adv = rng.uniform(-1, 1, size=t_len)
            old = logp.data + rng.uniform(-0.05, 0.05, size=t_len)
            frozen.append((ex, old, adv))

    def policy_loss():
        total = None
        for ex, old, adv in frozen:
            n = len(ex.input_tokens)
            t_len = len(ex.output_tokens)
            seq = [BOS] + ex.input_tokens + ex.output_tokens
            rows = forward_logits(policy, seq)
            logp = log_prob(ad.slice_axis(rows, 0, n, n + t_len), ex.output_tokens)
            term = ppo_objective(logp, old, adv, clip_eps=0.2) * -0.25
            total = term if total is None else total + term
        return total

    def value_net_loss():
        rng = np.random.default_rng(9)
        total = None
        for ex in data:
            n = len(ex.input_tokens)
            t_len = len(ex.output_tokens)
            seq = [BOS] + ex.input_tokens + ex.output_tokens
            preds = state_value_slice(forward_scalar(scalar, seq), n, t_len)
            targets = rng.uniform(-1, 1, size=t_len + 1)
            term = value_loss(preds, targets) * 0.25
            total = term if total is None else total + term
        return total

    checks = [
        ("grad-mle-loss", mle_batch_loss, list(policy.tensors.values())),
        ("grad-policy-loss", policy_loss, list(policy.tensors.values())),
        ("grad-reward-loss", reward_batch_loss, list(scalar.tensors.values())),
        ("grad-value-loss", value_net_loss, list(scalar.tensors.values())),
    ]
    out = []
    for name, f, params in checks:
        err = ad.grad_check(f, params, eps=1e-5, max_coords=max_coords)
        out.append((name, err < tol, f"max rel err {err:.3e}"))
    return out


def check_metric_hand_cases():
    cases = []
    t = metrics.rouge_n("the cat sat", "the cat slept", 1)
    cases.append(abs(t.precision - 2 / 3) < 1e-12 and abs(t.recall - 2 / 3) < 1e-12
                 and abs(t.f1 - 2 / 3) < 1e-12)
    t = metrics.rouge_n("the cat sat", "the cat slept", 2)
    cases.append(abs(t.precision - 0.5) < 1e-12 and abs(t.f1 - 0.5) < 1e-12)
    t = metrics.rouge_l("the cat sat", "the cat slept")
    cases.append(abs(t.precision - 2 / 3) < 1e-12 and abs(t.recall - 2 / 3) < 1e-12)
    adj = metrics.length_adjust(metrics.RougeTriple(0.5, 1.0, 2 / 3),
                                metrics.LengthPair(4, 2))
    cases.append(abs(adj.precision - 0.5) < 1e-12 and abs(adj.recall - 0.5) < 1e-12
                 and abs(adj.f1 - 0.5) < 1e-12)
    adj = metrics.length_adjust(metrics.RougeTriple(1.0, 0.25, 0.4),
                                metrics.LengthPair(1, 4))
    cases.append(abs(adj.precision - 0.25) < 1e-12 and abs(adj.recall - 0.25) < 1e-12)
    ok = all(cases)
    return "metric-hand-cases", ok, f"{sum(cases)}/{len(cases)} exact"


def check_la_rouge1_symmetry(pairs=200, seed=5):
    """Length-adjusted unigram precision equals recall for any pair."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(12)]
    worst = 0.0
    for _ in range(pairs):
        pred = " ".join(rng.choice(words, size=rng.integers(1, 15)))
        ref = " ".join(rng.choice(words, size=rng.integers(1, 15)))
        adj = metrics.length_adjust(metrics.rouge_n(pred, ref, 1),
                                    metrics.length_pair(pred, ref))
        worst = max(worst, abs(adj.precision - adj.recall))
    return "la-rouge1-precision==recall", worst < 1e-12, f"max gap {worst:.3e}"


def _has_repetitive_tail(body, max_block=5):
    """Is there a suffix consisting of >=2 runs (last may be partial) of a short block?"""
    n = len(body)
    for k in range(1, max_block + 1):
        if n < k + 1:
            continue
        # count how far back the suffix stays periodic with period k
        matches = 0
        i = n - 1 - k
        while i >= 0 and body[i] == body[i + k]:
            matches += 1
            i -= 1
        if matches >= 1:
            return True
    return False


def check_negatives(n=1000, seed=11):
    cfg = TaskConfig()
    positives = gen_extraction_task(seed, n, cfg)
    problems = []

    shuffled = synthesize(NegCategory.SHUFFLED, positives, seed + 1)
    for d, ex in zip(shuffled, positives):
        if sorted(d.example.output_tokens) != sorted(ex.output_tokens):
            problems.append("shuffled multiset broken")
            break
    repaired = synthesize(NegCategory.RE_PAIRED, positives, seed + 2)
    fixed = sum(d.example.output_tokens == ex.output_tokens
                for d, ex in zip(repaired, positives))
    if fixed:
        problems.append(f"re-paired has {fixed} fixed points")
    echo = synthesize(NegCategory.INPUT_ECHO, positives, seed + 3)
    for d, ex in zip(echo, positives):
        if d.example.output_tokens[:-1] != ex.input_tokens[:99]:
            problems.append("input echo mismatch")
            break
    tails = synthesize(NegCategory.REPETITIVE_TAIL, positives, seed + 4)
    for d in tails:
        if not _has_repetitive_tail(d.example.output_tokens[:-1]):
            problems.append("repetitive tail lacks a period<=5 repeated block")
            break
    for cat in NegCategory:
        if len(synthesize(cat, positives, seed + 5)) != n:
            problems.append(f"{cat.name} class count != {n}")
    ok = not problems
    return "negative-generator-properties", ok, "; ".join(problems) or f"{n}/category ok"


def run_all(fast=False):
    """Run every oracle suite; returns list of (name, ok, detail)."""
    results = []
    results.append(check_gae())
    results.append(check_value_targets())
    results.append(check_metric_hand_cases())
    results.append(check_la_rouge1_symmetry())
    results.append(check_negatives(n=100 if fast else 1000))
    results.extend(check_gradients(max_coords=4 if fast else 6))
    return results
