import numpy as np
import pytest

import lastmile.autodiff as ad
from lastmile.corpus import TaskConfig, gen_extraction_task
from lastmile.exceptions import ConfigError, ContractError
from lastmile.model import ModelConfig, forward_scalar, init_params
from lastmile.negatives import build_reward_dataset, positive_datum
from lastmile.reward import (LENGTH_PENALTY, RewardFn, RewardTrainConfig,
                             apply_length_penalty, batch_loss, datum_loss,
                             mean_token_score, output_scalar_slice, token_rewards,
                             train_reward)

MC = dict(d_model=16, n_layers=1, n_heads=2, d_ff=32, max_seq=64)


@pytest.fixture(scope="module")
def world():
    cfg = TaskConfig(alphabet_size=8, input_len=(4, 6), marked=(2, 3), input_cap=16)
    data = gen_extraction_task(0, 12, cfg)
    params = init_params(ModelConfig(vocab_size=len(data.vocab), head="scalar", **MC),
                         seed=0)
    return data, params


def test_length_penalty_constant():
    assert LENGTH_PENALTY == -2.5


def test_config_validation():
    with pytest.raises(ConfigError):
        RewardTrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        RewardTrainConfig(epochs=0)


def test_reward_fn_rejects_logits_head(world):
    data, _ = world
    logits = init_params(ModelConfig(vocab_size=len(data.vocab), head="logits", **MC),
                         seed=0)
    with pytest.raises(ConfigError):
        RewardFn(logits)


def test_reward_fn_rejects_positive_penalty(world):
    _, params = world
    with pytest.raises(ConfigError):
        RewardFn(params, length_penalty=1.0)


def test_output_scalar_slice_positions():
    scalars = ad.Tensor(np.arange(10.0))
    # layout [BOS] + 4 input + 5 output: output token t sits at position 4 + t
    inclusive = output_scalar_slice(scalars, 4, 5).data
    assert inclusive.tolist() == [5.0, 6.0, 7.0, 8.0, 9.0]
    exclusive = output_scalar_slice(scalars, 4, 5, exclusive=True).data
    assert exclusive.tolist() == [4.0, 5.0, 6.0, 7.0, 8.0]


def test_datum_loss_hand_value(world):
    data, params = world
    datum = positive_datum(data[0])
    ex = datum.example
    from lastmile.corpus import BOS
    with ad.no_grad():
        scalars = forward_scalar(params, [BOS] + ex.input_tokens + ex.output_tokens)
        preds = output_scalar_slice(scalars, len(ex.input_tokens),
                                    len(ex.output_tokens)).data
    expect = float(np.mean((preds - 1.0) ** 2))
    got = float(datum_loss(params, datum).data)
    ad.clear_tape()
    assert got == pytest.approx(expect, rel=1e-12)


def test_datum_loss_scales_with_weight(world):
    data, params = world
    d1 = positive_datum(data[1])
    base = float(datum_loss(params, d1).data)
    ad.clear_tape()
    d1.weight = 2.0
    doubled = float(datum_loss(params, d1).data)
    ad.clear_tape()
    d1.weight = 1.0
    assert doubled == pytest.approx(2.0 * base, rel=1e-12)


def test_train_reward_reduces_loss(world):
    data, params = world
    reward_data = build_reward_dataset(data, negative_seed=1, output_cap=20)
    p = params.copy()
    before = batch_loss(p, reward_data)
    train_reward(p, reward_data, RewardTrainConfig(learning_rate=1e-3, epochs=2))
    after = batch_loss(p, reward_data)
    assert after < before


def test_train_reward_deterministic(world):
    data, params = world
    reward_data = build_reward_dataset(data, negative_seed=1, output_cap=20)
    cfg = RewardTrainConfig(learning_rate=1e-3)
    a = train_reward(params.copy(), reward_data, cfg)
    b = train_reward(params.copy(), reward_data, cfg)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name].data, b.tensors[name].data)


def test_train_reward_head_check(world):
    data, _ = world
    logits = init_params(ModelConfig(vocab_size=len(data.vocab), head="logits", **MC),
                         seed=0)
    with pytest.raises(ConfigError):
        train_reward(logits, [positive_datum(data[0])], RewardTrainConfig())


def test_train_reward_empty_dataset(world):
    _, params = world
    with pytest.raises(ContractError):
        train_reward(params.copy(), [], RewardTrainConfig())


def test_token_rewards_matches_forward(world):
    data, params = world
    fn = RewardFn(params)
    ex = data[0]
    from lastmile.corpus import BOS
    with ad.no_grad():
        scalars = forward_scalar(params, [BOS] + ex.input_tokens + ex.output_tokens)
    got = token_rewards(fn, ex.input_tokens, ex.output_tokens)
    n = len(ex.input_tokens)
    assert np.array_equal(got, scalars.data[n + 1:n + 1 + len(ex.output_tokens)])
    assert len(got) == len(ex.output_tokens)


def test_token_rewards_empty_output(world):
    _, params = world
    with pytest.raises(ContractError):
        token_rewards(RewardFn(params), [5, 6], [])


def test_apply_length_penalty_positions():
    rewards = np.zeros(6)
    out = apply_length_penalty(rewards, 6, 4)
    assert out.tolist() == [0, 0, 0, 0, -2.5, -2.5]
    assert rewards.tolist() == [0.0] * 6  # input untouched


def test_apply_length_penalty_noop_within_budget():
    out = apply_length_penalty(np.ones(3), 3, 5)
    assert out.tolist() == [1.0, 1.0, 1.0]


def test_apply_length_penalty_length_mismatch():
    with pytest.raises(ContractError):
        apply_length_penalty(np.ones(3), 4, 2)


def test_mean_token_score_is_mean(world):
    data, params = world
    fn = RewardFn(params)
    ex = data[2]
    assert mean_token_score(fn, ex) == pytest.approx(
        float(np.mean(token_rewards(fn, ex.input_tokens, ex.output_tokens))))
