import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seal_hil import tensor as T
from seal_hil.model import (
    LLM_ONLY,
    Batch,
    ConfidenceWeights,
    SealModel,
    combine,
    commitment_loss,
    encode_llm,
    hard_argmax,
    low_level_loss,
    one_hot,
    quantize,
    transition_weight,
    transition_weights,
)


def small_batch(rng, n=8, d=8, k=4, a=6):
    return Batch(
        obs=rng.random((n, d)),
        actions=rng.integers(0, a, n),
        next_obs=rng.random((n, d)),
        has_next=np.arange(n) < n - 1,
        ref=rng.integers(0, k, n),
        prev_ref=np.concatenate([[-1], rng.integers(0, k, n - 1)]),
    )


def test_confidence_weights_validation():
    assert ConfidenceWeights() == ConfidenceWeights(0.5, 0.5)
    with pytest.raises(ValueError):
        ConfidenceWeights(0.7, 0.7)
    with pytest.raises(ValueError):
        ConfidenceWeights(-0.1, 1.1)


def test_one_hot_and_argmax_ties():
    np.testing.assert_array_equal(one_hot([2, -1], 3), [[0, 0, 1], [0, 0, 0]])
    np.testing.assert_array_equal(hard_argmax(np.array([1.0, 3.0, 3.0])), [0, 1, 0])


def test_encode_llm_returns_hard_code():
    logits, z = encode_llm([0.1, 2.0, -1.0])
    np.testing.assert_array_equal(z, [0, 1, 0])


def test_quantize_examples():
    np.testing.assert_array_equal(quantize(np.array([0.2, 0.9, 0.1, 0.0])), [0, 1, 0, 0])
    np.testing.assert_array_equal(quantize(np.array([0.0, 0.0, 0.0, 1.0])), [0, 0, 0, 1])


def test_commitment_loss_value_and_codebook_gradient():
    z = T.parameter(np.array([[0.2, 0.9, 0.1, 0.0]]))
    loss = commitment_loss(z, quantize(z.value))
    assert float(loss.value) == pytest.approx(0.04 + 0.01 + 0.01)
    T.backward(loss)
    np.testing.assert_allclose(z.grad, 2 * (z.value - [[0, 1, 0, 0]]))
    zero = commitment_loss(np.eye(4)[[2]], np.eye(4)[[2]])
    assert float(zero.value) == 0.0


def test_combine_examples():
    e0, e1 = np.eye(4)[0], np.eye(4)[1]
    np.testing.assert_array_equal(combine(e0, e0, ConfidenceWeights(0.3, 0.7)), e0)
    np.testing.assert_array_equal(combine(e0, e1, ConfidenceWeights()), [0.5, 0.5, 0, 0])
    np.testing.assert_array_equal(combine(e0, e1, LLM_ONLY), e1)


def test_transition_weight_examples():
    e0, e1 = np.eye(3)[0], np.eye(3)[1]
    assert transition_weight(e0, e0) == 1.0
    assert transition_weight(e0, e1) == pytest.approx(math.e)
    assert transition_weight(e0, None) == 1.0
    z = np.eye(3)[[0, 0, 1]]
    np.testing.assert_allclose(transition_weights(z, np.eye(3)[[0, 1, 1]], np.array([True, True, False])),
                               [1.0, math.e, 1.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 10), st.lists(st.integers(0, 100), min_size=1, max_size=40))
def test_transition_weights_take_two_values(k, idx):
    z = one_hot(np.array(idx) % k, k)
    nxt = np.roll(z, -1, axis=0)
    w = transition_weights(z, nxt, np.ones(len(z), bool))
    assert set(np.round(w, 12)) <= {1.0, round(math.e, 12)}


def test_low_level_loss_weighting():
    rng = np.random.default_rng(0)
    policy = T.Mlp([6, 8, 3], rng)
    obs, z = rng.random((4, 3)), one_hot([0, 0, 1, 2], 3)
    actions = np.array([0, 1, 2, 0])
    plain = float(low_level_loss(policy, obs, z, actions).value)
    ones = float(low_level_loss(policy, obs, z, actions, np.ones(4)).value)
    assert plain == pytest.approx(ones)
    ce = T.cross_entropy(policy.predict(np.concatenate([obs, z], 1)), actions).value
    w = np.array([1.0, math.e, 1.0, 1.0])
    assert float(low_level_loss(policy, obs, z, actions, w).value) == pytest.approx((ce * w).mean())


def test_model_variants_have_expected_nets():
    rng = np.random.default_rng(0)
    assert set(SealModel(8, 4, 6, rng).nets) == {"enc_vq", "enc_llm", "policy"}
    lisa = SealModel(8, 4, 6, rng, use_llm=False)
    assert set(lisa.nets) == {"enc_vq", "policy"} and lisa.weights.w_vq == 1.0
    seal_l = SealModel(8, 4, 6, rng, use_vq=False)
    assert seal_l.weights == LLM_ONLY
    with pytest.raises(ValueError):
        SealModel(8, 4, 6, rng, use_vq=False, use_llm=False)


def test_loss_combines_branches():
    rng = np.random.default_rng(3)
    model = SealModel(8, 4, 6, rng, hidden=(16, 16))
    batch = small_batch(rng)
    w = ConfidenceWeights(0.3, 0.7)
    total, parts = model.loss(batch, w)
    beta = model.beta
    expect = 0.3 * (beta * parts["L_H_vq"] + parts["L_L_vq"]) + 0.7 * (beta * parts["L_H_llm"] + parts["L_L_llm"])
    assert parts["total"] == pytest.approx(expect)
    _, only_llm = model.loss(batch, LLM_ONLY)
    assert "L_H_vq" not in only_llm


def test_label_branch_requires_labels():
    rng = np.random.default_rng(0)
    model = SealModel(8, 4, 6, rng, use_vq=False, hidden=(8, 8))
    batch = small_batch(rng)
    batch.ref = -np.ones(len(batch), int)
    with pytest.raises(ValueError):
        model.loss(batch)


def test_subgoals_and_act():
    rng = np.random.default_rng(1)
    model = SealModel(8, 4, 6, rng, hidden=(8, 8))
    obs = rng.random((5, 8))
    zs = model.subgoals(obs)
    assert set(zs) == {"vq", "llm", "combined"}
    np.testing.assert_allclose(zs["combined"].sum(1), 1.0)
    for branch in ("vq", "llm", "combined"):
        a = model.act(obs, branch)
        assert a.shape == (5,) and a.min() >= 0 and a.max() < 6


def test_gradients_reach_every_network():
    rng = np.random.default_rng(2)
    model = SealModel(8, 4, 6, rng, hidden=(8, 8))
    total, _ = model.loss(small_batch(rng))
    T.backward(total)
    for name, net in model.nets.items():
        assert any(p.grad is not None and np.abs(p.grad).sum() > 0 for p in net.params), name
