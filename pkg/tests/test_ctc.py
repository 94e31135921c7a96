import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autosign import tensor as tn
from autosign.ctc import (BLANK, brute_force_ctc, collapse, ctc_batch_loss, ctc_decode_batch, ctc_greedy_decode,
                          ctc_loss, ctc_loss_batch, encoder_forward, from_ctc_labels, min_alignment_length,
                          to_ctc_labels)
from autosign.errors import ConfigError, GuardError
from autosign.model import ModelConfig, compressed_length, init_model
from autosign.pose_data import GlossSequence, KeypointLayout, PoseSequence, pad_and_mask

HAND = KeypointLayout.from_parts(["left_hand"])

from gradcheck import check


def _log_probs(rng, T, C):
    z = rng.normal(size=(T, C)) * 2
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _onehot_path(path, C, hot=0.0, cold=-50.0):
    lp = np.full((len(path), C), cold)
    lp[np.arange(len(path)), path] = hot
    return lp


def test_uniform_two_step_case():
    lp = np.log(np.full((2, 2), 0.5))
    assert abs(ctc_loss(lp, [1]).item() - (-math.log(0.75))) <= 1e-12
    assert abs(brute_force_ctc(lp, [1]) - (-math.log(0.75))) <= 1e-12


def test_forced_blank_empty_target():
    lp = np.log(np.array([[1.0, 1e-300]]))
    assert ctc_loss(lp, []).item() == 0.0
    assert brute_force_ctc(lp, []) == 0.0


def test_single_step_single_token():
    lp = np.log(np.array([[0.3, 0.7]]))
    assert ctc_loss(lp, [1]).item() == pytest.approx(-math.log(0.7), abs=1e-15)
    assert brute_force_ctc(lp, [1]) == pytest.approx(-math.log(0.7), abs=1e-15)


def test_matches_brute_force_200_instances():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(200):
        T = int(rng.integers(1, 7))
        C = int(rng.integers(2, 5))  # V <= 3 labels plus blank
        L = int(rng.integers(0, T + 1))
        target = [int(c) for c in rng.integers(1, C, size=L)]
        lp = _log_probs(rng, T, C)
        got = ctc_loss(lp, target).item()
        want = brute_force_ctc(lp, target)
        if math.isinf(want):
            assert math.isinf(got) and got > 0
        else:
            worst = max(worst, abs(got - want))
    assert worst <= 1e-9


def test_unalignable_is_inf_not_crash():
    lp = np.log(np.full((2, 2), 0.5))
    assert ctc_loss(lp, [1, 1]).item() == math.inf  # needs a blank between repeats
    assert brute_force_ctc(lp, [1, 1, 1]) == math.inf


def test_brute_force_guard():
    with pytest.raises(GuardError):
        brute_force_ctc(np.zeros((9, 2)), [1])


def test_rejects_blank_in_target():
    with pytest.raises(ValueError):
        ctc_loss(np.log(np.full((3, 3), 1 / 3)), [0])


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_probability_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    T, C = int(rng.integers(2, 9)), int(rng.integers(2, 5))
    target = [int(c) for c in rng.integers(1, C, size=int(rng.integers(1, 4)))]
    if min_alignment_length(target) > T:
        return
    p = math.exp(-ctc_loss(_log_probs(rng, T, C), target).item())
    assert 0.0 < p <= 1.0 + 1e-12


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(5):
        B, T, C = 2, 5, 3
        targets = [[1, 2], [2]]
        z = rng.normal(size=(B, T, C))
        check(lambda x: ctc_loss_batch(tn.log_softmax(x, axis=-1), [5, 4], targets).sum(), [z])


def test_batch_respects_lengths():
    rng = np.random.default_rng(1)
    a = _log_probs(rng, 4, 3)
    b = _log_probs(rng, 6, 3)
    padded = np.zeros((2, 6, 3))
    padded[0, :4] = a
    padded[1] = b
    nll = ctc_loss_batch(tn.Tensor(padded), [4, 6], [[1], [2, 1]]).data
    assert nll[0] == pytest.approx(brute_force_ctc(a, [1]), abs=1e-12)
    assert nll[1] == pytest.approx(brute_force_ctc(b, [2, 1]), abs=1e-12)


def test_greedy_collapse_rules():
    assert collapse([1, 1, BLANK, 1]) == [1, 1]
    assert collapse([BLANK, BLANK]) == []
    assert collapse([BLANK, 2, 2, BLANK, 2]) == [2, 2]
    assert ctc_greedy_decode(_onehot_path([1, 1, 0, 1], 3)) == [1, 1]
    assert ctc_greedy_decode(_onehot_path([0, 0, 0], 3)) == []


def test_label_shift_roundtrip():
    assert to_ctc_labels([0, 4, 7]) == [1, 5, 8]
    assert from_ctc_labels(to_ctc_labels([4, 9])) == [4, 9]
    assert min_alignment_length([1, 1, 2]) == 4


# encoder -----------------------------------------------------------------------

def _tiny(kind="ctc", **kw):
    cfg = ModelConfig(vocab_size=8, input_dim=42, kind=kind, channels=8, d_model=8, n_layers=1, n_heads=2,
                      dropout=0.0, **kw)
    return init_model(cfg, seed=0)


def _batch(T_list, seed=0):
    rng = np.random.default_rng(seed)
    return pad_and_mask([(PoseSequence(rng.normal(size=(T, 21, 2)), HAND), GlossSequence([4, 5]))
                         for T in T_list])


def test_encoder_rows_are_distributions():
    params = _tiny()
    b = _batch([12, 9])
    lp, mask = encoder_forward(b.poses, b.pose_mask, params)
    assert lp.shape == (2, compressed_length(12, params.cfg), 9)
    np.testing.assert_allclose(np.exp(lp.data).sum(axis=-1), 1.0, atol=1e-9)
    assert mask[1].sum() == compressed_length(9, params.cfg)


def test_encoder_valid_steps_ignore_padding():
    params = _tiny()
    b1 = _batch([9])
    b2 = _batch([9, 16])  # first sample now padded out to 16 frames
    lp1, _ = encoder_forward(b1.poses, b1.pose_mask, params)
    lp2, m2 = encoder_forward(b2.poses, b2.pose_mask, params)
    n = int(m2[0].sum())
    np.testing.assert_allclose(lp2.data[0, :n], lp1.data[0, :n], atol=1e-12)


def test_encoder_rejects_ar_model():
    with pytest.raises(ConfigError):
        b = _batch([8])
        encoder_forward(b.poses, b.pose_mask, _tiny("autoregressive"))


def test_batch_loss_and_decode_shapes():
    params = _tiny()
    b = _batch([16, 12])
    loss = ctc_batch_loss(b, params)
    assert loss.shape == () and np.isfinite(loss.item())
    loss.backward()
    assert all(p.grad is not None for p in params.parameters())
    outs = ctc_decode_batch(b.poses, b.pose_mask, params)
    assert len(outs) == 2 and all(all(0 <= i < 8 for i in o) for o in outs)
