import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autosign.optim import AdamW, AdamWState, adamw_step, cosine_warm_restart_lr
from autosign.tensor import Tensor


def _one_step(w0, g, lr, wd):
    w = Tensor([w0])
    adamw_step([w], [np.array([g])], AdamWState.for_params([w]), lr, weight_decay=wd)
    return w.data[0]


def test_adamw_first_step_closed_form():
    assert _one_step(1.0, 1.0, 0.1, 0.0) == pytest.approx(0.9, abs=1e-7)


def test_adamw_decoupled_decay():
    assert _one_step(1.0, 1.0, 0.1, 0.01) == pytest.approx(0.899, abs=1e-7)


def test_adamw_zero_grad_no_decay_is_identity():
    assert _one_step(1.0, 0.0, 0.1, 0.0) == 1.0


def test_adamw_lr_zero_bit_identical():
    rng = np.random.default_rng(0)
    ws = [Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=5))]
    before = [w.data.copy() for w in ws]
    state = AdamWState.for_params(ws)
    for _ in range(3):
        adamw_step(ws, [rng.normal(size=w.shape) for w in ws], state, 0.0, weight_decay=0.1)
    for w, b in zip(ws, before):
        assert np.array_equal(w.data, b)
    assert state.t == 3


def test_adamw_matches_reference_over_steps():
    rng = np.random.default_rng(1)
    w = Tensor(rng.normal(size=4))
    ref = w.data.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    state = AdamWState.for_params([w])
    for t in range(1, 6):
        g = rng.normal(size=4)
        adamw_step([w], [g], state, 0.01, 0.9, 0.999, 1e-8, 0.05)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8) - 0.01 * 0.05 * ref
    np.testing.assert_allclose(w.data, ref, rtol=1e-12, atol=1e-14)


def test_adamw_wrapper_uses_grads():
    w = Tensor([1.0], requires_grad=True)
    opt = AdamW([w], lr=0.1, weight_decay=0.0)
    w.grad = np.array([1.0])
    opt.step()
    assert w.data[0] == pytest.approx(0.9, abs=1e-7)
    opt.zero_grad()
    assert w.grad is None


def test_scheduler_examples():
    assert cosine_warm_restart_lr(0, 1e-4, 1e-6, 10, 2) == 1e-4
    assert cosine_warm_restart_lr(5, 1e-4, 1e-6, 10, 1) == pytest.approx(5.05e-5, rel=1e-12)
    assert cosine_warm_restart_lr(10, 1e-4, 1e-6, 10, 2) == 1e-4
    assert cosine_warm_restart_lr(30, 1e-4, 1e-6, 10, 2) == 1e-4
    # second cycle spans 10..29
    assert cosine_warm_restart_lr(20, 1e-4, 1e-6, 10, 2) == pytest.approx(5.05e-5, rel=1e-12)


def _closed_form(e, lr_max, lr_min, T0, Tm):
    start, length = 0, T0
    while e >= start + length:
        start += length
        length *= Tm
    return lr_min + (lr_max - lr_min) * (1 + math.cos(math.pi * (e - start) / length)) / 2


@given(st.integers(0, 400), st.integers(1, 12), st.integers(1, 3))
@settings(max_examples=200, deadline=None)
def test_scheduler_matches_closed_form(e, T0, Tm):
    assert cosine_warm_restart_lr(e, 1e-3, 1e-6, T0, Tm) == pytest.approx(_closed_form(e, 1e-3, 1e-6, T0, Tm),
                                                                           rel=1e-12, abs=1e-18)


@given(st.integers(1, 12), st.integers(1, 3), st.integers(0, 6))
@settings(max_examples=100, deadline=None)
def test_scheduler_restart_is_exactly_lr_max(T0, Tm, cycle):
    boundary = sum(T0 * Tm ** i for i in range(cycle))
    assert cosine_warm_restart_lr(boundary, 3e-4, 1e-6, T0, Tm) == 3e-4


def test_scheduler_rejects_bad_args():
    with pytest.raises(ValueError):
        cosine_warm_restart_lr(-1, 1e-4)
    with pytest.raises(ValueError):
        cosine_warm_restart_lr(0, 1e-4, T0=0)
    with pytest.raises(ValueError):
        cosine_warm_restart_lr(0, 1e-4, Tmult=0)
