import numpy as np
import pytest

from qlatent.optim import Adam, AdamW
from qlatent.tensor import Tensor


def reference_adam_step(p, g, m, v, t, lr, b1, b2, eps, wd):
    """Textbook decoupled-decay update, written independently."""
    p = p * (1.0 - lr * wd)
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    p = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p, m, v


def test_adam_matches_reference_updates():
    rng = np.random.default_rng(0)
    p0 = rng.normal(size=(4, 3))
    param = Tensor(p0.copy(), requires_grad=True)
    opt = Adam([param], lr=0.01)
    ref_p, m, v = p0.copy(), np.zeros_like(p0), np.zeros_like(p0)
    for t in range(1, 11):
        g = rng.normal(size=(4, 3))
        param.grad = g.copy()
        opt.step()
        ref_p, m, v = reference_adam_step(
            ref_p, g, m, v, t, 0.01, 0.9, 0.999, 1e-8, 0.0)
        np.testing.assert_allclose(param.data, ref_p, atol=1e-14)


def test_adamw_matches_reference_with_decay():
    rng = np.random.default_rng(1)
    p0 = rng.normal(size=(5,))
    param = Tensor(p0.copy(), requires_grad=True)
    opt = AdamW([param], lr=0.005, weight_decay=0.01)
    ref_p, m, v = p0.copy(), np.zeros_like(p0), np.zeros_like(p0)
    for t in range(1, 8):
        g = rng.normal(size=(5,))
        param.grad = g.copy()
        opt.step()
        ref_p, m, v = reference_adam_step(
            ref_p, g, m, v, t, 0.005, 0.9, 0.999, 1e-8, 0.01)
        np.testing.assert_allclose(param.data, ref_p, atol=1e-14)


def test_first_step_magnitude_is_learning_rate():
    param = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([param], lr=0.25)
    param.grad = np.array([10.0, -0.003, 2.0])
    opt.step()
    np.testing.assert_allclose(np.abs(param.data), 0.25, rtol=1e-4)


def test_decay_is_decoupled_from_moments():
    # with zero gradients only the decay acts, multiplicatively
    param = Tensor(np.array([2.0, -4.0]), requires_grad=True)
    opt = AdamW([param], lr=0.1, weight_decay=0.5)
    for _ in range(3):
        param.grad = np.zeros(2)
        opt.step()
    np.testing.assert_allclose(
        param.data, np.array([2.0, -4.0]) * (1 - 0.1 * 0.5) ** 3, atol=1e-12)


def test_quadratic_convergence():
    target = np.array([1.5, -2.0, 0.25])
    param = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([param], lr=0.05)
    for _ in range(600):
        opt.zero_grad()
        loss = ((param - Tensor(target)) ** 2).sum()
        loss.backward()
        opt.step()
    np.testing.assert_allclose(param.data, target, atol=1e-3)


def test_nonfinite_gradient_rejected_without_side_effects():
    param = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = Adam([param], lr=0.1)
    param.grad = np.array([0.5, np.nan])
    with pytest.raises(ValueError):
        opt.step()
    np.testing.assert_array_equal(param.data, [1.0, 2.0])
    assert opt.t == 0
    param.grad = np.array([np.inf, 0.0])
    with pytest.raises(ValueError):
        opt.step()
    np.testing.assert_array_equal(param.data, [1.0, 2.0])


def test_missing_gradient_treated_as_zero():
    a = Tensor(np.array([1.0]), requires_grad=True)
    b = Tensor(np.array([5.0]), requires_grad=True)
    opt = Adam([a, b], lr=0.1)
    a.grad = np.array([1.0])
    opt.step()
    assert a.data[0] != 1.0
    assert b.data[0] == 5.0


def test_constructor_validation():
    p = Tensor(np.zeros(1), requires_grad=True)
    with pytest.raises(ValueError):
        Adam([])
    with pytest.raises(ValueError):
        Adam([p], lr=0.0)
    with pytest.raises(ValueError):
        Adam([p], betas=(1.0, 0.999))
    with pytest.raises(ValueError):
        Adam([p], weight_decay=-0.1)


def test_zero_grad_clears_all():
    p = Tensor(np.zeros(2), requires_grad=True)
    opt = Adam([p])
    p.grad = np.ones(2)
    opt.zero_grad()
    assert p.grad is None
