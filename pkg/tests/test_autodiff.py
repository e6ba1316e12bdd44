import numpy as np
import pytest

from oracles import check_grads, numeric_grad
from qlatent.tensor import (
    Tensor,
    avg_pool2d,
    concat,
    conv2d,
    upsample_nearest,
)


def test_add_mul_broadcast():
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(3, 1)), requires_grad=True)
    b = Tensor(rng.normal(size=(4,)), requires_grad=True)
    check_grads(lambda: (a * b + a + 2.0).sum(), [a, b])


def test_sub_div_pow():
    rng = np.random.default_rng(1)
    a = Tensor(rng.uniform(0.5, 2.0, size=(5,)), requires_grad=True)
    b = Tensor(rng.uniform(0.5, 2.0, size=(5,)), requires_grad=True)
    check_grads(lambda: ((a - b) / b + a ** 3 - 2.0 / a).sum(), [a, b])


def test_matmul_batched():
    rng = np.random.default_rng(2)
    a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    check_grads(lambda: ((a @ b) ** 2).sum(), [a, b])


def test_pointwise_chain():
    rng = np.random.default_rng(3)
    a = Tensor(rng.uniform(0.1, 1.5, size=(6,)), requires_grad=True)
    check_grads(
        lambda: (a.exp().log() + a.sqrt() * a.sigmoid()
                 + a.tanh() - a.abs()).sum(),
        [a])


def test_silu():
    rng = np.random.default_rng(4)
    a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    check_grads(lambda: a.silu().sum(), [a])
    s = 1.7 / (1 + np.exp(-1.7))
    assert abs(Tensor([1.7]).silu().data[0] - s) < 1e-12


def test_reductions_and_reshape():
    rng = np.random.default_rng(5)
    a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    check_grads(lambda: a.sum(axis=1).mean(), [a])
    check_grads(lambda: a.mean(axis=(1, 2)).sum(), [a])
    check_grads(lambda: (a.sum(axis=2, keepdims=True) * a).sum(), [a])
    check_grads(lambda: (a.reshape(6, 4) ** 2).sum(), [a])
    check_grads(lambda: (a.transpose(2, 0, 1) * 3.0).sum(), [a])


def test_reuse_of_node_accumulates():
    a = Tensor([1.0, -2.0, 3.0], requires_grad=True)
    loss = (a * a + a).sum()
    loss.backward()
    np.testing.assert_allclose(a.grad, 2 * a.data + 1)


def test_detach_blocks_gradient():
    a = Tensor([2.0], requires_grad=True)
    frozen = (a * 3.0).detach()
    assert not frozen.requires_grad
    loss = (a * frozen).sum()
    loss.backward()
    np.testing.assert_allclose(a.grad, [6.0])


def test_backward_validation():
    a = Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ValueError):
        (a * 2).backward()
    const = Tensor([3.0])
    with pytest.raises(ValueError):
        const.sum().backward()


def test_constant_subgraphs_carry_no_grad():
    a = Tensor([1.0, 2.0])
    b = Tensor([3.0, 4.0])
    out = (a * b).sum()
    assert not out.requires_grad
    assert out._parents == ()


def _naive_conv(x, w, stride, padding):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (wd + 2 * padding - k) // stride + 1
    out = np.zeros((n, f, h_out, w_out))
    for b in range(n):
        for of in range(f):
            for i in range(h_out):
                for j in range(w_out):
                    patch = xp[b, :, i * stride:i * stride + k,
                               j * stride:j * stride + k]
                    out[b, of, i, j] = np.sum(patch * w[of])
    return out


def test_conv2d_forward_matches_naive():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(2, 3, 6, 6))
    w = rng.normal(size=(4, 3, 3, 3))
    for stride in (1, 2):
        got = conv2d(Tensor(x), Tensor(w), stride=stride, padding=1).data
        want = _naive_conv(x, w, stride, 1)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_conv2d_gradients():
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(2, 2, 5, 5)), requires_grad=True)
    w = Tensor(rng.normal(size=(3, 2, 3, 3)), requires_grad=True)
    check_grads(lambda: (conv2d(x, w, stride=1, padding=1) ** 2).sum(),
                [x, w], rtol=1e-4, atol=1e-6)
    check_grads(lambda: conv2d(x, w, stride=2, padding=1).abs().sum(),
                [x, w], rtol=1e-4, atol=1e-6)


def test_conv2d_shape_validation():
    with pytest.raises(ValueError):
        conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((2, 4, 3, 3))))


def test_avg_pool_forward_and_grad():
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(2, 3, 4, 4)), requires_grad=True)
    out = avg_pool2d(x, 2)
    assert out.shape == (2, 3, 2, 2)
    np.testing.assert_allclose(
        out.data[0, 0, 0, 0], x.data[0, 0, :2, :2].mean())
    check_grads(lambda: (avg_pool2d(x, 2) ** 2).sum(), [x])
    with pytest.raises(ValueError):
        avg_pool2d(Tensor(np.zeros((1, 1, 5, 5))), 2)


def test_global_mean_pool_equivalent():
    rng = np.random.default_rng(9)
    x = Tensor(rng.normal(size=(2, 3, 4, 4)), requires_grad=True)
    check_grads(lambda: (x.mean(axis=(2, 3)) ** 2).sum(), [x])


def test_upsample_nearest():
    x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2), requires_grad=True)
    out = upsample_nearest(x, 2)
    want = np.array([[0, 0, 1, 1], [0, 0, 1, 1],
                     [2, 2, 3, 3], [2, 2, 3, 3]], dtype=float)
    np.testing.assert_array_equal(out.data[0, 0], want)
    check_grads(lambda: (upsample_nearest(x, 2) ** 2).sum(), [x])


def test_concat_and_split_gradient():
    rng = np.random.default_rng(10)
    a = Tensor(rng.normal(size=(2, 2, 3, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 4, 3, 3)), requires_grad=True)
    out = concat([a, b], axis=1)
    assert out.shape == (2, 6, 3, 3)
    check_grads(lambda: (concat([a, b], axis=1) ** 3).sum(), [a, b],
                rtol=1e-4, atol=1e-6)


def test_deep_graph_backward_is_iterative():
    x = Tensor([1.0], requires_grad=True)
    y = x
    for _ in range(3000):
        y = y + 0.001
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [1.0])


def test_item_and_detach_copy():
    a = Tensor([5.0])
    assert a.item() == 5.0
    d = a.detach()
    d.data[0] = 9.0
    assert a.data[0] == 5.0
    with pytest.raises(ValueError):
        Tensor([1.0, 2.0]).item()
