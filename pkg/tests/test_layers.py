import numpy as np
import pytest

from oracles import check_grads, numeric_grad
from qlatent.ansatz import AnsatzKind, AnsatzSpec
from qlatent.layers import (
    CDCNNLayer,
    Conv2d,
    Downsample,
    GroupNorm,
    Linear,
    Module,
    QuantumLayer,
    ResBlock,
    Upsample,
    default_groups,
    trunc_normal,
)
from qlatent.noise import NoiseModel
from qlatent.tensor import Tensor


def test_trunc_normal_bounds_and_determinism():
    a = trunc_normal((1000,), np.random.default_rng(0), std=0.02)
    b = trunc_normal((1000,), np.random.default_rng(0), std=0.02)
    np.testing.assert_array_equal(a, b)
    assert np.abs(a).max() <= 0.04
    assert 0.005 < a.std() < 0.03


def test_default_groups():
    assert default_groups(64) == 8
    assert default_groups(4) == 4
    assert default_groups(6) == 2
    assert default_groups(3) == 1


def test_linear_forward_and_grads():
    rng = np.random.default_rng(1)
    layer = Linear(3, 2, rng)
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    out = layer(x)
    np.testing.assert_allclose(
        out.data, x.data @ layer.weight.data + layer.bias.data)
    check_grads(lambda: (layer(x) ** 2).sum(),
                [x, layer.weight, layer.bias], rtol=1e-4, atol=1e-7)


def test_conv2d_module():
    rng = np.random.default_rng(2)
    layer = Conv2d(3, 5, rng, stride=2)
    x = Tensor(rng.normal(size=(2, 3, 8, 8)), requires_grad=True)
    out = layer(x)
    assert out.shape == (2, 5, 4, 4)
    check_grads(lambda: layer(x).abs().sum(),
                [layer.weight, layer.bias], rtol=1e-4, atol=1e-6)
    with pytest.raises(ValueError):
        Conv2d(3, 5, rng, stride=3)


def test_groupnorm_statistics():
    rng = np.random.default_rng(3)
    gn = GroupNorm(8, num_groups=4)
    x = Tensor(rng.normal(2.0, 3.0, size=(2, 8, 5, 5)))
    out = gn(x).data
    grouped = out.reshape(2, 4, 2 * 25)
    np.testing.assert_allclose(grouped.mean(axis=2), 0.0, atol=1e-10)
    np.testing.assert_allclose(grouped.std(axis=2), 1.0, atol=1e-4)


def test_groupnorm_matches_manual_formula():
    rng = np.random.default_rng(4)
    gn = GroupNorm(6, num_groups=2)
    gn.gamma.data[:] = rng.normal(size=6)
    gn.beta.data[:] = rng.normal(size=6)
    x = rng.normal(size=(3, 6, 2, 2))
    got = gn(Tensor(x)).data
    grouped = x.reshape(3, 2, 3 * 4)
    mean = grouped.mean(axis=2, keepdims=True)
    var = grouped.var(axis=2, keepdims=True)
    normed = ((grouped - mean) / np.sqrt(var + 1e-5)).reshape(3, 6, 2, 2)
    want = normed * gn.gamma.data.reshape(1, 6, 1, 1) \
        + gn.beta.data.reshape(1, 6, 1, 1)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_groupnorm_gradients():
    rng = np.random.default_rng(5)
    gn = GroupNorm(4, num_groups=2)
    x = Tensor(rng.normal(size=(2, 4, 3, 3)), requires_grad=True)
    check_grads(lambda: (gn(x) ** 2).sum(), [x, gn.gamma, gn.beta],
                rtol=1e-3, atol=1e-6)
    with pytest.raises(ValueError):
        GroupNorm(6, num_groups=4)


def test_resblock_shapes_and_gradients():
    rng = np.random.default_rng(6)
    block = ResBlock(4, 8, rng, time_dim=6)
    x = Tensor(rng.normal(size=(2, 4, 4, 4)), requires_grad=True)
    t = Tensor(rng.normal(size=(2, 6)), requires_grad=True)
    out = block(x, t)
    assert out.shape == (2, 8, 4, 4)
    check_grads(lambda: (block(x, t) ** 2).sum(), [x, t], rtol=1e-3,
                atol=1e-6)
    with pytest.raises(ValueError):
        block(x)


def test_resblock_without_channel_change_has_no_projection():
    rng = np.random.default_rng(7)
    block = ResBlock(4, 4, rng)
    assert block.skip is None
    x = Tensor(rng.normal(size=(1, 4, 3, 3)))
    assert block(x).shape == (1, 4, 3, 3)


def test_down_and_upsample_roundtrip_shapes():
    rng = np.random.default_rng(8)
    x = Tensor(rng.normal(size=(2, 4, 8, 8)))
    down = Downsample(4, rng)
    up = Upsample(4, rng)
    assert down(x).shape == (2, 4, 4, 4)
    assert up(down(x)).shape == (2, 4, 8, 8)


def test_named_parameters_deterministic_and_nested():
    rng = np.random.default_rng(9)

    class Tiny(Module):
        def __init__(self):
            self.a = Linear(2, 3, rng)
            self.blocks = [Linear(3, 3, rng), GroupNorm(4)]

    names = [n for n, _ in Tiny().named_parameters()]
    assert names == [
        "a.weight", "a.bias",
        "blocks.0.weight", "blocks.0.bias",
        "blocks.1.gamma", "blocks.1.beta",
    ]


def test_quantum_layer_initial_output_is_zero():
    rng = np.random.default_rng(10)
    layer = QuantumLayer(5, 5, AnsatzSpec(AnsatzKind.ESE2, 3, 1), rng)
    x = Tensor(rng.normal(size=(4, 5)))
    np.testing.assert_array_equal(layer(x).data, np.zeros((4, 5)))


def test_quantum_layer_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    layer = QuantumLayer(3, 2, AnsatzSpec(AnsatzKind.ESE2, 2, 1), rng)
    # an all-zero output map would hide the upstream gradients
    layer.post_map.weight.data[:] = rng.normal(size=(2, 2))
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    params = [x, layer.theta, layer.pre_map.weight, layer.pre_map.bias,
              layer.post_map.weight, layer.post_map.bias]
    check_grads(lambda: (layer(x) ** 2).sum(), params, rtol=1e-3, atol=1e-6)


def test_quantum_layer_shift_rule_matches_fd_tightly():
    rng = np.random.default_rng(12)
    layer = QuantumLayer(2, 1, AnsatzSpec(AnsatzKind.BE, 2, 1), rng)
    layer.post_map.weight.data[:] = 1.0
    x = Tensor(rng.normal(size=(2, 2)))

    def loss():
        return layer(x).sum()

    layer.zero_grad()
    loss().backward()
    fd = numeric_grad(loss, layer.theta)
    np.testing.assert_allclose(layer.theta.grad, fd, rtol=1e-6, atol=1e-8)


def test_quantum_layer_batch_consistency():
    rng = np.random.default_rng(13)
    layer = QuantumLayer(4, 4, AnsatzSpec(AnsatzKind.SE, 3, 2), rng)
    layer.post_map.weight.data[:] = rng.normal(size=(3, 4))
    xs = rng.normal(size=(5, 4))
    full = layer(Tensor(xs)).data
    rows = [layer(Tensor(xs[i:i + 1])).data[0] for i in range(5)]
    np.testing.assert_allclose(full, np.array(rows), atol=1e-12)


def test_quantum_layer_sampled_approaches_exact():
    rng = np.random.default_rng(14)
    layer = QuantumLayer(3, 3, AnsatzSpec(AnsatzKind.ESE2, 2, 1), rng)
    layer.post_map.weight.data[:] = rng.normal(size=(2, 3))
    x = Tensor(rng.normal(size=(2, 3)))
    exact = layer(x).data
    noiseless = NoiseModel(readout_alpha=0.0, p1=0.0, p2=0.0, trajectories=1)
    sampled = layer.forward_sampled(x, shots=200_000, noise=noiseless,
                                    seed=0).data
    np.testing.assert_allclose(sampled, exact, atol=0.02)


def test_quantum_layer_sampled_mitigation_beats_raw_readout():
    rng = np.random.default_rng(15)
    layer = QuantumLayer(3, 3, AnsatzSpec(AnsatzKind.ESE2, 2, 1), rng)
    layer.post_map.weight.data[:] = rng.normal(size=(2, 3))
    x = Tensor(rng.normal(size=(2, 3)))
    exact = layer(x).data
    noisy = NoiseModel(readout_alpha=0.1, p1=0.0, p2=0.0, trajectories=1)
    raw = layer.forward_sampled(x, shots=100_000, noise=noisy, seed=1).data
    fixed = layer.forward_sampled(x, shots=100_000, noise=noisy, seed=1,
                                  mitigate=True).data
    assert np.abs(fixed - exact).max() < np.abs(raw - exact).max()


def test_cdcnn_parameter_count():
    rng = np.random.default_rng(16)
    for nodes in (2, 3, 8):
        layer = CDCNNLayer(nodes, rng)
        assert layer.parameter_count() == 4 * nodes ** 4
    assert CDCNNLayer(8, rng).parameter_count() == 16_384


def test_cdcnn_forward_and_grads():
    rng = np.random.default_rng(17)
    layer = CDCNNLayer(2, rng)
    x = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    out = layer(x)
    assert out.shape == (3, 4)
    check_grads(lambda: (layer(x) ** 2).sum(),
                [x, layer.fc1.weight, layer.fc2.weight],
                rtol=1e-4, atol=1e-7)
