import numpy as np
import pytest

from qlatent.ansatz import AnsatzKind, AnsatzSpec, build_ansatz, param_count
from qlatent.noise import (
    ConfusionMatrix,
    EmpiricalDistribution,
    NoiseModel,
    expected_hamming_distance,
    mitigate_confusion,
    sample_noisy,
    sampling_control_distance,
)
from qlatent.statevector import (
    Circuit,
    bitstring_to_index,
    pauli_z_expectations,
    run_circuit,
)


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(readout_alpha=0.5)
    with pytest.raises(ValueError):
        NoiseModel(p1=-0.01)
    with pytest.raises(ValueError):
        NoiseModel(p2=0.7)
    with pytest.raises(ValueError):
        NoiseModel(trajectories=0)


def test_identity_circuit_noiseless():
    c = Circuit(3)
    noise = NoiseModel(readout_alpha=0.0, p1=0.0, p2=0.0, trajectories=10)
    dist = sample_noisy(c, (), noise, shots=1000, seed=0)
    assert dist.counts == {"000": 1000}


def test_readout_flip_rate_on_identity_circuit():
    n, alpha, shots = 8, 0.1, 100_000
    c = Circuit(n)
    noise = NoiseModel(readout_alpha=alpha, p1=0.0, p2=0.0, trajectories=100)
    dist = sample_noisy(c, (), noise, shots=shots, seed=7)
    m = dist.marginals()
    sigma = np.sqrt(alpha * (1 - alpha) / shots)
    assert np.all(np.abs(m - alpha) < 5 * sigma)


def test_zero_noise_matches_exact_distribution():
    rng = np.random.default_rng(3)
    spec = AnsatzSpec(AnsatzKind.SE, 3, 2)
    params = rng.uniform(0, 2 * np.pi, param_count(spec))
    circuit = build_ansatz(spec, params)
    noise = NoiseModel(readout_alpha=0.0, p1=0.0, p2=0.0, trajectories=50)
    dist = sample_noisy(circuit, params, noise, shots=100_000, seed=11)
    probs = run_circuit(circuit, params).probabilities
    emp = np.zeros(8)
    for s, c in dist.counts.items():
        emp[bitstring_to_index(s)] = c / dist.total
    assert 0.5 * np.abs(emp - probs).sum() < 0.02


def test_shots_below_trajectories_rejected():
    c = Circuit(2)
    with pytest.raises(ValueError):
        sample_noisy(c, (), NoiseModel(trajectories=100), shots=50, seed=0)


def test_sampling_deterministic():
    rng = np.random.default_rng(5)
    spec = AnsatzSpec(AnsatzKind.BE, 3, 1)
    params = rng.uniform(0, 2 * np.pi, param_count(spec))
    circuit = build_ansatz(spec, params)
    noise = NoiseModel(readout_alpha=0.05, p1=1e-3, p2=1e-2, trajectories=20)
    a = sample_noisy(circuit, params, noise, shots=2000, seed=9)
    b = sample_noisy(circuit, params, noise, shots=2000, seed=9)
    assert a.counts == b.counts


def test_hamming_distance_exact_values():
    point = EmpiricalDistribution(8, {"00000000": 10})
    assert expected_hamming_distance(point, point) == 0.0

    # eight single-one strings once each plus the zero string twice:
    # every marginal is exactly 0.1
    counts = {"0" * 8: 2}
    for q in range(8):
        s = "".join("1" if i == q else "0" for i in range(8))
        counts[s] = 1
    flips = EmpiricalDistribution(8, counts)
    np.testing.assert_allclose(flips.marginals(), np.full(8, 0.1))
    assert abs(expected_hamming_distance(point, flips) - 0.8) < 1e-12

    uniform = EmpiricalDistribution(
        4, {format(i, "04b")[::-1]: 1 for i in range(16)})
    np.testing.assert_allclose(uniform.marginals(), np.full(4, 0.5))
    assert abs(expected_hamming_distance(uniform, uniform) - 2.0) < 1e-12

    a = EmpiricalDistribution(4, {"0000": 1})
    b = EmpiricalDistribution(4, {"1100": 1})
    assert abs(expected_hamming_distance(a, b) - 2.0) < 1e-12


def test_hamming_distance_qubit_mismatch():
    with pytest.raises(ValueError):
        expected_hamming_distance(
            EmpiricalDistribution(2, {"00": 1}),
            EmpiricalDistribution(3, {"000": 1}))


def test_sampling_control_distance_floor():
    # the two-shot-set control converges to the intrinsic distance
    # sum_q 2 m_q (1 - m_q): 1.0 for a Bell pair, 0 for a basis state
    c = Circuit(2)
    c.add("RY", (0,), (np.pi / 2,))
    c.add("CNOT", (0, 1), ())
    st = run_circuit(c)
    fine = sampling_control_distance(st, 100_000, seeds=(0, 1))
    assert abs(fine - 1.0) < 0.02

    basis = run_circuit(Circuit(2))
    assert sampling_control_distance(basis, 1000, seeds=(0, 1)) == 0.0


def test_mitigation_identity_confusion_is_noop():
    dist = EmpiricalDistribution(2, {"00": 70, "10": 20, "11": 10})
    cm = ConfusionMatrix.symmetric(2, 0.0)
    out = mitigate_confusion(dist, cm)
    for k, v in dist.probabilities().items():
        assert abs(out[k] - v) < 1e-12


def test_mitigation_recovers_exact_corrupted_point_mass():
    # point mass on 000 pushed through alpha = 1/4 symmetric readout
    # noise has probability (1/4)^k (3/4)^(3-k) on strings with k ones;
    # scaling by 64 gives exact integer counts
    alpha = 0.25
    counts = {}
    for i in range(8):
        ones = bin(i).count("1")
        s = "".join("1" if (i >> q) & 1 else "0" for q in range(3))
        counts[s] = round(64 * alpha ** ones * (1 - alpha) ** (3 - ones))
    dist = EmpiricalDistribution(3, counts)
    out = mitigate_confusion(dist, ConfusionMatrix.symmetric(3, alpha))
    assert abs(out["000"] - 1.0) < 1e-10
    for k, v in out.items():
        if k != "000":
            assert abs(v) < 1e-10


def test_mitigation_handles_asymmetric_confusion():
    # 1 qubit, M = [[0.9, 0.1], [0.3, 0.7]], true x = (0.6, 0.4):
    # noisy = (0.9*0.6 + 0.3*0.4, 0.1*0.6 + 0.7*0.4) = (0.66, 0.34)
    dist = EmpiricalDistribution(1, {"0": 66, "1": 34})
    cm = ConfusionMatrix([np.array([[0.9, 0.1], [0.3, 0.7]])])
    out = mitigate_confusion(dist, cm)
    assert abs(out["0"] - 0.6) < 1e-10
    assert abs(out["1"] - 0.4) < 1e-10


def test_mitigation_restores_sampled_point_mass():
    n, alpha = 4, 0.1
    c = Circuit(n)
    noise = NoiseModel(readout_alpha=alpha, p1=0.0, p2=0.0, trajectories=100)
    dist = sample_noisy(c, (), noise, shots=100_000, seed=21)
    out = mitigate_confusion(dist, ConfusionMatrix.symmetric(n, alpha))
    assert out["0" * n] >= 0.99


def test_mitigation_rejects_singular_confusion():
    dist = EmpiricalDistribution(1, {"0": 1, "1": 1})
    cm = ConfusionMatrix.symmetric(1, 0.5)
    with pytest.raises(ValueError):
        mitigate_confusion(dist, cm)


def test_mitigation_output_normalized_after_clipping():
    # heavily corrupted sparse counts produce negative quasi-probabilities
    dist = EmpiricalDistribution(2, {"00": 55, "10": 30, "01": 10, "11": 5})
    out = mitigate_confusion(dist, ConfusionMatrix.symmetric(2, 0.2))
    vals = np.array(list(out.values()))
    assert np.all(vals >= 0)
    assert abs(vals.sum() - 1.0) < 1e-12


def test_gate_noise_increases_hamming_distance():
    rng = np.random.default_rng(13)
    spec = AnsatzSpec(AnsatzKind.BE, 3, 1)
    params = rng.uniform(0, 2 * np.pi, param_count(spec))
    circuit = build_ansatz(spec, params)
    ideal = (1 - pauli_z_expectations(run_circuit(circuit, params))) / 2

    def distance(p2, seed):
        noise = NoiseModel(readout_alpha=0.01, p1=0.0, p2=p2,
                           trajectories=100)
        dist = sample_noisy(circuit, params, noise, shots=20_000, seed=seed)
        m = dist.marginals()
        return float(np.sum(m * (1 - ideal) + ideal * (1 - m)))

    lo = np.mean([distance(0.0, s) for s in range(3)])
    hi = np.mean([distance(0.2, s) for s in range(3)])
    assert hi > lo
