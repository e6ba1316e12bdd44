"""Stochastic noise channels, shot statistics, and readout mitigation.

Gate noise is modeled by Pauli-trajectory sampling: after each gate a
uniformly random non-identity Pauli is inserted on the gate's qubits with
probability p1 (one-qubit gates) or p2 (two-qubit gates).  Readout noise
flips each measured bit independently with probability alpha.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .statevector import (
    Circuit,
    StateVector,
    TWO_QUBIT_GATES,
    apply_gate,
    apply_pauli,
    bind_params,
    sample_bitstrings,
)

_PAULI_1Q = ("X", "Y", "Z")
_PAULI_2Q = tuple((a, b) for a in "IXYZ" for b in "IXYZ" if (a, b) != ("I", "I"))


@dataclass
class NoiseModel:
    """Parametric stand-in for a calibrated device noise model."""

    readout_alpha: float = 0.0
    p1: float = 5e-4
    p2: float = 1e-2
    trajectories: int = 100

    def __post_init__(self):
        for name in ("readout_alpha", "p1", "p2"):
            v = getattr(self, name)
            if not 0.0 <= v < 0.5:
                raise ValueError(f"{name} must be in [0, 0.5), got {v}")
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")


@dataclass
class EmpiricalDistribution:
    """bitstring -> count map from shot-based sampling."""

    n_qubits: int
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for key in self.counts:
            if len(key) != self.n_qubits:
                raise ValueError(
                    f"key {key!r} does not have {self.n_qubits} bits")
        if self.total <= 0:
            raise ValueError("distribution needs at least one count")

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @classmethod
    def from_samples(cls, samples: list[str], n_qubits: int) -> "EmpiricalDistribution":
        counts: dict[str, int] = {}
        for s in samples:
            counts[s] = counts.get(s, 0) + 1
        return cls(n_qubits, counts)

    def marginals(self) -> np.ndarray:
        """Per-qubit empirical probability of measuring 1."""
        ones = np.zeros(self.n_qubits)
        for key, c in self.counts.items():
            for q, b in enumerate(key):
                if b == "1":
                    ones[q] += c
        return ones / self.total

    def probabilities(self) -> dict[str, float]:
        t = self.total
        return {k: c / t for k, c in sorted(self.counts.items())}


@dataclass
class ConfusionMatrix:
    """Per-qubit 2x2 row-stochastic matrices, M[i][j] = Pr(measure j | true i)."""

    per_qubit: list[np.ndarray]

    def __post_init__(self):
        mats = []
        for q, m in enumerate(self.per_qubit):
            m = np.asarray(m, dtype=np.float64)
            if m.shape != (2, 2):
                raise ValueError(f"qubit {q}: confusion matrix must be 2x2")
            if np.any(m < 0) or np.any(m > 1):
                raise ValueError(f"qubit {q}: entries must lie in [0, 1]")
            if np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-12:
                raise ValueError(f"qubit {q}: rows must sum to 1")
            mats.append(m)
        self.per_qubit = mats

    @classmethod
    def symmetric(cls, n_qubits: int, alpha: float) -> "ConfusionMatrix":
        m = np.array([[1 - alpha, alpha], [alpha, 1 - alpha]])
        return cls([m.copy() for _ in range(n_qubits)])


def _maybe_insert_pauli(state: StateVector, qubits, prob: float,
                        rng: np.random.Generator) -> StateVector:
    if prob <= 0.0 or rng.random() >= prob:
        return state
    if len(qubits) == 1:
        pauli = _PAULI_1Q[rng.integers(3)]
        return apply_pauli(state, pauli, qubits[0])
    pair = _PAULI_2Q[rng.integers(len(_PAULI_2Q))]
    for p, q in zip(pair, qubits):
        if p != "I":
            state = apply_pauli(state, p, q)
    return state


def _flip_bits(samples: list[str], alpha: float,
               rng: np.random.Generator) -> list[str]:
    if alpha <= 0.0 or not samples:
        return samples
    bits = np.array([[int(b) for b in s] for s in samples], dtype=np.uint8)
    flips = rng.random(bits.shape) < alpha
    bits ^= flips.astype(np.uint8)
    return ["".join(row) for row in bits.astype("U1")]


def sample_noisy(circuit: Circuit, params, noise: NoiseModel, shots: int,
                 seed: int) -> EmpiricalDistribution:
    """Shot counts under gate + readout noise, averaged over trajectories.

    Shots are split as evenly as possible across ``noise.trajectories``
    independent Pauli trajectories; the leftover shots go to the first
    trajectories.  Deterministic for a given seed.
    """
    if shots < 1:
        raise ValueError(f"shots must be >= 1, got {shots}")
    if shots < noise.trajectories:
        raise ValueError(
            f"shots ({shots}) must be >= trajectories ({noise.trajectories})")
    bound = bind_params(circuit, params)
    rng = np.random.default_rng(seed)
    base, extra = divmod(shots, noise.trajectories)
    samples: list[str] = []
    for t in range(noise.trajectories):
        n_shots = base + (1 if t < extra else 0)
        if n_shots == 0:
            continue
        state = _run_with_pauli_noise(bound, noise, rng)
        traj = sample_bitstrings(state, n_shots, int(rng.integers(2 ** 31)))
        samples.extend(_flip_bits(traj, noise.readout_alpha, rng))
    return EmpiricalDistribution.from_samples(samples, circuit.n_qubits)


def _run_with_pauli_noise(bound: Circuit, noise: NoiseModel,
                          rng: np.random.Generator) -> StateVector:
    from .statevector import init_zero_state

    state = init_zero_state(bound.n_qubits)
    for op in bound.ops:
        state = apply_gate(state, op)
        prob = noise.p2 if op.kind in TWO_QUBIT_GATES else noise.p1
        state = _maybe_insert_pauli(state, op.targets, prob, rng)
    return state


def expected_hamming_distance(p: EmpiricalDistribution,
                              q: EmpiricalDistribution) -> float:
    """Expected Hamming distance (bits) between independent draws of p and q.

    Computed from the per-qubit marginals: each bit differs with
    probability p1(1-q1) + q1(1-p1), and expectations add over qubits.
    """
    if p.n_qubits != q.n_qubits:
        raise ValueError(
            f"qubit-count mismatch: {p.n_qubits} vs {q.n_qubits}")
    mp, mq = p.marginals(), q.marginals()
    return float(np.sum(mp * (1 - mq) + mq * (1 - mp)))


def sampling_control_distance(state: StateVector, shots: int,
                              seeds: tuple[int, int]) -> float:
    """Hamming distance between two independent shot sets of the same state.

    With many shots this converges to the state's intrinsic distance
    ``sum_q 2 m_q (1 - m_q)`` (zero only for basis states), so it serves
    as the sampling-noise floor a noisy run should be compared against.
    """
    a = EmpiricalDistribution.from_samples(
        sample_bitstrings(state, shots, seeds[0]), state.n_qubits)
    b = EmpiricalDistribution.from_samples(
        sample_bitstrings(state, shots, seeds[1]), state.n_qubits)
    return expected_hamming_distance(a, b)


def mitigate_confusion(dist: EmpiricalDistribution,
                       cm: ConfusionMatrix) -> dict[str, float]:
    """Invert per-qubit readout confusion on the observed bitstrings.

    Applies the tensor-product inverse of the per-qubit matrices to the
    empirical distribution, restricted to the observed strings (the
    subspace-restriction idea of scalable mitigation).  Negative
    quasi-probabilities are clipped to zero and the rest renormalized.
    """
    if len(cm.per_qubit) != dist.n_qubits:
        raise ValueError(
            f"confusion matrix covers {len(cm.per_qubit)} qubits, "
            f"distribution has {dist.n_qubits}")
    invs = []
    for q, m in enumerate(cm.per_qubit):
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < 1e-12:
            raise ValueError(f"qubit {q}: confusion matrix is singular")
        invs.append(np.linalg.inv(m))
    observed = sorted(dist.counts)
    bits = np.array([[int(b) for b in s] for s in observed], dtype=np.intp)
    total = dist.total
    p_hat = np.array([dist.counts[s] / total for s in observed])
    # x(t) = sum_s prod_q Minv_q[s_q, t_q] * p_hat(s), restricted to observed t
    weight = np.ones((len(observed), len(observed)))
    for q in range(dist.n_qubits):
        weight *= invs[q][bits[None, :, q], bits[:, None, q]]
    x = weight @ p_hat
    x = np.clip(x, 0.0, None)
    s = x.sum()
    if s <= 0:
        raise ValueError("mitigation clipped all probability mass")
    x /= s
    return {k: float(v) for k, v in zip(observed, x)}
