"""Exact statevector simulation of parameterized quantum circuits.

Convention used throughout the package: qubit 0 is the least-significant
bit of the basis-state index, so basis state ``i`` assigns bit
``(i >> q) & 1`` to qubit ``q``.  Bitstrings are written with qubit 0 as
the first character ("10" means qubit0=1, qubit1=0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_QUBITS = 20

GATE_PARAM_COUNTS = {"RY": 1, "RZ": 1, "U3": 3, "CNOT": 0, "CZ": 0, "SWAP": 0}
TWO_QUBIT_GATES = ("CNOT", "CZ", "SWAP")


class SimulationError(ValueError):
    """Raised for malformed gates, states, or circuit bindings."""


@dataclass(frozen=True)
class GateOp:
    """One gate application: kind, target qubits, and concrete angles."""

    kind: str
    targets: tuple[int, ...]
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in GATE_PARAM_COUNTS:
            raise SimulationError(f"unknown gate kind {self.kind!r}")
        want = GATE_PARAM_COUNTS[self.kind]
        if len(self.params) != want:
            raise SimulationError(
                f"{self.kind} takes {want} params, got {len(self.params)}")
        n_targets = 2 if self.kind in TWO_QUBIT_GATES else 1
        if len(self.targets) != n_targets:
            raise SimulationError(
                f"{self.kind} acts on {n_targets} qubits, got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise SimulationError(f"duplicate targets {self.targets}")


@dataclass
class Circuit:
    """Ordered gate list plus the map from trainable slots to angle positions.

    ``param_slots[s] = (op_index, angle_index)`` means trainable parameter
    ``s`` is bound to that angle when the circuit runs.  Ops may also carry
    fixed angles that never appear in ``param_slots``.
    """

    n_qubits: int
    ops: list[GateOp] = field(default_factory=list)
    param_slots: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise SimulationError(
                f"n_qubits must be in [1, {MAX_QUBITS}], got {self.n_qubits}")

    @property
    def n_params(self) -> int:
        return len(self.param_slots)

    def add(self, kind: str, targets: tuple[int, ...],
            params: tuple[float, ...] = (), trainable: bool = False):
        """Append a gate; with trainable=True every angle becomes a slot."""
        op = GateOp(kind, targets, params)
        for q in targets:
            if not 0 <= q < self.n_qubits:
                raise SimulationError(
                    f"target {q} out of range for {self.n_qubits} qubits")
        idx = len(self.ops)
        self.ops.append(op)
        if trainable:
            for a in range(len(params)):
                self.param_slots.append((idx, a))

    def two_qubit_gate_count(self) -> int:
        return sum(1 for op in self.ops if op.kind in TWO_QUBIT_GATES)

    def one_qubit_gate_count(self) -> int:
        return sum(1 for op in self.ops if op.kind not in TWO_QUBIT_GATES)

    def extended(self, other: "Circuit") -> "Circuit":
        """This circuit followed by ``other``; slots of ``other`` come last."""
        if other.n_qubits != self.n_qubits:
            raise SimulationError("qubit count mismatch in circuit composition")
        shift = len(self.ops)
        out = Circuit(self.n_qubits, list(self.ops) + list(other.ops),
                      list(self.param_slots)
                      + [(i + shift, a) for i, a in other.param_slots])
        return out


class StateVector:
    """Normalized complex amplitudes over ``2**n_qubits`` basis states."""

    def __init__(self, n_qubits: int, amplitudes: np.ndarray):
        if not 1 <= n_qubits <= MAX_QUBITS:
            raise SimulationError(
                f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
        amplitudes = np.asarray(amplitudes, dtype=np.complex128)
        if amplitudes.shape != (2 ** n_qubits,):
            raise SimulationError(
                f"expected {2 ** n_qubits} amplitudes, got {amplitudes.shape}")
        norm = np.sum(np.abs(amplitudes) ** 2)
        if abs(norm - 1.0) > 1e-10:
            raise SimulationError(f"state not normalized: |psi|^2 = {norm}")
        self.n_qubits = n_qubits
        self.amplitudes = amplitudes

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def init_zero_state(n_qubits: int) -> StateVector:
    """|0...0> on ``n_qubits`` qubits."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise SimulationError(
            f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(2 ** n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def _ry(theta: np.ndarray) -> np.ndarray:
    """RY matrices, shape (k, 2, 2) for a length-k angle array."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    m = np.zeros((theta.size, 2, 2), dtype=np.complex128)
    m[:, 0, 0] = c
    m[:, 0, 1] = -s
    m[:, 1, 0] = s
    m[:, 1, 1] = c
    return m


def _rz(theta: np.ndarray) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    m = np.zeros((theta.size, 2, 2), dtype=np.complex128)
    m[:, 0, 0] = np.exp(-0.5j * theta)
    m[:, 1, 1] = np.exp(0.5j * theta)
    return m


def _u3(theta, phi, lam) -> np.ndarray:
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    phi = np.atleast_1d(np.asarray(phi, dtype=np.float64))
    lam = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    m = np.zeros((theta.size, 2, 2), dtype=np.complex128)
    m[:, 0, 0] = c
    m[:, 0, 1] = -np.exp(1j * lam) * s
    m[:, 1, 0] = np.exp(1j * phi) * s
    m[:, 1, 1] = np.exp(1j * (phi + lam)) * c
    return m


# Basis order for the 4x4 matrices is (targets[0], targets[1]) with
# targets[0] as the most significant bit of the pair index.
_CNOT = np.array([[1, 0, 0, 0],
                  [0, 1, 0, 0],
                  [0, 0, 0, 1],
                  [0, 0, 1, 0]], dtype=np.complex128)
_CZ = np.diag([1, 1, 1, -1]).astype(np.complex128)
_SWAP = np.array([[1, 0, 0, 0],
                  [0, 0, 1, 0],
                  [0, 1, 0, 0],
                  [0, 0, 0, 1]], dtype=np.complex128)
_TWO_QUBIT_MATRICES = {"CNOT": _CNOT, "CZ": _CZ, "SWAP": _SWAP}

_PAULIS = {
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def _apply_1q(batch: np.ndarray, n_qubits: int, qubit: int,
              mats: np.ndarray) -> np.ndarray:
    """Apply per-batch 2x2 matrices to one qubit of a (k, 2**n) batch.

    ``mats`` has shape (k, 2, 2) or (1, 2, 2) (broadcast over the batch).
    """
    k = batch.shape[0]
    inner = 1 << qubit
    outer = batch.shape[1] // (2 * inner)
    x = batch.reshape(k, outer, 2, inner)
    x0, x1 = x[:, :, 0, :], x[:, :, 1, :]
    m = mats[:, :, :, None, None]  # (k|1, 2, 2, 1, 1)
    out = np.empty_like(x)
    out[:, :, 0, :] = m[:, 0, 0] * x0 + m[:, 0, 1] * x1
    out[:, :, 1, :] = m[:, 1, 0] * x0 + m[:, 1, 1] * x1
    return out.reshape(k, -1)


def _apply_2q(batch: np.ndarray, n_qubits: int, targets: tuple[int, int],
              mat: np.ndarray) -> np.ndarray:
    """Apply a fixed 4x4 matrix to two qubits of a (k, 2**n) batch."""
    k = batch.shape[0]
    hi, lo = max(targets), min(targets)
    d_lo = 1 << lo
    d_mid = 1 << (hi - lo - 1)
    d_hi = batch.shape[1] // (4 * d_lo * d_mid)
    x = batch.reshape(k, d_hi, 2, d_mid, 2, d_lo)  # axes 2, 4 = bits hi, lo
    # pair index convention: (bit of targets[0]) << 1 | (bit of targets[1])
    if targets[0] == hi:
        sub = [x[:, :, (p >> 1) & 1, :, p & 1, :] for p in range(4)]
    else:
        sub = [x[:, :, p & 1, :, (p >> 1) & 1, :] for p in range(4)]
    out = np.empty_like(x)
    for a in range(4):
        acc = mat[a, 0] * sub[0]
        for b in range(1, 4):
            if mat[a, b] != 0:
                acc = acc + mat[a, b] * sub[b]
        if targets[0] == hi:
            out[:, :, (a >> 1) & 1, :, a & 1, :] = acc
        else:
            out[:, :, a & 1, :, (a >> 1) & 1, :] = acc
    return out.reshape(k, -1)


def _bind_angles(circuit: Circuit, params: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Map (op_idx, angle_idx) -> per-batch angle column for trainable slots."""
    bound = {}
    for s, (op_idx, angle_idx) in enumerate(circuit.param_slots):
        bound[(op_idx, angle_idx)] = params[:, s]
    return bound


def run_circuit_batch(circuit: Circuit, params: np.ndarray) -> np.ndarray:
    """Run the circuit on |0...0> for each row of ``params``.

    ``params`` has shape (k, n_params); returns amplitudes of shape
    (k, 2**n_qubits).  All rows share the gate sequence; only trainable
    angles differ, which keeps the whole batch inside vectorized numpy ops.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 2 or params.shape[1] != circuit.n_params:
        raise SimulationError(
            f"params shape {params.shape} does not match "
            f"{circuit.n_params} trainable slots")
    k = params.shape[0]
    n = circuit.n_qubits
    if not 1 <= n <= MAX_QUBITS:
        raise SimulationError(f"circuit qubit count {n} out of range")
    batch = np.zeros((k, 2 ** n), dtype=np.complex128)
    batch[:, 0] = 1.0
    bound = _bind_angles(circuit, params)
    for i, op in enumerate(circuit.ops):
        if op.kind in TWO_QUBIT_GATES:
            batch = _apply_2q(batch, n, op.targets, _TWO_QUBIT_MATRICES[op.kind])
            continue
        angles = []
        for a, fixed in enumerate(op.params):
            col = bound.get((i, a))
            angles.append(col if col is not None else np.full(1, fixed))
        if op.kind == "RY":
            mats = _ry(angles[0])
        elif op.kind == "RZ":
            mats = _rz(angles[0])
        else:  # U3: broadcast fixed/trainable angle columns to a common batch
            width = max(a.size for a in angles)
            angles = [np.broadcast_to(a, (width,)) for a in angles]
            mats = _u3(*angles)
        batch = _apply_1q(batch, n, op.targets[0], mats)
    return batch


def run_circuit(circuit: Circuit, params=()) -> StateVector:
    """Apply all ops in order to |0...0> with trainable slots bound."""
    params = np.asarray(params, dtype=np.float64).reshape(1, -1)
    if params.shape[1] != circuit.n_params:
        raise SimulationError(
            f"expected {circuit.n_params} params, got {params.shape[1]}")
    amps = run_circuit_batch(circuit, params)[0]
    return StateVector(circuit.n_qubits, amps)


def bind_params(circuit: Circuit, params) -> Circuit:
    """Copy of the circuit with trainable slots baked into literal angles."""
    params = np.asarray(params, dtype=np.float64).ravel()
    if params.size != circuit.n_params:
        raise SimulationError(
            f"expected {circuit.n_params} params, got {params.size}")
    angles = {pos: params[s] for s, pos in enumerate(circuit.param_slots)}
    ops = []
    for i, op in enumerate(circuit.ops):
        if any((i, a) in angles for a in range(len(op.params))):
            new = tuple(angles.get((i, a), v) for a, v in enumerate(op.params))
            ops.append(GateOp(op.kind, op.targets, new))
        else:
            ops.append(op)
    return Circuit(circuit.n_qubits, ops, [])


def apply_gate(state: StateVector, op: GateOp) -> StateVector:
    """Apply a single gate; returns a new state."""
    for q in op.targets:
        if not 0 <= q < state.n_qubits:
            raise SimulationError(
                f"target {q} out of range for {state.n_qubits} qubits")
    batch = state.amplitudes.reshape(1, -1)
    if op.kind in TWO_QUBIT_GATES:
        out = _apply_2q(batch, state.n_qubits, op.targets,
                        _TWO_QUBIT_MATRICES[op.kind])
    else:
        if op.kind == "RY":
            mats = _ry(op.params[0])
        elif op.kind == "RZ":
            mats = _rz(op.params[0])
        else:
            mats = _u3(*op.params)
        out = _apply_1q(batch, state.n_qubits, op.targets[0], mats)
    return StateVector(state.n_qubits, out[0])


def apply_pauli(state: StateVector, pauli: str, qubit: int) -> StateVector:
    """Apply a single Pauli X/Y/Z; used by the stochastic noise channels."""
    if pauli not in _PAULIS:
        raise SimulationError(f"unknown Pauli {pauli!r}")
    if not 0 <= qubit < state.n_qubits:
        raise SimulationError(f"qubit {qubit} out of range")
    out = _apply_1q(state.amplitudes.reshape(1, -1), state.n_qubits, qubit,
                    _PAULIS[pauli][None])
    return StateVector(state.n_qubits, out[0])


def pauli_z_expectations(state: StateVector) -> np.ndarray:
    """<Z_q> for every qubit q; each entry in [-1, 1]."""
    return pauli_z_expectations_batch(
        state.amplitudes.reshape(1, -1), state.n_qubits)[0]


def pauli_z_expectations_batch(batch: np.ndarray, n_qubits: int) -> np.ndarray:
    """<Z_q> per qubit for a (k, 2**n) amplitude batch; returns (k, n)."""
    probs = np.abs(batch) ** 2
    k = batch.shape[0]
    out = np.empty((k, n_qubits), dtype=np.float64)
    for q in range(n_qubits):
        inner = 1 << q
        outer = probs.shape[1] // (2 * inner)
        p = probs.reshape(k, outer, 2, inner)
        out[:, q] = (p[:, :, 0, :] - p[:, :, 1, :]).sum(axis=(1, 2))
    return out


def index_to_bitstring(index: int, n_qubits: int) -> str:
    """Basis index -> bitstring with qubit 0 first."""
    return "".join(str((index >> q) & 1) for q in range(n_qubits))


def bitstring_to_index(bits: str) -> int:
    return sum((1 << q) for q, b in enumerate(bits) if b == "1")


def sample_bitstrings(state: StateVector, shots: int, seed: int) -> list[str]:
    """i.i.d. samples from |a_i|^2, deterministic for a given seed."""
    if shots < 1:
        raise SimulationError(f"shots must be >= 1, got {shots}")
    rng = np.random.default_rng(seed)
    return sample_bitstrings_rng(state, shots, rng)


def sample_bitstrings_rng(state: StateVector, shots: int,
                          rng: np.random.Generator) -> list[str]:
    if shots < 1:
        raise SimulationError(f"shots must be >= 1, got {shots}")
    probs = state.probabilities
    probs = probs / probs.sum()
    idx = rng.choice(probs.size, size=shots, p=probs)
    bits = (idx[:, None] >> np.arange(state.n_qubits)) & 1
    return ["".join(row) for row in bits.astype("U1")]


def reduced_density_matrix(state: StateVector, keep) -> np.ndarray:
    """Partial trace over the complement of ``keep``.

    ``keep`` is a set of qubit indices; must be a nonempty proper subset.
    Row/column index bit j of the result corresponds to sorted(keep)[j]
    (least-significant first, same convention as the full register).
    """
    keep = sorted(set(keep))
    n = state.n_qubits
    if not keep or len(keep) >= n:
        raise SimulationError("keep must be a nonempty proper subset of qubits")
    if any(not 0 <= q < n for q in keep):
        raise SimulationError(f"keep {keep} out of range for {n} qubits")
    # reshape to n axes; axis j corresponds to qubit n-1-j (LSB convention)
    psi = state.amplitudes.reshape([2] * n)
    keep_axes = [n - 1 - q for q in keep]
    other_axes = [ax for ax in range(n) if ax not in keep_axes]
    # order kept axes most-significant-first so the flat index is little-endian
    perm = sorted(keep_axes) + other_axes
    psi = np.transpose(psi, perm)
    m = psi.reshape(2 ** len(keep), -1)
    rho = m @ m.conj().T
    return rho
