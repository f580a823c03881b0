"""Noiseless statevector simulation of the layered VQC ansatz.

Each layer applies RZ, RY, RZ on every qubit (one independent angle per gate),
then a ring of CRX entanglers, control ``k`` -> target ``(k + 1) % n``. A
single-qubit register has no ring. Qubit 0 is the least-significant bit of
the amplitude index everywhere in the package.

Parameter vector layout: the first ``3 * n * L`` entries reshape to
``(L, 3, n)`` rotation angles (rows RZ, RY, RZ), the remaining ``n * L``
entries reshape to ``(L, n)`` CRX angles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DegenerateInputError, DimensionError, RangeError

AMPLITUDE = "amplitude"
ANGLE_PAIR = "angle-pair"
ENCODINGS = (AMPLITUDE, ANGLE_PAIR)
MAX_QUBITS = 12


@dataclass(frozen=True)
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


@dataclass
class ParamCircuit:
    num_qubits: int
    num_layers: int
    encoding: str = AMPLITUDE
    thetas: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 1 <= self.num_qubits <= MAX_QUBITS:
            raise DimensionError(f"num_qubits must be in [1, {MAX_QUBITS}], got {self.num_qubits}")
        if self.num_layers < 1:
            raise DimensionError("num_layers must be positive")
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        if self.thetas is None:
            self.thetas = np.zeros(self.n_params)
        self.thetas = np.ascontiguousarray(self.thetas, dtype=np.float64).reshape(-1)
        if self.thetas.size != self.n_params:
            raise DimensionError(f"expected {self.n_params} angles, got {self.thetas.size}")
        if not np.all(np.isfinite(self.thetas)):
            raise RangeError("circuit angles must be finite")

    @property
    def n_rot(self) -> int:
        return 3 * self.num_qubits * self.num_layers

    @property
    def n_crx(self) -> int:
        return self.num_qubits * self.num_layers

    @property
    def n_params(self) -> int:
        return self.n_rot + self.n_crx

    @property
    def rot(self) -> np.ndarray:
        return self.thetas[: self.n_rot].reshape(self.num_layers, 3, self.num_qubits)

    @property
    def crx(self) -> np.ndarray:
        return self.thetas[self.n_rot:].reshape(self.num_layers, self.num_qubits)

    @property
    def input_dim(self) -> int:
        return 2 ** self.num_qubits if self.encoding == AMPLITUDE else 2 * self.num_qubits

    @classmethod
    def random(cls, num_qubits, num_layers, encoding=AMPLITUDE, rng=None, scale=np.pi):
        rng = np.random.default_rng(rng)
        n_params = 4 * num_qubits * num_layers
        return cls(num_qubits, num_layers, encoding, rng.uniform(-scale, scale, n_params))

    def copy(self) -> "ParamCircuit":
        return ParamCircuit(self.num_qubits, self.num_layers, self.encoding, self.thetas.copy())

    def inverse_apply(self, states: np.ndarray) -> np.ndarray:
        """Undo ``apply_vqc`` on a batch of states (in place)."""
        return kernels.apply_layers_inverse(states, self.num_qubits, self.rot, self.crx)

    def to_dict(self) -> dict:
        return {
            "num_qubits": self.num_qubits,
            "num_layers": self.num_layers,
            "encoding": self.encoding,
            "thetas": [float(t) for t in self.thetas],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParamCircuit":
        return cls(int(d["num_qubits"]), int(d["num_layers"]), d["encoding"],
                   np.array(d["thetas"], dtype=np.float64))


def save_circuit(circ: ParamCircuit, path, **extra) -> None:
    """Write the JSON checkpoint. ``json`` emits shortest round-trip floats."""
    payload = circ.to_dict()
    payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=1))


def load_circuit(path) -> tuple[ParamCircuit, dict]:
    d = json.loads(Path(path).read_text())
    extra = {k: v for k, v in d.items() if k not in ("num_qubits", "num_layers", "encoding", "thetas")}
    return ParamCircuit.from_dict(d), extra


def amplitude_encode_batch(X, q: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    N = 2 ** q
    if X.shape[1] > N:
        raise DimensionError(f"input length {X.shape[1]} exceeds 2**{q}")
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise DegenerateInputError("amplitude encoding needs a nonzero, finite input vector")
    out = np.zeros((X.shape[0], N), dtype=np.complex128)
    out[:, : X.shape[1]] = X / norms[:, None]
    return out


def angle_pair_encode_batch(F, q: int) -> np.ndarray:
    F = np.atleast_2d(np.asarray(F, dtype=np.float64))
    if F.shape[1] != 2 * q:
        raise DimensionError(f"angle-pair encoding needs {2 * q} features, got {F.shape[1]}")
    if np.any(np.abs(F) > 1.0) or not np.all(np.isfinite(F)):
        raise RangeError("angle-pair features must lie in [-1, 1]")
    alpha = np.pi * F[:, 0::2]
    phi = np.pi * F[:, 1::2]
    # RZ(phi) RY(alpha) |0>
    v0 = np.exp(-0.5j * phi) * np.cos(alpha / 2)
    v1 = np.exp(0.5j * phi) * np.sin(alpha / 2)
    B = F.shape[0]
    state = np.stack([v0[:, 0], v1[:, 0]], axis=1)
    for k in range(1, q):
        vk = np.stack([v0[:, k], v1[:, k]], axis=1)
        state = (vk[:, :, None] * state[:, None, :]).reshape(B, -1)
    return np.ascontiguousarray(state)


def amplitude_encode(x, q: int) -> StateVector:
    return StateVector(q, amplitude_encode_batch(np.reshape(x, (1, -1)), q)[0])


def angle_pair_encode(f, q: int) -> StateVector:
    return StateVector(q, angle_pair_encode_batch(np.reshape(f, (1, -1)), q)[0])


def encode_batch(X, circ: ParamCircuit) -> np.ndarray:
    if circ.encoding == AMPLITUDE:
        return amplitude_encode_batch(X, circ.num_qubits)
    return angle_pair_encode_batch(X, circ.num_qubits)


def apply_vqc(state: StateVector, circ: ParamCircuit) -> StateVector:
    if state.num_qubits != circ.num_qubits:
        raise DimensionError(f"state has {state.num_qubits} qubits, circuit {circ.num_qubits}")
    st = np.array(state.amplitudes, dtype=np.complex128, copy=True).reshape(1, -1)
    kernels.apply_layers(st, circ.num_qubits, circ.rot, circ.crx)
    return StateVector(circ.num_qubits, st[0])


def z_readout(state: StateVector, k: int) -> float:
    if not 0 <= k < state.num_qubits:
        raise IndexError(f"qubit {k} out of range for {state.num_qubits} qubits")
    probs = np.abs(state.amplitudes) ** 2
    bits = (np.arange(probs.size) >> k) & 1
    return float(probs[bits == 0].sum() - probs[bits == 1].sum())


def forward_batch(X, circ: ParamCircuit) -> tuple[np.ndarray, np.ndarray]:
    """Encode, evolve and read out a batch. Returns ``(features, final_states)``."""
    states = encode_batch(X, circ)
    kernels.apply_layers(states, circ.num_qubits, circ.rot, circ.crx)
    return kernels.z_expectations(states, circ.num_qubits), states


def features_batch(X, circ: ParamCircuit) -> np.ndarray:
    return forward_batch(X, circ)[0]


def backward_batch(states: np.ndarray, circ: ParamCircuit, cotangents) -> np.ndarray:
    """d(sum_b cotangents[b] . features[b]) / d(thetas), summed over the batch.

    ``states`` are the final states from ``forward_batch`` and get overwritten.
    """
    cot = np.ascontiguousarray(np.atleast_2d(cotangents), dtype=np.float64)
    if cot.shape != (states.shape[0], circ.num_qubits):
        raise DimensionError(f"cotangent shape {cot.shape} does not match features")
    g_rot, g_crx = kernels.adjoint_gradient(states, cot, circ.num_qubits, circ.rot, circ.crx)
    return np.concatenate([np.ravel(g_rot), np.ravel(g_crx)])


def forward_features(x, circ: ParamCircuit) -> np.ndarray:
    return features_batch(np.reshape(x, (1, -1)), circ)[0]


def gradient(x, circ: ParamCircuit, cotangent) -> np.ndarray:
    cot = np.reshape(np.asarray(cotangent, dtype=np.float64), (1, -1))
    if cot.shape[1] != circ.num_qubits:
        raise DimensionError("cotangent length must equal the feature length")
    _, states = forward_batch(np.reshape(x, (1, -1)), circ)
    return backward_batch(states, circ, cot)


def param_counts(enc_layers: int, clf_layers: int, enc_qubits: int, clf_qubits: int) -> tuple[int, int]:
    """(single-qubit, two-qubit) gate parameter totals for an encoder + classifier pair."""
    slots = enc_qubits * enc_layers + clf_qubits * clf_layers
    return 3 * slots, slots


def ensemble_param_counts(members: int, layers: int, qubits: int) -> tuple[int, int]:
    slots = members * layers * qubits
    return 3 * slots, slots
