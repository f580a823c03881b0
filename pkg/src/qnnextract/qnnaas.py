"""Simulated QNN-as-a-Service: a trained victim answering noisy queries.

The attacker's clock is simulated: every query carries an explicit hour in
[0, 24), which selects the device noise profile for that round.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import noisemodel as nm
from .errors import ServiceError, VarianceUndefinedError
from .simcore import ParamCircuit, features_batch, load_circuit, save_circuit

# generator stream tags, kept apart from the schedule's jitter stream
SHOT_STREAM = 2


@dataclass
class VictimModel:
    circuit: ParamCircuit
    num_classes: int = 2
    class_qubits: tuple = (0, 1)
    trained: bool = False

    def __post_init__(self):
        self.class_qubits = tuple(int(q) for q in self.class_qubits)
        if len(self.class_qubits) != self.num_classes:
            raise ValueError("need one class qubit per class")
        if self.num_classes > self.circuit.num_qubits:
            raise ValueError("more classes than qubits")

    def raw_noiseless(self, X) -> np.ndarray:
        """Exact per-class P(read 0) without noise, shape (n, d)."""
        z = features_batch(X, self.circuit)[:, list(self.class_qubits)]
        return (1 + z) / 2

    def predict_noiseless(self, X) -> np.ndarray:
        return np.argmax(self.raw_noiseless(X), axis=1)

    def save(self, path) -> None:
        save_circuit(self.circuit, path, class_qubits=list(self.class_qubits),
                     num_classes=self.num_classes, trained=self.trained)

    @classmethod
    def load(cls, path) -> "VictimModel":
        circ, extra = load_circuit(path)
        return cls(circ, int(extra.get("num_classes", 2)), tuple(extra.get("class_qubits", (0, 1))),
                   bool(extra.get("trained", True)))


@dataclass(frozen=True)
class LedgerEntry:
    round: int
    sample_index: int
    hour: float
    raw: tuple
    shots: int | None


@dataclass
class QueryLedger:
    """Append-only record of every answered query."""

    entries: list = field(default_factory=list)

    @property
    def total_labels(self) -> int:
        return len(self.entries)

    def record(self, round_, sample_index, hour, raw, shots) -> None:
        self.entries.append(LedgerEntry(int(round_), int(sample_index), float(hour),
                                        tuple(float(v) for v in raw), shots))

    def to_csv(self, path) -> None:
        d = len(self.entries[0].raw) if self.entries else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "sample_index", "hour", "shots"] + [f"score_{j}" for j in range(d)])
            for e in self.entries:
                w.writerow([e.round, e.sample_index, repr(e.hour), "" if e.shots is None else e.shots]
                           + [repr(v) for v in e.raw])

    @classmethod
    def from_csv(cls, path) -> "QueryLedger":
        led = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                raw = [float(row[k]) for k in row if k.startswith("score_")]
                led.record(int(row["round"]), int(row["sample_index"]), float(row["hour"]), raw,
                           int(row["shots"]) if row["shots"] else None)
        return led


@dataclass
class QueryTensor:
    """Raw responses ``probs[t, i, j]``: round t, sample i, class j."""

    probs: np.ndarray
    hours: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3:
            raise ValueError("query tensor must be m x n x d")
        if np.any(self.probs < 0) or np.any(self.probs > 1):
            raise ValueError("raw probabilities must lie in [0, 1]")

    @property
    def m(self) -> int:
        return self.probs.shape[0]

    @property
    def n(self) -> int:
        return self.probs.shape[1]

    @property
    def d(self) -> int:
        return self.probs.shape[2]

    def save(self, path) -> None:
        np.savez(path, probs=self.probs, hours=self.hours)

    @classmethod
    def load(cls, path) -> "QueryTensor":
        with np.load(path) as f:
            return cls(f["probs"], f["hours"])


def shot_rngs(schedule: nm.NoiseSchedule, round_: int, indices) -> list:
    return [np.random.default_rng([int(schedule.rng_seed), SHOT_STREAM, int(round_), int(i)])
            for i in indices]


def _serve_batch(victim, X, hour, schedule, shots, round_, indices):
    if not victim.trained:
        raise ServiceError("victim model has not been trained")
    profile = nm.profile_at(schedule, hour, stream=round_)
    rngs = None if shots is None else shot_rngs(schedule, round_, indices)
    raw = nm.noisy_execute_batch(X, victim.circuit, profile, shots, rngs)
    return raw[:, list(victim.class_qubits)]


def serve_query(victim: VictimModel, x, hour: float, schedule: nm.NoiseSchedule,
                shots: int | None, ledger: QueryLedger, round_: int = 0,
                sample_index: int | None = None) -> np.ndarray:
    """Answer one query with raw class scores and log it."""
    idx = ledger.total_labels if sample_index is None else sample_index
    raw = _serve_batch(victim, np.reshape(x, (1, -1)), hour, schedule, shots, round_, [idx])[0]
    ledger.record(round_, idx, hour, raw, shots)
    return raw


def round_hours(m: int, phase: float = 0.0) -> np.ndarray:
    return np.array([((t * 24.0 / m) + phase) % 24.0 for t in range(m)])


def multi_round_query(victim: VictimModel, samples, m: int, schedule: nm.NoiseSchedule,
                      shots: int | None, ledger: QueryLedger, phase: float = 0.0) -> QueryTensor:
    """Query every sample once per round, rounds spaced 24/m hours apart.

    Ledger rows are appended round by round in sample-index order.
    """
    if m < 2:
        raise VarianceUndefinedError("multi-round querying needs m >= 2")
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = X.shape[0]
    if n < 1:
        raise ValueError("need at least one sample")
    hours = round_hours(m, phase)
    probs = np.empty((m, n, victim.num_classes))
    for t, hour in enumerate(hours):
        round_no = t + 1
        probs[t] = _serve_batch(victim, X, hour, schedule, shots, round_no, range(n))
        for i in range(n):
            ledger.record(round_no, i, hour, probs[t, i], shots)
    return QueryTensor(probs, hours)


def softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def fluctuation_study(victim: VictimModel, test_x, test_y, schedule: nm.NoiseSchedule,
                      hours) -> np.ndarray:
    """Victim accuracy at each hour (analytic-mode noise, softmax + argmax on raw scores)."""
    X = np.atleast_2d(np.asarray(test_x, dtype=np.float64))
    y = np.asarray(test_y)
    if X.shape[0] == 0:
        raise ValueError("test set is empty")
    accs = []
    for k, hour in enumerate(hours):
        raw = _serve_batch(victim, X, hour, schedule, None, k + 1, range(X.shape[0]))
        accs.append(float(np.mean(np.argmax(softmax(raw), axis=1) == y)))
    return np.array(accs)


def export_ledger(ledger: QueryLedger, path) -> Path:
    path = Path(path)
    ledger.to_csv(path)
    return path
