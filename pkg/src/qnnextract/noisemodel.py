"""Mixed-state execution of a circuit on a drifting noisy device.

Noise sources: state-preparation bit flips before encoding, a depolarizing
channel after every gate (single-qubit rate on the gate's qubit, two-qubit
rate on both qubits of an entangler), per-qubit readout confusion and finite
shots. Rates follow a 24-hour schedule interpolated between two daily
calibration snapshots with optional per-round log-normal jitter.

T1/T2 values are carried in the schedule config for provenance only; their
effect is absorbed into the effective depolarizing rates through
``gate_error_scale``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from . import _pykernels as gates
from .errors import DimensionError
from .simcore import AMPLITUDE, ParamCircuit, encode_batch

ANCHOR_A_HOUR = 6.0
ANCHOR_B_HOUR = 18.0
DEFAULT_JITTER = 0.05
DEFAULT_SHOTS = 1024
JITTER_STREAM = 1


@dataclass(frozen=True)
class NoiseProfile:
    """Instantaneous error rates for an ``n``-qubit register."""

    p1q: np.ndarray  # per-qubit depolarizing probability per single-qubit gate
    p2q: float  # depolarizing probability per entangler
    readout_01: np.ndarray  # P(read 1 | prepared 0)
    readout_10: np.ndarray  # P(read 0 | prepared 1)
    spam_prep: np.ndarray  # P(|1> prepared instead of |0>)

    def __post_init__(self):
        for name in ("p1q", "readout_01", "readout_10", "spam_prep"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "p2q", float(self.p2q))
        n = self.num_qubits
        for name in ("p1q", "readout_01", "readout_10", "spam_prep"):
            if getattr(self, name).shape != (n,):
                raise DimensionError(f"{name} must have one entry per qubit")
        for name, vals in self._rates().items():
            if np.any(vals < 0) or np.any(vals > 1):
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def num_qubits(self) -> int:
        return self.p1q.shape[0]

    def _rates(self) -> dict:
        return {"p1q": self.p1q, "p2q": np.array([self.p2q]), "readout_01": self.readout_01,
                "readout_10": self.readout_10, "spam_prep": self.spam_prep}

    @classmethod
    def zero(cls, num_qubits: int) -> "NoiseProfile":
        z = np.zeros(num_qubits)
        return cls(z, 0.0, z, z, z)

    def confusion(self, k: int) -> np.ndarray:
        """Column-stochastic readout matrix for qubit ``k``: rows = read bit, cols = prepared bit."""
        e01, e10 = self.readout_01[k], self.readout_10[k]
        return np.array([[1 - e01, e10], [e01, 1 - e10]])


@dataclass(frozen=True)
class NoiseSchedule:
    anchor_a: NoiseProfile  # hour 6
    anchor_b: NoiseProfile  # hour 18
    jitter_sigma: float = DEFAULT_JITTER
    rng_seed: int = 0
    provenance: dict = field(default_factory=dict, compare=False)

    @property
    def num_qubits(self) -> int:
        return self.anchor_a.num_qubits

    @classmethod
    def zero(cls, num_qubits: int) -> "NoiseSchedule":
        z = NoiseProfile.zero(num_qubits)
        return cls(z, z, 0.0, 0)

    def with_jitter(self, sigma: float) -> "NoiseSchedule":
        return replace(self, jitter_sigma=float(sigma))


def drift_weight(hour: float) -> float:
    """0 at the 06:00 anchor, 1 at 18:00, cosine in between, 24 h periodic."""
    return (1.0 - np.cos(2 * np.pi * (hour - ANCHOR_A_HOUR) / 24.0)) / 2.0


def profile_at(schedule: NoiseSchedule, hour: float, stream: int = 0) -> NoiseProfile:
    """Rates at ``hour``; ``stream`` keys the jitter draw (one per query round)."""
    w = drift_weight(hour)
    a, b = schedule.anchor_a._rates(), schedule.anchor_b._rates()
    rates = {k: a[k] + (b[k] - a[k]) * w for k in a}
    if schedule.jitter_sigma > 0:
        rng = np.random.default_rng([int(schedule.rng_seed), JITTER_STREAM, int(stream)])
        for k in sorted(rates):
            rates[k] = rates[k] * np.exp(rng.normal(0.0, schedule.jitter_sigma, rates[k].shape))
    rates = {k: np.clip(v, 0.0, 1.0) for k, v in rates.items()}
    return NoiseProfile(rates["p1q"], float(rates["p2q"][0]), rates["readout_01"],
                        rates["readout_10"], rates["spam_prep"])


# --- schedule config -------------------------------------------------------

QUBIT_FIELDS = ("t1_us", "t2_us", "readout", "err_1q", "err_2q", "prob_meas0_prep1", "prob_meas1_prep0")


def default_schedule_config() -> dict:
    text = resources.files("qnnextract").joinpath("data/brisbane_2024_06_30.json").read_text()
    return json.loads(text)


def _anchor_profile(entries: list, qubit_map: list, scale: float) -> NoiseProfile:
    for e in entries:
        missing = [f for f in QUBIT_FIELDS if f not in e]
        if missing:
            raise ValueError(f"noise config qubit entry lacks {missing}")
    picked = [entries[j] for j in qubit_map]
    p1q = np.clip(scale * np.array([e["err_1q"] for e in picked]), 0, 1)
    p2q = float(np.clip(scale * np.mean([e["err_2q"] for e in picked]), 0, 1))
    return NoiseProfile(
        p1q=p1q,
        p2q=p2q,
        readout_01=np.array([e["readout"] for e in picked]),
        readout_10=np.array([e["prob_meas0_prep1"] for e in picked]),
        spam_prep=np.array([e["prob_meas1_prep0"] for e in picked]),
    )


def schedule_from_config(cfg: dict | str | Path | None = None, num_qubits: int = 4,
                         jitter_sigma: float | None = None, seed: int | None = None) -> NoiseSchedule:
    """Build a schedule from a two-anchor calibration JSON (path, dict or ``None`` for the bundled one).

    Device qubit ``k`` takes calibration entry ``qubit_map[k]``; by default the
    listed entries are cycled. ``err_1q``/``err_2q`` are multiplied by
    ``gate_error_scale`` to give effective per-gate depolarizing rates.
    """
    if cfg is None:
        cfg = default_schedule_config()
    elif not isinstance(cfg, dict):
        cfg = json.loads(Path(cfg).read_text())
    anchors = cfg["anchors"]
    by_hour = {float(a["hour"]): a for a in anchors}
    if set(by_hour) != {ANCHOR_A_HOUR, ANCHOR_B_HOUR}:
        raise ValueError("noise config needs anchors at hours 6 and 18")
    n_entries = len(by_hour[ANCHOR_A_HOUR]["qubits"])
    qubit_map = cfg.get("qubit_map") or [k % n_entries for k in range(num_qubits)]
    if len(qubit_map) != num_qubits:
        raise DimensionError("qubit_map length must equal the register size")
    scale = float(cfg.get("gate_error_scale", 1.0))
    return NoiseSchedule(
        anchor_a=_anchor_profile(by_hour[ANCHOR_A_HOUR]["qubits"], qubit_map, scale),
        anchor_b=_anchor_profile(by_hour[ANCHOR_B_HOUR]["qubits"], qubit_map, scale),
        jitter_sigma=float(cfg.get("jitter_sigma", DEFAULT_JITTER) if jitter_sigma is None else jitter_sigma),
        rng_seed=int(cfg.get("seed", 0) if seed is None else seed),
        provenance={"source": cfg.get("source", ""), "gate_error_scale": scale},
    )


# --- density-matrix evolution ------------------------------------------------

@lru_cache(maxsize=None)
def _depol_tables(n: int, qubits: tuple):
    idx = np.arange(1 << n)
    qmask = 0
    for q in qubits:
        qmask |= 1 << q
    same = ((idx[:, None] ^ idx[None, :]) & qmask) == 0
    flips = []
    for sub in range(1 << len(qubits)):
        m = 0
        for j, q in enumerate(qubits):
            if (sub >> j) & 1:
                m |= 1 << q
        flips.append(idx ^ m)
    return same, flips


def depolarize(rho: np.ndarray, n: int, qubits: tuple, p) -> np.ndarray:
    """rho -> (1 - p) rho + p * Tr_qubits(rho) (x) I / 2**k, batched over axis 0.

    ``p`` is a scalar or one value per batch entry.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1, 1, 1)
    if not np.any(p):
        return rho
    same, flips = _depol_tables(n, tuple(qubits))
    twirl = np.zeros_like(rho)
    for f in flips:
        twirl += rho[:, f][:, :, f]
    twirl *= same / len(flips)
    return (1 - p) * rho + p * twirl


def _conjugate(rho: np.ndarray, gate_fn) -> np.ndarray:
    """U rho U^dagger, with ``gate_fn`` applying U in place to rows of a (batch, N) array."""
    B, N, _ = rho.shape
    s = np.ascontiguousarray(rho.transpose(0, 2, 1)).reshape(B * N, N)
    gate_fn(s)  # s[(b, j), i] = (U rho)[b, i, j]
    s = np.ascontiguousarray(np.conj(s.reshape(B, N, N)).transpose(0, 2, 1)).reshape(B * N, N)
    gate_fn(s)
    return np.conj(s).reshape(B, N, N)


def prepare_density(X, circ: ParamCircuit, spam_prep: np.ndarray) -> np.ndarray:
    """Encoded input states, with independent prep flips applied before encoding.

    For amplitude encoding the preparation unitary is the Householder
    reflection that swaps |0...0> and the normalized input.
    """
    n = circ.num_qubits
    N = 1 << n
    psi = encode_batch(X, circ)
    idx = np.arange(N)
    prep = np.ones(N)
    for k in range(n):
        bit = (idx >> k) & 1
        prep *= np.where(bit == 1, spam_prep[k], 1 - spam_prep[k])
    if not np.any(spam_prep):
        return psi[:, :, None] * np.conj(psi[:, None, :])
    if circ.encoding != AMPLITUDE:
        raise NotImplementedError("prep flips are modelled for amplitude encoding only")
    x = psi.real
    v = -x.copy()
    v[:, 0] += 1.0
    vv = np.einsum("bi,bi->b", v, v)
    H = np.broadcast_to(np.eye(N), (x.shape[0], N, N)).copy()
    nz = vv > 1e-30
    H[nz] -= 2 * v[nz, :, None] * v[nz, None, :] / vv[nz, None, None]
    rho = np.einsum("bij,j,bkj->bik", H, prep, H)
    return rho.astype(np.complex128)


def evolve_density(rho: np.ndarray, circ: ParamCircuit, profile: NoiseProfile) -> np.ndarray:
    n = circ.num_qubits
    if profile.num_qubits != n:
        raise DimensionError("noise profile and circuit differ in qubit count")
    rot, crx = circ.rot, circ.crx
    for l in range(circ.num_layers):
        for row, fn in ((0, gates._rz), (1, gates._ry), (2, gates._rz)):
            for q in range(n):
                theta = rot[l, row, q]
                rho = _conjugate(rho, lambda s, q=q, t=theta, fn=fn: fn(s, n, q, t))
                rho = depolarize(rho, n, (q,), profile.p1q[q])
        if n > 1:
            for k in range(n):
                t = (k + 1) % n
                theta = crx[l, k]
                rho = _conjugate(rho, lambda s, k=k, t=t, th=theta: gates._crx(s, n, k, t, th))
                rho = depolarize(rho, n, (k, t), profile.p2q)
    return rho


def readout_distribution(rho: np.ndarray, n: int, profile: NoiseProfile) -> np.ndarray:
    """Joint distribution over read bitstrings after per-qubit confusion, shape (batch, 2**n)."""
    p = np.clip(np.real(np.einsum("bii->bi", rho)), 0.0, None)
    p /= p.sum(axis=1, keepdims=True)
    B = p.shape[0]
    t = p.reshape((B,) + (2,) * n)
    for k in range(n):
        ax = 1 + (n - 1 - k)
        t = np.moveaxis(np.tensordot(profile.confusion(k), t, axes=([1], [ax])), 0, ax)
    return t.reshape(B, -1)


def zero_marginals(dist: np.ndarray, n: int) -> np.ndarray:
    idx = np.arange(dist.shape[1])
    return np.stack([dist[:, ((idx >> k) & 1) == 0].sum(axis=1) for k in range(n)], axis=1)


def noisy_execute_batch(X, circ: ParamCircuit, profile: NoiseProfile, shots: int | None,
                        rngs=None) -> np.ndarray:
    """Per-qubit raw values P(read 0) for each input row.

    ``shots=None`` is analytic mode (exact probabilities). Otherwise ``rngs``
    supplies one generator per row so results do not depend on batching.
    """
    if shots is not None and shots < 1:
        raise ValueError("shots must be >= 1 (or None for analytic mode)")
    n = circ.num_qubits
    rho = prepare_density(X, circ, profile.spam_prep)
    rho = evolve_density(rho, circ, profile)
    dist = readout_distribution(rho, n, profile)
    if shots is None:
        return zero_marginals(dist, n)
    if rngs is None or len(rngs) != dist.shape[0]:
        raise ValueError("finite-shot execution needs one generator per input")
    counts = np.stack([rng.multinomial(shots, d / d.sum()) for rng, d in zip(rngs, dist)])
    return zero_marginals(counts.astype(np.float64), n) / shots


def noisy_execute(x, circ: ParamCircuit, profile: NoiseProfile, shots: int | None,
                  rng=None) -> np.ndarray:
    rngs = None if shots is None else [np.random.default_rng(rng)]
    return noisy_execute_batch(np.reshape(x, (1, -1)), circ, profile, shots, rngs)[0]
