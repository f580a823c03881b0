import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnnextract import noisemodel as nm
from qnnextract import simcore as sc

from . import oracles


def _profile(n, p1=0.01, p2=0.03, r01=0.02, r10=0.05, spam=0.0):
    f = lambda v: np.full(n, v)  # noqa: E731
    return nm.NoiseProfile(f(p1), p2, f(r01), f(r10), f(spam))


def test_zero_noise_analytic_matches_statevector(rng):
    circ = sc.ParamCircuit.random(4, 2, sc.AMPLITUDE, rng)
    X = rng.random((6, 16))
    raw = nm.noisy_execute_batch(X, circ, nm.NoiseProfile.zero(4), None)
    assert np.max(np.abs(raw - (1 + sc.features_batch(X, circ)) / 2)) < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3])
def test_evolution_matches_kraus_oracle(n, rng):
    circ = sc.ParamCircuit.random(n, 2, sc.AMPLITUDE, rng)
    prof = nm.NoiseProfile(rng.uniform(0, 0.1, n), 0.07, np.zeros(n), np.zeros(n), np.zeros(n))
    x = rng.random(2 ** n) + 0.1
    psi = x / np.linalg.norm(x)
    rho0 = np.outer(psi, psi).astype(complex)
    got = nm.evolve_density(rho0[None].copy(), circ, prof)[0]
    ref = oracles.noisy_density(rho0, circ, prof.p1q, prof.p2q)
    assert np.max(np.abs(got - ref)) < 1e-10


@pytest.mark.parametrize("qubits", [(0,), (1,), (0, 2), (2, 1)])
def test_depolarize_matches_kraus(qubits, rng):
    n = 3
    A = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    rho = A @ A.conj().T
    rho /= np.trace(rho)
    got = nm.depolarize(rho[None], n, qubits, 0.3)[0]
    ref = oracles.apply_kraus(rho, oracles.depol_kraus(0.3, qubits, n))
    assert np.max(np.abs(got - ref)) < 1e-12


@pytest.mark.parametrize("p", [0.0, 0.1, 0.5, 1.0])
def test_single_qubit_channel_scales_z(p):
    psi = oracles.ry(0.7) @ np.array([1, 0], complex)
    rho = np.outer(psi, psi.conj())[None]
    z0 = np.real(np.trace(oracles.Z @ rho[0]))
    out = nm.depolarize(rho, 1, (0,), p)[0]
    assert np.isclose(np.real(np.trace(oracles.Z @ out)), (1 - p) * z0, atol=1e-14)


def test_readout_confusion_matches_kron():
    n = 2
    prof = nm.NoiseProfile(np.zeros(2), 0.0, np.array([0.02, 0.1]), np.array([0.05, 0.2]), np.zeros(2))
    p = np.array([0.1, 0.2, 0.3, 0.4])
    rho = np.diag(p).astype(complex)[None]
    # qubit 0 is the rightmost Kronecker factor
    M = np.kron(prof.confusion(1), prof.confusion(0))
    assert np.allclose(nm.readout_distribution(rho, n, prof)[0], M @ p, atol=1e-15)


def test_confusion_is_column_stochastic():
    prof = _profile(3)
    for k in range(3):
        c = prof.confusion(k)
        assert np.allclose(c.sum(axis=0), 1.0) and np.all(c >= 0)


def test_prep_flip_householder_maps_zero_to_input(rng):
    circ = sc.ParamCircuit(2, 1)
    x = rng.random((3, 4))
    rho = nm.prepare_density(x, circ, np.array([1.0, 1.0]) * 0.0)
    psi = x / np.linalg.norm(x, axis=1, keepdims=True)
    assert np.allclose(rho, psi[:, :, None] * psi[:, None, :])
    # all prep flips certain: the prepared basis state is |11>, mapped by the reflection
    rho_flip = nm.prepare_density(x, circ, np.array([1.0, 1.0]))
    assert np.allclose(np.einsum("bii->b", rho_flip).real, 1.0)
    v = -psi.copy()
    v[:, 0] += 1
    e3 = np.eye(4)[3]
    img = e3 - 2 * v * (v @ e3)[:, None] / np.einsum("bi,bi->b", v, v)[:, None]
    assert np.allclose(rho_flip, img[:, :, None] * img[:, None, :])


def test_spam_mixes_prepared_state(rng):
    circ = sc.ParamCircuit(2, 1)
    x = rng.random((1, 4))
    s = np.array([0.1, 0.3])
    rho = nm.prepare_density(x, circ, s)[0]
    w, _ = np.linalg.eigh(rho)
    assert np.allclose(sorted(w), sorted([0.9 * 0.7, 0.1 * 0.7, 0.9 * 0.3, 0.1 * 0.3]), atol=1e-12)


def test_shots_validation_and_determinism(rng):
    circ = sc.ParamCircuit.random(3, 1, sc.AMPLITUDE, rng)
    x = rng.random(8)
    with pytest.raises(ValueError):
        nm.noisy_execute(x, circ, _profile(3), 0, 1)
    a = nm.noisy_execute(x, circ, _profile(3), 1024, 7)
    b = nm.noisy_execute(x, circ, _profile(3), 1024, 7)
    assert a.tobytes() == b.tobytes()
    assert np.all((a >= 0) & (a <= 1)) and np.allclose(a * 1024, np.round(a * 1024))


def test_schedule_hits_table_anchors():
    sch = nm.schedule_from_config(jitter_sigma=0.0)
    a, b = nm.profile_at(sch, 6.0), nm.profile_at(sch, 18.0)
    assert a.readout_01[0] == 0.0123 and a.readout_01[1] == 0.0144
    assert b.readout_01[0] == 0.0142 and b.readout_01[1] == 0.0091
    assert a.readout_10[0] == 0.0124 and b.spam_prep[0] == 0.0116
    mid = nm.profile_at(sch, 12.0)
    assert np.allclose(mid.readout_01, (a.readout_01 + b.readout_01) / 2, atol=1e-15)
    assert np.allclose(mid.p1q, (a.p1q + b.p1q) / 2)


def test_drift_weight_periodic():
    assert nm.drift_weight(6.0) == 0.0
    assert nm.drift_weight(18.0) == 1.0
    assert np.isclose(nm.drift_weight(12.0), 0.5)
    assert np.isclose(nm.drift_weight(3.0), nm.drift_weight(27.0))


def test_jitter_is_seeded_and_stream_keyed():
    sch = nm.schedule_from_config(jitter_sigma=0.3, seed=5)
    p1, p2 = nm.profile_at(sch, 9.0, stream=1), nm.profile_at(sch, 9.0, stream=1)
    p3 = nm.profile_at(sch, 9.0, stream=2)
    assert p1.readout_01.tobytes() == p2.readout_01.tobytes()
    assert p1.readout_01.tobytes() != p3.readout_01.tobytes()


def test_rates_are_clamped():
    sch = nm.schedule_from_config({**nm.default_schedule_config(), "gate_error_scale": 1e4}, jitter_sigma=0.0)
    prof = nm.profile_at(sch, 6.0)
    assert prof.p2q == 1.0 and np.all(prof.p1q <= 1.0)


def test_config_requires_table_fields():
    cfg = nm.default_schedule_config()
    del cfg["anchors"][0]["qubits"][0]["err_2q"]
    with pytest.raises(ValueError):
        nm.schedule_from_config(cfg)


def test_zero_schedule_is_noiseless(rng):
    circ = sc.ParamCircuit.random(2, 1, sc.AMPLITUDE, rng)
    prof = nm.profile_at(nm.NoiseSchedule.zero(2), 13.0)
    x = rng.random(4)
    assert np.allclose(nm.noisy_execute(x, circ, prof, None), (1 + sc.forward_features(x, circ)) / 2)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), p=st.floats(0, 1))
def test_density_stays_physical(seed, p):
    r = np.random.default_rng(seed)
    circ = sc.ParamCircuit.random(2, 2, sc.AMPLITUDE, r)
    prof = nm.NoiseProfile(np.full(2, p), p, np.zeros(2), np.zeros(2), np.zeros(2))
    rho = nm.prepare_density(r.random((1, 4)) + 1e-3, circ, np.zeros(2))
    out = nm.evolve_density(rho, circ, prof)[0]
    assert np.isclose(np.trace(out).real, 1.0, atol=1e-12)
    assert np.allclose(out, out.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(out).min() > -1e-12
