import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from qnnextract import datapipe as dp
from qnnextract import simcore as sc
from qnnextract.errors import TrainingError
from qnnextract.trainers import (AdamState, BarlowConfig, EnsembleQNN, SingleQNN, adam_step, barlow_loss,
                                 cross_correlation, new_substitute, pretrain_qenc, standardize, train_base,
                                 train_classifier, train_qleak, train_victim)
from qnnextract.trainers import fit


# --- Adam ----------------------------------------------------------------------

def test_adam_zero_gradient_is_noop(rng):
    th = rng.normal(size=6)
    st_ = AdamState(6, weight_decay=0.0)
    assert np.array_equal(adam_step(st_, th, np.zeros(6)), th) and st_.step == 1


def test_adam_first_step_closed_form(rng):
    g = rng.normal(size=5)
    th = rng.normal(size=5)
    new = adam_step(AdamState(5, lr=1e-2, weight_decay=0.0), th, g)
    # m_hat = g, v_hat = g^2 so the step is lr * g / (|g| + eps)
    assert np.allclose(new - th, -1e-2 * g / (np.abs(g) + 1e-8), atol=1e-15)


def test_adam_two_step_recurrence(rng):
    lr, wd, b1, b2, eps = 5e-3, 1e-4, 0.9, 0.999, 1e-8
    g = rng.normal(size=4)
    th0 = rng.normal(size=4)
    state = AdamState(4, lr=lr, weight_decay=wd)
    th = adam_step(state, adam_step(state, th0, g), g)
    t = th0 * (1 - lr * wd)
    m1, v1 = (1 - b1) * g, (1 - b2) * g * g
    t = t - lr * (m1 / (1 - b1)) / (np.sqrt(v1 / (1 - b2)) + eps)
    t = t * (1 - lr * wd)
    m2, v2 = b1 * m1 + (1 - b1) * g, b2 * v1 + (1 - b2) * g * g
    t = t - lr * (m2 / (1 - b1 ** 2)) / (np.sqrt(v2 / (1 - b2 ** 2)) + eps)
    assert np.max(np.abs(th - t)) < 1e-12


def test_adam_rejects_nonfinite():
    with pytest.raises(TrainingError, match="non-finite"):
        adam_step(AdamState(3), np.zeros(3), np.array([0.0, np.nan, 1.0]))
    with pytest.raises(ValueError):
        adam_step(AdamState(3), np.zeros(4), np.zeros(4))


# --- Barlow Twins ----------------------------------------------------------------

def test_barlow_identity_correlation_zero():
    # orthogonal zero-mean +-1 columns: standardized, decorrelated
    z = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    loss, g1, g2, diag = barlow_loss(z, z.copy())
    assert abs(loss) < 1e-12 and np.allclose(cross_correlation(z, z), np.eye(2))
    assert np.allclose(g1, 0) and np.allclose(g2, 0)


def test_barlow_self_pair(rng):
    z = rng.normal(size=(10, 4))
    lam = 0.3
    loss, _, _, diag = barlow_loss(z, z, lam)
    c = cross_correlation(z, z)
    assert diag["invariance"] < 1e-20
    assert np.isclose(loss, lam * np.sum((c - np.diag(np.diag(c))) ** 2), rtol=1e-12)


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def test_barlow_gradient_small_batch():
    z1 = np.array([[0.3, -0.2], [0.9, 0.4], [-0.5, 0.1]])
    z2 = np.array([[0.1, 0.7], [0.6, -0.3], [-0.2, 0.2]])
    lam = 0.5
    _, g1, g2, _ = barlow_loss(z1, z2, lam)
    assert np.max(np.abs(g1 - _fd_grad(lambda a: barlow_loss(a, z2, lam)[0], z1))) < 1e-5
    assert np.max(np.abs(g2 - _fd_grad(lambda b: barlow_loss(z1, b, lam)[0], z2))) < 1e-5


def test_barlow_degenerate_column_flagged(rng):
    z = rng.normal(size=(6, 3))
    z[:, 1] = 0.25
    loss, g1, _, diag = barlow_loss(z, rng.normal(size=(6, 3)))
    assert diag["degenerate_columns"] == [1] and np.isfinite(loss) and np.all(np.isfinite(g1))


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(3, 20), st.integers(1, 8)),
                  elements=st.floats(-1, 1)))
def test_standardize_columns(z):
    zn, sd, degenerate = standardize(z)
    live = ~degenerate & (z.std(axis=0) > 1e-6)
    assert np.all(np.abs(zn[:, live].mean(axis=0)) < 1e-9)
    assert np.all(np.abs(zn[:, live].std(axis=0) - 1) < 1e-6)


def test_barlow_config_bounds():
    with pytest.raises(ValueError):
        BarlowConfig(lam=1.5)


# --- gradient chain ----------------------------------------------------------------

@pytest.mark.parametrize("encoding,width", [(sc.AMPLITUDE, 16), (sc.ANGLE_PAIR, 8)])
def test_classifier_loss_gradient_chain(rng, encoding, width):
    circ = sc.ParamCircuit.random(4, 2, encoding, rng)
    X = rng.random((5, width))
    targets = fit.one_hot(rng.integers(0, 2, 5), 2) * 0.8 + 0.1
    _, grad, _ = fit.classifier_step(circ, X, targets, (0, 1))

    def loss(th):
        return fit.classifier_step(sc.ParamCircuit(4, 2, encoding, th), X, targets, (0, 1))[0]

    fd = _fd_grad(loss, circ.thetas.copy(), h=1e-5)
    assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-4


# --- transfer classifier ----------------------------------------------------------------

@pytest.fixture
def qenc(rng):
    return sc.ParamCircuit.random(8, 2, sc.AMPLITUDE, rng)


def test_frozen_encoder_bitwise(qenc, rng):
    before = qenc.thetas.tobytes()
    model = new_substitute(qenc, seed=1, num_layers=2)
    X = rng.random((6, 16, 16))
    train_classifier(model, X, fit.one_hot([0, 1, 0, 1, 0, 1], 2), epochs=5)
    assert model.qenc.thetas.tobytes() == before


def test_unfrozen_or_empty_rejected(qenc):
    model = new_substitute(qenc)
    with pytest.raises(TrainingError):
        train_classifier(model, np.zeros((0, 16, 16)), np.zeros((0, 2)))
    model.frozen = False
    with pytest.raises(TrainingError):
        train_classifier(model, np.ones((1, 16, 16)), [[1.0, 0.0]])


def _single_sample_ce(model, x, epochs=300):
    train_classifier(model, x, [[1.0, 0.0]], epochs=epochs, mixup_alpha=0.0)
    p = np.exp(model.logits(x)[0])
    return -np.log(p[0] / p.sum())


def test_single_sample_overfit(qenc, rng):
    x = rng.random((1, 16, 16))
    sharp = new_substitute(qenc, seed=2)
    sharp.logit_scale = 4.0
    assert _single_sample_ce(sharp, x) < 0.1
    # with raw <Z> logits the loss cannot go below log(1 + e^-2)
    plain = new_substitute(qenc, seed=2)
    ce = _single_sample_ce(plain, x)
    floor = np.log1p(np.exp(-2.0))
    assert floor - 1e-9 <= ce < floor + 0.02


class _Identity(fit.SubstituteModel):
    def features(self, feats):
        return np.asarray(feats, dtype=np.float64)


def test_separable_features_fit(rng, qenc):
    y = np.repeat([0, 1], 10)
    feats = rng.uniform(-0.3, 0.3, (20, 8))
    feats[:, 0] = np.where(y == 0, -0.8, 0.8) + rng.uniform(-0.1, 0.1, 20)
    clf = sc.ParamCircuit.random(4, 4, sc.ANGLE_PAIR, np.random.default_rng(7))
    model = _Identity(qenc, clf)
    train_classifier(model, feats, fit.one_hot(y, 2), epochs=300, mixup_alpha=0.0)
    assert fit.accuracy(model.predict(feats), y) == 1.0


def test_substitute_save(tmp_path, qenc):
    model = new_substitute(qenc)
    model.save(tmp_path / "sub")
    circ, extra = sc.load_circuit(tmp_path / "sub_qenc.json")
    assert extra["frozen"] is True and circ.thetas.tobytes() == qenc.thetas.tobytes()
    assert sc.load_circuit(tmp_path / "sub_qclassifier.json")[1]["class_qubits"] == [0, 1]


# --- victim and baselines ----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_task(mnist):
    X, y = mnist
    return dp.make_binary_task(X, y, 0, 1, 200, 100, 40, seed=0, name="m01")


def test_victim_deterministic_and_learning(small_task):
    log_a, log_b = fit.TrainLog(), fit.TrainLog()
    a = train_victim(small_task, epochs=10, seed=3, log=log_a)
    b = train_victim(small_task, epochs=10, seed=3, log=log_b)
    assert a.circuit.thetas.tobytes() == b.circuit.thetas.tobytes()
    assert log_a.losses[-1] < log_a.losses[0]
    assert log_a.rows == log_b.rows


def test_base_matches_victim_architecture(small_task):
    v = train_victim(small_task, epochs=2)
    X = fit.victim_inputs(small_task.pool_x)
    base = train_base(X, small_task.pool_y, epochs=2)
    assert base.circuit.n_params == v.circuit.n_params == 32


def test_base_on_clean_labels_tracks_victim(small_task):
    v = train_victim(small_task)
    Xp = fit.victim_inputs(small_task.pool_x)
    base = train_base(Xp, v.predict_noiseless(Xp))
    Xt = fit.victim_inputs(small_task.test_x)
    gap = fit.accuracy(v.predict_noiseless(Xt), small_task.test_y) - fit.accuracy(base.predict(Xt), small_task.test_y)
    assert gap < 0.05


def test_qleak_identical_members(rng):
    X = rng.random((12, 16))
    y = rng.integers(0, 2, 12)
    ens = train_qleak(X, y, epochs=3, member_seeds=[(4, 4)] * 5)
    assert np.array_equal(ens.predict(X), ens.members[0].predict(X))
    assert sum(m.circuit.n_params for m in ens.members) == 160


def test_qleak_needs_committee(rng):
    with pytest.raises(TrainingError):
        train_qleak(rng.random((3, 16)), [0, 1, 0])


class _Fixed:
    def __init__(self, logits):
        self._l = np.asarray(logits, dtype=float)

    def logits(self, X):
        return self._l


def test_majority_vote_and_ties():
    a, b = _Fixed([[1.0, 0.0]]), _Fixed([[0.0, 0.3]])
    assert EnsembleQNN([a, a, b]).predict(None).tolist() == [0]
    assert EnsembleQNN([b, a, b]).predict(None).tolist() == [1]
    # 1-1 tie: summed softmax favours the more confident member
    assert EnsembleQNN([a, b]).predict(None).tolist() == [0]


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (5, 4, 2), elements=st.floats(-1, 1)), st.permutations(range(5)))
def test_vote_permutation_invariant(logits, perm):
    members = [_Fixed(l) for l in logits]
    assert np.array_equal(EnsembleQNN(members).predict(None),
                          EnsembleQNN([members[i] for i in perm]).predict(None))


def test_single_qnn_predicts_argmax(rng):
    m = SingleQNN(sc.ParamCircuit.random(4, 2, sc.AMPLITUDE, rng))
    X = rng.random((6, 16))
    assert np.array_equal(m.predict(X), np.argmax(m.logits(X), axis=1))


# --- contrastive pretraining ----------------------------------------------------------------

def test_pretrain_deterministic_and_converging(mnist):
    X, y = mnist
    imgs = dp.resize_batch(X[np.isin(y, [2, 3])][:64], 16, 16)
    cfg = BarlowConfig(batch_size=32, epochs=30)
    aug = dp.AugmentConfig("jitter", True, 5)
    qa, ha = pretrain_qenc(imgs, cfg, aug, seed=5, num_layers=2)
    qb, hb = pretrain_qenc(imgs, cfg, aug, seed=5, num_layers=2)
    assert ha.tobytes() == hb.tobytes() and qa.thetas.tobytes() == qb.thetas.tobytes()
    assert np.all(np.isfinite(ha)) and ha[-5:].mean() < ha[:5].mean()


def test_train_log_csv(tmp_path):
    log = fit.TrainLog()
    log.add(1, 0.5, 0.75)
    log.to_csv(tmp_path / "l.csv")
    assert (tmp_path / "l.csv").read_text().splitlines()[0] == "epoch,loss,train_acc,test_acc"
