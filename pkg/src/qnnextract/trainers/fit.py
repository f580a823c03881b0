"""Training loops for the victim, the baselines and the contrastive substitute."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import datapipe
from ..errors import TrainingError
from ..qnnaas import VictimModel, softmax
from ..simcore import AMPLITUDE, ANGLE_PAIR, ParamCircuit, backward_batch, forward_batch, save_circuit
from .adam import AdamState, adam_step
from .barlow import BarlowConfig, barlow_loss

# logits are the class qubits' <Z> readouts; a scale > 1 sharpens them
LOGIT_SCALE = 1.0
VICTIM_SIDE = 4
SUBSTITUTE_SIDE = 16


def init_circuit(num_qubits, num_layers, encoding, rng) -> ParamCircuit:
    return ParamCircuit.random(num_qubits, num_layers, encoding, rng)


def classifier_step(circ, X, targets, class_qubits, scale=LOGIT_SCALE):
    """Soft-target cross-entropy of ``scale * <Z>`` logits and its parameter gradient."""
    feats, states = forward_batch(X, circ)
    cols = list(class_qubits)
    probs = softmax(scale * feats[:, cols], axis=1)
    B = X.shape[0]
    loss = float(-np.sum(targets * np.log(np.clip(probs, 1e-300, None))) / B)
    cot = np.zeros_like(feats)
    cot[:, cols] = scale * (probs - targets) / B
    return loss, backward_batch(states, circ, cot), feats


def predict_logits(circ, X, class_qubits, scale=LOGIT_SCALE) -> np.ndarray:
    feats, _ = forward_batch(X, circ)
    return scale * feats[:, list(class_qubits)]


def one_hot(y, d) -> np.ndarray:
    out = np.zeros((len(y), d))
    out[np.arange(len(y)), np.asarray(y, dtype=int)] = 1.0
    return out


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, loss, train_acc, test_acc)

    def add(self, epoch, loss, train_acc=float("nan"), test_acc=float("nan")):
        self.rows.append((int(epoch), float(loss), float(train_acc), float(test_acc)))

    @property
    def losses(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,loss,train_acc,test_acc\n")
            for e, l, a, t in self.rows:
                fh.write(f"{e},{l!r},{a!r},{t!r}\n")


def fit_supervised(circ, X, targets, class_qubits, epochs, batch_size, lr, weight_decay, rng,
                   eval_fn=None, log=None, scale=LOGIT_SCALE):
    """Mini-batch Adam on soft-target cross-entropy; ``circ`` is updated in place."""
    X = np.asarray(X, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if X.shape[0] == 0:
        raise TrainingError("cannot train on an empty dataset")
    opt = AdamState(circ.n_params, lr=lr, weight_decay=weight_decay)
    log = log if log is not None else TrainLog()
    n = X.shape[0]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            loss, grad, _ = classifier_step(circ, X[sel], targets[sel], class_qubits, scale)
            circ.thetas = adam_step(opt, circ.thetas, grad)
            total += loss * len(sel)
        train_acc = float(np.mean(np.argmax(predict_logits(circ, X, class_qubits, scale), 1)
                                  == np.argmax(targets, 1)))
        log.add(epoch, total / n, train_acc, eval_fn(circ) if eval_fn else float("nan"))
    return circ, log


# --- victim -------------------------------------------------------------------

def victim_inputs(images) -> np.ndarray:
    return datapipe.flatten(datapipe.resize_batch(images, VICTIM_SIDE, VICTIM_SIDE))


def substitute_inputs(images) -> np.ndarray:
    return datapipe.resize_batch(images, SUBSTITUTE_SIDE, SUBSTITUTE_SIDE)


def train_victim(task: datapipe.BinaryTask, epochs=30, batch=32, lr=5e-3, wd=1e-4, seed=0,
                 num_layers=2, log=None) -> VictimModel:
    """Four-qubit amplitude-encoded victim trained with hard-label NLL."""
    rng = np.random.default_rng([seed, 11])
    X = victim_inputs(task.train_x)
    Xt = victim_inputs(task.test_x)
    circ = init_circuit(4, num_layers, AMPLITUDE, rng)
    cq = (0, 1)

    def test_acc(c):
        return float(np.mean(np.argmax(predict_logits(c, Xt, cq), 1) == task.test_y))

    fit_supervised(circ, X, one_hot(task.train_y, 2), cq, epochs, batch, lr, wd, rng, test_acc, log)
    return VictimModel(circ, 2, cq, trained=True)


# --- baselines ----------------------------------------------------------------

@dataclass
class SingleQNN:
    circuit: ParamCircuit
    class_qubits: tuple = (0, 1)
    logit_scale: float = LOGIT_SCALE

    def logits(self, X) -> np.ndarray:
        return predict_logits(self.circuit, X, self.class_qubits, self.logit_scale)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.logits(X), axis=1)


def train_base(X, hard_labels, seed=0, num_qubits=4, num_layers=2, epochs=100, batch=32,
               lr=5e-3, wd=1e-4, log=None, logit_scale=LOGIT_SCALE) -> SingleQNN:
    """Victim-architecture substitute trained on every queried sample."""
    rng = np.random.default_rng([seed, 21])
    circ = init_circuit(num_qubits, num_layers, AMPLITUDE, rng)
    fit_supervised(circ, X, one_hot(hard_labels, 2), (0, 1), epochs, batch, lr, wd, rng, log=log,
                   scale=logit_scale)
    return SingleQNN(circ, logit_scale=logit_scale)


@dataclass
class EnsembleQNN:
    members: list

    def member_probs(self, X) -> np.ndarray:
        return np.stack([softmax(m.logits(X), axis=1) for m in self.members])

    def predict(self, X) -> np.ndarray:
        probs = self.member_probs(X)  # (members, n, d)
        d = probs.shape[2]
        votes = np.zeros((probs.shape[1], d))
        for p in probs:
            votes[np.arange(p.shape[0]), np.argmax(p, axis=1)] += 1
        top = votes.max(axis=1, keepdims=True)
        # ties between top-voted classes go to the larger summed probability
        tie_break = np.where(votes == top, probs.sum(axis=0), -np.inf)
        return np.argmax(tie_break, axis=1)


def train_qleak(X, hard_labels, seed=0, committee=5, num_layers=2, epochs=100, batch=32,
                lr=5e-3, wd=1e-4, member_seeds=None) -> EnsembleQNN:
    """Bootstrap-bagged committee of small QNNs fused by majority vote."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(hard_labels)
    n = X.shape[0]
    if n < committee:
        raise TrainingError(f"need at least {committee} samples for a committee of {committee}")
    members = []
    for k in range(committee):
        ms = (seed, k) if member_seeds is None else member_seeds[k]
        bag = np.random.default_rng([*np.atleast_1d(ms), 31]).integers(0, n, size=n)
        rng = np.random.default_rng([*np.atleast_1d(ms), 32])
        circ = init_circuit(4, num_layers, AMPLITUDE, rng)
        fit_supervised(circ, X[bag], one_hot(y[bag], 2), (0, 1), epochs, batch, lr, wd, rng)
        members.append(SingleQNN(circ))
    return EnsembleQNN(members)


# --- contrastive encoder + transfer classifier -----------------------------------

def encoder_inputs(images16) -> np.ndarray:
    return datapipe.flatten(images16)


def pretrain_qenc(source_images, cfg: BarlowConfig = None, aug: datapipe.AugmentConfig = None,
                  seed=0, num_qubits=8, num_layers=4, log=None):
    """Contrastive pretraining of the encoder on unlabeled 16x16 images.

    Returns ``(encoder circuit, per-epoch mean loss)``.
    """
    cfg = cfg or BarlowConfig()
    aug = aug or datapipe.AugmentConfig(rng_seed=seed)
    X = np.asarray(source_images, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError("source images must be a (N, H, W) stack")
    rng = np.random.default_rng([seed, 41])
    qenc = init_circuit(num_qubits, num_layers, AMPLITUDE, rng)
    opt = AdamState(qenc.n_params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    history = []
    n = X.shape[0]
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            if len(sel) < 2:
                continue
            v1, v2 = datapipe.augment_batch(X[sel], aug, epoch * 100003 + start)
            z1, s1 = forward_batch(encoder_inputs(v1), qenc)
            z2, s2 = forward_batch(encoder_inputs(v2), qenc)
            loss, g1, g2, _ = barlow_loss(z1, z2, cfg.lam, cfg.std_eps)
            grad = backward_batch(s1, qenc, g1) + backward_batch(s2, qenc, g2)
            qenc.thetas = adam_step(opt, qenc.thetas, grad)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        if log is not None:
            log.add(epoch, history[-1])
    return qenc, np.array(history)


@dataclass
class SubstituteModel:
    """Frozen encoder, fixed feature bridge, trainable classifier.

    By default the encoder's <Z> readouts feed the classifier as angles
    directly. When reference statistics are set they are standardized and
    squashed by ``tanh`` instead.
    """

    qenc: ParamCircuit
    qclassifier: ParamCircuit
    class_qubits: tuple = (0, 1)
    frozen: bool = True
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    logit_scale: float = LOGIT_SCALE
    feature_gain: float = 1.0

    def features(self, images16) -> np.ndarray:
        z, _ = forward_batch(encoder_inputs(images16), self.qenc)
        if self.feature_mean is None:
            return np.clip(self.feature_gain * z, -1.0, 1.0)
        return 0.5 * np.tanh((z - self.feature_mean) / self.feature_std)

    def logits(self, images16) -> np.ndarray:
        return predict_logits(self.qclassifier, self.features(images16), self.class_qubits, self.logit_scale)

    def predict(self, images16) -> np.ndarray:
        return np.argmax(self.logits(images16), axis=1)

    def save(self, prefix) -> None:
        stats = {} if self.feature_mean is None else {
            "feature_mean": self.feature_mean.tolist(), "feature_std": self.feature_std.tolist()}
        save_circuit(self.qenc, f"{prefix}_qenc.json", frozen=self.frozen, **stats)
        save_circuit(self.qclassifier, f"{prefix}_qclassifier.json", class_qubits=list(self.class_qubits))


def encoder_stats(qenc: ParamCircuit, images16, floor=1e-6):
    """Per-feature mean and std of encoder readouts over a reference set."""
    z, _ = forward_batch(encoder_inputs(images16), qenc)
    return z.mean(axis=0), np.maximum(z.std(axis=0), floor)


def new_substitute(qenc: ParamCircuit, reference_images16=None, seed=0, num_layers=4) -> SubstituteModel:
    """Fresh classifier on top of ``qenc``; bridge statistics come from ``reference_images16``."""
    rng = np.random.default_rng([seed, 51])
    clf = init_circuit(qenc.num_qubits // 2, num_layers, ANGLE_PAIR, rng)
    mean = std = None
    if reference_images16 is not None:
        mean, std = encoder_stats(qenc, reference_images16)
    return SubstituteModel(qenc, clf, feature_mean=mean, feature_std=std)


def train_classifier(model: SubstituteModel, images16, soft_labels, hard_labels=None, epochs=300,
                     lr=5e-2, wd=1e-4, mixup_alpha=0.2, seed=0, log=None) -> SubstituteModel:
    """Full-batch transfer training of the classifier on top of the frozen encoder.

    With ``mixup_alpha > 0`` each epoch trains on within-class Mixup partners.
    """
    if not model.frozen:
        raise TrainingError("transfer training expects a frozen encoder")
    X = np.asarray(images16, dtype=np.float64)
    soft = np.asarray(soft_labels, dtype=np.float64)
    if X.shape[0] == 0:
        raise TrainingError("cleaned dataset is empty")
    hard = np.argmax(soft, axis=1) if hard_labels is None else np.asarray(hard_labels)
    rng = np.random.default_rng([seed, 61])
    clf = model.qclassifier
    opt = AdamState(clf.n_params, lr=lr, weight_decay=wd)
    base_feats = model.features(X)
    for epoch in range(1, epochs + 1):
        if mixup_alpha > 0 and X.shape[0] > 1:
            Xm, targets = datapipe.mixup_within_class(X, soft, hard, mixup_alpha, rng)
            feats = model.features(Xm)
        else:
            feats, targets = base_feats, soft
        loss, grad, _ = classifier_step(clf, feats, targets, model.class_qubits, model.logit_scale)
        clf.thetas = adam_step(opt, clf.thetas, grad)
        if log is not None:
            acc = float(np.mean(np.argmax(predict_logits(clf, base_feats, model.class_qubits, model.logit_scale), 1)
                                == hard))
            log.add(epoch, loss, acc)
    return model


def accuracy(pred, y) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(y)))
