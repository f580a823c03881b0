"""Redundancy-reduction (Barlow Twins) loss with hand-derived gradients."""

from dataclasses import dataclass

import numpy as np

DEFAULT_LAMBDA = 5e-3


@dataclass
class BarlowConfig:
    lam: float = DEFAULT_LAMBDA
    batch_size: int = 256
    lr: float = 5e-3
    weight_decay: float = 1e-4
    epochs: int = 100
    std_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


def standardize(z, std_eps=1e-8):
    """Column-wise zero mean / unit population std. Returns (zn, std, degenerate_mask)."""
    mu = z.mean(axis=0)
    sd = z.std(axis=0)
    degenerate = sd <= std_eps
    sd_safe = np.where(degenerate, std_eps, sd)
    return (z - mu) / sd_safe, sd_safe, degenerate


def _standardize_backward(g, zn, sd, degenerate):
    gm = g.mean(axis=0)
    out = (g - gm - zn * (g * zn).mean(axis=0)) / sd
    # clamped columns: std is a constant, only the centring remains
    out[:, degenerate] = ((g - gm) / sd)[:, degenerate]
    return out


def cross_correlation(z1, z2, std_eps=1e-8):
    n1, _, _ = standardize(z1, std_eps)
    n2, _, _ = standardize(z2, std_eps)
    return n1.T @ n2 / z1.shape[0]


def barlow_loss(z1, z2, lam=DEFAULT_LAMBDA, std_eps=1e-8):
    """Loss, gradients w.r.t. ``z1`` and ``z2`` (both N x D), and diagnostics."""
    z1 = np.asarray(z1, dtype=np.float64)
    z2 = np.asarray(z2, dtype=np.float64)
    if z1.shape != z2.shape or z1.ndim != 2:
        raise ValueError("embeddings must be matching N x D matrices")
    N, D = z1.shape
    if N < 2:
        raise ValueError("cross-correlation needs a batch of at least 2")
    n1, s1, d1 = standardize(z1, std_eps)
    n2, s2, d2 = standardize(z2, std_eps)
    c = n1.T @ n2 / N
    diag = np.diag(c)
    off = c - np.diag(diag)
    on_term = float(np.sum((1.0 - diag) ** 2))
    off_term = float(np.sum(off ** 2))
    loss = on_term + lam * off_term
    gc = 2.0 * lam * off
    gc[np.diag_indices(D)] = -2.0 * (1.0 - diag)
    g_n1 = n2 @ gc.T / N
    g_n2 = n1 @ gc / N
    g1 = _standardize_backward(g_n1, n1, s1, d1)
    g2 = _standardize_backward(g_n2, n2, s2, d2)
    diagnostics = {
        "invariance": on_term,
        "redundancy": off_term,
        "degenerate_columns": sorted(set(np.flatnonzero(d1).tolist()) | set(np.flatnonzero(d2).tolist())),
    }
    return loss, g1, g2, diagnostics
