"""Pure-NumPy statevector kernels for the layered RZ-RY-RZ + CRX-ring ansatz.

Mirrors ``_kernels.pyx`` call for call. States are ``(batch, 2**n)`` complex128
arrays with qubit 0 as the least-significant bit of the amplitude index.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _pair_index(n: int, q: int):
    idx = np.arange(1 << n)
    lo = idx[(idx >> q) & 1 == 0]
    return lo, lo | (1 << q)


@lru_cache(maxsize=None)
def _ctrl_pair_index(n: int, c: int, t: int):
    idx = np.arange(1 << n)
    lo = idx[((idx >> c) & 1 == 1) & ((idx >> t) & 1 == 0)]
    return lo, lo | (1 << t)


@lru_cache(maxsize=None)
def _zsign(n: int, q: int):
    idx = np.arange(1 << n)
    return (1 - 2 * ((idx >> q) & 1)).astype(np.float64)


def _rz(st, n, q, theta):
    ph = np.exp(-0.5j * theta * _zsign(n, q))
    st *= ph


def _ry(st, n, q, theta):
    lo, hi = _pair_index(n, q)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    a0 = st[:, lo]
    a1 = st[:, hi]
    st[:, lo] = c * a0 - s * a1
    st[:, hi] = s * a0 + c * a1


def _crx(st, n, ctrl, tgt, theta):
    lo, hi = _ctrl_pair_index(n, ctrl, tgt)
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    a0 = st[:, lo]
    a1 = st[:, hi]
    st[:, lo] = c * a0 - 1j * s * a1
    st[:, hi] = -1j * s * a0 + c * a1


def apply_layers(states, n, rot, crx):
    """Apply every layer in place; ``rot`` is (L, 3, n), ``crx`` is (L, n)."""
    L = rot.shape[0]
    for l in range(L):
        for q in range(n):
            _rz(states, n, q, rot[l, 0, q])
        for q in range(n):
            _ry(states, n, q, rot[l, 1, q])
        for q in range(n):
            _rz(states, n, q, rot[l, 2, q])
        if n > 1:
            for k in range(n):
                _crx(states, n, k, (k + 1) % n, crx[l, k])
    return states


def apply_layers_inverse(states, n, rot, crx):
    L = rot.shape[0]
    for l in range(L - 1, -1, -1):
        if n > 1:
            for k in range(n - 1, -1, -1):
                _crx(states, n, k, (k + 1) % n, -crx[l, k])
        for q in range(n - 1, -1, -1):
            _rz(states, n, q, -rot[l, 2, q])
        for q in range(n - 1, -1, -1):
            _ry(states, n, q, -rot[l, 1, q])
        for q in range(n - 1, -1, -1):
            _rz(states, n, q, -rot[l, 0, q])
    return states


def _imdot(lam, v):
    # sum over batch and amplitudes of Im(conj(lam) * v)
    return float(np.sum(lam.real * v.imag - lam.imag * v.real))


def adjoint_gradient(states, weights, n, rot, crx):
    """Gradient of sum_b sum_k weights[b, k] <Z_k>_b w.r.t. all angles.

    ``states`` must hold the *output* states of ``apply_layers``; it is
    consumed (rewound to the input states). Returns ``(g_rot, g_crx)``.
    """
    L = rot.shape[0]
    diag = np.zeros((states.shape[0], 1 << n))
    for k in range(n):
        diag += weights[:, k:k + 1] * _zsign(n, k)[None, :]
    lam = diag * states
    g_rot = np.zeros_like(rot, dtype=np.float64)
    g_crx = np.zeros_like(crx, dtype=np.float64)
    for l in range(L - 1, -1, -1):
        if n > 1:
            for k in range(n - 1, -1, -1):
                t = (k + 1) % n
                lo, hi = _ctrl_pair_index(n, k, t)
                g_crx[l, k] = (_imdot(lam[:, lo], states[:, hi])
                               + _imdot(lam[:, hi], states[:, lo]))
                _crx(states, n, k, t, -crx[l, k])
                _crx(lam, n, k, t, -crx[l, k])
        for gate, row in ((_rz, 2), (_ry, 1), (_rz, 0)):
            for q in range(n - 1, -1, -1):
                if gate is _rz:
                    g_rot[l, row, q] = _imdot(lam, states * _zsign(n, q))
                else:
                    lo, hi = _pair_index(n, q)
                    # Y|psi>: lo <- -i psi_hi, hi <- i psi_lo
                    g_rot[l, row, q] = (_imdot(lam[:, lo], -1j * states[:, hi])
                                        + _imdot(lam[:, hi], 1j * states[:, lo]))
                gate(states, n, q, -rot[l, row, q])
                gate(lam, n, q, -rot[l, row, q])
    return g_rot, g_crx


def z_expectations(states, n):
    probs = states.real ** 2 + states.imag ** 2
    out = np.empty((states.shape[0], n))
    for k in range(n):
        out[:, k] = probs @ _zsign(n, k)
    return out
