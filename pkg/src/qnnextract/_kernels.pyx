# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled statevector kernels; same contract as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin

cnp.import_array()

ctypedef double complex cplx


cdef inline void _rz(cplx[:, ::1] st, int n, int q, double theta) noexcept nogil:
    cdef Py_ssize_t B = st.shape[0], N = st.shape[1], b, i
    cdef cplx p0 = cos(theta / 2) - 1j * sin(theta / 2)
    cdef cplx p1 = cos(theta / 2) + 1j * sin(theta / 2)
    cdef Py_ssize_t mask = 1 << q
    for b in range(B):
        for i in range(N):
            if i & mask:
                st[b, i] = st[b, i] * p1
            else:
                st[b, i] = st[b, i] * p0


cdef inline void _ry(cplx[:, ::1] st, int n, int q, double theta) noexcept nogil:
    cdef Py_ssize_t B = st.shape[0], N = st.shape[1], b, i, j
    cdef double c = cos(theta / 2), s = sin(theta / 2)
    cdef Py_ssize_t mask = 1 << q
    cdef cplx a0, a1
    for b in range(B):
        for i in range(N):
            if i & mask:
                continue
            j = i | mask
            a0 = st[b, i]
            a1 = st[b, j]
            st[b, i] = c * a0 - s * a1
            st[b, j] = s * a0 + c * a1


cdef inline void _crx(cplx[:, ::1] st, int n, int ctrl, int tgt, double theta) noexcept nogil:
    cdef Py_ssize_t B = st.shape[0], N = st.shape[1], b, i, j
    cdef double c = cos(theta / 2), s = sin(theta / 2)
    cdef Py_ssize_t cm = 1 << ctrl, tm = 1 << tgt
    cdef cplx a0, a1
    cdef cplx mis = -1j * s
    for b in range(B):
        for i in range(N):
            if (i & cm) == 0 or (i & tm):
                continue
            j = i | tm
            a0 = st[b, i]
            a1 = st[b, j]
            st[b, i] = c * a0 + mis * a1
            st[b, j] = mis * a0 + c * a1


cdef inline double _im(cplx x) noexcept nogil:
    return x.imag


def apply_layers(cnp.ndarray states, int n, double[:, :, ::1] rot, double[:, ::1] crx):
    cdef cplx[:, ::1] st = states
    cdef Py_ssize_t L = rot.shape[0], l
    cdef int q, k
    with nogil:
        for l in range(L):
            for q in range(n):
                _rz(st, n, q, rot[l, 0, q])
            for q in range(n):
                _ry(st, n, q, rot[l, 1, q])
            for q in range(n):
                _rz(st, n, q, rot[l, 2, q])
            if n > 1:
                for k in range(n):
                    _crx(st, n, k, (k + 1) % n, crx[l, k])
    return states


def apply_layers_inverse(cnp.ndarray states, int n, double[:, :, ::1] rot, double[:, ::1] crx):
    cdef cplx[:, ::1] st = states
    cdef Py_ssize_t L = rot.shape[0], l
    cdef int q, k
    with nogil:
        for l in range(L - 1, -1, -1):
            if n > 1:
                for k in range(n - 1, -1, -1):
                    _crx(st, n, k, (k + 1) % n, -crx[l, k])
            for q in range(n - 1, -1, -1):
                _rz(st, n, q, -rot[l, 2, q])
            for q in range(n - 1, -1, -1):
                _ry(st, n, q, -rot[l, 1, q])
            for q in range(n - 1, -1, -1):
                _rz(st, n, q, -rot[l, 0, q])
    return states


def adjoint_gradient(cnp.ndarray states, double[:, ::1] weights, int n,
                     double[:, :, ::1] rot, double[:, ::1] crx):
    cdef cplx[:, ::1] st = states
    cdef Py_ssize_t B = st.shape[0], N = st.shape[1], L = rot.shape[0]
    cdef Py_ssize_t b, i, j, l, mask, cm, tm
    cdef int q, k, t, row
    cdef double acc, sgn, d
    lam_arr = np.empty_like(states)
    cdef cplx[:, ::1] lam = lam_arr
    g_rot_arr = np.zeros((L, 3, n))
    g_crx_arr = np.zeros((L, n))
    cdef double[:, :, ::1] g_rot = g_rot_arr
    cdef double[:, ::1] g_crx = g_crx_arr
    with nogil:
        for b in range(B):
            for i in range(N):
                d = 0.0
                for k in range(n):
                    if (i >> k) & 1:
                        d = d - weights[b, k]
                    else:
                        d = d + weights[b, k]
                lam[b, i] = d * st[b, i]
        for l in range(L - 1, -1, -1):
            if n > 1:
                for k in range(n - 1, -1, -1):
                    t = (k + 1) % n
                    cm = 1 << k
                    tm = 1 << t
                    acc = 0.0
                    for b in range(B):
                        for i in range(N):
                            if (i & cm) == 0 or (i & tm):
                                continue
                            j = i | tm
                            acc = acc + _im(lam[b, i].conjugate() * st[b, j]) \
                                + _im(lam[b, j].conjugate() * st[b, i])
                    g_crx[l, k] = acc
                    _crx(st, n, k, t, -crx[l, k])
                    _crx(lam, n, k, t, -crx[l, k])
            for row in range(2, -1, -1):
                for q in range(n - 1, -1, -1):
                    mask = 1 << q
                    acc = 0.0
                    if row == 1:
                        for b in range(B):
                            for i in range(N):
                                if i & mask:
                                    continue
                                j = i | mask
                                # Y|psi>: i <- -i psi_j, j <- i psi_i
                                acc = acc + _im(lam[b, i].conjugate() * (-1j) * st[b, j]) \
                                    + _im(lam[b, j].conjugate() * 1j * st[b, i])
                        g_rot[l, row, q] = acc
                        _ry(st, n, q, -rot[l, row, q])
                        _ry(lam, n, q, -rot[l, row, q])
                    else:
                        for b in range(B):
                            for i in range(N):
                                sgn = -1.0 if i & mask else 1.0
                                acc = acc + sgn * _im(lam[b, i].conjugate() * st[b, i])
                        g_rot[l, row, q] = acc
                        _rz(st, n, q, -rot[l, row, q])
                        _rz(lam, n, q, -rot[l, row, q])
    return g_rot_arr, g_crx_arr


def z_expectations(cnp.ndarray states, int n):
    cdef cplx[:, ::1] st = states
    cdef Py_ssize_t B = st.shape[0], N = st.shape[1], b, i
    cdef int k
    cdef double p
    out_arr = np.zeros((B, n))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for b in range(B):
            for i in range(N):
                p = st[b, i].real * st[b, i].real + st[b, i].imag * st[b, i].imag
                for k in range(n):
                    if (i >> k) & 1:
                        out[b, k] -= p
                    else:
                        out[b, k] += p
    return out_arr
