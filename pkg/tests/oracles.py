"""Dense-matrix and Kraus reference implementations built from Kronecker products.

Deliberately naive: no shared code with the package kernels.
"""

import itertools

import numpy as np

I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


def rz(t):
    return np.diag([np.exp(-0.5j * t), np.exp(0.5j * t)])


def ry(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rx(t):
    c, s = np.cos(t / 2), np.sin(t / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def embed(ops: dict, n: int) -> np.ndarray:
    """Kronecker product with qubit 0 as the least-significant (rightmost) factor."""
    out = np.array([[1.0 + 0j]])
    for q in reversed(range(n)):
        out = np.kron(out, ops.get(q, I2))
    return out


def crx(ctrl, tgt, t, n):
    return embed({ctrl: P0}, n) + embed({ctrl: P1, tgt: rx(t)}, n)


def gate_list(circ):
    """Sequence of (kind, qubits, dense unitary) matching the layered ansatz."""
    n = circ.num_qubits
    out = []
    for l in range(circ.num_layers):
        for row, f in enumerate((rz, ry, rz)):
            for q in range(n):
                out.append(("1q", (q,), embed({q: f(circ.rot[l, row, q])}, n)))
        if n > 1:
            for k in range(n):
                out.append(("2q", (k, (k + 1) % n), crx(k, (k + 1) % n, circ.crx[l, k], n)))
    return out


def dense_unitary(circ):
    U = np.eye(2 ** circ.num_qubits, dtype=complex)
    for _, _, G in gate_list(circ):
        U = G @ U
    return U


def z_expect(psi, k, n):
    return float(np.real(np.conj(psi) @ embed({k: Z}, n) @ psi))


def depol_kraus(p, qubits, n):
    """Kraus operators of the k-qubit depolarizing channel (1-p) rho + p Tr_q(rho) (x) I/2^k."""
    k = len(qubits)
    paulis = [I2, X, Y, Z]
    ops = []
    for combo in itertools.product(range(4), repeat=k):
        w = (1 - p + p / 4 ** k) if all(c == 0 for c in combo) else p / 4 ** k
        ops.append(np.sqrt(w) * embed({q: paulis[c] for q, c in zip(qubits, combo)}, n))
    return ops


def apply_kraus(rho, ops):
    return sum(K @ rho @ K.conj().T for K in ops)


def noisy_density(rho, circ, p1q, p2q):
    n = circ.num_qubits
    for kind, qs, G in gate_list(circ):
        rho = G @ rho @ G.conj().T
        p = p1q[qs[0]] if kind == "1q" else p2q
        rho = apply_kraus(rho, depol_kraus(p, qs, n))
    return rho
