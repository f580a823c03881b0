"""Compare the compiled and NumPy statevector kernels.

    python benchmarks/bench_kernels.py --qubits 8 --layers 4 --batch 512
"""

import argparse
import time

import numpy as np

from qnnextract import kernels
from qnnextract.simcore import AMPLITUDE, ParamCircuit, amplitude_encode_batch


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(qubits, layers, batch, repeat, seed=0):
    rng = np.random.default_rng(seed)
    circ = ParamCircuit.random(qubits, layers, AMPLITUDE, rng)
    X = rng.random((batch, 2 ** qubits))
    psi0 = amplitude_encode_batch(X, qubits)
    weights = rng.normal(size=(batch, qubits))
    results = {}
    for name in kernels.available_backends():
        k = kernels.get_backend(name)

        def step():
            st = psi0.copy()
            k.apply_layers(st, qubits, circ.rot, circ.crx)
            k.z_expectations(st, qubits)
            k.adjoint_gradient(st, weights, qubits, circ.rot, circ.crx)

        step()  # warm caches
        results[name] = _time(step, repeat)
    return results


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--qubits", type=int, default=8)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--repeat", type=int, default=3)
    a = p.parse_args()
    res = run(a.qubits, a.layers, a.batch, a.repeat)
    print(f"forward + adjoint, {a.qubits} qubits, {a.layers} layers, batch {a.batch}")
    for name, t in res.items():
        print(f"  {name:7s} {t * 1e3:9.1f} ms")
    if "cython" in res:
        print(f"  speedup {res['python'] / res['cython']:.1f}x")


if __name__ == "__main__":
    main()
