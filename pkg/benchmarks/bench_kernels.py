"""Compiled vs pure-Python kernels: tridiagonal-QL eigensolver and path sampler.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from qtherm._backend import compiled_kernels, python_kernels
from qtherm.linalg import random_hermitian, random_unitary


def eig_case(d, seed=0):
    a = random_hermitian(d, np.random.default_rng(seed))
    return lambda k: k.tridiag_ql_eigh(a)


def sampler_case(n_samples, n=6, seed=0):
    u = random_unitary(3, np.random.default_rng(3))
    kraus = [u @ np.diag(e) for e in np.eye(3)]
    # Schrodinger maps S_a = K_a (.) K_a* in column-stacking form
    s_ops = np.stack([np.kron(k.conj(), k) for k in kraus])
    rho_vec = (np.eye(3) / 3).reshape(-1, order="F").astype(np.complex128)
    uniforms = np.random.default_rng(seed).random((n_samples, n))
    return lambda k: k.sample_paths(s_ops, rho_vec, 3, uniforms)


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    if compiled_kernels is None:
        print("compiled kernels are not built; only the Python timings are shown")
    cases = [(f"QL eigensolver d={d}", eig_case(d)) for d in (8, 32, 64)]
    cases += [(f"path sampler N={n}", sampler_case(n)) for n in (1000, 10000)]
    print(f"{'kernel':28s} {'python [s]':>12s} {'cython [s]':>12s} {'speedup':>9s}")
    for name, case in cases:
        t_py = best_of(lambda: case(python_kernels), args.repeat)
        if compiled_kernels is None:
            print(f"{name:28s} {t_py:12.4f} {'-':>12s} {'-':>9s}")
            continue
        t_cy = best_of(lambda: case(compiled_kernels), args.repeat)
        print(f"{name:28s} {t_py:12.4f} {t_cy:12.4f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
