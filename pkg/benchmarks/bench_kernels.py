"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Also times one gl_2 monodromy evaluation with whichever backend is active
(run with ARTIFACT_NO_NUMBA=1 to see the numpy path end to end).
"""
import argparse
import timeit

import numpy as np

from artifact import _kernels as k
from artifact import stokes_monodromy as sm


def cases(rng):
    c = lambda *s: rng.normal(size=s) + 1j * rng.normal(size=s)  # noqa: E731
    a0 = np.array([0.0, 1.0, 1 + 1j])
    x = 0.3 * c(3, 3)
    lam = np.array([0.1 + 0.2j, -0.3, 0.05j])
    r = c(9, 9)
    p, dp = c(18, 18), c(18, 18, 18)
    z, dz = 0.7 + 0.4j, 1j
    return {
        "formal_h_coeffs": (lambda: k._formal_h_coeffs_jit(a0, x, 40), lambda: k.formal_h_coeffs_numpy(a0, x, 40)),
        "frobenius_coeffs": (lambda: k._frobenius_coeffs_jit(x, lam, 40), lambda: k.frobenius_coeffs_numpy(x, lam, 40)),
        "h_rhs": (lambda: k._h_rhs_jit(z, dz, a0, x, a0, lam, x), lambda: k.h_rhs_numpy(z, dz, a0, x, a0, lam, x)),
        "f_rhs": (lambda: k._f_rhs_jit(z, dz, a0, x, x), lambda: k.f_rhs_numpy(z, dz, a0, x, x)),
        "cybe_terms": (lambda: k._cybe_terms_jit(r, 3), lambda: k.cybe_terms_numpy(r, 3)),
        "jacobiator": (lambda: k._jacobiator_jit(p, dp), lambda: k.jacobiator_numpy(p, dp)),
    }


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"backend: {k.backend()}")
    if k.HAS_NUMBA:
        print(f"{'kernel':<18}{'numba us':>12}{'numpy us':>12}{'speedup':>10}")
        for name, (jit, ref) in cases(rng).items():
            jit()  # compile
            tj, tn = best(jit, args.repeat, args.number), best(ref, args.repeat, args.number)
            print(f"{name:<18}{tj * 1e6:>12.2f}{tn * 1e6:>12.2f}{tn / tj:>10.1f}")
    a0 = np.array([1.0, -1.0], dtype=complex)
    lay = sm.sector_layout(a0, np.pi / 2)
    conn = sm.IrregularConnection(a0, np.array([[0.1, 0.2], [0.3, -0.1j]]))
    sm.monodromy(conn, lay)
    t = best(lambda: sm.monodromy(conn, lay), 3, 1)
    print(f"gl2 monodromy: {t:.3f} s")


if __name__ == "__main__":
    main()
