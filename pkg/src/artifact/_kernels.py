"""Hot loops with an optional numba backend.

Set ``ARTIFACT_NO_NUMBA=1`` to force the pure numpy implementations (used by
the benchmark and by the backend-equivalence tests).
"""
import os

import numpy as np

_DISABLED = os.environ.get("ARTIFACT_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by ARTIFACT_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        # bare decorator or decorator factory, both become no-ops
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


def backend():
    return "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# formal series at the irregular pole


def formal_h_coeffs_numpy(a0, x, order):
    n = a0.shape[0]
    diff = a0[:, None] - a0[None, :]
    np.fill_diagonal(diff, 1.0)
    dlt = np.diag(x)
    out = np.zeros((order + 1, n, n), dtype=np.complex128)
    out[0] = np.eye(n)
    for k in range(1, order + 1):
        prev = out[k - 1]
        rhs = (k - 1) * prev - x @ prev + prev * dlt[None, :]
        cur = rhs / diff
        np.fill_diagonal(cur, 0.0)
        # diagonal fixed by solvability at the next order
        d = np.einsum("ij,ji->i", x, cur) - np.diag(x) * np.diag(cur)
        cur[np.arange(n), np.arange(n)] = d / k
        out[k] = cur
    return out


@njit(cache=True)
def _formal_h_coeffs_jit(a0, x, order):
    n = a0.shape[0]
    out = np.zeros((order + 1, n, n), dtype=np.complex128)
    for i in range(n):
        out[0, i, i] = 1.0
    for k in range(1, order + 1):
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                acc = (k - 1) * out[k - 1, i, j] + out[k - 1, i, j] * x[j, j]
                for m in range(n):
                    acc -= x[i, m] * out[k - 1, m, j]
                out[k, i, j] = acc / (a0[i] - a0[j])
        for i in range(n):
            acc = 0.0j
            for m in range(n):
                if m != i:
                    acc += x[i, m] * out[k, m, i]
            out[k, i, i] = acc / k
    return out


def formal_h_coeffs(a0, x, order):
    a0 = np.ascontiguousarray(a0, dtype=np.complex128)
    x = np.ascontiguousarray(x, dtype=np.complex128)
    if HAS_NUMBA:
        return _formal_h_coeffs_jit(a0, x, int(order))
    return formal_h_coeffs_numpy(a0, x, int(order))


# ---------------------------------------------------------------------------
# Frobenius series at the regular pole, in the eigenbasis of the residue


def frobenius_coeffs_numpy(a0_eig, lam, order):
    n = lam.shape[0]
    out = np.zeros((order + 1, n, n), dtype=np.complex128)
    out[0] = np.eye(n)
    gaps = lam[:, None] - lam[None, :]
    for k in range(1, order + 1):
        out[k] = -(a0_eig @ out[k - 1]) / (k + gaps)
    return out


@njit(cache=True)
def _frobenius_coeffs_jit(a0_eig, lam, order):
    n = lam.shape[0]
    out = np.zeros((order + 1, n, n), dtype=np.complex128)
    for i in range(n):
        out[0, i, i] = 1.0
    for k in range(1, order + 1):
        for i in range(n):
            for j in range(n):
                acc = 0.0j
                for m in range(n):
                    acc += a0_eig[i, m] * out[k - 1, m, j]
                out[k, i, j] = -acc / (k + lam[i] - lam[j])
    return out


def frobenius_coeffs(a0_eig, lam, order):
    a0_eig = np.ascontiguousarray(a0_eig, dtype=np.complex128)
    lam = np.ascontiguousarray(lam, dtype=np.complex128)
    if HAS_NUMBA:
        return _frobenius_coeffs_jit(a0_eig, lam, int(order))
    return frobenius_coeffs_numpy(a0_eig, lam, int(order))


# ---------------------------------------------------------------------------
# ODE right-hand sides along a parametrised path z(s)


def h_rhs_numpy(z, dz, a0, x, acols, dcols, h):
    # z^2 h' = (a0_i - acols_j) h_ij + z ((x h)_ij - h_ij dcols_j)
    lin = a0[:, None] * h - h * acols[None, :]
    return dz * (lin + z * (x @ h - h * dcols[None, :])) / (z * z)


@njit(cache=True)
def _h_rhs_jit(z, dz, a0, x, acols, dcols, h):
    n = h.shape[0]
    m = h.shape[1]
    out = np.empty((n, m), dtype=np.complex128)
    scale = dz / (z * z)
    for i in range(n):
        for j in range(m):
            acc = 0.0j
            for k in range(n):
                acc += x[i, k] * h[k, j]
            acc = z * (acc - h[i, j] * dcols[j]) + (a0[i] - acols[j]) * h[i, j]
            out[i, j] = scale * acc
    return out


def h_rhs(z, dz, a0, x, acols, dcols, h):
    """Right side of the regularised equation; full H uses acols = a0, dcols = diag(x)."""
    if HAS_NUMBA:
        return _h_rhs_jit(z, dz, a0, x, acols, dcols, h)
    return h_rhs_numpy(z, dz, a0, x, acols, dcols, h)


def f_rhs_numpy(z, dz, a0, x, f):
    # F' = (A0/z^2 + x/z) F
    return dz * (a0[:, None] * f / (z * z) + (x @ f) / z)


@njit(cache=True)
def _f_rhs_jit(z, dz, a0, x, f):
    n = f.shape[0]
    m = f.shape[1]
    out = np.empty((n, m), dtype=np.complex128)
    for i in range(n):
        for j in range(m):
            acc = 0.0j
            for k in range(n):
                acc += x[i, k] * f[k, j]
            out[i, j] = dz * (a0[i] * f[i, j] / (z * z) + acc / z)
    return out


def f_rhs(z, dz, a0, x, f):
    if HAS_NUMBA:
        return _f_rhs_jit(z, dz, a0, x, f)
    return f_rhs_numpy(z, dz, a0, x, f)


# ---------------------------------------------------------------------------
# three-tensor brackets of two-tensors, basis e_ij <-> i*n + j


def cybe_terms_numpy(r, n):
    d = n * n
    cols = r.T.reshape(d, n, n)  # cols[b] = sum_a r[a, b] E_a
    rows = r.reshape(d, n, n)  # rows[a] = sum_b r[a, b] E_b

    def comm(p, q):
        return (np.einsum("bij,djk->bdik", p, q) - np.einsum("dij,bjk->bdik", q, p)).reshape(
            p.shape[0], q.shape[0], d
        )

    t12_13 = comm(cols, cols).transpose(2, 0, 1)  # [e, b, d]
    t12_23 = comm(rows, cols).transpose(0, 2, 1)  # [a, e, d]
    t13_23 = comm(rows, rows)  # [a, c, e]
    return t12_13 + t12_23 + t13_23


@njit(cache=True)
def _commutator_table(p, q, n):
    # out[b, d, i*n+k] = (p[b] q[d] - q[d] p[b])[i, k]
    nb = p.shape[0]
    nd = q.shape[0]
    out = np.zeros((nb, nd, n * n), dtype=np.complex128)
    for b in range(nb):
        for dd in range(nd):
            for i in range(n):
                for k in range(n):
                    acc = 0.0j
                    for j in range(n):
                        acc += p[b, i, j] * q[dd, j, k] - q[dd, i, j] * p[b, j, k]
                    out[b, dd, i * n + k] = acc
    return out


@njit(cache=True)
def _cybe_terms_jit(r, n):
    d = n * n
    cols = np.ascontiguousarray(r.T).reshape(d, n, n)
    rows = np.ascontiguousarray(r).reshape(d, n, n)
    a = _commutator_table(cols, cols, n)
    b = _commutator_table(rows, cols, n)
    c = _commutator_table(rows, rows, n)
    out = np.empty((d, d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                out[i, j, k] = a[j, k, i] + b[i, k, j] + c[i, j, k]
    return out


def cybe_terms(r, n):
    r = np.ascontiguousarray(r, dtype=np.complex128)
    if HAS_NUMBA:
        return _cybe_terms_jit(r, int(n))
    return cybe_terms_numpy(r, int(n))


# ---------------------------------------------------------------------------
# Jacobiator of a bivector field from its values and first derivatives


def jacobiator_numpy(p, dp):
    # dp[l, j, k] = d/dy_l p[j, k];  J_ijk = sum_l p_il dp_ljk + cyclic
    t = np.einsum("il,ljk->ijk", p, dp)
    return t + t.transpose(1, 2, 0) + t.transpose(2, 0, 1)


@njit(cache=True)
def _jacobiator_jit(p, dp):
    m = p.shape[0]
    t = np.zeros((m, m, m), dtype=np.complex128)
    for i in range(m):
        for l in range(m):
            pil = p[i, l]
            if pil == 0:
                continue
            for j in range(m):
                for k in range(m):
                    t[i, j, k] += pil * dp[l, j, k]
    out = np.empty((m, m, m), dtype=np.complex128)
    for i in range(m):
        for j in range(m):
            for k in range(m):
                out[i, j, k] = t[i, j, k] + t[j, k, i] + t[k, i, j]
    return out


def jacobiator(p, dp):
    p = np.ascontiguousarray(p, dtype=np.complex128)
    dp = np.ascontiguousarray(dp, dtype=np.complex128)
    if HAS_NUMBA:
        return _jacobiator_jit(p, dp)
    return jacobiator_numpy(p, dp)
