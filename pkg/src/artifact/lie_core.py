"""Linear algebra of gl_n with the trace form.

Conventions used throughout the package:

* the basis of g is e_ij, flattened to the index a = i*n + j;
* a two-tensor is its (n^2, n^2) coefficient array T with T = sum T[a, b] e_a (x) e_b;
* a three-tensor is an (n^2, n^2, n^2) coefficient array;
* a linear operator on g is an (n^2, n^2) matrix acting on row-major vec(X);
* g* is identified with g by <X, Y> = tr(XY), so a dual vector is stored as a matrix.
"""
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import _kernels
from .errors import NonDiagonalizable, PoleHit

COND_THRESHOLD = 1e8


@dataclass(frozen=True)
class LieContext:
    """gl_n together with a total order on the indices.

    ``order`` lists the indices from smallest to largest; the positive roots are
    alpha_ij with i before j.
    """

    n: int
    order: tuple = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.order is None:
            object.__setattr__(self, "order", tuple(range(self.n)))
        else:
            order = tuple(int(i) for i in self.order)
            if sorted(order) != list(range(self.n)):
                raise ValueError(f"order must be a permutation of 0..{self.n - 1}")
            object.__setattr__(self, "order", order)

    @property
    def dim(self):
        return self.n * self.n

    def index(self, i, j):
        return i * self.n + j

    def basis(self, i, j):
        e = np.zeros((self.n, self.n), dtype=complex)
        e[i, j] = 1.0
        return e

    def rank_of(self, i):
        return self.order.index(i)

    def precedes(self, i, j):
        return self.rank_of(i) < self.rank_of(j)

    def roots(self):
        return [(i, j) for i in range(self.n) for j in range(self.n) if i != j]

    def positive_roots(self):
        return [(i, j) for (i, j) in self.roots() if self.precedes(i, j)]

    def with_order(self, order):
        return LieContext(self.n, tuple(order))


def pairing(x, y):
    """Trace form <x, y> = tr(xy)."""
    return np.einsum("ij,ji->", x, y)


def bracket(x, y):
    return x @ y - y @ x


def vec(x):
    return np.asarray(x).reshape(-1)


def unvec(v, n):
    return np.asarray(v).reshape(n, n)


def delta_projection(x):
    """Diagonal part of x (projection onto the Cartan subalgebra)."""
    x = np.asarray(x)
    return np.diag(np.diag(x)).astype(x.dtype)


def strict_upper(x):
    return np.triu(x, 1)


def strict_lower(x):
    return np.tril(x, -1)


# ---------------------------------------------------------------------------
# operators on g


def ad_matrix(x):
    n = x.shape[0]
    eye = np.eye(n)
    return np.kron(x, eye) - np.kron(eye, x.T)


def Ad_matrix(g):
    """Matrix of Y -> g Y g^{-1}."""
    return np.kron(g, np.linalg.inv(g).T)


def left_mult_matrix(h):
    """Matrix of X -> h X."""
    return np.kron(h, np.eye(h.shape[0]))


def right_mult_matrix(h):
    """Matrix of X -> X h."""
    return np.kron(np.eye(h.shape[0]), h.T)


def _apply_scalar(f, values):
    with np.errstate(all="ignore"):
        out = np.asarray(f(values), dtype=complex)
    if not np.all(np.isfinite(out)):
        raise PoleHit("scalar function is singular at an eigenvalue difference of ad")
    return out


def scalar_function_of_ad(f, x, cond_threshold=COND_THRESHOLD):
    """Operator f(ad_x) on g, built from the eigendecomposition of x.

    ``f`` must accept a complex ndarray. The n^2 x n^2 spectral decomposition of
    ad_x is used only when the eigenvectors of x are badly conditioned.
    """
    x = np.asarray(x, dtype=complex)
    lam, v = np.linalg.eig(x)
    if np.linalg.cond(v) <= cond_threshold:
        vinv = np.linalg.inv(v)
        vals = _apply_scalar(f, lam[:, None] - lam[None, :])
        return np.kron(v, vinv.T) @ (vals.ravel()[:, None] * np.kron(vinv, v.T))
    mu, w = np.linalg.eig(ad_matrix(x))
    if np.linalg.cond(w) > cond_threshold:
        raise NonDiagonalizable(f"eigenvector condition number above {cond_threshold:g}")
    vals = _apply_scalar(f, mu)
    return w @ (vals[:, None] * np.linalg.inv(w))


def ad_inverse_restricted(x, tol=1e-12):
    """Inverse of ad_x on its image, extended by zero on the centralizer."""
    scale = max(1.0, float(np.max(np.abs(x))) if np.size(x) else 1.0)
    cut = tol * scale

    def inv(z):
        out = np.zeros_like(z, dtype=complex)
        mask = np.abs(z) > cut
        out[mask] = 1.0 / z[mask]
        return out

    return scalar_function_of_ad(inv, x)


# ---------------------------------------------------------------------------
# two-tensors


def transpose_permutation(n):
    """P with P[(i,j), (j,i)] = 1, i.e. the coefficient array of the Casimir."""
    d = n * n
    p = np.zeros((d, d), dtype=complex)
    for i in range(n):
        for j in range(n):
            p[i * n + j, j * n + i] = 1.0
    return p


def casimir(ctx):
    """t = sum_ij e_ij (x) e_ji."""
    return transpose_permutation(ctx.n)


def flip(t):
    return np.asarray(t).T


def wedge(a, b):
    """a ^ b = a (x) b - b (x) a for vectors given as flattened matrices."""
    a = vec(a)
    b = vec(b)
    return np.outer(a, b) - np.outer(b, a)


def tensor_apply(op1, op2, t):
    """(op1 (x) op2)(t) for operators given as n^2 x n^2 matrices."""
    return op1 @ t @ op2.T


def id_tensor_op(op, n):
    """(id (x) op)(t) with t the Casimir."""
    return transpose_permutation(n) @ op.T


def ad_diag_action(x, t):
    """(ad_x (x) 1 + 1 (x) ad_x)(t)."""
    a = ad_matrix(x)
    return a @ t + t @ a.T


def standard_r(ctx):
    """r = t/2 + 1/2 sum_{alpha > 0} E_alpha ^ E_{-alpha}."""
    n = ctx.n
    r = 0.5 * casimir(ctx)
    for i, j in ctx.positive_roots():
        a = i * n + j
        b = j * n + i
        r[a, b] += 0.5
        r[b, a] -= 0.5
    return r


def antisymmetric_part(r):
    return 0.5 * (r - flip(r))


def r0(ctx):
    return antisymmetric_part(standard_r(ctx))


def tensor_norm(t):
    """Max-abs entry norm used for all residuals."""
    t = np.asarray(t)
    return float(np.max(np.abs(t))) if t.size else 0.0


# ---------------------------------------------------------------------------
# three-tensors


def alt(t3):
    """sum over S_3 of sgn(sigma) sigma(T), with no 1/3! normalisation."""
    out = np.zeros_like(t3)
    for perm in permutations(range(3)):
        sign = _perm_sign(perm)
        out = out + sign * np.transpose(t3, perm)
    return out


def _perm_sign(perm):
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def cybe_brackets(r, n):
    """[r12, r13] + [r12, r23] + [r13, r23] as a three-tensor."""
    return _kernels.cybe_terms(np.asarray(r, dtype=complex), n)


def cybe_residual(r, n):
    return tensor_norm(cybe_brackets(r, n))


def three_tensor_to_matrix(t3, n):
    """Image of a three-tensor in End(C^n (x) C^n (x) C^n); injective on g^{(x)3}."""
    basis = np.zeros((n * n, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            basis[i * n + j, i, j] = 1.0
    out = np.zeros((n**3, n**3), dtype=complex)
    idx = np.argwhere(np.abs(t3) > 0)
    for a, b, c in idx:
        out += t3[a, b, c] * np.kron(np.kron(basis[a], basis[b]), basis[c])
    return out
