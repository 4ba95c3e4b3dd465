"""Poisson bivectors, symplectic forms and their finite-difference verifiers.

Chart conventions:

* a point of G x g* is the vector (vec(h), vec(x)) of matrix entries;
* a point of G x t' is (vec(h), diag(lambda));
* a bivector is the antisymmetric coefficient matrix in these coordinates, so
  a two-tensor T on g placed on the G factor at h reads L T L^T with
  L = left_mult_matrix(h) (left translation) or right_mult_matrix(h).

A dual vector x in g* is stored as the matrix with <x, Y> = tr(xY), so the
KKS bracket of the coordinate functions x_ab, x_cd is
delta_ad x_cb - delta_bc x_ad.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, logm

from . import _kernels
from . import lie_core as lc
from .errors import (
    ConstraintViolation,
    FDStepTooLarge,
    LogBranch,
    MembershipViolation,
    NotComposable,
    OutsideBigCell,
    UnsupportedOrder,
)
from .rmatrix_dynamics import central_difference, phi, r_am

T_PRIME_MARGIN = 1e-6
MEMBERSHIP_TOL = 1e-9
PIVOT_TOL = 1e-10


# ---------------------------------------------------------------------------
# points


@dataclass
class SigmaPoint:
    """(h, lambda) in G x t' with lambda stored as a diagonal matrix."""

    h: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        lam = np.asarray(self.lam, dtype=complex)
        self.lam = np.diag(lam) if lam.ndim == 1 else lam
        check_t_prime(self.lam)

    @property
    def n(self):
        return self.h.shape[0]

    def coords(self):
        return np.concatenate([self.h.reshape(-1), np.diag(self.lam)])

    @classmethod
    def from_coords(cls, v, n):
        v = np.asarray(v, dtype=complex)
        return cls(v[: n * n].reshape(n, n), np.diag(v[n * n :]))


class SigmaPrimePoint(SigmaPoint):
    """A point of the chart G x t' carrying the Poisson tensor pi_r."""


def check_t_prime(lam, margin=T_PRIME_MARGIN):
    """alpha(lambda) = lambda_i - lambda_j must stay away from the integers."""
    d = np.diag(lam) if np.ndim(lam) == 2 else np.asarray(lam)
    if np.ndim(lam) == 2 and np.max(np.abs(lam - np.diag(d)), initial=0.0) > 1e-12:
        raise ConstraintViolation("lambda is not diagonal")
    gaps = d[:, None] - d[None, :]
    off = ~np.eye(len(d), dtype=bool)
    dist = np.abs(gaps[off] - np.rint(gaps[off].real))
    if dist.size and dist.min() < margin:
        raise ConstraintViolation("lambda violates the t' condition: a root value is too close to an integer")
    return True


@dataclass
class GStarTriple:
    """(b_-, b_+, Lambda) with b_- lower and b_+ upper triangular for ``order``."""

    b_minus: np.ndarray
    b_plus: np.ndarray
    Lambda: np.ndarray
    order: tuple = None

    def product(self):
        """b_-^{-1} b_+."""
        return np.linalg.solve(self.b_minus, self.b_plus)


def _perm(order, n):
    return np.arange(n) if order is None else np.asarray(order)


def check_membership(triple, tol=MEMBERSHIP_TOL):
    """Triangularity, delta(b_-) delta(b_+) = 1 and delta(b_+) = exp(pi i Lambda)."""
    n = triple.b_plus.shape[0]
    p = _perm(triple.order, n)
    bp = triple.b_plus[np.ix_(p, p)]
    bm = triple.b_minus[np.ix_(p, p)]
    scale = max(1.0, float(np.max(np.abs(bp))), float(np.max(np.abs(bm))))
    if np.max(np.abs(np.tril(bp, -1)), initial=0.0) > tol * scale:
        raise MembershipViolation("b_+ is not upper triangular")
    if np.max(np.abs(np.triu(bm, 1)), initial=0.0) > tol * scale:
        raise MembershipViolation("b_- is not lower triangular")
    lam = np.asarray(triple.Lambda)
    if np.max(np.abs(lam - np.diag(np.diag(lam))), initial=0.0) > tol:
        raise MembershipViolation("Lambda is not diagonal")
    dp = np.diag(triple.b_plus)
    dm = np.diag(triple.b_minus)
    if np.max(np.abs(dp * dm - 1.0)) > tol:
        raise MembershipViolation("delta(b_-) delta(b_+) != 1")
    if np.max(np.abs(dp - np.exp(1j * np.pi * np.diag(lam)))) > tol:
        raise MembershipViolation("delta(b_+) != exp(pi i Lambda)")
    return True


# ---------------------------------------------------------------------------
# Gauss factorisation and the map I


def _ldu(m):
    """Doolittle LDU without pivoting; returns (L, d, U) or raises OutsideBigCell."""
    n = m.shape[0]
    a = np.array(m, dtype=complex)
    lo = np.eye(n, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(a))))
    for k in range(n):
        piv = a[k, k]
        if abs(piv) < PIVOT_TOL * scale:
            raise OutsideBigCell(f"leading minor {k + 1} vanishes")
        lo[k + 1 :, k] = a[k + 1 :, k] / piv
        a[k + 1 :, k:] -= np.outer(lo[k + 1 :, k], a[k, k:])
        a[k + 1 :, k] = 0.0
    d = np.diag(a).copy()
    up = a / d[:, None]
    return lo, d, up


def dual_factorize(m, order=None):
    """Balanced Gauss factorisation m = b_-^{-1} b_+.

    With m = L D U (in the given index order) the factors are
    b_- = D^{-1/2} L^{-1}, b_+ = D^{1/2} U, where D^{1/2} = exp(Log(D)/2), and
    Lambda = Log(D) / (2 pi i).
    """
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    p = _perm(order, n)
    inv = np.argsort(p)
    lo, d, up = _ldu(m[np.ix_(p, p)])
    logd = np.log(d)
    sq = np.exp(0.5 * logd)
    bm = np.linalg.solve(lo, np.eye(n)) / sq[:, None]
    bp = sq[:, None] * up
    lam = np.diag(logd / (2j * np.pi))
    return GStarTriple(bm[np.ix_(inv, inv)], bp[np.ix_(inv, inv)], lam[np.ix_(inv, inv)], None if order is None else tuple(order))


def dual_factorize_derivative(m, dm, order=None):
    """Directional derivative (db_-, db_+, dLambda) of dual_factorize at m along dm."""
    m = np.asarray(m, dtype=complex)
    dm = np.asarray(dm, dtype=complex)
    n = m.shape[0]
    p = _perm(order, n)
    inv = np.argsort(p)
    lo, d, up = _ldu(m[np.ix_(p, p)])
    k = np.linalg.solve(lo, dm[np.ix_(p, p)]) @ np.linalg.inv(up)
    dd = np.diag(k)
    dlo = lo @ (np.tril(k, -1) / d[None, :])
    dup = (np.triu(k, 1) / d[:, None]) @ up
    sq = np.exp(0.5 * np.log(d))
    dsq = 0.5 * sq * dd / d
    loinv = np.linalg.inv(lo)
    bm = loinv / sq[:, None]
    dbm = -(dsq / sq)[:, None] * bm - (loinv @ dlo @ loinv) / sq[:, None]
    dbp = dsq[:, None] * up + sq[:, None] * dup
    dlam = np.diag(dd / d / (2j * np.pi))
    back = np.ix_(inv, inv)
    return dbm[back], dbp[back], dlam[back]


def map_I(ctx, x):
    """I(x): the G* triple with L(I(x))^{-1} R(I(x)) = exp(x); L is read as b_-, R as b_+."""
    return dual_factorize(expm(np.asarray(x, dtype=complex)), ctx.order)


def map_I_inverse(triple, branch_margin=1e-6):
    m = triple.product()
    ev = np.linalg.eigvals(m)
    if np.any((np.abs(ev.imag) < branch_margin) & (ev.real < 0)):
        raise LogBranch("an eigenvalue lies on the negative real axis")
    return logm(m)


# ---------------------------------------------------------------------------
# tensors on g*, G x g* and G x t'


def kks_tensor(x):
    """KKS bivector -(ad_x (x) 1)(t) in matrix-entry coordinates."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    return -lc.ad_matrix(x) @ lc.transpose_permutation(n)


def half_coth(z):
    """f(z) = z coth(z/2) / 2, even with f(0) = 1."""
    z = np.asarray(z, dtype=complex)
    return 1.0 + z * phi(z)


def sts_tensor(ctx, x):
    """(ad_x (x) f(ad_x))(t) - (ad_x (x) ad_x)(r0) with f(z) = z coth(z/2) / 2."""
    x = np.asarray(x, dtype=complex)
    a = lc.ad_matrix(x)
    f = lc.scalar_function_of_ad(half_coth, x)
    t = lc.casimir(ctx)
    return lc.tensor_apply(a, f, t) - lc.tensor_apply(a, a, lc.r0(ctx))


def _block(top_left, top_right, bottom_left, bottom_right):
    return np.block([[top_left, top_right], [bottom_left, bottom_right]])


def pi_am_tensor(ctx, h, x, r_zero=None, dynamical=None):
    """pi_KKS(x) + l_h(theta) + l_h(r_AM(x)) - r_h(r0) on G x g*.

    theta = sum_a d/dxi^a ^ h e_a. ``dynamical`` replaces r_AM (used by the
    mutation controls); ``r_zero`` replaces r0.
    """
    h = np.asarray(h, dtype=complex)
    x = np.asarray(x, dtype=complex)
    n = ctx.n
    lm = lc.left_mult_matrix(h)
    rm = lc.right_mult_matrix(h)
    p = lc.transpose_permutation(n)
    r0 = lc.r0(ctx) if r_zero is None else r_zero
    dyn = r_am(ctx, x) if dynamical is None else dynamical(x)
    hh = lm @ dyn @ lm.T - rm @ r0 @ rm.T
    return _block(hh, -lm @ p, p @ lm.T, kks_tensor(x))


def _torus_columns(h):
    """Column i = vec(h E_ii), the left translate of the i-th Cartan generator."""
    n = h.shape[0]
    return np.array([(h[:, i : i + 1] * (np.arange(n) == i)[None, :]).reshape(-1) for i in range(n)]).T


def pi_sigma_tensor(ctx, h, lam):
    """d/dt^j ^ l_h(t_j) + l_h((id (x) ad_lambda^{-1})(t)) on G x t'.

    The torus term is oriented like theta in pi_am_tensor (coordinate
    direction first); with the opposite orientation neither this tensor nor
    pi_r satisfies the Jacobi identity.
    """
    h = np.asarray(h, dtype=complex)
    lam = _as_diag(lam)
    check_t_prime(lam)
    lm = lc.left_mult_matrix(h)
    inv = lc.ad_inverse_restricted(lam)
    hh = lm @ lc.id_tensor_op(inv, ctx.n) @ lm.T
    cols = _torus_columns(h)
    return _block(hh, -cols, cols.T, np.zeros((ctx.n, ctx.n), dtype=complex))


def pi_r_tensor(ctx, h, lam, r_zero=None):
    """pi_sigma + l_h(r_AM(lambda)) - r_h(r0) on G x t'."""
    h = np.asarray(h, dtype=complex)
    lam = _as_diag(lam)
    out = pi_sigma_tensor(ctx, h, lam)
    lm = lc.left_mult_matrix(h)
    rm = lc.right_mult_matrix(h)
    r0 = lc.r0(ctx) if r_zero is None else r_zero
    d = ctx.dim
    out[:d, :d] += lm @ r_am(ctx, lam) @ lm.T - rm @ r0 @ rm.T
    return out


def _as_diag(lam):
    lam = np.asarray(lam, dtype=complex)
    return np.diag(lam) if lam.ndim == 1 else lam


def is_antisymmetric(p, tol=0.0):
    return float(np.max(np.abs(p + p.T), initial=0.0)) <= tol


# ---------------------------------------------------------------------------
# symplectic forms


# Sign of the bracket term for which omega_sigma is closed on G x t' with
# left-trivialised tangents, equals the restriction of the pole-order-one
# orbit form, and is inverse to pi_sigma_tensor.
CLOSED_BRACKET_SIGN = -1.0


def omega_sigma(lam, v1, v2, bracket_sign=1.0):
    """<R1, X2> - <R2, X1> + s <lambda, [X1, X2]> for tangents v = (X, R), s = bracket_sign."""
    x1, r1 = v1
    x2, r2 = v2
    return lc.pairing(r1, x2) - lc.pairing(r2, x1) + bracket_sign * lc.pairing(lam, lc.bracket(x1, x2))


def sigma_tangent_from_coords(h, dv):
    """Chart tangent (vec(dh), d lambda) -> (X, R) with dh = h X."""
    h = np.asarray(h, dtype=complex)
    n = h.shape[0]
    dh = np.asarray(dv[: n * n]).reshape(n, n)
    return np.linalg.solve(h, dh), np.diag(np.asarray(dv[n * n :]))


def omega_sigma_matrix(point, bracket_sign=1.0):
    """Coefficient matrix of omega_sigma in the (vec(h), diag(lambda)) chart."""
    m = point.n * point.n + point.n
    tang = [sigma_tangent_from_coords(point.h, e) for e in np.eye(m)]
    return np.array([[omega_sigma(point.lam, a, b, bracket_sign) for b in tang] for a in tang])


def inverse_pair_defect(ctx, point, bracket_sign=CLOSED_BRACKET_SIGN):
    """min over s = +-1 of ||Omega Pi - s 1||, together with the minimising s."""
    prod = omega_sigma_matrix(point, bracket_sign) @ pi_sigma_tensor(ctx, point.h, point.lam)
    eye = np.eye(prod.shape[0])
    plus = lc.tensor_norm(prod - eye)
    minus = lc.tensor_norm(prod + eye)
    return (plus, 1) if plus <= minus else (minus, -1)


def residue_pairing(a, x):
    """<A, X> = sum_j (A_j, X_{j-1}); A = [A_1, ..., A_k], X = [X_0, ..., X_{k-1}]."""
    return sum(lc.pairing(a[j], x[j]) for j in range(len(a)))


def truncated_bracket(x, y):
    """[X, Y] in g[z]/z^k for coefficient lists of equal length k."""
    k = len(x)
    out = [np.zeros_like(x[0]) for _ in range(k)]
    for i in range(k):
        for j in range(k - i):
            out[i + j] = out[i + j] + lc.bracket(x[i], y[j])
    return out


def omega_extended_orbit(g0, a, v1, v2):
    """<R1, Ad_g0 X2> - <R2, Ad_g0 X1> + <A, [X1, X2]> on the extended orbit.

    ``a`` = [A_1, ..., A_k] (A_j the coefficient of dz/z^j) and v = (X, R)
    with X = [X_0, ..., X_{k-1}].
    """
    a = [np.asarray(c, dtype=complex) for c in a]
    k = len(a)
    if k not in (1, 2):
        raise UnsupportedOrder(f"pole order {k} is not supported")
    x1, r1 = v1
    x2, r2 = v2
    if len(x1) != k or len(x2) != k:
        raise UnsupportedOrder("tangent jets must have the same order as A")
    ginv = np.linalg.inv(g0)
    ad = lambda y: g0 @ y @ ginv  # noqa: E731
    return lc.pairing(r1, ad(x2[0])) - lc.pairing(r2, ad(x1[0])) + residue_pairing(a, truncated_bracket(x1, x2))


def extended_orbit_tangent(g0, a, v):
    """Actual tangent (g0^{-1} dg0, dA) of the parametrised vector v = (X, R)."""
    a = [np.asarray(c, dtype=complex) for c in a]
    x, r = v
    k = len(a)
    ginv = np.linalg.inv(g0)
    # [A, X] with A = sum A_j z^{-j} dz, truncated to the polar part
    da = [np.zeros_like(a[0]) for _ in range(k)]
    for j in range(1, k + 1):
        for i in range(k):
            if j - i >= 1:
                da[j - i - 1] = da[j - i - 1] + lc.bracket(a[j - 1], x[i])
    da[0] = da[0] + ginv @ r @ g0
    return x[0], da


def extended_orbit_parameters(g0, a, tangent):
    """Invert extended_orbit_tangent for k = 1, 2 on the constrained tangent space."""
    a = [np.asarray(c, dtype=complex) for c in a]
    k = len(a)
    xi, da = tangent
    ginv = np.linalg.inv(g0)
    if k == 1:
        r = g0 @ (da[0] - lc.bracket(a[0], xi)) @ ginv
        if np.max(np.abs(r - np.diag(np.diag(r)))) > 1e-9:
            raise ConstraintViolation("residue direction is not tangent to the orbit")
        return [xi], lc.delta_projection(r)
    if k == 2:
        # leading coefficient is frozen: dA_2 = [A_2, X_0]
        if np.max(np.abs(da[1] - lc.bracket(a[1], xi))) > 1e-9:
            raise ConstraintViolation("leading coefficient direction is not tangent to the orbit")
        rest = g0 @ (da[0] - lc.bracket(a[0], xi)) @ ginv
        a0 = np.diag(g0 @ a[1] @ ginv)
        gaps = a0[:, None] - a0[None, :]
        np.fill_diagonal(gaps, 1.0)
        y = rest / gaps
        np.fill_diagonal(y, 0.0)
        r = lc.delta_projection(rest)
        x1 = ginv @ y @ g0
        return [xi, x1], r
    raise UnsupportedOrder(f"pole order {k} is not supported")


# ---------------------------------------------------------------------------
# quasi-Hamiltonian spaces of monodromy data


@dataclass
class CTildePoint:
    """Monodromy data (C, d_1..d_{k-1}, e_1..e_{k-1}, lambda) of pole order k >= 2."""

    C: np.ndarray
    d: list
    e: list
    lam: np.ndarray
    order: tuple = None


def _triangular_kind(m, order, upper, tol):
    n = m.shape[0]
    p = _perm(order, n)
    q = m[np.ix_(p, p)]
    off = np.tril(q, -1) if upper else np.triu(q, 1)
    return float(np.max(np.abs(off), initial=0.0)) <= tol * max(1.0, float(np.max(np.abs(q))))


def check_ctilde(point, tol=1e-9):
    """Borel pattern of d_j, e_j and delta(d_j)^{-1} = exp(pi i lambda/(k-1)) = delta(e_j)."""
    k = len(point.d) + 1
    target = np.exp(1j * np.pi * np.diag(point.lam) / (k - 1))
    for j, (dj, ej) in enumerate(zip(point.d, point.e), start=1):
        d_upper = j % 2 == 0
        if not _triangular_kind(dj, point.order, d_upper, tol) or not _triangular_kind(ej, point.order, not d_upper, tol):
            raise ConstraintViolation(f"d_{j} or e_{j} is in the wrong Borel subgroup")
        if np.max(np.abs(1.0 / np.diag(dj) - target)) > tol or np.max(np.abs(np.diag(ej) - target)) > tol:
            raise ConstraintViolation(f"torus parts of d_{j}, e_{j} do not match lambda")
    return True


def qh_moment(point):
    """C^{-1} d_1^{-1} ... d_{k-1}^{-1} e_{k-1} ... e_1 C."""
    m = np.eye(point.C.shape[0], dtype=complex)
    for dj in point.d:
        m = m @ np.linalg.inv(dj)
    for ej in reversed(point.e):
        m = m @ ej
    return np.linalg.solve(point.C, m @ point.C)


def _chain(point, tangent):
    """Values and differentials of D_j = d_j...d_1 C and E_j = e_j...e_1 C."""
    c, dc = point.C, tangent.C
    ds, es = [c], [c]
    dds, des = [dc], [dc]
    for dj, ddj, ej, dej in zip(point.d, tangent.d, point.e, tangent.e):
        ds.append(dj @ ds[-1])
        dds.append(ddj @ ds[-2] + dj @ dds[-1])
        es.append(ej @ es[-1])
        des.append(dej @ es[-2] + ej @ des[-1])
    return ds, dds, es, des


def _left(m, dm):
    return np.linalg.solve(m, dm)


def _right(m, dm):
    return dm @ np.linalg.inv(m)


def _wedge_pair(a1, b1, a2, b2):
    """(a, b)(v1, v2) = <a(v1), b(v2)> - <a(v2), b(v1)>."""
    return lc.pairing(a1, b2) - lc.pairing(a2, b1)


def qh_form_Ctilde(point, v1, v2):
    """1/2 (Dbar, Ebar) + 1/2 sum_j (D_j, D_{j-1}) - (E_j, E_{j-1}).

    Tangents are CTildePoint instances holding the differentials of every
    component (dC, dd_j, de_j, dlambda). For k = 2 this is the two-form
    1/2 (D* thetabar, E* thetabar) + 1/2 (D* theta, C* theta) - 1/2 (E* theta, C* theta).
    """
    ds1, dd1, es1, de1 = _chain(point, v1)
    ds2, dd2, es2, de2 = _chain(point, v2)
    d_top, e_top = ds1[-1], es1[-1]
    val = 0.5 * _wedge_pair(_right(d_top, dd1[-1]), _right(e_top, de1[-1]), _right(d_top, dd2[-1]), _right(e_top, de2[-1]))
    for j in range(1, len(ds1)):
        val += 0.5 * _wedge_pair(
            _left(ds1[j], dd1[j]), _left(ds1[j - 1], dd1[j - 1]), _left(ds1[j], dd2[j]), _left(ds1[j - 1], dd2[j - 1])
        )
        val -= 0.5 * _wedge_pair(
            _left(es1[j], de1[j]), _left(es1[j - 1], de1[j - 1]), _left(es1[j], de2[j]), _left(es1[j - 1], de2[j - 1])
        )
    return val


def simple_pole_point(h, lam, order=None):
    """The order-one space: (h, (e^{pi i lambda}, e^{-pi i lambda}, lambda)) inside the k = 2 space.

    The Borels at the simple pole are opposite to those at the double pole, so
    the diagonal factors enter as d_1 = e^{pi i lambda}, e_1 = e^{-pi i lambda}.
    """
    lam = _as_diag(lam)
    e = np.diag(np.exp(1j * np.pi * np.diag(lam)))
    return CTildePoint(np.asarray(h, dtype=complex), [e], [np.linalg.inv(e)], -lam, order)


def simple_pole_tangent(h, lam, dh, dlam, order=None):
    lam = _as_diag(lam)
    dlam = _as_diag(dlam)
    e = np.diag(np.exp(1j * np.pi * np.diag(lam)))
    de = 1j * np.pi * dlam @ e
    einv = np.linalg.inv(e)
    return CTildePoint(np.asarray(dh, dtype=complex), [de], [-einv @ de @ einv], -dlam, order)


def fusion_form(form1, form2, mu1, mu2, p1, p2, v1, v2):
    """omega_1 + omega_2 - 1/2 (mu_1* theta, mu_2* thetabar) on a product.

    ``form_i(p, u, w)`` evaluates the factor forms; ``mu_i(p)`` returns
    (value, differential along u) via ``mu_i(p, u)``. v1 = (u1, w1), v2 = (u2, w2)
    hold the tangents on the two factors.
    """
    (u1, w1), (u2, w2) = v1, v2
    m1, dm1_a = mu1(p1, u1)
    _, dm1_b = mu1(p1, u2)
    m2, dm2_a = mu2(p2, w1)
    _, dm2_b = mu2(p2, w2)
    corr = _wedge_pair(_left(m1, dm1_a), _right(m2, dm2_a), _left(m1, dm1_b), _right(m2, dm2_b))
    return form1(p1, u1, u2) + form2(p2, w1, w2) - 0.5 * corr


def fused_moment(m1, m2):
    return m1 @ m2


def qh_moment_differential(point, tangent):
    """(mu, d mu) of the quasi-Hamiltonian moment map along a tangent."""
    m = qh_moment(point)
    # product rule for C^{-1} P C with P = prod d^{-1} prod e
    n = point.C.shape[0]
    p = np.eye(n, dtype=complex)
    dp = np.zeros((n, n), dtype=complex)
    for dj, ddj in zip(point.d, tangent.d):
        inv = np.linalg.inv(dj)
        dinv = -inv @ ddj @ inv
        dp = dp @ inv + p @ dinv
        p = p @ inv
    for ej, dej in zip(reversed(point.e), reversed(tangent.e)):
        dp = dp @ ej + p @ dej
        p = p @ ej
    cinv = np.linalg.inv(point.C)
    dcinv = -cinv @ tangent.C @ cinv
    dm = dcinv @ p @ point.C + cinv @ dp @ point.C + cinv @ p @ tangent.C
    return m, dm


# ---------------------------------------------------------------------------
# reduction maps


def reduction_orbit_iota(g1, x1, g2, margin=T_PRIME_MARGIN):
    """(g1, x1, g2, -x1) -> (g2 g1^{-1}, -Ad_g1 x1) in Sigma."""
    g1 = np.asarray(g1, dtype=complex)
    lam = g1 @ np.asarray(x1, dtype=complex) @ np.linalg.inv(g1)
    if np.max(np.abs(lam - np.diag(np.diag(lam)))) > 1e-9 * max(1.0, float(np.max(np.abs(lam)))):
        raise ConstraintViolation("Ad_g1 x1 is not diagonal")
    return SigmaPoint(np.asarray(g2, dtype=complex) @ np.linalg.inv(g1), -lc.delta_projection(lam))


def iota_pushforward(g1, x1, g2, tangent):
    """Pushforward of (xi1, dx1, xi2, dx2) (left-trivialised group parts) to Sigma as (X, R)."""
    xi1, dx1, xi2, _ = tangent
    g1inv = np.linalg.inv(g1)
    ad = lambda y: g1 @ y @ g1inv  # noqa: E731
    return ad(xi2 - xi1), -ad(dx1 + lc.bracket(xi1, x1))


def reduction_orbit_tangents(g1, g2, xs, rs):
    """Tangents (0, Ad_{g1^-1} R, Ad_{g2^-1} X, -Ad_{g1^-1} R) to the zero level set."""
    g1inv = np.linalg.inv(g1)
    g2inv = np.linalg.inv(g2)
    return [(np.zeros_like(x), g1inv @ r @ g1, g2inv @ x @ g2, -g1inv @ r @ g1) for x, r in zip(xs, rs)]


def reduction_orbit_forms(g1, x1, g2, a0, v1, v2, bracket_sign=CLOSED_BRACKET_SIGN):
    """(restricted form on the zero level, pulled-back Sigma form) for one tangent pair."""
    g1 = np.asarray(g1, dtype=complex)
    g2 = np.asarray(g2, dtype=complex)
    x1 = np.asarray(x1, dtype=complex)
    a2 = np.linalg.solve(g2, _as_diag(a0) @ g2)
    orbit1 = [x1]
    orbit2 = [-x1, a2]
    pars = []
    for v in (v1, v2):
        xi1, dx1, xi2, dx2 = v
        p1 = extended_orbit_parameters(g1, orbit1, (xi1, [dx1]))
        p2 = extended_orbit_parameters(g2, orbit2, (xi2, [dx2, lc.bracket(a2, xi2)]))
        pars.append((p1, p2))
    lhs = omega_extended_orbit(g1, orbit1, pars[0][0], pars[1][0]) + omega_extended_orbit(g2, orbit2, pars[0][1], pars[1][1])
    pt = reduction_orbit_iota(g1, x1, g2)
    rhs = omega_sigma(pt.lam, iota_pushforward(g1, x1, g2, v1), iota_pushforward(g1, x1, g2, v2), bracket_sign)
    return lhs, rhs


def reduction_orbit_closed_form(g1, x1, g2, xr1, xr2, bracket_sign=CLOSED_BRACKET_SIGN):
    """<R2, Ad_{g1 g2^-1} X1> - <R1, Ad_{g1 g2^-1} X2> + s <x1, Ad_{g2^-1}[X1, X2]>, s = -bracket_sign."""
    (xa, ra), (xb, rb) = xr1, xr2
    k = g1 @ np.linalg.inv(g2)
    kinv = np.linalg.inv(k)
    g2inv = np.linalg.inv(g2)
    return (
        lc.pairing(rb, k @ xa @ kinv)
        - lc.pairing(ra, k @ xb @ kinv)
        - bracket_sign * lc.pairing(x1, g2inv @ lc.bracket(xa, xb) @ g2)
    )


# ---------------------------------------------------------------------------
# finite-difference verifiers


def _fd_jacobian(f, p, h, richardson=True):
    p = np.asarray(p, dtype=complex)
    step = h * max(1.0, float(np.linalg.norm(p)))
    cols = [central_difference(f, p, e, step, richardson) for e in np.eye(p.size)]
    return np.array(cols).T


def jacobi_tensor(field, point, h=1e-4, richardson=True):
    """Cyclic sum J^{ijk} = sum_l pi^{il} d_l pi^{jk} + cyclic, with FD derivatives."""
    p = np.asarray(point, dtype=complex)
    step = h * max(1.0, float(np.linalg.norm(p)))
    dp = np.array([central_difference(field, p, e, step, richardson) for e in np.eye(p.size)])
    return _kernels.jacobiator(field(p), dp)


def jacobi_residual(field, point, h=1e-4, richardson=True):
    return lc.tensor_norm(jacobi_tensor(field, point, h, richardson))


def jacobi_step_study(field, point, h0=1e-2, levels=2):
    """Plain central-difference Jacobi residuals at h0, h0/2, ... and their ratios."""
    res = []
    h = h0
    for _ in range(levels + 1):
        res.append(jacobi_residual(field, point, h, richardson=False))
        h /= 2
    ratios = [res[i] / res[i + 1] if res[i + 1] > 0 else np.inf for i in range(levels)]
    return res, ratios


def check_jacobi_convergence(ratios, lo=3.0, hi=5.0):
    if not all(lo <= r <= hi for r in ratios):
        raise FDStepTooLarge(f"Jacobi step-halving ratios {ratios} outside [{lo}, {hi}]")
    return True


def poisson_map_residual(f, src, dst, point, h=1e-4, richardson=True, scale=1.0):
    """||J pi_src J^T - scale * pi_dst(f(point))||_inf with J the FD Jacobian of f."""
    p = np.asarray(point, dtype=complex)
    jac = _fd_jacobian(f, p, h, richardson)
    return lc.tensor_norm(jac @ src(p) @ jac.T - scale * dst(f(p)))


# chart wrappers: functions of the flat coordinate vector


def kks_field(n):
    return lambda v: kks_tensor(np.asarray(v).reshape(n, n))


def sts_field(ctx):
    return lambda v: sts_tensor(ctx, np.asarray(v).reshape(ctx.n, ctx.n))


def pi_am_field(ctx, **kw):
    d = ctx.dim
    n = ctx.n
    return lambda v: pi_am_tensor(ctx, np.asarray(v[:d]).reshape(n, n), np.asarray(v[d:]).reshape(n, n), **kw)


def pi_sigma_field(ctx):
    d = ctx.dim
    return lambda v: pi_sigma_tensor(ctx, np.asarray(v[:d]).reshape(ctx.n, ctx.n), v[d:])


def pi_r_field(ctx):
    d = ctx.dim
    return lambda v: pi_r_tensor(ctx, np.asarray(v[:d]).reshape(ctx.n, ctx.n), v[d:])


# ---------------------------------------------------------------------------
# reduction of the fused monodromy spaces


def _exp_diag(lam, factor):
    return np.diag(np.exp(factor * np.diag(lam)))


def monodromy_constraint_matrix(h, lam, c):
    """b_-^{-1} b_+ forced by a trivial fused moment: C exp(2 pi i Ad_{h^-1} lambda) C^{-1}."""
    hinv = np.linalg.inv(h)
    return c @ hinv @ _exp_diag(lam, 2j * np.pi) @ h @ np.linalg.inv(c)


def _constraint_differential(h, lam, c, dh, dlam, dc):
    hinv = np.linalg.inv(h)
    cinv = np.linalg.inv(c)
    e = _exp_diag(lam, 2j * np.pi)
    de = 2j * np.pi * _as_diag(dlam) @ e
    dhinv = -hinv @ dh @ hinv
    dcinv = -cinv @ dc @ cinv
    return (
        dc @ hinv @ e @ h @ cinv
        + c @ dhinv @ e @ h @ cinv
        + c @ hinv @ de @ h @ cinv
        + c @ hinv @ e @ dh @ cinv
        + c @ hinv @ e @ h @ dcinv
    )


@dataclass
class FusedMonodromyPoint:
    """A point of the trivial-moment level of (order-one space) fused with (order-two space)."""

    h: np.ndarray
    lam: np.ndarray
    C: np.ndarray
    triple: GStarTriple

    def factors(self):
        order = self.triple.order
        p1 = simple_pole_point(self.h, self.lam, order)
        p2 = CTildePoint(self.C, [self.triple.b_minus], [self.triple.b_plus], self.triple.Lambda, order)
        return p1, p2


def fused_monodromy_point(h, lam, c, order=None):
    """Solve the trivial-moment constraint for the Stokes factors given (h, lambda, C)."""
    lam = _as_diag(lam)
    check_t_prime(lam)
    m = monodromy_constraint_matrix(h, lam, c)
    return FusedMonodromyPoint(np.asarray(h, dtype=complex), lam, np.asarray(c, dtype=complex), dual_factorize(m, order))


def check_monodromy_constraint(point, tol=1e-8):
    """exp(2 pi i Ad_{h^-1} lambda) = C^{-1} b_-^{-1} b_+ C, i.e. the fused moment equals 1."""
    p1, p2 = point.factors()
    check_membership(point.triple)
    err = lc.tensor_norm(qh_moment(p1) @ qh_moment(p2) - np.eye(point.h.shape[0]))
    if err > tol:
        raise ConstraintViolation(f"fused moment differs from 1 by {err:.2e}")
    return err


def fused_monodromy_tangent(point, dh, dlam, dc):
    """Tangents on both factors induced by a variation (dh, dlam, dC) inside the level set."""
    order = point.triple.order
    m = monodromy_constraint_matrix(point.h, point.lam, point.C)
    dm = _constraint_differential(point.h, point.lam, point.C, dh, dlam, dc)
    dbm, dbp, dlam_big = dual_factorize_derivative(m, dm, order)
    t1 = simple_pole_tangent(point.h, point.lam, dh, dlam, order)
    t2 = CTildePoint(np.asarray(dc, dtype=complex), [dbm], [dbp], dlam_big, order)
    return t1, t2


def fused_monodromy_form(point, v1, v2):
    """Fusion two-form of the order-one and order-two spaces on variations (dh, dlam, dC)."""
    p1, p2 = point.factors()
    u1, w1 = fused_monodromy_tangent(point, *v1)
    u2, w2 = fused_monodromy_tangent(point, *v2)
    return fusion_form(qh_form_Ctilde, qh_form_Ctilde, qh_moment_differential, qh_moment_differential, p1, p2, (u1, w1), (u2, w2))


# Rescaling of lambda between the monodromy-data level set and the pi_r chart,
# fixed by calibration at h = C = 1 (see calibrate_monodromy_reduction).
CHART_LAMBDA_SCALE = 2j * np.pi


def reduction_monodromy(point, scale=CHART_LAMBDA_SCALE):
    """Image (C h^{-1}, scale * lambda) in the pi_r chart, with u = b_+^{-1} C h^{-1} e^{pi i lambda}.

    Returns (SigmaPrimePoint, u, triple) where the triple is the Stokes data
    carried over unchanged.
    """
    check_monodromy_constraint(point)
    hp = point.C @ np.linalg.inv(point.h)
    u = np.linalg.solve(point.triple.b_plus, hp @ _exp_diag(point.lam, 1j * np.pi))
    return SigmaPrimePoint(hp, scale * point.lam), u, point.triple


def reduction_monodromy_chart_tangent(point, v, scale=CHART_LAMBDA_SCALE):
    dh, dlam, dc = v
    hinv = np.linalg.inv(point.h)
    dhp = dc @ hinv - point.C @ hinv @ dh @ hinv
    return np.concatenate([dhp.reshape(-1), scale * np.diag(_as_diag(dlam))])


def chart_symplectic_form(ctx, sp):
    """Omega = pi_r^{-1} at a chart point, so that Omega(u, w) = u^T Omega w."""
    return np.linalg.inv(pi_r_tensor(ctx, sp.h, sp.lam))


def reduction_monodromy_residual(ctx, point, tangents, scale=CHART_LAMBDA_SCALE, kappa=1.0):
    """max over tangent pairs of |fused form - kappa * chart form(pushed tangents)|."""
    sp, _, _ = reduction_monodromy(point, scale)
    om = chart_symplectic_form(ctx, sp)
    pushed = [reduction_monodromy_chart_tangent(point, v, scale) for v in tangents]
    worst = 0.0
    for i in range(len(tangents)):
        for j in range(i + 1, len(tangents)):
            a = fused_monodromy_form(point, tangents[i], tangents[j])
            b = pushed[i] @ om @ pushed[j]
            worst = max(worst, abs(a - kappa * b))
    return worst


def calibrate_monodromy_reduction(ctx, lam, tangents, candidates=(1.0, -1.0, 2j * np.pi, -2j * np.pi)):
    """Pick (scale, kappa) at h = C = 1: kappa by least squares for each scale, best residual wins."""
    n = ctx.n
    eye = np.eye(n, dtype=complex)
    point = fused_monodromy_point(eye, lam, eye, ctx.order)
    best = None
    for scale in candidates:
        sp, _, _ = reduction_monodromy(point, scale)
        om = chart_symplectic_form(ctx, sp)
        pushed = [reduction_monodromy_chart_tangent(point, v, scale) for v in tangents]
        a, b = [], []
        for i in range(len(tangents)):
            for j in range(i + 1, len(tangents)):
                a.append(fused_monodromy_form(point, tangents[i], tangents[j]))
                b.append(pushed[i] @ om @ pushed[j])
        a, b = np.array(a), np.array(b)
        kappa = np.vdot(b, a) / np.vdot(b, b)
        res = float(np.max(np.abs(a - kappa * b)))
        if best is None or res < best[2]:
            best = (scale, complex(kappa), res)
    return best


# ---------------------------------------------------------------------------
# groupoid structure on G x g*


@dataclass
class Groupoid:
    g: object  # GValuedMap

    def source(self, h, x):
        return np.asarray(x, dtype=complex)

    def target(self, h, x):
        h = np.asarray(h, dtype=complex)
        return h @ np.asarray(x, dtype=complex) @ np.linalg.inv(h)

    def unit(self, x):
        """x -> (g(x), x): source x and target Ad_{g(x)} x."""
        x = np.asarray(x, dtype=complex)
        return self.g(x), x

    def multiply(self, a, b, tol=1e-10):
        """(h1, x) * (h2, y) = (h2 h1, x), defined when target(h1, x) = y."""
        (h1, x), (h2, y) = a, b
        if lc.tensor_norm(self.target(h1, x) - y) > tol * max(1.0, lc.tensor_norm(y)):
            raise NotComposable("target of the first arrow differs from the source of the second")
        return np.asarray(h2, dtype=complex) @ np.asarray(h1, dtype=complex), np.asarray(x, dtype=complex)


def groupoid_maps(g):
    return Groupoid(g)


def _split(v, n):
    d = n * n
    return np.asarray(v[:d]).reshape(n, n), np.asarray(v[d:]).reshape(n, n)


def mixed_bracket_residual(ctx, h, x, fd_step=1e-4, groupoid=None):
    """max |{alpha^* f, beta^* g}| over coordinate functions f, g under pi_AM.

    The Jacobians of source and target are taken by finite differences.
    """
    grp = groupoid if groupoid is not None else Groupoid(None)
    n = ctx.n
    v = np.concatenate([np.asarray(h, dtype=complex).reshape(-1), np.asarray(x, dtype=complex).reshape(-1)])
    ja = _fd_jacobian(lambda u: grp.source(*_split(u, n)).reshape(-1), v, fd_step)
    jb = _fd_jacobian(lambda u: grp.target(*_split(u, n)).reshape(-1), v, fd_step)
    return lc.tensor_norm(ja @ pi_am_tensor(ctx, h, x) @ jb.T)


def factor_lower_upper_inverse(m, order=None):
    """Balanced factorisation m = b_- b_+^{-1} with b_- lower, b_+ upper triangular.

    With m = L D U: b_- = L D^{1/2}, b_+ = U^{-1} D^{-1/2}, Lambda = -Log(D)/(2 pi i).
    """
    m = np.asarray(m, dtype=complex)
    n = m.shape[0]
    p = _perm(order, n)
    inv = np.argsort(p)
    lo, d, up = _ldu(m[np.ix_(p, p)])
    logd = np.log(d)
    sq = np.exp(0.5 * logd)
    bm = lo * sq[None, :]
    bp = np.linalg.inv(up) / sq[None, :]
    lam = np.diag(-logd / (2j * np.pi))
    back = np.ix_(inv, inv)
    return GStarTriple(bm[back], bp[back], lam[back], None if order is None else tuple(order))


def map_v(ctx, g, h, x):
    """(g(x) h, g*(x)) with g(x) e^x g(x)^{-1} = L(g*) R(g*)^{-1}, L read as b_-, R as b_+."""
    x = np.asarray(x, dtype=complex)
    gx = g(x)
    m = gx @ expm(x) @ np.linalg.inv(gx)
    return gx @ np.asarray(h, dtype=complex), factor_lower_upper_inverse(m, ctx.order)


def map_v_residual(ctx, g, h, x):
    x = np.asarray(x, dtype=complex)
    gx = g(x)
    _, tr = map_v(ctx, g, h, x)
    lhs = gx @ expm(x) @ np.linalg.inv(gx)
    return lc.tensor_norm(lhs - tr.b_minus @ np.linalg.inv(tr.b_plus))


# ---------------------------------------------------------------------------
# maps between Sigma and the pi_r chart


def F_prime_g(g, point):
    """(g(2 pi i Ad_h lambda) h, lambda) in the pi_r chart."""
    x = 2j * np.pi * point.h @ point.lam @ np.linalg.inv(point.h)
    return SigmaPrimePoint(g(x) @ point.h, point.lam)


def F_g_coords(g, n):
    """Chart map (h, lambda) -> (g(h lambda h^{-1}) h, lambda) on flat coordinates."""
    d = n * n

    def f(v):
        v = np.asarray(v, dtype=complex)
        h = v[:d].reshape(n, n)
        x = h @ np.diag(v[d:]) @ np.linalg.inv(h)
        return np.concatenate([(g(x) @ h).reshape(-1), v[d:]])

    return f


def pushforward_residual(ctx, g, point, fd_step=1e-4, kappa=1.0):
    """||(F_g)_* pi_sigma - kappa * pi_r|| at one point of G x t'."""
    f = F_g_coords(g, ctx.n)
    return poisson_map_residual(f, pi_sigma_field(ctx), pi_r_field(ctx), point.coords(), fd_step, scale=kappa)


def calibrate_pushforward(ctx, g, lam, fd_step=1e-4, candidates=(1.0, -1.0, 2j * np.pi, 1 / (2j * np.pi))):
    """Choose kappa at h = 1 among the candidates by smallest residual."""
    point = SigmaPoint(np.eye(ctx.n, dtype=complex), lam)
    res = [(pushforward_residual(ctx, g, point, fd_step, k), k) for k in candidates]
    best = min(res, key=lambda t: t[0])
    return best[1], best[0]


# ---------------------------------------------------------------------------
# the Stokes map viewed as a map g* -> g*


def stokes_nu(a0, layout, kappa, opts=None):
    """x -> I^{-1}(stokes_map(x / kappa)) as a function of flat coordinates."""
    from .stokes_monodromy import DEFAULT_OPTIONS, IrregularConnection, stokes_map

    opts = DEFAULT_OPTIONS if opts is None else opts
    n = len(layout.a0)

    def nu(v):
        x = np.asarray(v, dtype=complex).reshape(n, n) / kappa
        triple = stokes_map(IrregularConnection(a0, x), layout, opts)
        return map_I_inverse(triple).reshape(-1)

    return nu


def calibrate_stokes_nu(ctx, a0, layout, x_diag, fd_step=1e-4, candidates=(2j * np.pi, -2j * np.pi, 1.0, -1.0), opts=None):
    """Choose kappa at a diagonal point by smallest KKS -> STS residual."""
    res = []
    for k in candidates:
        r = poisson_map_residual(stokes_nu(a0, layout, k, opts), kks_field(ctx.n), sts_field(ctx), np.asarray(x_diag).reshape(-1), fd_step)
        res.append((r, k))
    best = min(res, key=lambda t: t[0])
    return best[1], best[0]
