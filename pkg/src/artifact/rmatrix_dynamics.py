"""Dynamical r-matrix layer: phi, r_AM, CDYBE residuals and the gauge equation."""
import threading

import numpy as np
from scipy.special import bernoulli

from . import lie_core as lc
from .errors import FDStepTooLarge, PoleHit, SingularValue

PHI_CROSSOVER = 0.5
POLE_GUARD = 1e-6

# phi(z) = sum_{k>=1} B_{2k} z^{2k-1} / (2k)!
_N_SERIES = 24
_B = bernoulli(2 * _N_SERIES)
_PHI_COEFFS = np.array([_B[2 * k] / np.prod(np.arange(1.0, 2 * k + 1)) for k in range(1, _N_SERIES + 1)])


def _check_poles(z):
    k = np.rint(np.imag(z) / (2 * np.pi))
    near = (np.abs(z - 2j * np.pi * k) < POLE_GUARD) & (k != 0)
    if np.any(near):
        raise PoleHit("phi evaluated within guard radius of 2*pi*i*k, k != 0")


def phi(z):
    """phi(z) = -1/z + coth(z/2)/2, odd, with phi(0) = 0."""
    z = np.asarray(z, dtype=complex)
    _check_poles(z)
    out = np.empty_like(z)
    small = np.abs(z) <= PHI_CROSSOVER
    zs = z[small]
    z2 = zs * zs
    acc = np.zeros_like(zs)
    for c in _PHI_COEFFS[::-1]:
        acc = acc * z2 + c
    out[small] = acc * zs
    zl = z[~small]
    out[~small] = -1.0 / zl + 0.5 / np.tanh(zl / 2)
    return out if out.ndim else out[()]


def phi_closed_form(z):
    z = np.asarray(z, dtype=complex)
    return -1.0 / z + 0.5 / np.tanh(z / 2)


def r_am(ctx, x):
    """(id (x) phi(ad_x))(t)."""
    op = lc.scalar_function_of_ad(phi, np.asarray(x, dtype=complex))
    return lc.id_tensor_op(op, ctx.n)


def coordinate_direction(n, a):
    """Matrix direction of d/dxi^a, where xi^{ij}(x) = <x, e_ij> = x_ji."""
    i, j = divmod(a, n)
    e = np.zeros((n, n), dtype=complex)
    e[j, i] = 1.0
    return e


def central_difference(f, x, direction, h, richardson=True):
    d1 = (f(x + h * direction) - f(x - h * direction)) / (2 * h)
    if not richardson:
        return d1
    h2 = h / 2
    d2 = (f(x + h2 * direction) - f(x - h2 * direction)) / (2 * h2)
    return (4 * d2 - d1) / 3


def _step(x, h):
    return h * max(1.0, float(np.linalg.norm(x)))


class GValuedMap:
    """A map g* -> G with cached evaluation and finite-difference partials.

    ``derivative``, if given, maps x to an array of shape (n^2, n, n) holding
    dg/dxi^a for every coordinate a.
    """

    def __init__(self, eval_fn, n, derivative=None, fd_step=1e-4, name="g"):
        self._eval = eval_fn
        self.n = n
        self.derivative = derivative
        self.fd_step = fd_step
        self.name = name
        self._cache = {}
        self._lock = threading.Lock()

    def __call__(self, x):
        x = np.asarray(x, dtype=complex)
        key = x.tobytes()
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        val = np.asarray(self._eval(x), dtype=complex)
        with self._lock:
            self._cache.setdefault(key, val)
        return val

    def partials(self, x, h=None, richardson=True):
        x = np.asarray(x, dtype=complex)
        if self.derivative is not None:
            return np.asarray(self.derivative(x), dtype=complex)
        h = _step(x, self.fd_step if h is None else h)
        n = self.n
        return np.array(
            [central_difference(self, x, coordinate_direction(n, a), h, richardson) for a in range(n * n)]
        )


def constant_map(g0):
    g0 = np.asarray(g0, dtype=complex)
    n = g0.shape[0]
    return GValuedMap(lambda x: g0, n, derivative=lambda x: np.zeros((n * n, n, n), dtype=complex), name="constant")


# ---------------------------------------------------------------------------
# CDYBE


def field_derivative(field, x, h, richardson=True):
    """dr = sum_a e_a (x) dr/dxi^a as a three-tensor (first slot = derivative index)."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    step = _step(x, h)
    return np.array(
        [central_difference(field, x, coordinate_direction(n, a), step, richardson) for a in range(n * n)]
    )


# Weight of the unnormalised Alt(dr) in the dynamical equation. The factor 1/2
# turns Alt on g (x) wedge^2 g into the wedge product x (x) (y ^ z) -> x ^ y ^ z;
# the sign matches the orientation of r_AM fixed by the gauge equation.
DIFFERENTIAL_WEIGHT = -0.5


def cdybe_lhs(field, x, h=1e-4, richardson=True, weight=DIFFERENTIAL_WEIGHT):
    """weight * Alt(dr) + [r12, r13] + [r12, r23] + [r13, r23] at x."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    dr = field_derivative(field, x, h, richardson)
    return weight * lc.alt(dr) + lc.cybe_brackets(field(x), n)


def cdybe_residual(field, x, h=1e-4, richardson=True, weight=DIFFERENTIAL_WEIGHT):
    return lc.tensor_norm(cdybe_lhs(field, x, h, richardson, weight))


def shifted_am_field(ctx):
    """x -> r_AM(x) + t/2."""
    half_t = 0.5 * lc.casimir(ctx)
    return lambda x: r_am(ctx, x) + half_t


# ---------------------------------------------------------------------------
# gauge equation


def gauge_terms(ctx, g, x, h=None, richardson=True, r_zero=None):
    """The four summands of the gauge-equation left side at x.

    T1 = sum_a g^{-1} dg/dxi^a (x) e_a, T2 = flip(T1),
    T3 = (Ad_{g^{-1}} (x) Ad_{g^{-1}})(r0),
    T4 = sum_{a,b} <x, [e_b, e_a]> g^{-1}dg/dxi^a (x) g^{-1}dg/dxi^b.

    The bracket order in T4 is the one for which C_{2 pi i} solves the
    equation (the opposite order leaves an O(|x|) residual).
    """
    x = np.asarray(x, dtype=complex)
    n = ctx.n
    gx = g(x)
    if abs(np.linalg.det(gx)) < 1e-300:
        raise SingularValue("g(x) is not invertible")
    ginv = np.linalg.inv(gx)
    parts = g.partials(x, h=h, richardson=richardson)
    cols = np.array([(ginv @ p).reshape(-1) for p in parts]).T  # column a = vec(g^{-1} d_a g)
    t1 = cols
    t2 = lc.flip(t1)
    if r_zero is None:
        r_zero = lc.r0(ctx)
    ad_inv = lc.Ad_matrix(ginv)
    t3 = lc.tensor_apply(ad_inv, ad_inv, r_zero)
    basis = np.eye(n * n).reshape(n * n, n, n)
    xe = np.einsum("ij,ajk->aik", x, basis)  # x e_a
    pair_xe_eb = np.einsum("aij,bji->ab", xe, basis)  # <x e_a, e_b> = tr(x e_a e_b)
    k = pair_xe_eb.T - pair_xe_eb  # <x, [e_b, e_a]>
    t4 = cols @ k @ cols.T
    return t1, t2, t3, t4


def gauge_lhs(ctx, g, x, h=None, richardson=True, r_zero=None):
    t1, t2, t3, t4 = gauge_terms(ctx, g, x, h, richardson, r_zero)
    return t1 - t2 + t3 + t4


def gauge_residual(ctx, g, x, h=None, richardson=True, r_zero=None):
    """||gauge_lhs(g, x) - r_AM(x)||_inf."""
    return lc.tensor_norm(gauge_lhs(ctx, g, x, h, richardson, r_zero) - r_am(ctx, x))


def gauge_step_study(ctx, g, x, h0=0.05, levels=2):
    """Residuals of plain central differences at h0, h0/2, ...; returns (residuals, ratios).

    In the regime where truncation error dominates, consecutive ratios approach 4.
    """
    res = []
    h = h0
    for _ in range(levels + 1):
        res.append(gauge_residual(ctx, g, x, h=h, richardson=False))
        h /= 2
    ratios = [res[i] / res[i + 1] if res[i + 1] > 0 else np.inf for i in range(levels)]
    return res, ratios


def check_step_convergence(ratios, lo=3.0, hi=5.0):
    if not all(lo <= r <= hi for r in ratios):
        raise FDStepTooLarge(f"step-halving ratios {ratios} outside [{lo}, {hi}]")
    return True
