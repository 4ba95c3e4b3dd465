import numpy as np
import pytest
from conftest import GL2_A0, random_group, random_x
from scipy.linalg import expm

from artifact import lie_core as lc
from artifact import poisson_geometry as pg
from artifact import rmatrix_dynamics as rd
from artifact import stokes_monodromy as sm
from artifact.errors import ConstraintViolation, LogBranch, MembershipViolation, NotComposable, OutsideBigCell, UnsupportedOrder


def _cn(rng, shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def _lam(rng, n, scale=0.3):
    return scale * _cn(rng, n) / np.sqrt(2)


# ---------------------------------------------------------------------------
# G* triples, factorisation and the map I


def test_t_prime_condition():
    assert pg.check_t_prime(np.array([0.2, -0.1j]))
    with pytest.raises(ConstraintViolation):
        pg.check_t_prime(np.array([0.5, -0.5]))
    with pytest.raises(ConstraintViolation):
        pg.check_t_prime(np.array([[0.1, 0.2], [0.0, 0.3]]))
    with pytest.raises(ConstraintViolation):
        pg.SigmaPoint(np.eye(2), np.array([0.3, 0.3]))


def test_membership_violations():
    d = np.array([0.1, -0.2])
    good = pg.GStarTriple(np.diag(np.exp(-1j * np.pi * d)), np.diag(np.exp(1j * np.pi * d)), np.diag(d))
    assert pg.check_membership(good)
    bad_tri = pg.GStarTriple(good.b_minus, good.b_plus + np.array([[0, 0], [0.5, 0]]), good.Lambda)
    with pytest.raises(MembershipViolation):
        pg.check_membership(bad_tri)
    bad_torus = pg.GStarTriple(good.b_minus, good.b_plus, 2 * good.Lambda)
    with pytest.raises(MembershipViolation):
        pg.check_membership(bad_torus)


def test_dual_factorize_examples(rng):
    one = pg.dual_factorize(np.eye(3))
    assert np.array_equal(one.b_minus, np.eye(3)) and np.array_equal(one.b_plus, np.eye(3))
    assert not one.Lambda.any()
    d = np.array([0.1 + 0.05j, -0.2, 0.03j])
    tri = pg.dual_factorize(np.diag(np.exp(2j * np.pi * d)))
    assert np.allclose(tri.b_minus, np.diag(np.exp(-1j * np.pi * d)), atol=1e-15)
    assert np.allclose(tri.b_plus, np.diag(np.exp(1j * np.pi * d)), atol=1e-15)
    assert np.allclose(tri.Lambda, np.diag(d), atol=1e-15)
    for order in (None, (2, 0, 1)):
        m = np.eye(3) + 0.3 * _cn(rng, (3, 3))
        tri = pg.dual_factorize(m, order)
        assert pg.check_membership(tri)
        assert np.max(np.abs(tri.product() - m)) <= 1e-12
    with pytest.raises(OutsideBigCell):
        pg.dual_factorize(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_dual_factorize_derivative(rng):
    m = np.eye(3) + 0.3 * _cn(rng, (3, 3))
    dm = _cn(rng, (3, 3))
    order = (1, 2, 0)
    exact = pg.dual_factorize_derivative(m, dm, order)
    h = 1e-5
    plus = pg.dual_factorize(m + h * dm, order)
    minus = pg.dual_factorize(m - h * dm, order)
    for k, name in enumerate(("b_minus", "b_plus", "Lambda")):
        fd = (getattr(plus, name) - getattr(minus, name)) / (2 * h)
        assert np.max(np.abs(fd - exact[k])) < 1e-8


def test_map_I(rng):
    ctx = lc.LieContext(2, (1, 0))
    zero = pg.map_I(ctx, np.zeros((2, 2)))
    assert np.allclose(zero.b_minus, np.eye(2)) and np.allclose(zero.b_plus, np.eye(2)) and not zero.Lambda.any()
    d = np.diag([0.2, -0.1 + 0.3j])
    tri = pg.map_I(ctx, d)
    assert np.allclose(tri.product(), expm(d), atol=1e-15)
    assert not np.any(tri.b_minus - np.diag(np.diag(tri.b_minus)))
    for _ in range(10):
        x = random_x(rng, 2, rng.uniform(0.05, 0.5))
        assert np.max(np.abs(pg.map_I_inverse(pg.map_I(ctx, x)) - x)) <= 1e-10
    with pytest.raises(LogBranch):
        pg.map_I_inverse(pg.dual_factorize(np.diag([-1.0, 1.0])))


# ---------------------------------------------------------------------------
# bivectors


def test_kks_tensor(rng):
    n = 2
    assert not pg.kks_tensor(np.zeros((n, n))).any()
    x = random_x(rng, n)
    assert pg.is_antisymmetric(pg.kks_tensor(x))
    assert pg.jacobi_residual(pg.kks_field(n), x.reshape(-1)) < 1e-13


def test_kks_structure_constants():
    # {x_ij, x_kl} = -(ad_x (x) 1)(t) entries: delta_jk x_il - delta_li x_kj with a sign fixed by the convention
    n = 2
    x = np.arange(1, 5, dtype=complex).reshape(2, 2)
    p = pg.kks_tensor(x)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for m in range(n):
                    a, b = i * n + j, k * n + m
                    expect = -((x[i, m] if j == k else 0) - (x[k, j] if m == i else 0))
                    assert p[a, b] == expect


def test_sts_tensor(rng):
    ctx = lc.LieContext(2)
    assert not pg.sts_tensor(ctx, np.zeros((2, 2))).any()
    d = np.diag([0.3, -0.2j])
    p = pg.sts_tensor(ctx, d)
    diag_idx = [0, 3]
    assert np.max(np.abs(p[np.ix_(diag_idx, diag_idx)])) == 0.0
    x = random_x(rng, 2)
    assert pg.is_antisymmetric(pg.sts_tensor(ctx, x), 1e-14)
    assert pg.jacobi_residual(pg.sts_field(ctx), x.reshape(-1)) <= 1e-6


def test_pi_am_identity_point_and_jacobi(rng):
    ctx = lc.LieContext(2)
    p = pg.pi_am_tensor(ctx, np.eye(2), np.zeros((2, 2)))
    d = ctx.dim
    # at h = 1, x = 0 the group block is -r0 and the fibre block vanishes
    assert np.allclose(p[:d, :d], -lc.r0(ctx), atol=1e-15) and not p[d:, d:].any()
    assert np.array_equal(p[d:, :d], lc.transpose_permutation(2))
    assert pg.is_antisymmetric(p)
    h, x = random_group(rng, 2), random_x(rng, 2)
    v = np.concatenate([h.reshape(-1), x.reshape(-1)])
    assert pg.jacobi_residual(pg.pi_am_field(ctx), v) <= 1e-6
    mutant = pg.pi_am_field(ctx, r_zero=np.zeros((4, 4), dtype=complex))
    assert pg.jacobi_residual(mutant, v) >= 1e-2


def test_pi_r_scalar_identity_at_identity(rng):
    ctx = lc.LieContext(2)
    lam = np.diag(_lam(rng, 2))
    sig = pg.pi_sigma_tensor(ctx, np.eye(2), lam)
    r = pg.pi_r_tensor(ctx, np.eye(2), lam)
    # at h = 1 the e12 (x) e21 entry collapses to -1/2 (coth(a/2) + 1) = -1/(1 - e^{-a})
    a = lam[0, 0] - lam[1, 1]
    expect = -1 / (1 - np.exp(-a))
    assert abs(r[1, 2] - expect) < 1e-14 and abs(r[2, 1] + expect) < 1e-14
    assert abs(sig[1, 2] + 1 / a) < 1e-15
    assert pg.is_antisymmetric(sig) and pg.is_antisymmetric(r)


def test_abelian_case():
    ctx = lc.LieContext(1)
    p = pg.pi_r_tensor(ctx, np.array([[1.3]]), np.array([0.2]))
    assert np.array_equal(p, pg.pi_sigma_tensor(ctx, np.array([[1.3]]), np.array([0.2])))
    assert p[0, 0] == 0 and p[1, 1] == 0 and p[0, 1] == -1.3
    g = rd.constant_map(np.eye(1))
    assert pg.pushforward_residual(ctx, g, pg.SigmaPoint(np.array([[1.3]]), np.array([0.2]))) < 1e-10


def test_sigma_and_r_tensors_are_poisson(rng):
    for n in (2, 3):
        ctx = lc.LieContext(n)
        v = np.concatenate([random_group(rng, n).reshape(-1), _lam(rng, n)])
        assert pg.jacobi_residual(pg.pi_sigma_field(ctx), v) <= 1e-6
        assert pg.jacobi_residual(pg.pi_r_field(ctx), v) <= 1e-6


# ---------------------------------------------------------------------------
# two-forms


def test_omega_sigma_examples(rng):
    lam = np.diag(_lam(rng, 2))
    x1, x2, r = _cn(rng, (2, 2)), _cn(rng, (2, 2)), np.diag(_cn(rng, 2))
    z = np.zeros((2, 2))
    assert pg.omega_sigma(lam, (x1, z), (z, r)) == -lc.pairing(r, x1)
    assert pg.omega_sigma(lam, (x1, z), (x2, z)) == lc.pairing(lam, lc.bracket(x1, x2))
    v1, v2 = (x1, r), (x2, np.diag(_cn(rng, 2)))
    assert pg.omega_sigma(lam, v1, v2) == -pg.omega_sigma(lam, v2, v1)


def test_omega_sigma_inverse_to_pi_sigma(rng):
    for n in (2, 3):
        ctx = lc.LieContext(n)
        point = pg.SigmaPoint(random_group(rng, n), _lam(rng, n))
        defect, sign = pg.inverse_pair_defect(ctx, point)
        assert defect <= 1e-8 and sign == -1
        # the bracket term with the opposite sign does not invert pi_sigma
        defect_other, _ = pg.inverse_pair_defect(ctx, point, bracket_sign=-pg.CLOSED_BRACKET_SIGN)
        assert defect_other > 1e-2


def test_omega_extended_orbit_examples(rng):
    g0 = random_group(rng, 2)
    lam = np.diag(_lam(rng, 2))
    v1 = ([_cn(rng, (2, 2))], np.diag(_cn(rng, 2)))
    v2 = ([_cn(rng, (2, 2))], np.diag(_cn(rng, 2)))
    # k = 1 with g0 = 1 is the same formula as omega_sigma
    one = np.eye(2)
    assert abs(pg.omega_extended_orbit(one, [lam], v1, v2) - pg.omega_sigma(lam, (v1[0][0], v1[1]), (v2[0][0], v2[1]))) < 1e-14
    z = np.zeros((2, 2))
    val = pg.omega_extended_orbit(g0, [lam], (v1[0], z), (v2[0], z))
    assert abs(val - lc.pairing(lam, lc.bracket(v1[0][0], v2[0][0]))) < 1e-14
    assert pg.omega_extended_orbit(g0, [lam], v1, v2) == -pg.omega_extended_orbit(g0, [lam], v2, v1)
    with pytest.raises(UnsupportedOrder):
        pg.omega_extended_orbit(g0, [lam, lam, lam], ([z] * 3, z), ([z] * 3, z))


def test_qh_spaces(rng):
    one = np.eye(2, dtype=complex)
    trivial = pg.CTildePoint(one, [one], [one], np.zeros((2, 2)))
    assert np.array_equal(pg.qh_moment(trivial), one)
    h = random_group(rng, 2)
    lam = np.diag(_lam(rng, 2))
    p = pg.simple_pole_point(h, lam)
    assert pg.check_ctilde(p)
    expect = np.linalg.inv(h) @ np.diag(np.exp(-2j * np.pi * np.diag(lam))) @ h
    assert np.max(np.abs(pg.qh_moment(p) - expect)) < 1e-14
    t1 = pg.simple_pole_tangent(h, lam, _cn(rng, (2, 2)), np.diag(_cn(rng, 2)))
    t2 = pg.simple_pole_tangent(h, lam, _cn(rng, (2, 2)), np.diag(_cn(rng, 2)))
    assert abs(pg.qh_form_Ctilde(p, t1, t2) + pg.qh_form_Ctilde(p, t2, t1)) < 1e-14


def test_qh_moment_differential(rng):
    h = random_group(rng, 2)
    lam = np.diag(_lam(rng, 2))
    dh, dlam = _cn(rng, (2, 2)), np.diag(_cn(rng, 2))
    p = pg.simple_pole_point(h, lam)
    _, dm = pg.qh_moment_differential(p, pg.simple_pole_tangent(h, lam, dh, dlam))
    eps = 1e-6
    plus = pg.qh_moment(pg.simple_pole_point(h + eps * dh, lam + eps * dlam))
    minus = pg.qh_moment(pg.simple_pole_point(h - eps * dh, lam - eps * dlam))
    assert np.max(np.abs((plus - minus) / (2 * eps) - dm)) < 1e-8


def test_fusion(rng):
    g = random_group(rng, 2)
    assert np.allclose(pg.fused_moment(g, np.linalg.inv(g)), np.eye(2))
    h = random_group(rng, 2)
    lam = np.diag(_lam(rng, 2))
    p = pg.simple_pole_point(h, lam)
    u1 = pg.simple_pole_tangent(h, lam, _cn(rng, (2, 2)), np.diag(_cn(rng, 2)))
    u2 = pg.simple_pole_tangent(h, lam, _cn(rng, (2, 2)), np.diag(_cn(rng, 2)))
    zero = pg.simple_pole_tangent(h, lam, np.zeros((2, 2)), np.zeros((2, 2)))
    f, mu = pg.qh_form_Ctilde, pg.qh_moment_differential
    # no motion on the second factor: the correction term drops out
    val = pg.fusion_form(f, f, mu, mu, p, p, (u1, zero), (u2, zero))
    assert abs(val - f(p, u1, u2)) < 1e-14
    w1 = pg.simple_pole_tangent(h, lam, _cn(rng, (2, 2)), np.diag(_cn(rng, 2)))
    w2 = pg.simple_pole_tangent(h, lam, _cn(rng, (2, 2)), np.diag(_cn(rng, 2)))
    a = pg.fusion_form(f, f, mu, mu, p, p, (u1, w1), (u2, w2))
    b = pg.fusion_form(f, f, mu, mu, p, p, (u2, w2), (u1, w1))
    assert abs(a + b) < 1e-13


# ---------------------------------------------------------------------------
# reductions


def _orbit_sample(rng, n):
    g1, g2 = random_group(rng, n), random_group(rng, n)
    lam = np.diag(_lam(rng, n))
    x1 = np.linalg.solve(g1, lam @ g1)
    xs = [_cn(rng, (n, n)) for _ in range(2)]
    rs = [np.diag(_cn(rng, n)) for _ in range(2)]
    return g1, x1, g2, xs, rs


def test_reduction_orbit_iota(rng):
    x1 = np.diag(_lam(rng, 2))
    pt = pg.reduction_orbit_iota(np.eye(2), x1, np.eye(2))
    assert np.array_equal(pt.h, np.eye(2)) and np.array_equal(pt.lam, -x1)
    g1, x1, g2, _, _ = _orbit_sample(rng, 2)
    k = random_group(rng, 2)
    a = pg.reduction_orbit_iota(g1, x1, g2)
    b = pg.reduction_orbit_iota(g1 @ k, np.linalg.solve(k, x1 @ k), g2 @ k)
    assert np.allclose(a.h, b.h, atol=1e-13) and np.allclose(a.lam, b.lam, atol=1e-13)
    with pytest.raises(ConstraintViolation):
        pg.reduction_orbit_iota(np.eye(2), np.array([[0.1, 0.2], [0.0, 0.3]]), np.eye(2))


@pytest.mark.parametrize("n", [2, 3])
def test_orbit_reduction_pullback(rng, n):
    a0 = GL2_A0 if n == 2 else np.array([0.0, 1.0, 1 + 1j])
    for _ in range(5):
        g1, x1, g2, xs, rs = _orbit_sample(rng, n)
        v1, v2 = pg.reduction_orbit_tangents(g1, g2, xs, rs)
        lhs, rhs = pg.reduction_orbit_forms(g1, x1, g2, a0, v1, v2)
        closed = pg.reduction_orbit_closed_form(g1, x1, g2, (xs[0], rs[0]), (xs[1], rs[1]))
        assert abs(lhs - rhs) <= 1e-10
        assert abs(lhs - closed) <= 1e-10


def test_orbit_reduction_with_other_bracket_sign(rng):
    # With the opposite bracket sign the pulled-back form agrees with the closed form of the
    # same sign, but neither agrees with the restricted orbit form.
    g1, x1, g2, xs, rs = _orbit_sample(rng, 2)
    v1, v2 = pg.reduction_orbit_tangents(g1, g2, xs, rs)
    s = -pg.CLOSED_BRACKET_SIGN
    lhs, rhs = pg.reduction_orbit_forms(g1, x1, g2, GL2_A0, v1, v2, bracket_sign=s)
    closed = pg.reduction_orbit_closed_form(g1, x1, g2, (xs[0], rs[0]), (xs[1], rs[1]), bracket_sign=s)
    assert abs(rhs - closed) < 1e-12
    assert abs(lhs - rhs) > 1e-3


def _monodromy_tangents(rng, n, k):
    return [(_cn(rng, (n, n)), np.diag(_cn(rng, n)), _cn(rng, (n, n))) for _ in range(k)]


def test_monodromy_reduction(rng):
    ctx = lc.LieContext(2, (1, 0))
    scale, kappa, res = pg.calibrate_monodromy_reduction(ctx, np.diag(_lam(rng, 2)), _monodromy_tangents(rng, 2, 4))
    assert scale == pg.CHART_LAMBDA_SCALE and abs(kappa - 1) < 1e-10 and res < 1e-10
    for _ in range(5):
        point = pg.fused_monodromy_point(random_group(rng, 2), np.diag(_lam(rng, 2)), random_group(rng, 2), ctx.order)
        assert pg.check_monodromy_constraint(point) < 1e-10
        assert pg.reduction_monodromy_residual(ctx, point, _monodromy_tangents(rng, 2, 4)) <= 1e-8


def test_reduction_monodromy_examples(rng):
    h = random_group(rng, 2)
    lam = np.diag(_lam(rng, 2))
    point = pg.fused_monodromy_point(h, lam, h)
    assert np.allclose(point.triple.b_minus, np.diag(np.exp(-1j * np.pi * np.diag(lam))), atol=1e-12)
    assert np.allclose(point.triple.b_plus, np.diag(np.exp(1j * np.pi * np.diag(lam))), atol=1e-12)
    sp, _, _ = pg.reduction_monodromy(point)
    assert np.allclose(sp.h, np.eye(2), atol=1e-14) and np.allclose(sp.lam, 2j * np.pi * lam)
    # the image only depends on the G-orbit (h, C) -> (h k, C k)
    c = random_group(rng, 2)
    k = random_group(rng, 2)
    a, _, _ = pg.reduction_monodromy(pg.fused_monodromy_point(h, lam, c))
    b, _, _ = pg.reduction_monodromy(pg.fused_monodromy_point(h @ k, lam, c @ k))
    assert np.allclose(a.h, b.h, atol=1e-13)


# ---------------------------------------------------------------------------
# chart maps, groupoid, map v


def test_F_prime_identity(rng):
    point = pg.SigmaPoint(random_group(rng, 2), _lam(rng, 2))
    out = pg.F_prime_g(rd.constant_map(np.eye(2)), point)
    assert np.array_equal(out.h, point.h) and np.array_equal(out.lam, point.lam)
    with pytest.raises(ConstraintViolation):
        pg.F_prime_g(rd.constant_map(np.eye(2)), pg.SigmaPoint(point.h, np.zeros(2)))


def test_pushforward_identity_map_is_not_poisson(rng):
    ctx = lc.LieContext(2, (1, 0))
    point = pg.SigmaPoint(random_group(rng, 2, 0.2), _lam(rng, 2))
    assert pg.pushforward_residual(ctx, rd.constant_map(np.eye(2)), point) > 1e-2


def test_groupoid(rng):
    g = rd.GValuedMap(lambda x: expm(0.3 * x), 2)
    grp = pg.groupoid_maps(g)
    x = random_x(rng, 2)
    h, x_unit = grp.unit(x)
    assert np.array_equal(grp.source(h, x_unit), x)
    assert np.array_equal(grp.target(h, x_unit), g(x) @ x @ np.linalg.inv(g(x)))
    h1, h2 = random_group(rng, 2), random_group(rng, 2)
    y = grp.target(h1, x)
    prod = grp.multiply((h1, x), (h2, y))
    assert np.array_equal(prod[0], h2 @ h1) and np.array_equal(prod[1], x)
    assert np.allclose(grp.target(*prod), grp.target(h2, y))
    with pytest.raises(NotComposable):
        grp.multiply((h1, x), (h2, x + 1.0))


def test_mixed_bracket_and_map_v(rng, gl2_layout):
    ctx = gl2_layout.context()
    h, x = random_group(rng, 2), random_x(rng, 2)
    assert pg.mixed_bracket_residual(ctx, h, x) <= 1e-8
    ident = rd.constant_map(np.eye(2))
    hh, tri = pg.map_v(ctx, ident, h, np.zeros((2, 2)))
    assert np.array_equal(hh, h) and np.allclose(tri.b_minus, np.eye(2)) and np.allclose(tri.b_plus, np.eye(2))
    _, tri = pg.map_v(ctx, ident, h, np.diag([0.2, -0.1j]))
    for m in (tri.b_minus, tri.b_plus):
        assert not np.any(m - np.diag(np.diag(m)))
    g = sm.c2pii_field(ctx, GL2_A0, gl2_layout)
    assert pg.map_v_residual(ctx, g, h, x) <= 1e-9
    assert pg.check_membership(pg.map_v(ctx, g, h, x)[1])
