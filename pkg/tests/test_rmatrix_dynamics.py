import numpy as np
import pytest
from conftest import random_group, random_x
from scipy.linalg import expm, expm_frechet

from artifact import lie_core as lc
from artifact import rmatrix_dynamics as rd
from artifact.errors import FDStepTooLarge, PoleHit

# mpmath at 40 digits of -1/z + coth(z/2)/2
PHI_2 = 0.15651764274966565182
PHI_Z = 0.025162415288227358476 + 0.033271190502063819392j  # z = 0.3 + 0.4i


def test_phi_reference_values():
    assert abs(rd.phi(2.0) - PHI_2) < 1e-15
    assert abs(rd.phi(0.3 + 0.4j) - PHI_Z) < 1e-15
    assert abs(rd.phi(np.pi * 1j) - 1j / np.pi) < 1e-15


def test_phi_small_argument_and_oddness(rng):
    for z in (1e-4, 3e-5j, 7e-5 * (1 + 1j)):
        assert abs(rd.phi(z) - z / 12) <= 1e-8 * abs(z)
    z = rng.normal(size=20) + 1j * rng.normal(size=20)
    assert np.max(np.abs(rd.phi(-z) + rd.phi(z))) < 1e-15
    assert rd.phi(0.0) == 0.0


def test_phi_series_and_closed_form_agree_at_crossover():
    r = rd.PHI_CROSSOVER
    for ang in np.linspace(0, 2 * np.pi, 13):
        z = r * np.exp(1j * ang)
        assert abs(rd.phi(z * (1 - 1e-12)) - rd.phi_closed_form(z)) < 1e-13


def test_phi_pole_guard():
    with pytest.raises(PoleHit):
        rd.phi(2j * np.pi + 1e-8)
    with pytest.raises(PoleHit):
        rd.phi(-4j * np.pi)


def test_r_am_diagonal_closed_form():
    ctx = lc.LieContext(2)
    a = 0.37 - 0.2j
    r = rd.r_am(ctx, np.diag([a, -a]))
    # t = e12 (x) e21 + e21 (x) e12 + diagonal terms, and ad_x e21 = -2a e21
    expect = np.zeros((4, 4), dtype=complex)
    expect[ctx.index(0, 1), ctx.index(1, 0)] = rd.phi(-2 * a)
    expect[ctx.index(1, 0), ctx.index(0, 1)] = rd.phi(2 * a)
    assert lc.tensor_norm(r - expect) < 1e-15


def test_r_am_antisymmetric_equivariant(rng):
    ctx = lc.LieContext(3)
    assert lc.tensor_norm(rd.r_am(ctx, np.zeros((3, 3)))) == 0.0
    for _ in range(3):
        x = random_x(rng, 3)
        h = expm(0.3 * random_x(rng, 3, 1.0))
        r = rd.r_am(ctx, x)
        assert lc.tensor_norm(r + lc.flip(r)) < 1e-14
        ad_h = lc.Ad_matrix(h)
        moved = rd.r_am(ctx, h @ x @ np.linalg.inv(h))
        assert lc.tensor_norm(moved - lc.tensor_apply(ad_h, ad_h, r)) < 1e-9


def test_fd_partials_converge_at_second_order(rng):
    x = random_x(rng, 2)
    g = rd.GValuedMap(expm, 2)
    direction = rd.coordinate_direction(2, 1)
    exact = expm_frechet(x, direction, compute_expm=False)
    errs = [np.max(np.abs(g.partials(x, h=h, richardson=False)[1] - exact)) for h in (0.04, 0.02, 0.01)]
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5
    assert np.max(np.abs(g.partials(x, h=1e-3)[1] - exact)) < 1e-11


def test_cdybe_constant_fields(rng):
    x = random_x(rng, 2)
    ctx = lc.LieContext(2)
    r = lc.standard_r(ctx)
    assert rd.cdybe_residual(lambda y: r, x) < 1e-15
    # [t12,t13] + [t12,t23] + [t13,t23] for t/2: largest entry 1/4 by Kronecker expansion
    half_t = 0.5 * lc.casimir(ctx)
    assert abs(rd.cdybe_residual(lambda y: half_t, x) - 0.25) < 1e-14


def test_cdybe_shifted_am(rng):
    ctx = lc.LieContext(2)
    field = rd.shifted_am_field(ctx)
    for _ in range(3):
        assert rd.cdybe_residual(field, random_x(rng, 2)) <= 1e-8


def test_cdybe_weight_is_not_plus_half(rng):
    # the differential weight is fixed at -1/2; +1/2 leaves an O(1) residual
    field = rd.shifted_am_field(lc.LieContext(2))
    x = random_x(rng, 2)
    assert rd.DIFFERENTIAL_WEIGHT == -0.5
    assert rd.cdybe_residual(field, x, weight=0.5) > 1e-3


def test_gauge_constant_maps(rng):
    ctx = lc.LieContext(3, (2, 0, 1))
    ident = rd.constant_map(np.eye(3))
    assert abs(rd.gauge_residual(ctx, ident, np.zeros((3, 3))) - lc.tensor_norm(lc.r0(ctx))) == 0.0
    g0 = random_group(rng, 3)
    x = random_x(rng, 3)
    lhs = rd.gauge_lhs(ctx, rd.constant_map(g0), x)
    ad_inv = lc.Ad_matrix(np.linalg.inv(g0))
    assert lc.tensor_norm(lhs - lc.tensor_apply(ad_inv, ad_inv, lc.r0(ctx))) < 1e-14


def test_step_convergence_diagnostic():
    assert rd.check_step_convergence([3.99, 4.01])
    with pytest.raises(FDStepTooLarge):
        rd.check_step_convergence([3.99, 1.2])
