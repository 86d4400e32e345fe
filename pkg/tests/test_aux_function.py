import math

import numpy as np
import pytest

from mvlangevin.theory import AuxFunction, aux_from_constants, build_aux_function


def closed_form_fprime0(kappa, lk, r1):
    e = math.exp(lk * r1**2 / 4.0)
    return e / kappa + (e - 1.0) / lk


def random_tuples(n, seed):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        lk_top = rng.uniform(0.5, 1.5)
        lg = rng.uniform(0.0, 0.5)
        kappa = rng.uniform(0.2, lk_top)
        r1 = rng.uniform(0.2, 1.0)
        out.append((kappa, lk_top + lg, r1))
    return out


def ode_residual(aux, kappa, lk):
    """|2 f'' - r theta(r) f' + r| from centred differences on the table,
    excluding the cell around the kink at r1 where theta jumps."""
    fp = aux.fprime_table
    h = aux.spacing
    r = aux.r_grid
    fpp = (fp[2:] - fp[:-2]) / (2.0 * h)
    rr = r[1:-1]
    theta = np.where(rr < aux.r1, -lk, kappa)
    resid = np.abs(2.0 * fpp - rr * theta * fp[1:-1] + rr)
    mask = np.abs(rr - aux.r1) > 1.5 * h
    return resid[mask] / (1.0 + rr[mask])


def test_quadrature_matches_closed_form():
    for kappa, lk, r1 in random_tuples(5, seed=20):
        aux = aux_from_constants(kappa, lk, r1)
        assert aux.fprime_table[0] == pytest.approx(
            closed_form_fprime0(kappa, lk, r1), rel=1e-6)


def test_ode_residual_small():
    for kappa, lk, r1 in random_tuples(3, seed=21):
        aux = aux_from_constants(kappa, lk, r1)
        assert float(np.max(ode_residual(aux, kappa, lk))) < 1e-6


def test_slope_constant_beyond_kink():
    kappa, lk, r1 = 0.7, 1.3, 0.8
    aux = aux_from_constants(kappa, lk, r1)
    beyond = aux.r_grid >= r1
    assert np.max(np.abs(aux.fprime_table[beyond] - 1.0 / kappa)) < 1e-10
    assert aux.deriv(r1) == 1.0 / kappa
    assert aux.deriv(5.0 * r1) == 1.0 / kappa


def test_concavity_and_secant_bounds():
    kappa, lk, r1 = 0.5, 1.2, 0.9
    aux = aux_from_constants(kappa, lk, r1)
    assert np.all(np.diff(aux.fprime_table) <= 1e-12 * aux.fprime_table[0])
    rng = np.random.default_rng(7)
    r = rng.uniform(1e-6, 3.0 * r1, size=10_000)
    secant = aux.value(r) / r
    fp0 = closed_form_fprime0(kappa, lk, r1)
    assert np.all(secant >= 1.0 / kappa * (1 - 1e-9))
    assert np.all(secant <= fp0 * (1 + 1e-9))


def test_zero_kink_is_linear():
    aux = aux_from_constants(2.0, 3.0, 0.0)
    r = np.linspace(0.0, 7.0, 101)
    assert np.allclose(aux.value(r), r / 2.0, rtol=0, atol=1e-15)
    assert np.allclose(aux.deriv(r), 0.5, rtol=0, atol=0)


def test_value_continuity_and_zero():
    kappa, lk, r1 = 0.9, 1.1, 0.6
    aux = aux_from_constants(kappa, lk, r1)
    assert aux.value(0.0) == 0.0
    r_end = aux.r_grid[-1]
    # linear extension glues continuously at the table end
    assert aux.value(r_end + 1e-9) == pytest.approx(aux.value(r_end), abs=1e-8)
    assert aux.value(r_end + 2.0) == pytest.approx(
        aux.value(r_end) + 2.0 / kappa, rel=1e-12)


def test_build_from_model(dissipative_model, dissipative_constants):
    tc, aux = dissipative_constants
    rebuilt = build_aux_function(dissipative_model, tc.r1)
    assert rebuilt.r1 == aux.r1
    assert rebuilt.fprime_table[0] == pytest.approx(tc.f_prime_0, rel=1e-12)


def test_interpolation_matches_fresh_quadrature():
    # evaluate f' off the table nodes and compare with a direct quadrature
    # at those points (interpolation error target 1e-8)
    kappa, lk, r1 = 0.6, 1.0, 0.7
    aux = aux_from_constants(kappa, lk, r1)
    probes = np.array([0.123456, 0.3141592, 0.5 * r1, 0.98 * r1])
    # closed form of f' below the kink serves as the pointwise oracle
    e = np.exp(lk * (r1**2 - probes**2) / 4.0)
    oracle = e * (1.0 / kappa + 1.0 / lk) - 1.0 / lk
    assert np.allclose(aux.deriv(probes), oracle, rtol=0, atol=1e-8)


def test_unreachable_tolerance_raises():
    from mvlangevin.theory import QuadratureError
    with pytest.raises(QuadratureError):
        aux_from_constants(0.7, 1.1, 0.5, quad_atol=0.0, quad_rtol=0.0)


def test_table_invariants_rejected():
    grid = np.linspace(0.0, 1.0, 5)
    with pytest.raises(ValueError):
        AuxFunction(0.5, 1.0, 1.0, grid, np.array([1.0, 2.0, 1.0, 1.0, 1.0]),
                    grid.copy())
    with pytest.raises(ValueError):
        AuxFunction(0.5, 1.0, 1.0, grid, -np.ones(5), grid.copy())
    with pytest.raises(ValueError):
        AuxFunction(0.5, 1.0, 1.0, grid, np.ones(5), grid + 1.0)
