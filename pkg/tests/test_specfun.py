import math

import mpmath
import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given, strategies as st

from besselharm.errors import DomainError
from besselharm.specfun import (LambdaIndex, bessel_i, bessel_i_schlafli, bessel_j, decomp_axis, decomp_table,
                                exp_moment_direct, gamma_fn, itilde_scaled, jtilde, moment_table, omega_mass,
                                omega_rule, omega_rule_graded, phi, phi_1d)

NUS = [-0.5, 0.0, 0.3, 1.0, 1.8, 3.5]
US = np.array([0.0, 1e-8, 1e-3, 0.5, 3.0, 12.0, 40.0, 150.0])


def test_gamma_matches_math():
    for x in [0.1, 0.5, 1.0, 2.5, 7.3, 20.0]:
        assert abs(gamma_fn(x) / math.gamma(x) - 1) < 1e-13


def test_gamma_complex_matches_mpmath():
    z = complex(1.0, -0.7)
    ref = complex(mpmath.gamma(mpmath.mpc(1.0, -0.7)))
    assert abs(gamma_fn(z) - ref) < 1e-13 * abs(ref)


@pytest.mark.parametrize("nu", NUS)
def test_bessel_j_vs_scipy(nu):
    got = bessel_j(nu, US)
    ref = sp.jv(nu, US)
    assert np.allclose(got, ref, rtol=1e-11, atol=1e-14)


@pytest.mark.parametrize("nu", NUS)
def test_jtilde_value_at_zero(nu):
    assert abs(jtilde(nu, 0.0) - 1 / (2 ** nu * math.gamma(nu + 1))) < 1e-15


@pytest.mark.parametrize("nu", NUS)
def test_itilde_scaled_vs_mpmath(nu):
    for u in [1e-6, 0.2, 2.0, 17.0, 60.0, 300.0]:
        ref = float(mpmath.exp(-u) * mpmath.besseli(nu, u) * mpmath.mpf(u) ** (-nu))
        assert abs(itilde_scaled(nu, u) / ref - 1) < 1e-11


@pytest.mark.parametrize("nu", [0.0, 0.7, 2.0])
def test_bessel_i_scaled_vs_scipy(nu):
    u = np.array([0.1, 2.0, 30.0, 700.0])
    assert np.allclose(bessel_i(nu, u, scaled=True), sp.ive(nu, u), rtol=1e-11)


@pytest.mark.parametrize("nu", [0.0, 0.6, 1.5])
def test_schlafli_route_matches_series(nu):
    u = np.array([0.3, 2.0, 9.0])
    assert np.allclose(bessel_i_schlafli(nu, u), sp.iv(nu, u), rtol=1e-10)


def test_order_below_minus_half_rejected():
    with pytest.raises(DomainError):
        bessel_j(-0.7, 1.0)


@given(st.floats(0.0, 3.0))
def test_omega_rule_mass(eta):
    # below 1e-8 the rule is the eta -> 0 limit, off by O(eta)
    assert abs(omega_rule(eta).total - omega_mass(eta)) < (1e-12 + 2 * eta) * omega_mass(eta)


@given(st.floats(0.05, 3.0), st.floats(1e-6, 1.0))
def test_graded_rule_mass(eta, width):
    r = omega_rule_graded(eta, width)
    assert abs(r.total / omega_mass(eta) - 1) < 1e-10
    assert np.allclose(r.sigma, 1 + r.nodes, atol=1e-15)


def test_phi_normalised_at_origin():
    lam = LambdaIndex.of((0.5, 1.3))
    val = phi(lam, np.array([1e-9, 1e-9]), np.array([1.0, 2.0]))
    ref = np.prod([1 / (2 ** (l - 0.5) * math.gamma(l + 0.5)) for l in lam])
    assert abs(val / ref - 1) < 1e-12


@given(st.sampled_from([0.0, 0.5, 1.3, 2.2]), st.floats(0.05, 30.0))
def test_phi_1d_is_bessel_eigenfunction(l, u):
    # ODE: f'' + (2l/u) f' + f = 0 for f = phi_1d(l, u)
    h = 1e-3 * max(u, 1.0)
    f0, fp, fm = phi_1d(l, u), phi_1d(l, u + h), phi_1d(l, u - h) if u > h else None
    if fm is None:
        return
    d1 = (fp - fm) / (2 * h)
    d2 = (fp - 2 * f0 + fm) / h ** 2
    assert abs(d2 + 2 * l / u * d1 + f0) < 1e-4 * max(1.0, abs(d2))


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("l", [0.0, 0.5, 1.3])
def test_decomposition_matches_derivative(m, l):
    # d^m/dx^m phi^l(xz) against mpmath differentiation
    z = 1.7
    tab = decomp_axis(m, l)
    for x in [0.4, 1.1, 2.5]:
        f = lambda xx: (xx * z) ** (-l + 0.5) * mpmath.besselj(l - 0.5, xx * z)
        ref = float(mpmath.diff(f, x, m))
        got = z ** m * sum(c * (x * z) ** j * phi_1d(l + j, x * z) for j, c in dict(tab).items())
        assert abs(got - ref) < 1e-10 * max(1.0, abs(ref))


def test_decomp_table_multi_index():
    lam = LambdaIndex.of((0.5, 1.3))
    tab = decomp_table((1, 2), lam)
    assert set(tab.coefficients) <= {(a, b) for a in range(2) for b in range(3)}


@pytest.mark.parametrize("eta", [0.0, 0.5, 1.3])
def test_moment_table_vs_direct(eta):
    tab = moment_table(eta, 3)
    u = np.array([1e-3, 0.1, 1.0, 10.0, 300.0])
    got = tab.moments(u, 3)
    for i, ui in enumerate(u):
        for p in range(4):
            ref = exp_moment_direct(eta, ui, p)
            assert abs(got[i, p] / ref - 1) < 1e-6


@given(st.floats(0.0, 2.0), st.lists(st.floats(0.0, 3.0), min_size=1, max_size=3))
def test_lambda_index_roundtrip(a, vals):
    lam = LambdaIndex.of(vals)
    assert lam.n == len(vals)
    assert abs(lam.A - (len(vals) / 2 + sum(vals))) < 1e-12
    assert LambdaIndex.of(lam) == lam
