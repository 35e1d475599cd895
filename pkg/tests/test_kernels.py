import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from besselharm.errors import AccuracyError, DomainError, SingularityError
from besselharm.kernels import (check_offdiagonal, evaluate_terms, expansion_terms, heat_closed, heat_deriv,
                                heat_deriv_batch, heat_schlafli, heat_spectral, poisson_kernel,
                                poisson_kernel_closed_1d, rho_deriv)

pos = st.floats(0.05, 20.0)
lams = st.sampled_from([0.0, 0.5, 1.3])


def _heat_mp(l, t, x, y):
    nu = l - 0.5
    return float((mpmath.mpf(x) * y) ** (-nu) / (2 * t) * mpmath.exp(-(x * x + y * y) / (4 * t))
                 * mpmath.besseli(nu, x * y / (2 * t)))


@given(lams, st.floats(1e-3, 1e3), pos, pos)
def test_heat_closed_vs_mpmath(l, t, x, y):
    got = heat_closed((l,), t, np.array([x]), np.array([y]))
    ref = _heat_mp(l, t, x, y)
    assert abs(got - ref) <= 1e-10 * ref + 1e-300


@given(st.floats(1e-2, 1e2), st.lists(pos, min_size=2, max_size=2), st.lists(pos, min_size=2, max_size=2))
def test_heat_symmetric_and_positive(t, x, y):
    a = heat_closed((0.5, 1.3), t, np.array(x), np.array(y))
    b = heat_closed((0.5, 1.3), t, np.array(y), np.array(x))
    assert a >= 0 and abs(a - b) <= 1e-13 * a


@pytest.mark.parametrize("l", [0.0, 0.5, 1.3])
def test_heat_conserves_mass(l):
    t, x = 0.7, 1.2
    m = integrate.quad(lambda y: heat_closed((l,), t, np.array([x]), np.array([y])) * y ** (2 * l), 0, 40,
                       epsabs=1e-14, limit=200)[0]
    assert abs(m - 1) < 1e-10


@pytest.mark.parametrize("lam", [(0.5,), (0.0, 1.3), (1.3, 0.5)])
def test_schlafli_and_spectral_routes(lam):
    rng = np.random.default_rng(4)
    for _ in range(5):
        x, y = rng.uniform(0.2, 3, (2, len(lam)))
        t = rng.uniform(0.05, 5)
        ref = heat_closed(lam, t, x, y)
        assert abs(heat_schlafli(lam, t, x, y) / ref - 1) < 1e-8
        assert abs(heat_spectral(lam, t, x, y) / ref - 1) < 1e-8


def test_spectral_route_refuses_small_t():
    from besselharm.hankel import make_plan
    plan = make_plan((0.5,))
    with pytest.raises(AccuracyError):
        heat_spectral((0.5,), 1e-4, [1.0], [2.0], plan=plan)


@pytest.mark.parametrize("m,k", [(1, 0), (2, 0), (0, 1), (1, 1), (3, 0), (0, 2)])
@pytest.mark.parametrize("l", [0.0, 0.5, 1.3])
def test_heat_deriv_vs_mpmath(l, m, k):
    t, x, y = 0.6, 1.1, 1.9
    f = lambda tt, xx: _heat_mp_mp(l, tt, xx, y)
    ref = float(mpmath.diff(f, (t, x), (k, m)))
    got = heat_deriv((l,), (m,), k, t, [x], [y])
    assert abs(got - ref) < 1e-8 * max(1.0, abs(ref))


def _heat_mp_mp(l, t, x, y):
    nu = l - 0.5
    return (x * y) ** (-nu) / (2 * t) * mpmath.exp(-(x * x + y * y) / (4 * t)) * mpmath.besseli(nu, x * y / (2 * t))


def test_heat_deriv_y_and_mixed_2d():
    lam, t, x, y = (0.5, 1.3), 0.8, np.array([1.0, 0.7]), np.array([1.6, 1.2])
    h = 1e-5
    e = np.array([0.0, h])
    fd = (heat_deriv(lam, (1, 0), 0, t, x, y + e) - heat_deriv(lam, (1, 0), 0, t, x, y - e)) / (2 * h)
    got = heat_deriv(lam, (1, 0), 0, t, x, y, y_deriv=(0, 1))
    assert abs(got - fd) < 1e-6 * abs(fd)


def test_batch_matches_reference():
    rng = np.random.default_rng(5)
    lam = (0.5, 1.3)
    X = rng.uniform(0.1, 4, (30, 2))
    Y = rng.uniform(0.1, 4, (30, 2))
    t = np.exp(rng.uniform(-3, 3, (30, 3)))
    for m, k, r in [((0, 0), 0, None), ((1, 0), 1, None), ((0, 2), 0, (1, 0))]:
        b = heat_deriv_batch(lam, m, k, t, X, Y, r=r)
        ref = np.array([[heat_deriv(lam, m, k, ti, x, y, y_deriv=r) for ti in trow]
                        for x, y, trow in zip(X, Y, t)])
        assert np.max(np.abs(b - ref) / np.maximum(np.abs(ref), 1e-300)) < 1e-5


def test_expansion_terms_vs_finite_differences():
    A = 1.8
    x, y, s, t = np.array([1.0, 0.5]), np.array([2.0, 1.5]), np.array([0.3, -0.4]), 0.9
    g = lambda tt, xx: tt ** (-A) * math.exp(-float(np.sum(xx * xx + y * y + 2 * xx * y * s)) / (4 * tt))
    h = 1e-4
    e0 = np.array([h, 0.0])
    fd = (g(t, x + e0) - g(t, x - e0)) / (2 * h)
    got = evaluate_terms(expansion_terms(A, (1, 0), 0), t, x, y, s)
    assert abs(got - fd) < 1e-6 * abs(fd)


@given(st.floats(0.05, 10), st.floats(0.05, 10), st.floats(0.05, 10))
def test_poisson_n1_lambda0_closed_form(t, x, y):
    got = poisson_kernel((0.0,), t, np.array([x]), np.array([y]))
    ref = poisson_kernel_closed_1d(t, x, y)
    assert abs(got - ref) < 1e-8 * ref


@pytest.mark.parametrize("l", [0.5, 1.3])
def test_poisson_subordination_vs_quad(l):
    t, x, y = 0.7, 1.0, 1.8
    f = lambda u: heat_closed((l,), t * t / (4 * u), np.array([x]), np.array([y])) * math.exp(-u) / math.sqrt(math.pi * u)
    ref = integrate.quad(f, 0, 1, limit=200)[0] + integrate.quad(f, 1, np.inf, limit=200)[0]
    assert abs(poisson_kernel((l,), t, [x], [y]) / ref - 1) < 1e-8


@pytest.mark.parametrize("k", [0, 1, 2])
def test_rho_deriv_vs_mpmath(k):
    rho = lambda t, s: t * s ** mpmath.mpf(-1.5) * mpmath.exp(-t * t / (4 * s)) / (2 * mpmath.sqrt(mpmath.pi))
    for t, s in [(0.5, 0.3), (2.0, 1.0), (1.0, 7.0)]:
        ref = float(mpmath.diff(lambda tt: rho(tt, s), t, k))
        assert abs(rho_deriv(k, t, s) - ref) < 1e-12 * max(1.0, abs(ref))


def test_diagonal_and_domain_errors():
    with pytest.raises(SingularityError):
        check_offdiagonal([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(DomainError):
        heat_closed((0.5,), -1.0, np.array([1.0]), np.array([2.0]))
    with pytest.raises(DomainError):
        heat_closed((0.5,), 1.0, np.array([-1.0]), np.array([2.0]))
