import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, optimize

from besselharm import operators as op
from besselharm.errors import DomainError, ParameterError, SingularityError, UsageError
from besselharm.hankel import GridFunction, make_band_limited, make_plan, synthesize
from besselharm.kernels import heat_closed, heat_deriv, rho_deriv
from besselharm.specfun import LambdaIndex


def _gauss_pair(plan):
    f = GridFunction(plan.grid, np.exp(-np.sum(plan.grid.points() ** 2, axis=-1)))
    return f, GridFunction(plan.grid, plan.apply(f.values))


def _heat_gauss(A, t, r2):
    return (1 + 4 * t) ** (-A) * np.exp(-r2 / (1 + 4 * t))


def test_time_rule_integrates_power():
    tr = op.TimeRule(1e-2, 1e2, 400)
    # int t^{-1} e^{-t} ... smooth in log t: int_{1e-2}^{1e2} e^{-t} dt
    ref = math.exp(-1e-2) - math.exp(-1e2)
    assert abs(tr.integrate(np.exp(-tr.nodes)) - ref) < 1e-5
    assert tr.refined().count == 799
    with pytest.raises(DomainError):
        op.TimeRule(1.0, 0.5)


def test_banach_norms():
    tr = op.TimeRule(1e-3, 1e3, 300)
    v = tr.nodes * np.exp(-tr.nodes)        # peak 1/e at t = 1
    assert abs(op.banach_norm(op.BanachTag.c0(), v, tr.nodes) - 1 / math.e) < 1e-5
    tag = op.BanachTag("LrPower", 2.0, 1.0)
    ref = math.sqrt(integrate.quad(lambda t: t * (t * math.exp(-t)) ** 2, 1e-3, 1e3, points=[1, 10])[0])
    assert abs(op.banach_norm(tag, v, tr.nodes, tr.weights) / ref - 1) < 1e-4
    with pytest.raises(ParameterError):
        op.BanachTag("LrPower", 1.5)


@given(st.floats(1e-2, 30.0))
def test_multiplier_values_closed_forms(z):
    zabs = np.array([z])
    e = op.multiplier_values(op.LaplaceSymbol.exponential(), zabs)
    assert abs(e[0] - z * z / (1 + z * z)) < 1e-12
    ip = op.multiplier_values(op.LaplaceSymbol.imaginary_power(0.5), zabs)
    assert abs(ip[0] - z ** (2 * 0.5j)) < 1e-9
    one = op.multiplier_values(op.LaplaceSymbol.constant(), zabs)
    assert abs(one[0] - 1) < 1e-12 or z < 0.1


@pytest.mark.parametrize("lam", [(0.5,), (0.0, 1.3)])
def test_heat_semigroup_on_gaussian(lam):
    plan = make_plan(lam)
    pair = _gauss_pair(plan)
    A = LambdaIndex.of(lam).A
    pts = np.array([[0.4] * len(lam), [1.5] * len(lam)])
    ts = np.array([1e-3, 0.1, 2.0, 50.0])
    got = op.semigroup_apply(lam, "W", ts, pair, pts, plan=plan)
    ref = _heat_gauss(A, ts[None, :], np.sum(pts ** 2, axis=1)[:, None])
    assert np.max(np.abs(got - ref)) < 1e-8


def test_poisson_semigroup_on_gaussian():
    lam = (1.3,)
    plan = make_plan(lam)
    pair = _gauss_pair(plan)
    A = 1.8
    x, t = 0.8, 0.6
    f = lambda v: _heat_gauss(A, math.exp(v), x * x) * rho_deriv(0, t, math.exp(v)) * math.exp(v)
    ref = integrate.quad(f, -30, 30, limit=400)[0]
    got = op.semigroup_apply(lam, "P", t, pair, [[x]], plan=plan)[0]
    assert abs(got - ref) < 1e-8


def test_maximal_on_gaussian():
    lam = (0.5, 0.5)
    plan = make_plan(lam)
    pair = _gauss_pair(plan)
    x = np.array([1.2, 0.9])
    A, r2 = 2.0, float(np.sum(x ** 2))
    res = optimize.minimize_scalar(lambda v: -_heat_gauss(A, math.exp(v), r2), bounds=(-9.2, 9.2),
                                   method="bounded", options={"xatol": 1e-10})
    ref = max(-res.fun, _heat_gauss(A, 1e-4, r2))
    assert abs(op.maximal(lam, "W", pair, x, plan=plan) / ref - 1) < 1e-4


def test_g_function_on_gaussian():
    lam = (0.5,)
    plan = make_plan(lam)
    pair = _gauss_pair(plan)
    A, x = 1.0, 0.7
    tr = op.TimeRule(1e-4, 1e4, 200)

    def dt(t):
        u = 1 + 4 * t
        return 4 * u ** (-A) * math.exp(-x * x / u) * (-A / u + x * x / u ** 2)

    # gamma = 2k + |m| - 1 = 1 for r = 2, k = 1, m = 0
    ref = math.sqrt(integrate.quad(lambda v: math.exp(2 * v) * dt(math.exp(v)) ** 2, math.log(1e-4),
                                   math.log(1e4), limit=200)[0])
    got = op.g_function(lam, (0,), 1, 2, "W", pair, [x], trule=tr, plan=plan)
    assert abs(got / ref - 1) < 1e-5


def test_g_function_rejects_bad_parameters():
    plan = make_plan((0.5,))
    with pytest.raises(ParameterError):
        op.g_function_grid(plan, (0,), 0, 2, _gauss_pair(plan))
    with pytest.raises(ParameterError):
        op.g_function_grid(plan, (0,), 1, 1.5, _gauss_pair(plan))


def test_g_function_routes_agree_at_large_t():
    plan = make_plan((0.5,))
    pair = make_band_limited(plan, 0.8, 3.0)
    tr = op.TimeRule(0.2, 20.0, 40)
    a = op.g_function_grid(plan, (0,), 1, 2, pair, tr, route="kernel")
    b = op.g_function_grid(plan, (0,), 1, 2, pair, tr, route="spectral")
    # the kernel route only sees f on (0, Z_max]
    assert op.l2_norm(plan, a - b) < 1e-4 * op.l2_norm(plan, b)


def test_riesz_matches_derivative_of_multiplier():
    lam = (0.5,)
    plan = make_plan(lam)
    f, fh = make_band_limited(plan, 0.8, 4.0)
    R = op.riesz_spectral(plan, (1,), (f, fh))
    zabs = plan.grid.nodes[0]
    g = GridFunction(plan.grid, fh.values / zabs)
    x = np.array([0.3, 1.0, 2.2])
    h = 1e-4
    fd = (synthesize(plan, g, (x + h)[:, None]) - synthesize(plan, g, (x - h)[:, None])) / (2 * h)
    at = op.riesz_spectral_at(plan, (1,), (f, fh), x[:, None])
    assert np.max(np.abs(at - fd)) < 1e-4 * np.max(np.abs(fd))
    # grid values agree with point evaluation at the nodes
    nodes = plan.grid.nodes[0][[10, 40]][:, None]
    assert np.allclose(op.riesz_spectral_at(plan, (1,), (f, fh), nodes), R.values[[10, 40]], atol=1e-10)


def test_riesz_needs_nonzero_m():
    plan = make_plan((0.5,))
    with pytest.raises(ParameterError):
        op.riesz_spectral(plan, (0,), _gauss_pair(plan))


def _log_t_quad(fn, d2):
    lo, hi = math.log(d2) - 12, math.log(d2) + 30
    return sum(integrate.quad(fn, a, b, limit=200, epsabs=0, epsrel=1e-11)[0]
               for a, b in [(lo, math.log(d2)), (math.log(d2), hi)])


def test_laplace_kernel_vs_quadrature():
    lam = (0.5, 1.3)
    x, y = np.array([1.0, 0.8]), np.array([1.7, 1.1])
    d2 = float(np.sum((x - y) ** 2))
    ref = -_log_t_quad(lambda v: math.exp(v) * math.exp(-math.exp(v)) * heat_deriv(lam, (0, 0), 1, math.exp(v), x, y), d2)
    got = op.laplace_multiplier_kernel(lam, op.LaplaceSymbol.exponential(), x, y)
    assert abs(got / ref - 1) < 1e-6


def test_riesz_kernel_vs_quadrature():
    lam = (0.5,)
    x, y = np.array([1.0]), np.array([1.6])
    ref = _log_t_quad(lambda v: math.exp(v) ** 0.5 * heat_deriv(lam, (1,), 0, math.exp(v), x, y), 0.36)
    ref /= math.gamma(0.5)
    got = op.riesz_kernel(lam, (1,), x, y)
    assert abs(got / ref - 1) < 1e-6


def test_kernels_singular_on_diagonal():
    with pytest.raises(SingularityError):
        op.riesz_kernel((0.5,), (1,), [1.0], [1.0])
    with pytest.raises(SingularityError):
        op.laplace_multiplier_kernel((0.5,), op.LaplaceSymbol.exponential(), [1.0], [1.0])


def test_heat_family_norm_is_sup_in_t():
    lam = (0.5,)
    X, Y = np.array([[1.0], [0.3]]), np.array([[1.5], [2.0]])
    spec = op.family("heat", lam)
    got = op.family_norms(spec, lam, X, Y, step=0.1)
    for x, y, g in zip(X, Y, got):
        res = optimize.minimize_scalar(lambda v: -heat_closed(lam, math.exp(v), x, y), bounds=(-10, 10),
                                       method="bounded", options={"xatol": 1e-10})
        assert abs(g / -res.fun - 1) < 1e-4


def test_semigroup_apply_needs_plan_and_positive_time():
    plan = make_plan((0.5,))
    with pytest.raises(UsageError):
        op.semigroup_apply((0.5,), "W", 1.0, _gauss_pair(plan), [[1.0]])
    with pytest.raises(DomainError):
        op.semigroup_apply((0.5,), "W", -1.0, _gauss_pair(plan), [[1.0]], plan=plan)
