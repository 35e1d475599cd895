import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, special

from besselharm.errors import DomainError, UsageError
from besselharm.hankel import (GridFunction, annulus_bump, apply_multiplier, forward, make_band_limited, make_grid,
                               make_plan, smoothstep, synthesize)
from besselharm.specfun import phi_1d


@pytest.mark.parametrize("lam", [(0.0,), (0.5,), (1.3,), (0.5, 1.3), (0.0, 0.0)])
def test_plan_certificate(lam):
    assert make_plan(lam).certificate < 1e-8


@pytest.mark.parametrize("l", [0.0, 0.5, 1.3])
def test_transform_of_gaussian_vs_quad(l):
    # defining integral by adaptive quadrature at a few z
    plan = make_plan((l,))
    g = GridFunction(plan.grid, np.exp(-plan.grid.points()[..., 0] ** 2))
    z = np.array([[0.3], [1.0], [2.5]])
    got = synthesize(plan, g, z)
    for zi, v in zip(z[:, 0], got):
        ref = integrate.quad(lambda x: np.exp(-x * x) * phi_1d(l, zi * x) * x ** (2 * l), 0, 12,
                             epsabs=1e-14, limit=200)[0]
        assert abs(v - ref) < 1e-10


def test_band_limited_transform_is_its_bump():
    plan = make_plan((0.5, 1.3))
    f, bump = make_band_limited(plan, 1.0, 4.0)
    assert np.array_equal(bump.values, annulus_bump(plan.grid.points(), 1.0, 4.0))
    # f decays slowly in x, so the truncated grid loses a little of it
    err = (forward(plan, f) - bump).norm() / bump.norm()
    assert err < 1e-3


@given(st.floats(-0.5, 1.5))
def test_smoothstep_is_monotone_ramp(t):
    v = smoothstep(t)
    assert 0.0 <= v <= 1.0
    assert smoothstep(min(t + 0.01, 2.0)) >= v - 1e-15


def test_smoothstep_endpoints_flat():
    h = 1e-4
    assert smoothstep(h) < 1e-15 and 1 - smoothstep(1 - h) < 1e-15


def test_multiplier_one_is_identity():
    plan = make_plan((0.5,))
    f = GridFunction(plan.grid, np.exp(-plan.grid.points()[..., 0] ** 2))
    g = apply_multiplier(plan, lambda z: np.ones(z.shape[:-1]) if z.ndim > 1 else np.ones_like(z), f)
    assert (g - f).norm() / f.norm() < 1e-9


def test_grid_mismatch_rejected():
    plan = make_plan((0.5,))
    other = make_grid((1.3,))
    with pytest.raises(UsageError):
        forward(plan, GridFunction(other, np.ones(other.shape)))
    with pytest.raises(UsageError):
        make_plan((0.5,), other)


def test_synthesize_rejects_boundary_points():
    plan = make_plan((0.5,))
    with pytest.raises(DomainError):
        synthesize(plan, GridFunction(plan.grid, np.ones(plan.grid.shape)), [[0.0]])


def test_csv_roundtrip():
    plan = make_plan((0.5, 1.3))
    f = GridFunction(plan.grid, np.exp(-np.sum(plan.grid.points() ** 2, axis=-1)))
    g = GridFunction.from_csv(plan.grid, f.to_csv())
    assert np.array_equal(f.values, g.values)


def test_inner_product_is_unitary():
    plan = make_plan((1.3,))
    x = plan.grid.points()[..., 0]
    f = GridFunction(plan.grid, np.exp(-x ** 2))
    g = GridFunction(plan.grid, x ** 2 * np.exp(-0.7 * x ** 2))
    fh, gh = forward(plan, f), forward(plan, g)
    assert abs(f.inner(g) - fh.inner(gh)) < 1e-10 * abs(f.inner(g))
