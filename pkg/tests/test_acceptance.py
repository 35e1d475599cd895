"""Acceptance criteria 1-13 at their pinned tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.  Run directly (python tests/test_acceptance.py) for the
lines alone.
"""

import math
import sys
import time

import numpy as np
import pytest
from scipy import integrate

from besselharm import operators as op
from besselharm import verifier as V
from besselharm.config import STANDARD_ESTIMATES
from besselharm.hankel import GridFunction, make_plan
from besselharm.specfun import phi_1d

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:          # run as a script from another directory
    ACCEPTANCE_LINES = []

N11_LAMBDA = (0.5, 1.3)
N11_COUNT = 10000


def record(num, name, value, tol, ok, note=""):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {num:2d}  {name}: {value:.3e} (tol {tol:g}){note}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def info(num, text):
    line = f"INFO  criterion {num:2d}  {text}"
    print(line)
    ACCEPTANCE_LINES.append(line)


def test_01_involution_and_plancherel():
    inv, pl = V.involution_suite(ns=(1, 2), tol=1e-6)
    ok = record(1, "Hankel involution", inv.max_ratio, 1e-6, inv.passed, f" over {inv.params['count']} members")
    ok &= record(1, "Plancherel", pl.max_ratio, 1e-6, pl.passed)
    assert inv.params["count"] == 12 * (3 + 9)
    assert ok


def test_02_gaussian_self_reciprocity():
    r = V.self_reciprocity_suite(tol=1e-8)
    # independent oracle: the defining integral by adaptive quadrature
    worst = 0.0
    for l in V.LAMBDA_SET:
        for z in (0.3, 1.0, 2.0, 3.5):
            q = integrate.quad(lambda x: math.exp(-x * x / 2) * phi_1d(l, z * x) * x ** (2 * l), 0, 40,
                               epsabs=1e-15, limit=400)[0]
            worst = max(worst, abs(q - math.exp(-z * z / 2)))
    ok = record(2, "Gaussian self-reciprocity", r.max_ratio, 1e-8, r.passed)
    ok &= record(2, "quadrature oracle of the defining integral", worst, 1e-8, worst <= 1e-8)
    assert ok


def test_03_three_route_heat_kernel():
    r = V.three_route_suite(count=500, tol=1e-6)
    assert record(3, "closed / Schlafli / spectral spread", r.max_ratio, 1e-6, r.passed)


def test_04_chapman_kolmogorov():
    r = V.chapman_kolmogorov_suite(count=100, tol=1e-5)
    assert record(4, "semigroup composition", r.max_ratio, 1e-5, r.passed)


def test_05_eigenfunction_identity():
    r = V.eigenfunction_suite(count=200, tol=1e-6)
    assert record(5, "Bessel-Laplacian eigenfunction (Richardson)", r.max_ratio, 1e-6, r.passed)


def test_06_poisson_closed_form():
    r = V.poisson_closed_suite(count=200, tol=1e-6)
    assert record(6, "Poisson subordination vs closed form", r.max_ratio, 1e-6, r.passed)


def test_07_exact_g_constant():
    r = V.g_constant_suite(ns=(1, 2), tol=1e-4)
    assert record(7, "||g_{0,1,2}(f)|| / ||f|| - 1/2 (relative)", r.max_ratio, 1e-4, r.passed,
                  f" over {r.params['count']} members")


def test_08_multiplier_identities():
    ident, norm = V.multiplier_suite(ns=(1, 2))
    ok = record(8, "psi = 1 gives the identity", ident.max_ratio, 1e-8, ident.passed)
    ok &= record(8, "imaginary power preserves norms", norm.max_ratio, 1e-6, norm.passed)
    assert ok


def test_09_theta_lemma():
    r = V.theta_suite(n=2, count=100000)
    viol = r.extra["violations"]
    assert record(9, "theta inequality violations (of 1e5)", viol, 0, r.passed and viol == 0)


def test_10_estexp_finiteness():
    worst, bad, total = 0.0, [], 0
    for lam in [(0.0,), (0.5,), (1.3,), (0.0, 0.0), (0.5, 1.3)]:
        for rep in V.verify_estexp(lam, V.estexp_cases(len(lam))):
            total += 1
            worst = max(worst, rep.drift)
            if not (rep.converged and np.isfinite(rep.max_ratio)):
                bad.append((lam, rep.estimate_id))
    assert record(10, f"max refinement drift over {total} cases", worst, 0.5, not bad and worst < 0.5)


@pytest.fixture(scope="module")
def standard_reports():
    t0 = time.time()
    reps = [V.standard_estimate(eid, N11_LAMBDA, count=N11_COUNT, seed=0) for eid in STANDARD_ESTIMATES]
    info(11, f"20 estimates at n = 2, lambda = {N11_LAMBDA}, {N11_COUNT} samples each, {time.time() - t0:.0f} s")
    return reps


def test_11_standard_estimates(standard_reports):
    assert len(standard_reports) == 20
    ok = True
    for r in standard_reports:
        trend = [k for k, v in r.trend.items() if v]
        note = f" constant {r.max_ratio:.4g}" + (f", trend in {trend}" if trend else "")
        ok &= record(11, f"{r.estimate_id} drift", r.drift, 0.5, r.converged and r.sample_count == N11_COUNT, note)
    assert ok


def test_12_duality():
    r = V.duality_suite(count=20, tol=1e-3)
    kinds = sorted({d["operator"] for d in r.extra["records"]})
    assert record(12, f"<T f, g> vs kernel double integral ({', '.join(kinds)}, 20 pairs)", r.max_ratio, 1e-3,
                  r.passed)


def test_13_limits():
    lo, hi = V.limits_suite()
    ok = record(13, "|W_t f - f| / ||f||_inf at t_min", lo.max_ratio, 1e-3, lo.passed)
    ok &= record(13, "|W_t f| / ||f||_inf at t_max", hi.max_ratio, 1e-6, hi.passed)
    # informational: the Gaussian family decays only like (1 + 4t)^{-A} at t_max
    tr = op.TimeRule()
    for lam in [(0.0,), (1.3, 1.3)]:
        plan = make_plan(lam)
        f = V.gaussian_family(plan.grid)[0]
        w = op.semigroup_grid(plan, "W", tr.t_max, f)
        info(13, f"Gaussian e^(-|x|^2/2), lambda = {lam}: |W_t f| / ||f||_inf at t_max = "
                 f"{np.max(np.abs(w.values)) / np.max(np.abs(f.values)):.2e}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
