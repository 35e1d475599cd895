"""Heat and Poisson kernels of the Bessel operator and their derivatives.

Three routes to the heat kernel are provided and cross-checked: the product
of scaled modified Bessel functions, the Schlafli integral over Omega_lambda
and the spectral integral against the eigenfunctions.  Derivatives come from
an exact symbolic expansion of d_t^k d_x^m d_y^r (t^{-A} e^{-q/4t}).
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import product
import math

import numpy as np
from numpy.polynomial import hermite as H

from .errors import AccuracyError, DomainError, SingularityError
from .quadrature import gauss_laguerre, gauss_legendre
from .specfun import (LambdaIndex, OmegaRuleN, itilde_scaled, moment_table,
                      omega_rule_graded, phi_1d)


def _pts(a, name="x"):
    a = np.asarray(a, dtype=float)
    if np.any(~(a > 0)):
        raise DomainError(f"{name} must lie in the open positive orthant")
    return a


def _time(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError("t must be positive")
    return t


# ---------------------------------------------------------------------------
# heat kernel, three routes

def heat_closed(lam, t, x, y):
    """W_t(x, y) from the product of exponentially scaled I_{lambda_i - 1/2}.

    x and y broadcast with coordinates on the last axis; t broadcasts against
    the remaining axes.
    """
    lam = LambdaIndex.of(lam)
    t = _time(t)
    x, y = _pts(x), _pts(y, "y")
    x, y = np.broadcast_arrays(x, y)
    out = np.ones(np.broadcast(x[..., 0], t).shape)
    for i, l in enumerate(lam):
        xi, yi = x[..., i], y[..., i]
        u = xi * yi / (2 * t)
        out = out * (2 * t) ** (-0.5 - l) * itilde_scaled(l - 0.5, u) * np.exp(-(xi - yi) ** 2 / (4 * t))
    return out


def adapted_omega(lam, t, x, y, order=24):
    """Per-axis Omega rules graded on the scale 2t / (x_i y_i)."""
    lam = LambdaIndex.of(lam)
    return OmegaRuleN(tuple(omega_rule_graded(l, 2 * t / (xi * yi), order)
                            for l, xi, yi in zip(lam, x, y)))


def heat_schlafli(lam, t, x, y, omega=None):
    """(2t)^{-n/2-|lambda|} int exp(-q/4t) dOmega_lambda(s) for a single (t, x, y).

    The Gaussian factor e^{-|x-y|^2/4t} is pulled out so the quadrature only
    sees the bounded factor e^{-sum x_i y_i (1 + s_i) / 2t}.
    """
    lam = LambdaIndex.of(lam)
    t = float(_time(t))
    x, y = _pts(x).reshape(-1), _pts(y, "y").reshape(-1)
    if omega is None:
        omega = adapted_omega(lam, t, x, y)
    _, sig, w = omega.tensor()
    inner = np.sum(w * np.exp(-(sig @ (x * y)) / (2 * t)))
    return float((2 * t) ** (-lam.A) * math.exp(-np.sum((x - y) ** 2) / (4 * t)) * inner)


@dataclass(frozen=True)
class SpectralRule:
    nodes: np.ndarray
    weights: np.ndarray
    zmax: float


def spectral_rule(zmax, order):
    x, w = gauss_legendre(int(order))
    return SpectralRule(0.5 * zmax * (x + 1), 0.5 * zmax * w, float(zmax))


def spectral_t_min(zmax, tol=1e-10):
    """Smallest t for which e^{-t Z_max^2} is below ``tol``."""
    return -math.log(tol) / zmax ** 2


def heat_spectral(lam, t, x, y, plan=None):
    """int e^{-t|z|^2} phi_z(x) phi_z(y) dmu_lambda(z) by per-axis quadrature.

    The integral factorises over coordinates.  With a ``plan`` (a
    TransformPlan or SpectralRule) its z-nodes are used and t must be large
    enough for e^{-t|z|^2} to be negligible at Z_max; otherwise a rule is
    sized from t and the oscillation frequency.
    """
    lam = LambdaIndex.of(lam)
    t = float(_time(t))
    x, y = _pts(x).reshape(-1), _pts(y, "y").reshape(-1)
    if plan is None:
        zmax = math.sqrt(-math.log(1e-17) / t)
        order = int(max(64, 1.2 * zmax * (x.max() + y.max()) / math.pi + 60))
        rules = [spectral_rule(zmax, order)] * lam.n
    elif isinstance(plan, SpectralRule):
        rules = [plan] * lam.n
    else:
        g = plan.grid
        rules = [SpectralRule(z, w, g.zmax) for z, w in zip(g.nodes, _unit_weights(g))]
    out = 1.0
    for i, l in enumerate(lam):
        r = rules[i]
        if t < spectral_t_min(r.zmax):
            raise AccuracyError(f"t = {t:g} is below the resolution of the spectral rule "
                                f"(t_min = {spectral_t_min(r.zmax):.3g})")
        z = r.nodes
        f = np.exp(-t * z * z) * phi_1d(l, x[i] * z) * phi_1d(l, y[i] * z) * z ** (2 * l)
        out *= float(np.sum(r.weights * f))
    return out


def _unit_weights(grid):
    return [w / z ** (2 * l) for w, z, l in zip(grid.weights, grid.nodes, grid.lam)]


# ---------------------------------------------------------------------------
# symbolic derivative expansion

@dataclass(frozen=True)
class ExpansionTerm:
    """coeff_poly(s) * t^{-A-offset} * q^j * prod (d_{x_i} q)^{M_i} (d_{y_i} q)^{R_i} * e^{-q/4t}.

    ``coeff_poly`` maps exponent tuples of s to exact rationals.
    """

    A: Fraction
    offset: Fraction
    q_power: int
    dq_x_powers: tuple
    dq_y_powers: tuple
    coeff_poly: tuple

    @property
    def t_exponent(self):
        return -(self.A + self.offset)

    def poly(self):
        return dict(self.coeff_poly)

    def evaluate(self, t, x, y, s):
        """Numerical value at arrays x, y, s (coordinates last) and t."""
        x, y, s = (np.asarray(a, dtype=float) for a in (x, y, s))
        q = np.sum(x * x + y * y + 2 * x * y * s, axis=-1)
        P = 2 * x + 2 * y * s
        Q = 2 * y + 2 * x * s
        c = 0.0
        for e, v in self.coeff_poly:
            c = c + float(v) * np.prod(s ** np.array(e), axis=-1)
        val = c * q ** self.q_power * np.prod(P ** np.array(self.dq_x_powers), axis=-1) \
            * np.prod(Q ** np.array(self.dq_y_powers), axis=-1)
        return val * t ** float(self.t_exponent) * np.exp(-q / (4 * t))


def _padd(d, key, v):
    nv = d.get(key, 0) + v
    if nv == 0:
        d.pop(key, None)
    else:
        d[key] = nv


def _shift(e, i, by=1):
    e = list(e)
    e[i] += by
    return tuple(e)


def _merge(terms):
    out = {}
    for key, poly in terms:
        acc = out.setdefault(key, {})
        for e, v in poly.items():
            _padd(acc, e, v)
    return [(k, p) for k, p in out.items() if p]


@lru_cache(maxsize=2048)
def _expansion(A, m, k, r):
    n = len(m)
    zero = (0,) * n
    # key: (offset, j, M, R)
    terms = [((Fraction(0), 0, zero, zero), {zero: Fraction(1)})]
    for i in range(n):
        for which, count in (("x", m[i]), ("y", r[i])):
            for _ in range(count):
                new = []
                for (off, j, M, R), poly in terms:
                    own, other = (M, R) if which == "x" else (R, M)
                    # derivative of the exponential
                    d1 = {e: -v / 4 for e, v in poly.items()}
                    own1 = _shift(own, i)
                    key = (off + 1, j) + ((own1, other) if which == "x" else (other, own1))
                    new.append((key, d1))
                    # derivative of the own-type factor: d(dq)/d(same variable) = 2
                    if own[i]:
                        d2 = {e: 2 * own[i] * v for e, v in poly.items()}
                        own2 = _shift(own, i, -1)
                        key = (off, j) + ((own2, other) if which == "x" else (other, own2))
                        new.append((key, d2))
                    # derivative of the other-type factor: 2 s_i
                    if other[i]:
                        d3 = {_shift(e, i): 2 * other[i] * v for e, v in poly.items()}
                        oth2 = _shift(other, i, -1)
                        key = (off, j) + ((own, oth2) if which == "x" else (oth2, own))
                        new.append((key, d3))
                terms = _merge(new)
    for _ in range(k):
        new = []
        for (off, j, M, R), poly in terms:
            B = A + off
            new.append(((off + 1, j, M, R), {e: -B * v for e, v in poly.items()}))
            new.append(((off + 2, j + 1, M, R), {e: v / 4 for e, v in poly.items()}))
        terms = _merge(new)
    return tuple(ExpansionTerm(A, off, j, M, R, tuple(sorted(p.items())))
                 for (off, j, M, R), p in sorted(terms, key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], kv[0][3])))


def _multi(m, n=None):
    m = tuple(int(v) for v in np.atleast_1d(m))
    if n is not None and len(m) == 1 and n > 1:
        m = m * n
    if any(v < 0 for v in m):
        raise DomainError("derivative orders must be nonnegative")
    return m


def expansion_terms(A, m, k, r=None):
    """Terms whose sum is d_t^k d_x^m d_y^r (t^{-A} e^{-q(x,y,s)/4t})."""
    if not A > 0:
        raise DomainError("A must be positive")
    m = _multi(m)
    r = (0,) * len(m) if r is None else _multi(r, len(m))
    if len(r) != len(m):
        raise DomainError("m and r have different lengths")
    if int(k) < 0:
        raise DomainError("k must be nonnegative")
    return list(_expansion(Fraction(A), m, int(k), r))


def evaluate_terms(terms, t, x, y, s):
    return sum(term.evaluate(t, x, y, s) for term in terms)


def heat_deriv(lam, m, k, t, x, y, omega=None, y_deriv=None):
    """d_x^m d_y^{y_deriv} d_t^k W_t(x, y) by integrating the expansion over Omega_lambda.

    This is the reference path; ``heat_deriv_batch`` is the vectorised one.
    """
    lam = LambdaIndex.of(lam)
    t = float(_time(t))
    x, y = _pts(x).reshape(-1), _pts(y, "y").reshape(-1)
    m = _multi(m, lam.n)
    r = (0,) * lam.n if y_deriv is None else _multi(y_deriv, lam.n)
    if omega is None:
        omega = adapted_omega(lam, t, x, y, order=32)
    s, sig, w = omega.tensor()
    terms = expansion_terms(lam.A, m, k, r)
    d2 = float(np.sum((x - y) ** 2))
    qsh = 2 * (sig @ (x * y))          # q - |x-y|^2, accurate near s = -1
    q = d2 + qsh
    P = 2 * (x - y) + 2 * y * sig
    Q = 2 * (y - x) + 2 * x * sig
    e = np.exp(-qsh / (4 * t))
    total = np.zeros_like(q)
    for term in terms:
        c = np.zeros_like(q)
        for ex, v in term.coeff_poly:
            c = c + float(v) * np.prod(s ** np.array(ex), axis=-1)
        val = c * q ** term.q_power * np.prod(P ** np.array(term.dq_x_powers), axis=-1) \
            * np.prod(Q ** np.array(term.dq_y_powers), axis=-1)
        total = total + val * t ** float(term.t_exponent)
    return float(2.0 ** (-lam.A) * math.exp(-d2 / (4 * t)) * np.sum(w * e * total))


# ---------------------------------------------------------------------------
# batched derivatives through exponential moments

def _pmul(a, b):
    """Multiply polynomial coefficient arrays along the last axis (ascending)."""
    out = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (a.shape[-1] + b.shape[-1] - 1,))
    for i in range(a.shape[-1]):
        out[..., i:i + b.shape[-1]] += a[..., i:i + 1] * b
    return out


def _ppow(a, k):
    out = np.ones(a.shape[:-1] + (1,))
    for _ in range(k):
        out = _pmul(out, a)
    return out


@lru_cache(maxsize=512)
def _axis_terms(lam_i, m, k, r):
    A = Fraction(lam_i) + Fraction(1, 2)
    return _expansion(A, (m,), k, (r,))


def _axis_sigma_coeffs(lam_i, m, k, r, x, y):
    """Per-pair sigma-polynomial coefficients grouped by t-offset.

    Returns (offsets, C) with C of shape (N, n_offsets, deg+1).
    """
    terms = _axis_terms(lam_i, m, k, r)
    d = x - y
    one = np.ones_like(x)[:, None]
    qpoly = np.stack([d * d, 2 * x * y], axis=-1)
    Ppoly = np.stack([2 * d, 2 * y], axis=-1)
    Qpoly = np.stack([-2 * d, 2 * x], axis=-1)
    spoly = np.stack([-np.ones_like(x), np.ones_like(x)], axis=-1)
    offsets = sorted({term.offset for term in terms})
    polys = {o: None for o in offsets}
    for term in terms:
        c = np.zeros((len(x), 1))
        for (e,), v in term.coeff_poly:
            c = _padd_poly(c, float(v) * _ppow(spoly, e))
        p = _pmul(_pmul(_pmul(c, _ppow(qpoly, term.q_power)),
                        _ppow(Ppoly, term.dq_x_powers[0])), _ppow(Qpoly, term.dq_y_powers[0]))
        polys[term.offset] = p if polys[term.offset] is None else _padd_poly(polys[term.offset], p)
    deg = max(p.shape[-1] for p in polys.values())
    C = np.zeros((len(x), len(offsets), deg))
    for i, o in enumerate(offsets):
        C[:, i, : polys[o].shape[-1]] = polys[o]
    del one
    return np.array([float(o) for o in offsets]), C


def _padd_poly(a, b):
    n = max(a.shape[-1], b.shape[-1])
    out = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (n,))
    out[..., : a.shape[-1]] += a
    out[..., : b.shape[-1]] += b
    return out


def heat_axis_deriv(lam_i, m, k, r, x, y, t, table_step=None):
    """d_t^k d_x^m d_y^r of the one-dimensional factor (2t)^{-1/2-l} int e^{-q/4t} dOmega_l.

    x, y: shape (N,); t: shape (N, T).  Returns shape (N, T).
    """
    offsets, C = _axis_sigma_coeffs(lam_i, m, k, r, x, y)
    A = lam_i + 0.5
    pm = max(C.shape[-1] - 1, 0)
    tab = moment_table(lam_i, pm) if table_step is None else moment_table(lam_i, pm, table_step)
    u = (x * y)[:, None] / (2 * t)
    logN = tab.log_moments(u, C.shape[-1] - 1)                     # (N, T, P)
    lt = np.log(t)
    base = logN - (((x - y) ** 2)[:, None] / (4 * t) + A * lt + A * math.log(2))[..., None]
    G = np.exp(base)
    out = np.zeros(t.shape)
    for i, o in enumerate(offsets):
        out += np.exp(-o * lt) * np.einsum("ntp,np->nt", G, C[:, i, :])
    return out


def _compositions(k, n):
    if n == 1:
        yield (k,)
        return
    for a in range(k + 1):
        for rest in _compositions(k - a, n - 1):
            yield (a,) + rest


def heat_deriv_batch(lam, m, k, t, X, Y, r=None, table_step=None):
    """Batched d_x^m d_y^r d_t^k W_t(x, y).

    X, Y: shape (N, n); t: shape (N, T) (one time grid per pair).
    The kernel factorises over axes; time derivatives are distributed with
    the Leibniz rule.
    """
    lam = LambdaIndex.of(lam)
    X, Y = np.atleast_2d(X), np.atleast_2d(Y)
    t = np.asarray(t, dtype=float)
    if t.ndim == 1:
        t = np.broadcast_to(t, (X.shape[0], t.size))
    m = _multi(m, lam.n)
    r = (0,) * lam.n if r is None else _multi(r, lam.n)
    cache = {}

    def axis(i, ki):
        key = (i, ki)
        if key not in cache:
            cache[key] = heat_axis_deriv(lam[i], m[i], ki, r[i], X[:, i], Y[:, i], t, table_step)
        return cache[key]

    out = np.zeros(t.shape)
    for comp in _compositions(int(k), lam.n):
        coef = math.factorial(k)
        val = np.ones(t.shape)
        for i, ki in enumerate(comp):
            coef //= math.factorial(ki)
            val = val * axis(i, ki)
        out += coef * val
    return out


# ---------------------------------------------------------------------------
# Poisson kernel by subordination

@dataclass(frozen=True)
class SubordinationRule:
    """Nodes u_k and weights for int_0^inf F(u) e^{-u} du / sqrt(pi u)."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str


def log_subordination_rule(step=0.2, lo=-46.0, hi=4.3):
    v = np.arange(lo, hi + step / 2, step)
    u = np.exp(v)
    w = step * np.sqrt(u / math.pi) * np.exp(-u)
    return SubordinationRule(u, w, "log-trapezoid")


def laguerre_subordination_rule(order=64):
    u, w = gauss_laguerre(order, -0.5)
    return SubordinationRule(np.array(u), np.array(w) / math.sqrt(math.pi), "gauss-laguerre")


DEFAULT_U_RULE = log_subordination_rule()


def poisson_kernel(lam, t, x, y, u_rule=None):
    """P_t(x, y) = int_0^inf W_{t^2/4u}(x, y) e^{-u} du / sqrt(pi u)."""
    lam = LambdaIndex.of(lam)
    t = _time(t)
    x, y = _pts(x), _pts(y, "y")
    rule = DEFAULT_U_RULE if u_rule is None else u_rule
    tt = t[..., None] ** 2 / (4 * rule.nodes)
    W = heat_closed(lam, tt, x[..., None, :], y[..., None, :])
    return np.sum(W * rule.weights, axis=-1)


def rho_deriv(k, t, s):
    """d_t^k of the subordination density t s^{-3/2} e^{-t^2/4s} / (2 sqrt(pi))."""
    t, s = np.asarray(t, dtype=float), np.asarray(s, dtype=float)
    tau = t / (2 * np.sqrt(s))
    c = np.zeros(k + 2)
    c[k + 1] = 1.0
    herm = H.hermval(tau, c)
    return (s ** -1.5 / (2 * math.sqrt(math.pi)) * (2 * np.sqrt(s)) ** (1 - k)
            * (-0.5) * (-1) ** (k + 1) * herm * np.exp(-tau * tau))


def poisson_kernel_closed_1d(t, x, y):
    """n = 1, lambda = 0: (t/pi) [1/(t^2+(x-y)^2) + 1/(t^2+(x+y)^2)]."""
    t, x, y = (np.asarray(a, dtype=float) for a in (t, x, y))
    return t / math.pi * (1 / (t * t + (x - y) ** 2) + 1 / (t * t + (x + y) ** 2))


def check_offdiagonal(x, y):
    if np.any(np.all(np.asarray(x) == np.asarray(y), axis=-1)):
        raise SingularityError("kernel requested on the diagonal x = y")
