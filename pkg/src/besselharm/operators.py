"""The operator families: maximal operators, g-functions, multipliers of
Laplace transform type and Riesz transforms, by spectral and kernel routes.

Kernel-valued quantities that are integrated or maximised over t use time
grids scaled to the pair (x, y): t = |x-y|^2 e^v for heat-type kernels and
t = |x-y| e^v for Poisson-type kernels, trapezoidal in v.  Below the grid the
integrands are doubly exponentially small; above it they decay like a power
of t and the grid is extended until that power has dropped below 1e-20.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math
import warnings

import numpy as np

from .errors import AccuracyError, DomainError, ParameterError, SingularityError, UsageError
from .hankel import GridFunction, TransformPlan, make_grid, make_plan, symbol_on_grid
from .kernels import (heat_axis_deriv, heat_closed, heat_deriv_batch, rho_deriv,
                      DEFAULT_U_RULE, _multi)
from .quadrature import gauss_jacobi, gauss_legendre
from .specfun import LambdaIndex, decomp_table, gamma_fn, phi_1d


# ---------------------------------------------------------------------------
# time rules and Banach norms

@dataclass(frozen=True, eq=False)
class TimeRule:
    """Log-spaced nodes on [t_min, t_max] with trapezoid weights in log t."""

    t_min: float = 1e-4
    t_max: float = 1e4
    count: int = 200
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max) or self.count < 2:
            raise DomainError("time rule needs 0 < t_min < t_max and at least two nodes")
        v = np.linspace(math.log(self.t_min), math.log(self.t_max), int(self.count))
        h = v[1] - v[0]
        t = np.exp(v)
        w = h * t
        w[0] *= 0.5
        w[-1] *= 0.5
        for a in (t, w):
            a.setflags(write=False)
        object.__setattr__(self, "nodes", t)
        object.__setattr__(self, "weights", w)

    @property
    def step(self):
        return math.log(self.t_max / self.t_min) / (self.count - 1)

    def integrate(self, values, power=0.0):
        return np.sum(np.asarray(values) * self.weights * self.nodes ** power, axis=-1)

    def refined(self):
        return TimeRule(self.t_min, self.t_max, 2 * self.count - 1)


@dataclass(frozen=True)
class BanachTag:
    kind: str
    r: float = 2.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("C0", "LrPower", "Scalar"):
            raise DomainError(f"unknown Banach tag {self.kind}")
        if self.kind == "LrPower" and not self.r >= 2:
            raise ParameterError("L^r norms need r >= 2")

    @classmethod
    def c0(cls):
        return cls("C0")

    @classmethod
    def scalar(cls):
        return cls("Scalar")

    @classmethod
    def heat_g(cls, m, k, r):
        return cls("LrPower", float(r), (k + sum(_multi(m)) / 2) * r - 1)

    @classmethod
    def poisson_g(cls, m, k, r):
        return cls("LrPower", float(r), (k + sum(_multi(m))) * r - 1)

    def to_dict(self):
        return {"kind": self.kind, "r": self.r, "gamma": self.gamma}


def banach_norm(tag, values, nodes=None, weights=None):
    """Norm of values sampled on a time grid (last axis).

    C0: node maximum refined by a parabola at the argmax.  LrPower:
    (sum w_j t_j^gamma |v_j|^r)^{1/r} with ``weights`` the dt weights.
    Scalar: modulus.
    """
    v = np.abs(np.asarray(values))
    if tag.kind == "Scalar":
        return v
    if nodes is None:
        raise UsageError("time nodes are required for C0 and L^r norms")
    nodes = np.asarray(nodes)
    if nodes.shape[-1] != v.shape[-1]:
        raise UsageError("values and time nodes have different lengths")
    if tag.kind == "C0":
        i = np.argmax(v, axis=-1)
        peak = np.take_along_axis(v, i[..., None], axis=-1)[..., 0]
        inner = (i > 0) & (i < v.shape[-1] - 1)
        if np.any(inner):
            ii = np.clip(i, 1, v.shape[-1] - 2)
            a = np.take_along_axis(v, (ii - 1)[..., None], axis=-1)[..., 0]
            b = np.take_along_axis(v, ii[..., None], axis=-1)[..., 0]
            c = np.take_along_axis(v, (ii + 1)[..., None], axis=-1)[..., 0]
            den = a - 2 * b + c
            with np.errstate(divide="ignore", invalid="ignore"):
                ref = np.where(den < 0, b - 0.125 * (a - c) ** 2 / den, b)
            peak = np.where(inner, np.maximum(peak, ref), peak)
        return peak
    weights = np.asarray(weights)
    if weights.shape[-1] != v.shape[-1]:
        raise UsageError("values and weights have different lengths")
    return np.sum(weights * nodes ** tag.gamma * v ** tag.r, axis=-1) ** (1 / tag.r)


# ---------------------------------------------------------------------------
# Laplace-type symbols

@dataclass(frozen=True, eq=False)
class LaplaceSymbol:
    psi: object
    kind: str = "W"
    sup_psi: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("W", "P"):
            raise DomainError("Laplace symbol kind must be W or P")
        if not math.isfinite(self.sup_psi):
            raise DomainError("psi must be bounded")

    @classmethod
    def constant(cls, kind="W", c=1.0):
        return cls(lambda s: np.full(np.shape(s), c, dtype=float), kind, abs(c), "constant", {"c": c})

    @classmethod
    def exponential(cls, kind="W"):
        return cls(lambda s: np.exp(-np.asarray(s)), kind, 1.0, "exponential", {})

    @classmethod
    def imaginary_power(cls, gamma, kind="W"):
        g = complex(gamma_fn(complex(1.0, -gamma)))
        sup = 1 / abs(g)
        return cls(lambda s: np.asarray(s, dtype=float) ** (-1j * gamma) / g, kind, sup,
                   "imaginary_power", {"gamma": gamma})

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "params": dict(self.params)}


def multiplier_values(sym, zabs, step=0.1):
    """M_W(z) = |z|^2 int e^{-|z|^2 s} psi(s) ds (or the |z| version for kind P).

    With s = e^v / |z|^2 the integral becomes int e^{-e^v} psi(.) e^v dv,
    which the trapezoid rule handles to near machine precision.
    """
    zabs = np.asarray(zabs, dtype=float)
    sc = zabs ** 2 if sym.kind == "W" else zabs

    def rule(h):
        v = np.arange(-46.0, 4.5, h)
        ev = np.exp(v)
        wv = h * np.exp(-ev) * ev
        flat = sc.reshape(-1)
        out = np.empty(flat.shape, dtype=complex)
        for i in range(0, flat.size, 4096):
            out[i:i + 4096] = sym.psi(ev / flat[i:i + 4096, None]) @ wv
        out = out.reshape(sc.shape)
        return out.real if np.all(out.imag == 0) else out

    with np.errstate(divide="ignore", invalid="ignore"):
        fine = rule(step)
        coarse = rule(2 * step)
    err = np.max(np.abs(fine - coarse)) if fine.size else 0.0
    if not err <= 1e-9 * max(sym.sup_psi, 1e-300):
        raise AccuracyError("the s-integral of the Laplace multiplier did not converge",
                            estimate=fine, error=float(err))
    if np.any(np.abs(fine) > sym.sup_psi * (1 + 1e-9)):
        raise AccuracyError("|M| exceeds sup|psi|")
    return fine


def laplace_multiplier_apply(plan, sym, f):
    """T_M f on the grid, with M computed from psi by s-quadrature.

    ``f`` is a GridFunction or a pair (f, h f); with the pair the known
    transform is used and only the synthesis is discretized.
    """
    from .hankel import apply_multiplier
    zabs = np.sqrt(np.sum(plan.grid.points() ** 2, axis=-1))
    M = multiplier_values(sym, zabs)
    if isinstance(f, tuple):
        return GridFunction(plan.grid, plan.apply(M * f[1].values))
    return apply_multiplier(plan, M, f)


# ---------------------------------------------------------------------------
# pointwise semigroup application (kernel route)

def _axis_rule(l, lo, hi, order):
    """Quadrature for int_lo^hi g(y) y^{2l} dy, exact weight when lo = 0."""
    if lo <= 0:
        x, w = gauss_jacobi(order, 0.0, 2 * l)
        y = 0.5 * hi * (x + 1)
        return y, w * (0.5 * hi) ** (2 * l + 1)
    x, w = gauss_legendre(order)
    y = lo + 0.5 * (hi - lo) * (x + 1)
    return y, w * 0.5 * (hi - lo) * y ** (2 * l)


def local_rule(lam, x, t, ymax, max_order=600, t_lo=None):
    """Per-axis y-rules around x covering the heat kernel W_t(x, .) on (0, ymax].

    With ``t_lo`` the rule serves every time in [t_lo, t]: the interval is
    sized by t and the node count by t_lo.
    """
    rules = []
    width = 14 * math.sqrt(t)
    res = math.sqrt(t if t_lo is None else t_lo)
    for l, xi in zip(lam, x):
        lo = max(0.0, xi - width)
        hi = min(ymax, xi + width)
        if lo < 3 * math.sqrt(t):
            lo = 0.0
        if hi <= lo:
            hi = min(ymax, lo + width)
        order = int(min(max_order, 40 + 6 * (hi - lo) / res))
        rules.append(_axis_rule(l, lo, hi, order))
    return rules


def _fhat(plan, f):
    if isinstance(f, tuple):
        return f[1].values
    return plan.apply(f.values)


def _synth_tensor(plan, fhat_vals, axis_points):
    """h_lambda(fhat) on a tensor grid given by per-axis point arrays."""
    g = plan.grid
    out = fhat_vals * g.weight_tensor()
    for i, (l, pts) in enumerate(zip(plan.lam, axis_points)):
        Phi = phi_1d(l, np.outer(pts, g.nodes[i]))
        out = np.moveaxis(np.tensordot(Phi, out, axes=([1], [i])), 0, i)
    return out


GLOBAL_T = 0.05


@lru_cache(maxsize=32)
def _global_axis_rule(l, ymax, panel=0.5, order=16):
    """Composite rule on (0, ymax] fine enough for W_t(x, .) with t >= GLOBAL_T."""
    edges = np.linspace(0.0, ymax, int(math.ceil(ymax / panel)) + 1)
    ys, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        y, w = _axis_rule(l, a, b, order)
        ys.append(y)
        ws.append(w)
    y, w = np.concatenate(ys), np.concatenate(ws)
    y.setflags(write=False)
    w.setflags(write=False)
    return y, w


def _axis_vectors(lam, x, rules, ts, m, ki_max):
    """Per axis and per time-derivative order, kernel rows times weights: (T, Ny)."""
    out = []
    for i, (y, w) in enumerate(rules):
        xi = np.full(y.shape, x[i])
        tt = np.broadcast_to(ts, (y.size, ts.size))
        out.append([(heat_axis_deriv(lam[i], m[i], ki, 0, xi, y, tt) * w[:, None]).T
                    for ki in range(ki_max + 1)])
    return out


def _contract_rows(rows, F):
    """sum over tensor nodes of prod_i rows_i[t, a_i] F[a_1, ..., a_n], per t."""
    out = np.tensordot(rows[0], F, axes=([1], [0]))           # (T, ...)
    for r in rows[1:]:
        out = np.einsum("ta,ta...->t...", r, out)
    return out


def _heat_apply(lam, plan, fhat_vals, x, ts, m, k):
    """d_x^m d_t^k W_t f(x) for an array of times, kernel route."""
    from .kernels import _compositions
    ymax = plan.grid.zmax
    ts = np.asarray(ts, dtype=float)
    out = np.zeros(ts.shape, dtype=np.result_type(fhat_vals, float))

    def run(rules, sel):
        F = _synth_tensor(plan, fhat_vals, [r[0] for r in rules])
        vecs = _axis_vectors(lam, x, rules, ts[sel], m, k)
        total = 0.0
        for comp in _compositions(int(k), lam.n):
            coef = math.factorial(k)
            for ki in comp:
                coef //= math.factorial(ki)
            total = total + coef * _contract_rows([vecs[i][ki] for i, ki in enumerate(comp)], F)
        out[sel] = total

    big = ts >= GLOBAL_T
    if big.any():
        run([_global_axis_rule(l, ymax) for l in lam], big)
    small = np.flatnonzero(~big)
    if small.size:
        # times within a factor 4 share one local rule
        bins = np.floor(np.log(ts[small] / GLOBAL_T) / math.log(4.0))
        for b in np.unique(bins):
            sel = small[bins == b]
            run(local_rule(lam, x, float(ts[sel].max()), ymax, t_lo=float(ts[sel].min())), sel)
    return out


def semigroup_apply(lam, which, t, f, points, plan=None, m=None, k=0):
    """W_t f or P_t f (optionally d_x^m d_t^k of it) at points, by the kernel route.

    ``f`` is a GridFunction on ``plan``'s grid (or a pair (f, fhat)); values
    of f off the grid are synthesised from its Hankel transform.
    """
    if np.any(np.asarray(t) <= 0):
        raise DomainError("t must be positive")
    if plan is None:
        raise UsageError("a transform plan is required")
    lam = plan.lam
    fh = _fhat(plan, f)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    m = (0,) * lam.n if m is None else _multi(m, lam.n)
    out = np.empty((pts.shape[0], ts.size), dtype=np.result_type(fh, float))
    if which == "W":
        for a, x in enumerate(pts):
            out[a] = _heat_apply(lam, plan, fh, x, ts, m, k)
    elif which == "P":
        for a, x in enumerate(pts):
            sgrid = _subordination_grid(lam, ts, float(np.sum(x ** 2)) + plan.grid.zmax ** 2)
            hv = _heat_apply(lam, plan, fh, x, sgrid.s, m, 0)
            out[a] = sgrid.matrix(ts, k) @ hv
    else:
        raise DomainError("which must be W or P")
    return out[:, 0] if np.ndim(t) == 0 else out


@dataclass
class _SGrid:
    s: np.ndarray
    step: float

    def matrix(self, t, k):
        return self.step * self.s[None, :] * rho_deriv(k, t[:, None], self.s[None, :])


def _subordination_grid(lam, ts, R2, step=0.25):
    """log-s grid for int F(s) d_t^k rho_t(s) ds, F bounded and O(s^{-A}) beyond R2."""
    lo = math.log(min(ts) ** 2) - 6.0
    hi = max(math.log(max(ts) ** 2), math.log(R2)) + 30.0 / (lam.A + 0.5)
    s = np.exp(np.arange(lo, hi + step, step))
    return _SGrid(s, step)


def maximal(lam, which, f, x, trule=None, plan=None):
    """sup over the time rule of |W_t f(x)| (or P_t), refined once at the argmax."""
    trule = TimeRule() if trule is None else trule
    v = np.abs(semigroup_apply(lam, which, trule.nodes, f, np.atleast_2d(x), plan=plan))[0]
    i = int(np.argmax(v))
    best = v[i]
    extra = []
    if i > 0:
        extra.append(math.sqrt(trule.nodes[i - 1] * trule.nodes[i]))
    if i < len(v) - 1:
        extra.append(math.sqrt(trule.nodes[i + 1] * trule.nodes[i]))
    if extra:
        ev = np.abs(semigroup_apply(lam, which, np.array(extra), f, np.atleast_2d(x), plan=plan))[0]
        best = max(best, float(ev.max()))
    return float(best)


def _check_g(m, k, r, n):
    m = _multi(m, n)
    if k + sum(m) <= 0:
        raise ParameterError("g-functions need k + |m| > 0")
    if not (2 <= r < math.inf):
        raise ParameterError("g-functions need 2 <= r < inf")
    return m


def g_function(lam, m, k, r, which, f, x, trule=None, plan=None):
    """L^r(t^gamma dt) norm of d_x^m d_t^k (semigroup f)(x) over the time rule."""
    trule = TimeRule() if trule is None else trule
    m = _check_g(m, k, r, plan.lam.n)
    v = semigroup_apply(lam, which, trule.nodes, f, np.atleast_2d(x), plan=plan, m=m, k=k)[0]
    tag = BanachTag.heat_g(m, k, r) if which == "W" else BanachTag.poisson_g(m, k, r)
    return float(banach_norm(tag, v, trule.nodes, trule.weights))


# ---------------------------------------------------------------------------
# grid-wide operators (L^2 norms)

def kernel_resolution_time(grid, factor=4.0):
    """Smallest t for which the grid resolves heat kernels W_t(x, .)."""
    spacing = max(float(np.max(np.diff(np.concatenate([[0.0], z])))) for z in grid.nodes)
    return (factor * spacing) ** 2


def _spectral_deriv(plan, m, symbol, fhat):
    """d_x^m h_lambda(symbol * fhat) on the grid, through the table c_j."""
    lam = plan.lam
    m = _multi(m, lam.n)
    table = decomp_table(m, lam)
    z = plan.grid.points()
    x = plan.grid.points()
    out = 0.0
    for j, c in table.coefficients.items():
        sub = plan.shifted(j)
        zpow = np.prod(z ** (np.array(m) - np.array(j)), axis=-1)
        out = out + c * np.prod(x ** np.array(j), axis=-1) * sub.apply(zpow * symbol * fhat)
    return out


def _kernel_deriv_grid(plan, m, k, ts, fvals, budget=2_000_000):
    """d_x^m d_t^k W_t f on the grid by kernel quadrature, for each t in ts.

    ``fvals`` may carry leading batch axes before the grid axes.
    Returns shape (len(ts),) + fvals.shape.
    """
    from .kernels import _compositions
    lam = plan.lam
    g = plan.grid
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    pairs = max(z.size ** 2 for z in g.nodes)
    step = max(1, budget // pairs)
    out = np.zeros((ts.size,) + fvals.shape)
    lead = fvals.ndim - lam.n
    for c0 in range(0, ts.size, step):
        tc = ts[c0:c0 + step]
        cache = {}
        for comp in _compositions(int(k), lam.n):
            coef = math.factorial(k)
            mats = []
            for i, ki in enumerate(comp):
                coef //= math.factorial(ki)
                if (i, ki) not in cache:
                    z = g.nodes[i]
                    X = np.repeat(z, z.size)
                    Y = np.tile(z, z.size)
                    K = heat_axis_deriv(lam[i], m[i], ki, 0, X, Y, np.broadcast_to(tc, (X.size, tc.size)))
                    # (T, N, N) with quadrature weights on the y index
                    cache[i, ki] = K.T.reshape(tc.size, z.size, z.size) * g.weights[i][None, None, :]
                mats.append(cache[i, ki])
            val = np.broadcast_to(fvals, (tc.size,) + fvals.shape)
            for i, M in enumerate(mats):
                val = _apply_axis(M, val, 1 + lead + i)
            out[c0:c0 + tc.size] += coef * val
    return out


def _apply_axis(M, val, axis):
    """Per-time matrix M[t] applied along ``axis`` of val[t, ...]."""
    v = np.moveaxis(val, axis, 1)
    shape = v.shape
    r = M @ v.reshape(shape[0], shape[1], -1)
    return np.moveaxis(r.reshape(shape), 1, axis)


def g_function_grid(plan, m, k, r, f, trule=None, route="auto"):
    """g^{W}_{m,k,r}(f) at every grid node.

    ``route`` = "kernel" integrates the derivative of the heat kernel against f
    on the grid; "spectral" uses the eigenfunction expansion; "auto" takes the
    kernel route wherever the grid resolves W_t and the spectral one below.
    """
    return g_function_grid_many(plan, m, k, r, [f], trule, route)[0]


def g_function_grid_many(plan, m, k, r, fs, trule=None, route="auto"):
    """g_function_grid for several functions sharing one set of kernel matrices."""
    trule = TimeRule() if trule is None else trule
    m = _check_g(m, k, r, plan.lam.n)
    fvals = np.stack([f.values if isinstance(f, GridFunction) else f[0].values for f in fs])
    z2 = np.sum(plan.grid.points() ** 2, axis=-1)
    t_res = kernel_resolution_time(plan.grid)
    tag = BanachTag.heat_g(m, k, r)
    acc = np.zeros(fvals.shape)
    use_kernel = np.full(trule.nodes.size, route == "kernel") | ((route == "auto") & (trule.nodes >= t_res))
    if use_kernel.any():
        tk, wk = trule.nodes[use_kernel], trule.weights[use_kernel]
        v = _kernel_deriv_grid(plan, m, k, tk, fvals)
        acc += np.tensordot(wk * tk ** tag.gamma, np.abs(v) ** r, axes=1)
    for b, f in enumerate(fs):
        fhat = _fhat(plan, f)
        for t, w in zip(trule.nodes[~use_kernel], trule.weights[~use_kernel]):
            v = _spectral_deriv(plan, m, (-z2) ** k * np.exp(-t * z2), fhat)
            acc[b] += w * t ** tag.gamma * np.abs(v) ** r
    return acc ** (1 / r)


def semigroup_grid(plan, which, t, f):
    """W_t f or P_t f at every grid node by the spectral route."""
    if not t > 0:
        raise DomainError("t must be positive")
    zabs = np.sqrt(np.sum(plan.grid.points() ** 2, axis=-1))
    sym = np.exp(-t * zabs ** 2) if which == "W" else np.exp(-t * zabs)
    return GridFunction(plan.grid, plan.apply(sym * _fhat(plan, f)))


def maximal_grid(plan, f, trule=None):
    """W_* f at every grid node (spectral route at each time node)."""
    trule = TimeRule() if trule is None else trule
    fhat = _fhat(plan, f)
    z2 = np.sum(plan.grid.points() ** 2, axis=-1)
    best = np.zeros(plan.grid.shape)
    for t in trule.nodes:
        best = np.maximum(best, np.abs(plan.apply(np.exp(-t * z2) * fhat)))
    return best


def l2_norm(plan, values):
    return float(np.sqrt(np.sum(plan.grid.weight_tensor() * np.abs(values) ** 2)))


# ---------------------------------------------------------------------------
# Riesz transforms

def riesz_spectral(plan, m, f, fhat=None):
    """R_m f = sum_j c_j x^j h_{lambda+j}(|z|^{-|m|} z^{m-j} h_lambda f)."""
    lam = plan.lam
    m = _multi(m, lam.n)
    if sum(m) == 0:
        raise ParameterError("Riesz transforms need |m| > 0")
    fh = _fhat(plan, f) if fhat is None else np.asarray(fhat.values if isinstance(fhat, GridFunction) else fhat)
    z = plan.grid.points()
    zabs = np.sqrt(np.sum(z ** 2, axis=-1))
    near0 = zabs < 0.02 * plan.grid.zmax
    if np.any(np.abs(fh[near0]) > 1e-8 * max(np.max(np.abs(fh)), 1e-300)):
        warnings.warn("h_lambda f does not vanish near z = 0; |z|^{-|m|} is ill-conditioned here",
                      RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        sym = np.where(near0 & (np.abs(fh) == 0), 0.0, zabs ** (-float(sum(m))))
    return GridFunction(plan.grid, _spectral_deriv(plan, m, sym, fh))


def riesz_spectral_at(plan, m, f, points):
    """R_m f at arbitrary points, synthesising each term of the c_j sum."""
    from .hankel import synthesize
    lam = plan.lam
    m = _multi(m, lam.n)
    if sum(m) == 0:
        raise ParameterError("Riesz transforms need |m| > 0")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fh = _fhat(plan, f)
    z = plan.grid.points()
    zabs = np.sqrt(np.sum(z ** 2, axis=-1))
    with np.errstate(divide="ignore"):
        sym = np.where(zabs > 0, zabs ** (-float(sum(m))), 0.0)
    out = 0.0
    for j, c in decomp_table(m, lam).coefficients.items():
        sub = plan.shifted(j)
        zpow = np.prod(z ** (np.array(m) - np.array(j)), axis=-1)
        g = GridFunction(sub.grid, zpow * sym * fh)
        out = out + c * np.prod(pts ** np.array(j), axis=-1) * synthesize(sub, g, pts)
    return out


# ---------------------------------------------------------------------------
# kernel families on pair-scaled time grids

@dataclass(frozen=True)
class FamilySpec:
    """A kernel family: which, m, k plus multiplier / Riesz parameters."""

    name: str
    which: str = "W"
    m: tuple = ()
    k: int = 0
    r: float = 2.0
    symbol: object = None

    @property
    def scalar(self):
        return self.name in ("laplace", "riesz")

    def tag(self):
        if self.scalar:
            return BanachTag.scalar()
        if self.name in ("heat", "poisson"):
            return BanachTag.c0()
        if self.which == "W":
            return BanachTag.heat_g(self.m or (0,), self.k, self.r)
        return BanachTag.poisson_g(self.m or (0,), self.k, self.r)


def family(name, lam, **kw):
    lam = LambdaIndex.of(lam)
    zero = (0,) * lam.n
    if name == "heat":
        return FamilySpec("heat", "W", zero, 0)
    if name == "poisson":
        return FamilySpec("poisson", "P", zero, 0)
    if name == "heat_g":
        return FamilySpec("heat_g", "W", _multi(kw.get("m", zero), lam.n), int(kw.get("k", 1)), float(kw.get("r", 2)))
    if name == "poisson_g":
        return FamilySpec("poisson_g", "P", _multi(kw.get("m", zero), lam.n), int(kw.get("k", 1)), float(kw.get("r", 2)))
    if name == "laplace":
        sym = kw.get("symbol") or LaplaceSymbol.exponential(kw.get("kind", "W"))
        return FamilySpec("laplace", sym.kind, zero, 1, symbol=sym)
    if name == "riesz":
        m = _multi(kw.get("m", (1,) + (0,) * (lam.n - 1)), lam.n)
        if sum(m) == 0:
            raise ParameterError("Riesz transforms need |m| > 0")
        return FamilySpec("riesz", "W", m, 0)
    raise DomainError(f"unknown kernel family {name}")


def _tail_rate(spec, lam):
    """Decay rate in v = log t of the integrand of each family at large t."""
    A = lam.A
    if spec.name == "heat":
        return A
    if spec.name == "heat_g":
        return spec.r * (A + spec.k + sum(spec.m) / 2) - spec.tag().gamma - 1
    if spec.name == "riesz":
        return A + 0.5
    if spec.name == "laplace":
        return A if spec.which == "W" else 2 * A
    if spec.name == "poisson":
        return 2 * A
    if spec.name == "poisson_g":
        return spec.r * (2 * A + spec.k + sum(spec.m)) - spec.tag().gamma - 1
    raise DomainError(spec.name)


def _head_rate(spec):
    """Growth rate in v of the Poisson-type integrand as t -> 0 (heat-type decay is Gaussian)."""
    if spec.name == "poisson":
        return 1.0
    if spec.name == "poisson_g":
        return spec.tag().gamma + 1 + spec.r * max(1 - spec.k, 0) if spec.k <= 1 else spec.tag().gamma + 1
    if spec.name == "laplace":
        return 1.0
    return 1.0


@dataclass
class PairGrid:
    """Pair-scaled time grid: t = scale * e^v, v on a common uniform grid."""

    v: np.ndarray
    step: float
    scale: np.ndarray

    @property
    def t(self):
        return self.scale[:, None] * np.exp(self.v)[None, :]

    @property
    def dt_weights(self):
        return self.step * self.t


def family_grid(spec, lam, X, Y, step=0.4, margin=1.0):
    """Time grid for a batch of pairs; ``margin`` widens it for nearby points."""
    lam = LambdaIndex.of(lam)
    d2 = np.sum((X - Y) ** 2, axis=-1)
    Q = np.sum((X + Y) ** 2, axis=-1)
    span = float(np.max(np.log(Q / d2)))
    rate = _tail_rate(spec, lam)
    if spec.which == "W" or spec.name == "riesz":
        lo = -7.0 - 2 * math.log(1 + margin)
        hi = span + 46.0 / rate + 2 * 3.0
        scale = d2
    else:
        lo = -46.0 / _head_rate(spec) - math.log(1 + margin)
        hi = 0.5 * span + 46.0 / rate + 3.0
        scale = np.sqrt(d2)
    v = np.arange(lo, hi + step, step)
    return PairGrid(v, step, scale)


def _sub_grid(lam, tgrid, step):
    """s-grid (in units of |x-y|^2) carrying the subordination integral."""
    A = lam.A
    lo = -7.0 - 2 * math.log(3.0)
    hi = 2 * float(tgrid.v[-1]) + 46.0 / (A + 0.5) + 6.0
    hi = max(hi, 2 * float(tgrid.v[-1]) + 10)
    w = np.arange(lo, hi + step, step)
    return w


@lru_cache(maxsize=64)
def _rho_matrix(v_key, w_key, step_t, step_s, k):
    v = np.frombuffer(v_key)
    w = np.frombuffer(w_key)
    tau = np.exp(v)[:, None]
    sig = np.exp(w)[None, :]
    return step_s * sig * rho_deriv(k, tau, sig)


def heat_side(lam, X, Y, t, mx, ry, k, table_step=None):
    return heat_deriv_batch(lam, mx, k, t, X, Y, r=ry, table_step=table_step)


def family_values(spec, lam, X, Y, grid, mx=None, ry=None, table_step=None):
    """Kernel values of a family for a batch of pairs on a pair grid.

    For vector-valued families returns (values (N, T), t (N, T), dt weights);
    for scalar families returns values (N,).  ``mx`` and ``ry`` add spatial
    derivatives in x and y.
    """
    lam = LambdaIndex.of(lam)
    n = lam.n
    mx = (0,) * n if mx is None else _multi(mx, n)
    ry = (0,) * n if ry is None else _multi(ry, n)
    base_m = spec.m if spec.m else (0,) * n
    mtot = tuple(a + b for a, b in zip(base_m, mx))
    t = grid.t
    if spec.which == "W" or spec.name == "riesz":
        if spec.name in ("heat", "heat_g"):
            vals = heat_side(lam, X, Y, t, mtot, ry, spec.k, table_step)
            return vals, t, grid.dt_weights
        if spec.name == "riesz":
            vals = heat_side(lam, X, Y, t, mtot, ry, 0, table_step)
            h = sum(spec.m) / 2
            return np.sum(grid.dt_weights * t ** (h - 1) * vals, axis=-1) / gamma_fn(h)
        if spec.name == "laplace":
            vals = heat_side(lam, X, Y, t, mtot, ry, 1, table_step)
            return -np.sum(grid.dt_weights * spec.symbol.psi(t) * vals, axis=-1)
    # Poisson side: subordinate heat-side spatial derivatives
    w = _sub_grid(lam, grid, grid.step)
    d2 = grid.scale ** 2
    s = d2[:, None] * np.exp(w)[None, :]
    heat = heat_side(lam, X, Y, s, mtot, ry, 0, table_step)
    k = spec.k
    R = _rho_matrix(np.ascontiguousarray(grid.v).tobytes(), np.ascontiguousarray(w).tobytes(),
                    grid.step, grid.step, k)
    vals = (heat @ R.T) * grid.scale[:, None] ** (-k)
    if spec.name in ("poisson", "poisson_g"):
        return vals, t, grid.dt_weights
    # laplace, kind P
    return -np.sum(grid.dt_weights * spec.symbol.psi(t) * vals, axis=-1)


def family_norms(spec, lam, X, Y, step=0.4, mx=None, ry=None, grid=None, table_step=None):
    """Banach norm of the family kernel at each pair."""
    grid = family_grid(spec, lam, X, Y, step) if grid is None else grid
    out = family_values(spec, lam, X, Y, grid, mx, ry, table_step)
    if spec.scalar:
        return np.abs(out)
    vals, t, w = out
    return banach_norm(spec.tag(), vals, t, w)


def laplace_multiplier_kernel(lam, sym, x, y, trule=None, step=0.4):
    """K_M(x, y) = -int psi(t) d_t W_t(x, y) dt (Poisson kernel for kind P).

    Without a time rule a pair-scaled log grid is used; with one, its nodes.
    """
    lam = LambdaIndex.of(lam)
    X, Y = np.atleast_2d(x).astype(float), np.atleast_2d(y).astype(float)
    if np.any(np.all(X == Y, axis=-1)):
        raise SingularityError("K_M is singular on the diagonal")
    spec = family("laplace", lam, symbol=sym)
    if trule is not None:
        if sym.kind == "P":
            raise UsageError("a fixed time rule is only supported for kind W")
        t = np.broadcast_to(trule.nodes, (X.shape[0], trule.count))
        vals = heat_deriv_batch(lam, (0,) * lam.n, 1, t, X, Y)
        out = -np.sum(trule.weights * sym.psi(trule.nodes) * vals, axis=-1)
    else:
        out = family_values(spec, lam, X, Y, family_grid(spec, lam, X, Y, step))
    return out[0] if np.ndim(x) == 1 else out


def riesz_kernel(lam, m, x, y, trule=None, step=0.4):
    """R_m(x, y) = Gamma(|m|/2)^{-1} int d_x^m W_t(x, y) t^{|m|/2-1} dt."""
    lam = LambdaIndex.of(lam)
    X, Y = np.atleast_2d(x).astype(float), np.atleast_2d(y).astype(float)
    if np.any(np.all(X == Y, axis=-1)):
        raise SingularityError("the Riesz kernel is singular on the diagonal")
    spec = family("riesz", lam, m=m)
    if trule is not None:
        h = sum(spec.m) / 2
        t = np.broadcast_to(trule.nodes, (X.shape[0], trule.count))
        vals = heat_deriv_batch(lam, spec.m, 0, t, X, Y)
        out = np.sum(trule.weights * trule.nodes ** (h - 1) * vals, axis=-1) / gamma_fn(h)
    else:
        out = family_values(spec, lam, X, Y, family_grid(spec, lam, X, Y, step))
    return out[0] if np.ndim(x) == 1 else out
