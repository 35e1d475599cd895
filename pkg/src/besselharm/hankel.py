"""Discretised Hankel transform and spectral multipliers.

A plan holds, per axis, the matrix phi(z_i x_j) * w_j x_j^{2 lambda} on a
Gauss-Legendre grid over (0, Z_max]; the n-dimensional transform is the
tensor contraction of the per-axis matrices.  The same nodes serve both the
x and the z side, so applying the plan twice must return the input.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import csv
import io
import math

import numpy as np

from .errors import DomainError, PlanQualityError, UsageError
from .quadrature import gauss_legendre
from .specfun import LambdaIndex, phi_1d

DEFAULT_ZMAX = 12.0
DEFAULT_ORDER = {1: 256, 2: 96, 3: 48}


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Tensor grid on (0, Z_max]^n; ``weights`` include the factor z^{2 lambda}."""

    lam: LambdaIndex
    nodes: tuple
    weights: tuple
    zmax: float

    @property
    def n(self):
        return len(self.nodes)

    @property
    def shape(self):
        return tuple(len(a) for a in self.nodes)

    def points(self):
        """All tensor nodes, shape shape + (n,)."""
        mesh = np.meshgrid(*self.nodes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def weight_tensor(self):
        out = np.ones(self.shape)
        for i, w in enumerate(self.weights):
            sh = [1] * self.n
            sh[i] = -1
            out = out * w.reshape(sh)
        return out

    def same_nodes(self, other):
        return self.shape == other.shape and all(
            np.array_equal(a, b) for a, b in zip(self.nodes, other.nodes))


@lru_cache(maxsize=64)
def _axis_nodes(order, zmax):
    x, w = gauss_legendre(order)
    z = 0.5 * zmax * (x + 1)
    wz = 0.5 * zmax * w
    z.setflags(write=False)
    wz.setflags(write=False)
    return z, wz


def make_grid(lam, order=None, zmax=DEFAULT_ZMAX):
    lam = LambdaIndex.of(lam)
    if order is None:
        order = DEFAULT_ORDER.get(lam.n, 32)
    orders = np.broadcast_to(np.atleast_1d(order), (lam.n,))
    nodes, weights = [], []
    for l, o in zip(lam, orders):
        z, wz = _axis_nodes(int(o), float(zmax))
        w = wz * z ** (2 * l)
        w.setflags(write=False)
        nodes.append(z)
        weights.append(w)
    return RadialGrid(lam, tuple(nodes), tuple(weights), float(zmax))


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise UsageError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    def norm(self):
        """Discrete L^2(dmu_lambda) norm."""
        return float(np.sqrt(np.sum(self.grid.weight_tensor() * np.abs(self.values) ** 2)))

    def inner(self, other):
        return complex(np.sum(self.grid.weight_tensor() * self.values * np.conj(other.values)))

    def __add__(self, other):
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__

    def to_csv(self, fh=None):
        """CSV rows: x_1, ..., x_n, value_re, value_im."""
        own = fh is None
        fh = io.StringIO() if own else fh
        w = csv.writer(fh)
        n = self.grid.n
        w.writerow([f"x_{i + 1}" for i in range(n)] + ["value_re", "value_im"])
        pts = self.grid.points().reshape(-1, n)
        vals = self.values.reshape(-1)
        for p, v in zip(pts, vals):
            w.writerow([repr(float(c)) for c in p] + [repr(float(np.real(v))), repr(float(np.imag(v)))])
        return fh.getvalue() if own else None

    @classmethod
    def from_csv(cls, grid, text):
        rows = list(csv.reader(io.StringIO(text)))[1:]
        vals = np.array([complex(float(r[-2]), float(r[-1])) for r in rows])
        if np.all(vals.imag == 0):
            vals = vals.real
        if vals.size != int(np.prod(grid.shape)):
            raise UsageError("CSV row count does not match grid")
        return cls(grid, vals.reshape(grid.shape))


def _contract(mats, values):
    out = values
    for i, m in enumerate(mats):
        out = np.moveaxis(np.tensordot(m, out, axes=([1], [i])), 0, i)
    return out


@dataclass(frozen=True, eq=False)
class TransformPlan:
    lam: LambdaIndex
    grid: RadialGrid
    matrices: tuple
    certificate: float = field(default=float("nan"))

    def apply(self, values):
        return _contract(self.matrices, values)

    def shifted(self, j):
        """Plan for lambda + j on the same nodes."""
        j = tuple(int(v) for v in j)
        if not any(j):
            return self
        lam = self.lam.shifted(j)
        return make_plan(lam, make_grid(lam, self.grid.shape, self.grid.zmax), check=False)


def _gaussian_probe(grid):
    return np.exp(-0.5 * np.sum(grid.points() ** 2, axis=-1))


@lru_cache(maxsize=32)
def _axis_matrix(l, order, zmax):
    z, wz = _axis_nodes(order, zmax)
    K = phi_1d(l, np.outer(z, z))
    M = K * (wz * z ** (2 * l))[None, :]
    M.setflags(write=False)
    return M


def make_plan(lam, grid=None, check=True, tol=1e-3):
    """Build the transform matrices for ``lam`` on ``grid``.

    The involution error on the Gaussian probe is stored as ``certificate``;
    above ``tol`` the grid is rejected.
    """
    lam = LambdaIndex.of(lam)
    grid = make_grid(lam) if grid is None else grid
    if grid.n != lam.n or tuple(grid.lam.values) != lam.values:
        raise UsageError("grid was built for a different lambda")
    mats = tuple(_axis_matrix(l, len(z), grid.zmax) for l, z in zip(lam, grid.nodes))
    plan = TransformPlan(lam, grid, mats)
    g = _gaussian_probe(grid)
    back = plan.apply(plan.apply(g))
    wt = grid.weight_tensor()
    cert = float(np.sqrt(np.sum(wt * (back - g) ** 2) / np.sum(wt * g ** 2)))
    object.__setattr__(plan, "certificate", cert)
    if check and not cert <= tol:
        raise PlanQualityError(f"involution error {cert:.3g} on the Gaussian probe",
                               estimate=cert, error=cert)
    return plan


def _check(plan, f):
    if not isinstance(f, GridFunction):
        return GridFunction(plan.grid, np.asarray(f))
    if not f.grid.same_nodes(plan.grid) or f.grid.lam.values != plan.lam.values:
        raise UsageError("function lives on a different grid")
    return f


def forward(plan, f):
    """h_lambda f sampled on the plan's grid."""
    f = _check(plan, f)
    return GridFunction(plan.grid, plan.apply(f.values))


def synthesize(plan, fhat, points):
    """Evaluate h_lambda(fhat) at arbitrary points (shape (P, n))."""
    fhat = _check(plan, fhat)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != plan.lam.n or np.any(~(pts > 0)):
        raise DomainError("points must be in the open orthant with matching dimension")
    g = plan.grid
    coef = fhat.values * g.weight_tensor()
    cols = [phi_1d(l, np.outer(pts[:, i], g.nodes[i])) for i, l in enumerate(plan.lam)]
    if g.n == 1:
        return cols[0] @ coef
    if g.n == 2:
        return np.einsum("pa,pb,ab->p", cols[0], cols[1], coef, optimize=True)
    return np.einsum("pa,pb,pc,abc->p", cols[0], cols[1], cols[2], coef, optimize=True)


def symbol_on_grid(plan, M):
    if callable(M):
        vals = np.asarray(M(plan.grid.points()))
    else:
        vals = np.asarray(M)
    vals = np.broadcast_to(vals, plan.grid.shape)
    if not np.all(np.isfinite(vals)):
        raise DomainError("multiplier is not bounded on the grid")
    return vals


def apply_multiplier(plan, M, f):
    """T_M f = h_lambda(M h_lambda f) on the grid."""
    f = _check(plan, f)
    m = symbol_on_grid(plan, M)
    return GridFunction(plan.grid, plan.apply(m * plan.apply(f.values)))


def smoothstep(t, order=4):
    """C^order ramp from 0 to 1 on [0, 1] (polynomial of degree 2*order+1)."""
    t = np.clip(t, 0.0, 1.0)
    k = np.arange(order + 1)
    coef = np.array([math.comb(order + i, i) * math.comb(2 * order + 1, order - i) * (-1) ** i
                     for i in k], dtype=float)
    return t ** (order + 1) * np.polyval(coef[::-1], t)


def annulus_bump(z, a, b, order=4):
    """Product of a rising and a falling ramp in |z|, supported in [a, b]."""
    r = np.sqrt(np.sum(np.asarray(z) ** 2, axis=-1))
    w = b - a
    return smoothstep((r - a) / w, order) * smoothstep((b - r) / w, order)


def make_band_limited(plan, a, b, order=4, weights=None):
    """f = h_lambda(bump) for a bump supported on the annulus a <= |z| <= b.

    ``weights`` optionally multiplies the bump by a smooth factor on the grid
    to produce a family of distinct members.  Returns (f, bump).
    """
    if not (0 < a < b < plan.grid.zmax):
        raise UsageError("annulus must satisfy 0 < a < b < Z_max")
    bump = annulus_bump(plan.grid.points(), a, b, order)
    if weights is not None:
        bump = bump * symbol_on_grid(plan, weights)
    return GridFunction(plan.grid, plan.apply(bump)), GridFunction(plan.grid, bump)


def heat_symbol(t):
    return lambda z: np.exp(-t * np.sum(z ** 2, axis=-1))
