"""Quadrature rules used throughout the package.

Gauss-Jacobi and generalized Gauss-Laguerre rules are built with the
Golub-Welsch construction; Gauss-Legendre comes from numpy.  The
tanh-sinh rule serves the adaptive ball-volume integrals and the
log-trapezoid grids back every integral over (0, inf) in time.
"""

from functools import lru_cache
import math

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DomainError


def _golub_welsch(diag, offdiag, mu0):
    nodes, vecs = eigh_tridiagonal(diag, offdiag)
    weights = mu0 * vecs[0, :] ** 2
    return nodes, weights


@lru_cache(maxsize=256)
def _gauss_jacobi_cached(n, alpha, beta):
    k = np.arange(n, dtype=float)
    ab = alpha + beta
    diag = np.empty(n)
    diag[0] = (beta - alpha) / (ab + 2.0)
    kk = k[1:]
    denom = (2 * kk + ab) * (2 * kk + ab + 2)
    diag[1:] = (beta * beta - alpha * alpha) / denom
    off = np.empty(max(n - 1, 0))
    if n > 1:
        # b_1 written separately: the generic formula is 0/0 when alpha+beta = -1
        off[0] = math.sqrt(4.0 * (1 + alpha) * (1 + beta) / ((2 + ab) ** 2 * (3 + ab)))
        kk = k[2:]
        num = 4 * kk * (kk + alpha) * (kk + beta) * (kk + ab)
        den = (2 * kk + ab) ** 2 * (2 * kk + ab + 1) * (2 * kk + ab - 1)
        off[1:] = np.sqrt(num / den)
    mu0 = math.exp((ab + 1) * math.log(2.0) + math.lgamma(alpha + 1)
                   + math.lgamma(beta + 1) - math.lgamma(ab + 2))
    x, w = _golub_welsch(diag, off, mu0)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_jacobi(n, alpha, beta):
    """Nodes and weights for the weight (1-x)^alpha (1+x)^beta on [-1, 1].

    The rule is exact for polynomials of degree <= 2n-1.
    """
    if n < 1:
        raise DomainError("quadrature order must be >= 1")
    if alpha <= -1 or beta <= -1:
        raise DomainError("Jacobi exponents must exceed -1")
    return _gauss_jacobi_cached(int(n), float(alpha), float(beta))


@lru_cache(maxsize=64)
def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(int(n))
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=64)
def gauss_laguerre(n, alpha):
    """Generalized Gauss-Laguerre rule for the weight x^alpha e^{-x} on (0, inf)."""
    if alpha <= -1:
        raise DomainError("Laguerre exponent must exceed -1")
    k = np.arange(n, dtype=float)
    diag = 2 * k + alpha + 1
    off = np.sqrt(k[1:] * (k[1:] + alpha))
    x, w = _golub_welsch(diag, off, math.gamma(alpha + 1))
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=32)
def tanh_sinh(level):
    """Tanh-sinh nodes on (-1, 1) with step h = 2**-level.

    Returns ``(x, w, c)`` where ``c = 1 - |x|`` is kept separately so that
    integrands singular at an endpoint can be evaluated without cancellation.
    """
    h = 2.0 ** (-level)
    kmax = int(math.ceil(3.2 / h))
    t = h * np.arange(-kmax, kmax + 1)
    s = 0.5 * math.pi * np.sinh(t)
    x = np.tanh(s)
    w = h * 0.5 * math.pi * np.cosh(t) / np.cosh(s) ** 2
    c = 1.0 / (np.exp(np.abs(s)) * np.cosh(s))
    keep = w > 1e-300
    return x[keep], w[keep], c[keep]


def log_grid(lo, hi, step):
    """Uniform grid in v = log t covering [log lo, log hi] (broadcasting).

    Returns ``v`` with shape ``(nt,)`` relative nodes; callers scale them.
    """
    n = int(math.ceil((hi - lo) / step)) + 1
    return lo + step * np.arange(n), step
