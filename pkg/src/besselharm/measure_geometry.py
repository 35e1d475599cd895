"""The measure space (R^n_+, dmu_lambda, |.|): the q-function, ball volumes,
the bridge integral and the theta comparison."""

from dataclasses import dataclass
from itertools import combinations
import math

import numpy as np

from .errors import AccuracyError, DomainError, SingularityError
from .quadrature import tanh_sinh
from .specfun import LambdaIndex, OmegaRuleN, gamma_fn, moment_table, omega_rule_graded


@dataclass(frozen=True)
class BallSpec:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("ball radius must be positive")


@dataclass(frozen=True)
class BallMeasure:
    value: float
    surrogate: float

    @property
    def ratio(self):
        return self.value / self.surrogate


@dataclass(frozen=True)
class ThetaResult:
    qxy: np.ndarray
    qtheta: np.ndarray
    ok: np.ndarray
    admissible: np.ndarray


def _points(a, name="x"):
    a = np.asarray(a, dtype=float)
    if np.any(~(a > 0)):
        raise DomainError(f"{name} must lie in the open positive orthant")
    return a


def q_fn(x, y, s):
    """q(x, y, s) = |x|^2 + |y|^2 + 2 sum_j x_j y_j s_j (last axis = coordinates)."""
    x, y = _points(x), _points(y, "y")
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) > 1):
        raise DomainError("s must lie in [-1, 1]^n")
    # written as |x-y|^2 + 2 sum x_j y_j (1+s_j) so that q >= |x-y|^2 holds exactly
    return np.sum((x - y) ** 2, axis=-1) + 2 * np.sum(x * y * (1 + s), axis=-1)


def q_sigma(x, y, sigma):
    """q with the shifted variable sigma = 1 + s."""
    return np.sum((x - y) ** 2, axis=-1) + 2 * np.sum(x * y * sigma, axis=-1)


# ---------------------------------------------------------------------------
# ball volumes

def _powdiff(x, r, a):
    """(x + r)^a - max(0, x - r)^a without cancellation, divided by a."""
    out = np.empty(np.broadcast(x, r).shape)
    x, r = np.broadcast_arrays(x, r)
    inside = r < x
    xi, ri = x[inside], r[inside]
    rel = ri / xi
    out[inside] = xi ** a * (np.expm1(a * np.log1p(rel)) - np.expm1(a * np.log1p(-rel))) / a
    out[~inside] = (x[~inside] + r[~inside]) ** a / a
    return out


def ball_surrogate(lam, x, R):
    lam = LambdaIndex.of(lam)
    x = np.asarray(x, dtype=float)
    R = np.asarray(R, dtype=float)
    return R ** lam.n * np.prod((x + R[..., None]) ** (2 * np.array(lam.values)), axis=-1)


def _mu_1d(l, x, r):
    return _powdiff(x, r, 2 * l + 1)


def _kink_radii(xs):
    """Radii at which the (n-1)-dimensional truncated-ball volume is not smooth."""
    k = xs.shape[-1]
    out = []
    for size in range(1, k + 1):
        for idx in combinations(range(k), size):
            out.append(np.sqrt(np.sum(xs[..., list(idx)] ** 2, axis=-1)))
    return np.stack(out, axis=-1)


def _mu_recursive(lams, X, R, tol, max_level):
    if len(lams) == 1:
        return _mu_1d(lams[0], X[:, 0], R)
    l1 = lams[0]
    x1 = X[:, 0]
    rest = X[:, 1:]
    a = np.maximum(x1 - R, 0.0)
    b = x1 + R
    kinks = _kink_radii(rest)
    h = np.sqrt(np.clip(R[:, None] ** 2 - kinks ** 2, 0.0, None))
    brk = np.concatenate([a[:, None], b[:, None], x1[:, None] - h, x1[:, None] + h], axis=1)
    brk = np.sort(np.clip(brk, a[:, None], b[:, None]), axis=1)
    lo = brk[:, :-1]
    hi = brk[:, 1:]
    prev = None
    for level in range(3, max_level + 1):
        t, w, _ = tanh_sinh(level)
        half = 0.5 * (hi - lo)
        y1 = 0.5 * (hi + lo)[..., None] + half[..., None] * t
        d = y1 - x1[:, None, None]
        r = np.sqrt(np.clip((R[:, None, None] - d) * (R[:, None, None] + d), 0.0, None))
        N, P, K = y1.shape
        inner = np.zeros(r.size)
        flat = r.reshape(-1)
        pos = flat > 0
        Xr = np.repeat(rest, P * K, axis=0)
        if pos.any():
            inner[pos] = _mu_recursive(lams[1:], Xr[pos], flat[pos], tol, max_level)
        inner = inner.reshape(N, P, K)
        val = np.sum(half * np.sum(w * np.clip(y1, 0, None) ** (2 * l1) * inner, axis=-1), axis=-1)
        if prev is not None:
            err = np.abs(val - prev)
            if np.all(err <= tol * np.abs(val)):
                return val
        prev = val
    bad = np.abs(val - prev) > tol * np.abs(val)
    raise AccuracyError("ball volume quadrature did not converge", estimate=val,
                        error=float(np.max(np.abs(val - prev)[bad] / np.abs(val[bad]))))


def mu_ball_batch(lam, X, R, tol=1e-8, max_level=9):
    """mu_lambda(B(x, R) intersected with R^n_+) for a batch of balls.

    ``X`` has shape (N, n) and ``R`` shape (N,).  The volume is integrated
    coordinate by coordinate with tanh-sinh rules split at every point where
    the inner volume loses smoothness.
    """
    lam = LambdaIndex.of(lam)
    X = _points(np.atleast_2d(X))
    R = np.asarray(R, dtype=float).reshape(-1)
    if np.any(~(R > 0)):
        raise DomainError("ball radius must be positive")
    if X.shape[1] != lam.n:
        raise DomainError("center dimension does not match lambda")
    return _mu_recursive(lam.values, X, np.broadcast_to(R, (X.shape[0],)).copy(), tol, max_level)


def mu_ball(lam, ball, radius=None):
    """Ball volume and the comparability surrogate R^n prod (x_j + R)^{2 lambda_j}."""
    if not isinstance(ball, BallSpec):
        ball = BallSpec(tuple(np.atleast_1d(ball)), float(radius))
    x = np.array(ball.center, dtype=float)[None, :]
    R = np.array([ball.radius])
    val = mu_ball_batch(lam, x, R)[0]
    return BallMeasure(float(val), float(ball_surrogate(lam, x, R)[0]))


def mu_ball_fast(lam, X, R):
    """Volumes for verifier sweeps: looser tolerance, same algorithm."""
    return mu_ball_batch(lam, X, R, tol=1e-6, max_level=8)


# ---------------------------------------------------------------------------
# bridge integral

def bridge_lhs(lam, x, y, half_shift=False, rule=None, order=24):
    """int q(x, y, s)^{-n/2-|lambda|} dOmega_lambda(s), or with exponent lowered by 1/2.

    Without an explicit ``rule`` each axis gets a rule graded on the scale
    |x-y|^2 / (2 x_j y_j), where the integrand varies fastest.
    """
    lam = LambdaIndex.of(lam)
    x, y = _points(x), _points(y, "y")
    d2 = float(np.sum((x - y) ** 2))
    if d2 == 0:
        raise SingularityError("bridge integral is singular on the diagonal")
    a = lam.A + (0.5 if half_shift else 0.0)
    if rule is None:
        rule = OmegaRuleN(tuple(omega_rule_graded(l, d2 / (2 * xi * yi), order)
                                for l, xi, yi in zip(lam, x, y)))
    _, sig, w = rule.tensor()
    q = d2 + 2 * np.sum(x * y * sig, axis=-1)
    return float(np.sum(w * q ** (-a)))


def bridge_lhs_batch(lam, X, Y, half_shift=False, step=0.2):
    """Batch bridge integral from q^{-a} = Gamma(a)^{-1} int tau^{a-1} e^{-tau q} dtau.

    The tau integral runs over a log grid scaled by |x-y|^2 and the s-integral
    factorises into exponential moments of each Omega_{lambda_j}.
    """
    lam = LambdaIndex.of(lam)
    X, Y = np.atleast_2d(X), np.atleast_2d(Y)
    d2 = np.sum((X - Y) ** 2, axis=-1)
    if np.any(d2 == 0):
        raise SingularityError("bridge integral is singular on the diagonal")
    a = lam.A + (0.5 if half_shift else 0.0)
    v = np.arange(-46.0 / a, 4.0, step)
    tau = np.exp(v)[None, :] / d2[:, None]
    logf = a * np.log(tau) - tau * d2[:, None]
    for j, l in enumerate(lam):
        tab = moment_table(l, 0)
        u = 2 * tau * (X[:, j] * Y[:, j])[:, None]
        logf = logf + tab.log_moments(u, 0)[..., 0]
    return step * np.sum(np.exp(logf), axis=1) / gamma_fn(a)


# ---------------------------------------------------------------------------
# theta lemma

def theta_check(x, xp, y, s, alpha):
    """Compare q(x, y, s) with q(theta, y, s) for theta = alpha x + (1 - alpha) x'.

    Works on batches (coordinates on the last axis).  ``admissible`` flags
    samples that satisfy |x - y| > 2 |x - x'|; ``ok`` is evaluated for all.
    """
    x, xp, y = (np.asarray(a, dtype=float) for a in (x, xp, y))
    s = np.asarray(s, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    theta = alpha[..., None] * x + (1 - alpha[..., None]) * xp if alpha.ndim else alpha * x + (1 - alpha) * xp
    qxy = q_fn(x, y, s)
    qth = q_fn(theta, y, s)
    ok = (qxy / 4 <= qth) & (qth <= 4 * qxy)
    adm = np.linalg.norm(x - y, axis=-1) > 2 * np.linalg.norm(x - xp, axis=-1)
    return ThetaResult(qxy, qth, ok, adm)
