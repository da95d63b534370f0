"""Quadrature and special-function helpers shared by the posterior code.

Two integration routines live here. ``integrate_vector`` is an adaptive
panel-bisection Gauss-Legendre scheme with an absolute tolerance, used for
posterior action probabilities. ``log_integrate_vector`` evaluates the same
kind of integral entirely in log space so that quantities as small as
exp(-1000) keep full relative precision; it refines by doubling every panel.

The regularized incomplete beta function is evaluated with the classic
continued fraction (modified Lentz iteration), vectorized over numpy arrays,
together with a log-space variant that stays accurate deep in the tails
where the plain value underflows.
"""
from __future__ import annotations

import numpy as np
from scipy.special import gammaln, logsumexp


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature cannot reach its tolerance.

    Carries the offending interval and the residual so callers can report
    actionable diagnostics instead of silently returning garbage.
    """

    def __init__(self, message: str, interval=None, residual=None):
        super().__init__(message)
        self.interval = interval
        self.residual = residual


_GL_CACHE: dict = {}


def _leggauss(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def integrate_vector(fn, lo: float, hi: float, tol: float = 1e-10,
                     order: int = 20, max_depth: int = 40) -> np.ndarray:
    """Integrate a vector-valued function over [lo, hi].

    ``fn(x)`` maps an (m,) array of abscissae to a (k, m) array of integrand
    values. Each panel is accepted once bisecting it moves every component
    by less than the panel's proportional share of ``tol``, which keeps the
    summed absolute error below ``tol`` per component.
    """
    if not hi > lo:
        raise ValueError("empty integration interval")
    nodes, weights = _leggauss(order)

    def panel(a: float, b: float) -> np.ndarray:
        half = 0.5 * (b - a)
        vals = fn(0.5 * (a + b) + half * nodes)
        return half * (vals @ weights)

    width = hi - lo
    total = None
    stack = [(lo, hi, panel(lo, hi), 0)]
    while stack:
        a, b, coarse, depth = stack.pop()
        mid = 0.5 * (a + b)
        left, right = panel(a, mid), panel(mid, b)
        err = float(np.max(np.abs(left + right - coarse)))
        if err <= tol * (b - a) / width:
            merged = left + right
            total = merged if total is None else total + merged
        elif depth >= max_depth:
            raise QuadratureError(
                f"quadrature stalled on [{a!r}, {b!r}] with residual {err:.3e}",
                interval=(a, b), residual=err,
            )
        else:
            stack.append((a, mid, left, depth + 1))
            stack.append((mid, b, right, depth + 1))
    return total


def log_integrate_vector(logfn, edges, rel_tol: float = 1e-9,
                         order: int = 16, max_doublings: int = 12) -> np.ndarray:
    """Log of the integral of exp(logfn) over the span of ``edges``.

    ``logfn(x)`` maps an (m,) array to a (k, m) array of log-integrand
    values (``-inf`` where the integrand vanishes). ``edges`` is an
    increasing array of initial panel boundaries; placing extra edges where
    the integrand is peaked speeds convergence. All panels are split in half
    until the log-integrals move by less than ``rel_tol`` between levels,
    which bounds the relative error of the linear-scale result.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing with two or more entries")
    nodes, weights = _leggauss(order)
    log_weights = np.log(weights)

    prev = None
    for _ in range(max_doublings + 1):
        halves = 0.5 * np.diff(edges)
        mids = edges[:-1] + halves
        xs = (mids[:, None] + halves[:, None] * nodes).ravel()
        with np.errstate(divide="ignore"):
            log_scale = (np.log(halves)[:, None] + log_weights).ravel()
        vals = logfn(xs)
        result = logsumexp(vals + log_scale, axis=-1)
        if prev is not None:
            moved = np.abs(result - prev)
            # treat a pair of -inf values (true zero component) as converged
            moved = np.where(np.isneginf(result) & np.isneginf(prev), 0.0, moved)
            if np.all(moved <= rel_tol):
                return result
        prev = result
        refined = np.empty(2 * edges.size - 1)
        refined[0::2] = edges
        refined[1::2] = mids
        edges = refined
    raise QuadratureError(
        f"log-space quadrature did not stabilize within {max_doublings} doublings",
        residual=None if prev is None else float(np.max(np.abs(result - prev))),
    )


# ---------------------------------------------------------------------------
# Regularized incomplete beta via continued fraction
# ---------------------------------------------------------------------------

_CF_EPS = 1e-15
_CF_FPMIN = 1e-300
_CF_MAXIT = 2000


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz), vectorized.

    Valid on the branch x < (a + 1) / (a + b + 2); callers apply the symmetry
    transformation first. Each element freezes at its own first convergence,
    matching scalar Lentz termination: after an element converges its delta
    keeps fluctuating by a few ulp, so a collective convergence test on the
    live deltas can starve even though every element finished long ago.
    """
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _CF_FPMIN, _CF_FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    done = np.zeros(x.shape, dtype=bool)
    for m in range(1, _CF_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_FPMIN, _CF_FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_FPMIN, _CF_FPMIN, c)
        d = 1.0 / d
        factor = d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _CF_FPMIN, _CF_FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _CF_FPMIN, _CF_FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * factor * delta)
        done |= np.abs(delta - 1.0) < _CF_EPS
        if done.all():
            return h
    raise QuadratureError("incomplete beta continued fraction failed to converge")


def _log_front(a, b, x):
    # log of x^a (1-x)^b / B(a, b)
    return (gammaln(a + b) - gammaln(a) - gammaln(b)
            + a * np.log(x) + b * np.log1p(-x))


def _broadcast_flat(a, b, x):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.asarray(x, dtype=float)
    shape = np.broadcast_shapes(a.shape, b.shape, x.shape)
    flat = tuple(np.ravel(np.broadcast_to(v, shape)) for v in (a, b, x))
    return shape, flat


def log_betainc(a, b, x):
    """log of the regularized incomplete beta I_x(a, b), elementwise.

    Stays accurate for values far below the smallest positive float, e.g.
    log I_x ~ -1e5. Inputs broadcast against each other; a, b > 0 and
    x in [0, 1].
    """
    shape, (a, b, x) = _broadcast_flat(a, b, x)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("beta parameters must be positive")
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    out = np.empty_like(x)
    zero = x <= 0.0
    one = x >= 1.0
    out[zero] = -np.inf
    out[one] = 0.0
    interior = ~(zero | one)
    if np.any(interior):
        ai, bi, xi = a[interior], b[interior], x[interior]
        lower = xi < (ai + 1.0) / (ai + bi + 2.0)
        res = np.empty_like(xi)
        if np.any(lower):
            al, bl, xl = ai[lower], bi[lower], xi[lower]
            res[lower] = (_log_front(al, bl, xl)
                          + np.log(_betacf(al, bl, xl)) - np.log(al))
        if np.any(~lower):
            au, bu, xu = ai[~lower], bi[~lower], xi[~lower]
            log_tail = (_log_front(bu, au, 1.0 - xu)
                        + np.log(_betacf(bu, au, 1.0 - xu)) - np.log(bu))
            # I = 1 - tail; log1p keeps precision when the tail is tiny
            res[~lower] = np.log1p(-np.exp(np.minimum(log_tail, 0.0)))
        out[interior] = res
    return float(out[0]) if shape == () else out.reshape(shape)


def betainc(a, b, x):
    """Regularized incomplete beta I_x(a, b) via the continued fraction."""
    shape, (a, b, x) = _broadcast_flat(a, b, x)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("beta parameters must be positive")
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x must lie in [0, 1]")
    out = np.empty_like(x)
    zero = x <= 0.0
    one = x >= 1.0
    out[zero] = 0.0
    out[one] = 1.0
    interior = ~(zero | one)
    if np.any(interior):
        ai, bi, xi = a[interior], b[interior], x[interior]
        lower = xi < (ai + 1.0) / (ai + bi + 2.0)
        res = np.empty_like(xi)
        if np.any(lower):
            al, bl, xl = ai[lower], bi[lower], xi[lower]
            front = np.exp(_log_front(al, bl, xl))
            res[lower] = front * _betacf(al, bl, xl) / al
        if np.any(~lower):
            au, bu, xu = ai[~lower], bi[~lower], xi[~lower]
            front = np.exp(_log_front(bu, au, 1.0 - xu))
            res[~lower] = 1.0 - front * _betacf(bu, au, 1.0 - xu) / bu
        out[interior] = res
    return float(out[0]) if shape == () else out.reshape(shape)
