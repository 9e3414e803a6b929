"""Kernel integrals for the stochastic heat equation driven by space-time white noise.

With ``p_r(d) = exp(-d**2 / 2r) / sqrt(2 pi r)`` the mild solution started from
zero has covariance

    E[u(s, x) u(t, y)] = 1/2 int_{|t-s|}^{s+t} p_w(x - y) dw,

and everything below reduces to the two antiderivatives

    G(T, d) = int_0^T p_r(d) dr = sqrt(2T/pi) exp(-d^2/2T) - |d| erfc(|d|/sqrt(2T)),
    F(T, d) = int_0^T [p_r(0) - p_r(d)] dr.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate, special

from .errors import BoundViolation, ParameterError

SQRT_2PI = math.sqrt(2.0 * math.pi)


class HeatPoint(NamedTuple):
    t: float
    y: float


def heat_kernel(r, d):
    r = np.asarray(r, dtype=float)
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(-d * d / (2.0 * r)) / np.sqrt(2.0 * np.pi * r)
    return np.where(r > 0, out, 0.0)


def kernel_integral(T, d):
    """``G(T, d) = int_0^T p_r(d) dr``; zero for ``T <= 0``."""
    T = np.asarray(T, dtype=float)
    d = np.abs(np.asarray(d, dtype=float))
    Ts = np.where(T > 0, T, 1.0)
    root = np.sqrt(2.0 * Ts)
    val = root / math.sqrt(math.pi) * np.exp(-d * d / (2.0 * Ts)) - d * special.erfc(d / root)
    return np.where(T > 0, val, 0.0)


def kernel_gap_integral(T, d):
    """``F(T, d) = int_0^T [p_r(0) - p_r(d)] dr``, stable for small ``d``."""
    T = np.asarray(T, dtype=float)
    d = np.abs(np.asarray(d, dtype=float))
    Ts = np.where(T > 0, T, 1.0)
    root = np.sqrt(2.0 * Ts)
    val = -root / math.sqrt(math.pi) * np.expm1(-d * d / (2.0 * Ts)) + d * special.erfc(d / root)
    return np.where(T > 0, val, 0.0)


class KernelIntegralTable:
    """``F(T, d)`` precomputed on a tensor grid of ``T`` and ``d`` values.

    Lookups at tabulated arguments return cached values; anything else is
    evaluated directly.
    """

    def __init__(self, T_values, d_values):
        self.T = np.unique(np.asarray(T_values, dtype=float))
        self.d = np.unique(np.abs(np.asarray(d_values, dtype=float)))
        self.table = kernel_gap_integral(self.T[:, None], self.d[None, :])
        self.table.setflags(write=False)

    def __call__(self, T, d):
        T = np.asarray(T, dtype=float)
        d = np.abs(np.asarray(d, dtype=float))
        T, d = np.broadcast_arrays(T, d)
        i = np.clip(np.searchsorted(self.T, T), 0, self.T.size - 1)
        j = np.clip(np.searchsorted(self.d, d), 0, self.d.size - 1)
        hit = (self.T[i] == T) & (self.d[j] == d)
        out = np.where(hit, self.table[i, j], 0.0)
        if not np.all(hit):
            out = np.where(hit, out, kernel_gap_integral(T, d))
        return out


def _split(points):
    p = np.asarray(points, dtype=float)
    return p[..., 0], p[..., 1]


def heat_cov(a, b):
    """``E[u(s, x) u(t, y)]`` for ``a = (s, x)``, ``b = (t, y)`` (broadcasts over leading axes)."""
    s, x = _split(a)
    t, y = _split(b)
    d = x - y
    val = 0.5 * (kernel_integral(s + t, d) - kernel_integral(np.abs(t - s), d))
    return np.where(np.minimum(s, t) > 0, val, 0.0)


def heat_cov_quad(a, b) -> float:
    """Brute quadrature of the defining integral (reference route)."""
    s, x = map(float, a)
    t, y = map(float, b)
    lo, hi = abs(t - s), s + t
    if min(s, t) <= 0:
        return 0.0
    d = x - y
    # w = v^2 removes the w^-1/2 endpoint singularity when lo = 0
    val, _ = integrate.quad(lambda v: 2.0 * v * float(heat_kernel(v * v, d)), math.sqrt(lo), math.sqrt(hi),
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return 0.5 * val


def heat_sq_increment(s, t, x, y, table: KernelIntegralTable | None = None):
    """Variance of ``u(t,y) - u(t,x) - u(s,y) + u(s,x)``.

    Sum of three kernel-gap integrals: over ``[s+t, 2 max]``, minus over
    ``[2 min, s+t]``, plus twice over ``[0, |s-t|]``.
    """
    F = table if table is not None else kernel_gap_integral
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    hi, lo = np.maximum(s, t), np.minimum(s, t)
    return F(2 * hi, d) + F(2 * lo, d) - 2.0 * F(s + t, d) + 2.0 * F(np.abs(s - t), d)


def heat_sq_increment_corners(s, t, x, y):
    """Same variance from the covariance at the four corners."""
    s, t, x, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s, t, x, y)))
    a, b, c, d = (np.stack(p, axis=-1) for p in ((s, x), (s, y), (t, x), (t, y)))
    Q = heat_cov
    diag = Q(a, a) + Q(b, b) + Q(c, c) + Q(d, d)
    cross = Q(a, d) + Q(b, c) - Q(a, b) - Q(a, c) - Q(b, d) - Q(c, d)
    return diag + 2.0 * cross


def j_bound_constant(alpha: float, t_ratio: float) -> float:
    """Explicit ``c`` with ``J <= c * 2**-alpha * d**(2 alpha) * a**(1/2 - alpha)``.

    ``t_ratio = d / sqrt(2a)`` selects the branch: for ``t >= 1`` the tail
    integral is at most ``e^{-t^2}/2t``, giving ``2e/(e-1)``; below 1 it is at
    most ``sqrt(pi)/2``, giving ``2 + 2 sqrt(pi)``.  Both use ``1 - e^{-x} <= x**alpha``.
    """
    if not 0.0 <= alpha <= 0.5:
        raise ParameterError(f"alpha must lie in [0, 1/2], got {alpha}")
    if t_ratio >= 1.0:
        return 2.0 * math.e / (math.e - 1.0)
    return 2.0 + 2.0 * math.sqrt(math.pi)


def j_bound(a: float, delta: float, alpha: float) -> float:
    c = j_bound_constant(alpha, delta / math.sqrt(2.0 * a))
    return c * 2.0 ** -alpha * delta ** (2 * alpha) * a ** (0.5 - alpha)


@dataclass(frozen=True)
class IncrementBound:
    value: float
    bound1: float
    bound2: float


def heat_sq_increment_bound(s, t, x, y, alpha: float, rtol: float = 1e-12) -> IncrementBound:
    """Exact variance, ``2 F(|s-t|, |x-y|)`` and ``c_alpha |x-y|^{2 alpha} |s-t|^{1/2-alpha}``.

    Raises :class:`BoundViolation` if ``value > bound1`` beyond ``rtol``.
    """
    if not 0.0 <= alpha <= 0.5:
        raise ParameterError(f"alpha must lie in [0, 1/2], got {alpha}")
    value = float(heat_sq_increment(s, t, x, y))
    a = abs(float(s) - float(t))
    d = abs(float(x) - float(y))
    bound1 = float(2.0 * kernel_gap_integral(a, d))
    if value > bound1 + rtol * max(abs(bound1), 1e-300):
        raise BoundViolation(f"variance {value!r} exceeds 2F = {bound1!r} at s={s}, t={t}, |x-y|={d}")
    if a == 0.0 or d == 0.0:
        bound2 = 0.0
    else:
        # 2F(a, d) = (2 / sqrt(2 pi)) J(a, d)
        bound2 = 2.0 / SQRT_2PI * j_bound(a, d, alpha)
    return IncrementBound(value, bound1, bound2)


class GapBrackets(NamedTuple):
    I: float
    lower: float
    upper: float
    J: float
    J_identity: float


def _gap_quad(lo: float, hi: float, delta: float) -> float:
    # r = v^2: int r^{-1/2}(1 - e^{-d^2/2r}) dr = int 2(1 - e^{-d^2/2v^2}) dv
    f = lambda v: -2.0 * math.expm1(-delta * delta / (2.0 * v * v)) if v > 0 else 2.0
    val, _ = integrate.quad(f, math.sqrt(lo), math.sqrt(hi), epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def lemma51_brackets(a: float, b: float, delta: float, tol: float = 1e-9) -> GapBrackets:
    """Quadrature ``I``, its two brackets, quadrature ``J`` and its closed identity."""
    if not 0 < a < b:
        raise ParameterError(f"need 0 < a < b, got a={a}, b={b}")
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    I = _gap_quad(a, b, delta)
    width = 2.0 * (math.sqrt(b) - math.sqrt(a))
    lower = -width * math.expm1(-delta ** 2 / (2.0 * b))
    upper = -width * math.expm1(-delta ** 2 / (2.0 * a))
    J = _gap_quad(0.0, a, delta)
    t = delta / math.sqrt(2.0 * a)
    # 2 sqrt(2) d int_t^inf e^{-x^2} dx = sqrt(2 pi) d erfc(t)
    J_id = -2.0 * math.sqrt(a) * math.expm1(-t * t) + SQRT_2PI * delta * math.erfc(t)
    if not (lower <= I + tol and I <= upper + tol):
        raise BoundViolation(f"bracket violated: {lower!r} <= {I!r} <= {upper!r}")
    if abs(J - J_id) >= tol:
        raise BoundViolation(f"J quadrature {J!r} differs from identity {J_id!r}")
    return GapBrackets(I, lower, upper, J, J_id)


def rho(u: float) -> float:
    """``sqrt(2/pi) int_0^u r^{-1/2} (1 - e^{-1/r}) dr``; ``u = inf`` allowed.

    Quadrature in ``v = sqrt(r)`` on ``[0, 1]`` and in ``w = r^{-1/2}`` beyond,
    which turns both the ``r^{-1/2}`` start and the ``r^{-3/2}`` tail into
    smooth integrands.
    """
    u = float(u)
    if u < 0 or math.isnan(u):
        raise ParameterError(f"rho needs u >= 0, got {u}")
    if u == 0:
        return 0.0
    head = lambda v: -2.0 * math.expm1(-1.0 / (v * v)) if v > 0 else 2.0
    tail = lambda w: -2.0 * math.expm1(-w * w) / (w * w) if w > 0 else 2.0
    val, _ = integrate.quad(head, 0.0, math.sqrt(min(u, 1.0)), epsabs=0.0, epsrel=1e-13)
    if u > 1:
        w_lo = 0.0 if math.isinf(u) else 1.0 / math.sqrt(u)
        t, _ = integrate.quad(tail, w_lo, 1.0, epsabs=0.0, epsrel=1e-13)
        val += t
    return math.sqrt(2.0 / math.pi) * val
