"""Young functions, moduli of continuity and log-modulated moduli.

Function families are named by short specs:

* ``pow:<a>``  -- ``u**a``
* ``expq``     -- ``exp(u**2 / 4)`` (Young functions only)
* ``tab:<path>`` -- piecewise-linear modulus read from a two-column table
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParameterError
from .field_grid import as_pair


@dataclass(frozen=True)
class YoungFunction:
    kind: str  # "power" | "expq"
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in ("power", "expq"):
            raise ParameterError(f"unknown Young function kind {self.kind!r}")
        if self.kind == "power" and not self.alpha > 0:
            raise ParameterError(f"power exponent must be positive, got {self.alpha}")

    @classmethod
    def power(cls, alpha: float) -> "YoungFunction":
        return cls("power", float(alpha))

    @classmethod
    def expq(cls) -> "YoungFunction":
        return cls("expq")

    @classmethod
    def parse(cls, spec: str) -> "YoungFunction":
        spec = spec.strip()
        if spec == "expq":
            return cls.expq()
        if spec.startswith("pow:"):
            return cls.power(float(spec[4:]))
        raise ParameterError(f"unrecognized Young function spec {spec!r}")

    @property
    def spec(self) -> str:
        return "expq" if self.kind == "expq" else f"pow:{self.alpha:g}"

    def __call__(self, v):
        v = np.abs(np.asarray(v, dtype=float))
        if self.kind == "power":
            return v ** self.alpha
        with np.errstate(over="ignore"):
            return np.exp(v * v / 4.0)

    @property
    def at_zero(self) -> float:
        return 0.0 if self.kind == "power" else 1.0

    def inverse(self, u, clamp: bool = False):
        """Vectorized ``sup{v >= 0 : psi(v) <= u}``.

        With ``clamp`` arguments below ``psi(0)`` map to 0 instead of raising.
        """
        u = np.asarray(u, dtype=float)
        below = u < self.at_zero
        if np.any(below) and not clamp:
            raise DomainError(f"argument below psi(0) = {self.at_zero}")
        if self.kind == "power":
            return np.where(below, 0.0, np.maximum(u, 0.0) ** (1.0 / self.alpha))
        return 2.0 * np.sqrt(np.log(np.maximum(u, 1.0)))


def psi_inverse(psi: YoungFunction, u: float) -> float:
    return float(psi.inverse(u))


@dataclass(frozen=True, eq=False)
class ModulusFunction:
    """Continuous non-decreasing ``p`` with ``p(0) = 0``.

    ``power`` moduli are ``u**gamma``; ``tabulated`` moduli interpolate linearly
    between knots ``(u_i, p_i)`` and are constant beyond the last knot.
    """

    kind: str
    gamma: float = 1.0
    knots: np.ndarray | None = field(default=None, repr=False)
    table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind == "power":
            if not self.gamma > 0:
                raise ParameterError(f"modulus exponent must be positive, got {self.gamma}")
        elif self.kind == "tabulated":
            u = np.asarray(self.knots, dtype=float).ravel()
            p = np.asarray(self.table, dtype=float).ravel()
            if u.size != p.size or u.size == 0:
                raise ParameterError("knots and values must be non-empty and of equal length")
            if np.any(np.diff(u) <= 0) or u[0] < 0:
                raise ParameterError("knots must be non-negative and strictly increasing")
            if u[0] > 0:
                u = np.concatenate([[0.0], u])
                p = np.concatenate([[0.0], p])
            elif p[0] != 0:
                raise ParameterError("tabulated modulus must vanish at 0")
            if np.any(np.diff(p) < 0):
                raise ParameterError("tabulated modulus values must be non-decreasing")
            u.setflags(write=False)
            p.setflags(write=False)
            object.__setattr__(self, "knots", u)
            object.__setattr__(self, "table", p)
        else:
            raise ParameterError(f"unknown modulus kind {self.kind!r}")

    @classmethod
    def power(cls, gamma: float) -> "ModulusFunction":
        return cls("power", float(gamma))

    @classmethod
    def tabulated(cls, knots, values) -> "ModulusFunction":
        return cls("tabulated", knots=knots, table=values)

    @classmethod
    def parse(cls, spec: str) -> "ModulusFunction":
        spec = spec.strip()
        if spec.startswith("pow:"):
            return cls.power(float(spec[4:]))
        if spec.startswith("tab:"):
            path = Path(spec[4:])
            text = path.read_text()
            data = np.loadtxt(path, delimiter="," if "," in text else None, ndmin=2)
            return cls.tabulated(data[:, 0], data[:, 1])
        raise ParameterError(f"unrecognized modulus spec {spec!r}")

    @property
    def spec(self) -> str:
        return f"pow:{self.gamma:g}" if self.kind == "power" else "tab:<in-memory>"

    def __call__(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        if self.kind == "power":
            return u ** self.gamma
        return np.interp(u, self.knots, self.table)

    @property
    def upper(self) -> float:
        """p(1)."""
        return float(self(1.0))

    def inverse(self, u):
        """``max{v in [0, 1] : p(v) <= u}``, vectorized."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u > self.upper * (1 + 1e-15)):
            raise DomainError(f"argument outside [0, p(1)] = [0, {self.upper}]")
        if self.kind == "power":
            return np.minimum(u ** (1.0 / self.gamma), 1.0)
        return np.vectorize(self._tab_inverse, otypes=[float])(u)

    def _tab_inverse(self, u: float) -> float:
        knots, table = self.knots, self.table
        inside = knots <= 1.0
        ks, ts = knots[inside], table[inside]
        if ks[-1] < 1.0:
            ks = np.append(ks, 1.0)
            ts = np.append(ts, self(1.0))
        i = int(np.searchsorted(ts, u, side="right")) - 1  # rightmost knot with p <= u
        if i >= ks.size - 1:
            return float(ks[-1])
        # the interpolant is linear on [ks[i], ks[i+1]] and exceeds u at ks[i+1]
        lo, hi = ks[i], ks[i + 1]
        slope = (ts[i + 1] - ts[i]) / (hi - lo)
        return float(min(hi, lo + (u - ts[i]) / slope))

    def segments(self, delta: float) -> list[tuple[float, float, float]]:
        """Pieces of ``[0, delta]`` where ``dp`` has a smooth density: ``(a, b, slope)``.

        Only meaningful for tabulated moduli (power moduli have density
        ``gamma u**(gamma-1)`` everywhere).
        """
        knots, table = self.knots, self.table
        out = []
        for a, b, pa, pb in zip(knots[:-1], knots[1:], table[:-1], table[1:]):
            if a >= delta:
                break
            hi = min(b, delta)
            out.append((float(a), float(hi), float((pb - pa) / (b - a))))
        return out


def p_inverse(p: ModulusFunction, u: float) -> float:
    return float(p.inverse(u))


LOG_FORMS = ("h", "sigma", "hH", "sigmaH", "heat", "heat_uLIL2")


@dataclass(frozen=True)
class LogModulatedModulus:
    """Product moduli multiplied by a square-root logarithmic factor.

    ``h``      prod_k p_k(|d_k|) * sqrt(log prod_j 1/|d_j|)
    ``sigma``  sum over edges of the box, see :func:`_sigma`
    ``hH``/``sigmaH``  the same with ``p_k(u) = u**H_k``
    ``heat``   |t-s|**(1/4-alpha) |x-y|**(2 alpha) |log(|t-s||x-y|)|**(1/2)
    ``heat_uLIL2``  |s-t|**(1/4) sqrt(log 1/(|x||s-t|)) + |x-y|**(1/2) sqrt(log 1/(|x-y||t|))
    """

    form: str
    moduli: tuple = ()
    alpha: float = 0.0

    def __post_init__(self):
        if self.form not in LOG_FORMS:
            raise ParameterError(f"unknown log-modulated form {self.form!r}")
        if self.form in ("heat", "heat_uLIL2"):
            if self.form == "heat" and not 0.0 <= self.alpha <= 0.25:
                raise ParameterError(f"heat form needs alpha in [0, 1/4], got {self.alpha}")
        elif not self.moduli:
            raise ParameterError(f"form {self.form!r} needs per-axis moduli")

    @classmethod
    def h(cls, moduli) -> "LogModulatedModulus":
        return cls("h", tuple(moduli))

    @classmethod
    def sigma(cls, moduli) -> "LogModulatedModulus":
        return cls("sigma", tuple(moduli))

    @classmethod
    def hH(cls, hurst) -> "LogModulatedModulus":
        return cls("hH", tuple(ModulusFunction.power(H) for H in hurst))

    @classmethod
    def sigmaH(cls, hurst) -> "LogModulatedModulus":
        return cls("sigmaH", tuple(ModulusFunction.power(H) for H in hurst))

    @classmethod
    def heat(cls, alpha: float) -> "LogModulatedModulus":
        return cls("heat", alpha=float(alpha))

    @classmethod
    def heat_uLIL2(cls) -> "LogModulatedModulus":
        return cls("heat_uLIL2")

    @property
    def dim(self) -> int:
        return 2 if self.form in ("heat", "heat_uLIL2") else len(self.moduli)

    @property
    def is_rectangular(self) -> bool:
        """True when the numerator is a box increment rather than a point difference."""
        return self.form in ("h", "hH", "heat")

    def evaluate(self, x, y) -> np.ndarray:
        """Vectorized evaluation on points of shape ``(..., n)``."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape[-1] != self.dim or y.shape != x.shape:
            raise DomainError(f"expected matching points with trailing dimension {self.dim}")
        d = np.abs(x - y)
        if self.form != "heat_uLIL2" and (np.any(d <= 0) or np.any(d >= 1)):
            raise DomainError("every |x_k - y_k| must lie in (0, 1)")
        if self.form in ("h", "hH"):
            return _prod_moduli(self.moduli, d) * np.sqrt(-np.log(d).sum(axis=-1))
        if self.form in ("sigma", "sigmaH"):
            return _sigma(self.moduli, x, y)
        if self.form == "heat":
            dt, dx = d[..., 0], d[..., 1]
            a = self.alpha
            return dt ** (0.25 - a) * dx ** (2 * a) * np.sqrt(np.abs(np.log(dt * dx)))
        return _heat_uLIL2(x, y)


def _prod_moduli(moduli, d: np.ndarray) -> np.ndarray:
    out = np.ones(d.shape[:-1])
    for k, p in enumerate(moduli):
        out = out * p(d[..., k])
    return out


def _sigma(moduli, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    d = np.abs(x - y)
    if n > 1:
        zs = np.concatenate([x[..., :-1], y[..., 1:]], axis=-1)
        if np.any(zs <= 0) or np.any(zs > 1):
            raise DomainError("edge coordinates must lie in (0, 1]")
    total = np.zeros(x.shape[:-1])
    for k in range(n):
        z = np.concatenate([x[..., :k], y[..., k + 1:]], axis=-1)
        if n == 1:
            edge = 1.0  # no transverse coordinates
        else:
            others = [p for j, p in enumerate(moduli) if j != k]
            edge = _prod_moduli(others, np.abs(z)) * np.sqrt(np.abs(np.log(np.abs(z)).sum(axis=-1)))
        total = total + edge * moduli[k](d[..., k]) * np.sqrt(np.abs(np.log(d[..., k])))
    return total


def _heat_uLIL2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    s, x = a[..., 0], a[..., 1]
    t, y = b[..., 0], b[..., 1]
    dt, dx = np.abs(s - t), np.abs(x - y)
    if np.any(dt <= 0) or np.any(dx <= 0):
        raise DomainError("heat_uLIL2 needs |s-t| > 0 and |x-y| > 0")
    if np.any(np.abs(x) <= 0) or np.any(np.abs(t) <= 0) or np.any(np.abs(x) > 1) or np.any(np.abs(t) > 1):
        raise DomainError("heat_uLIL2 needs |x| and |t| in (0, 1]")
    l1 = -np.log(np.abs(x) * dt)
    l2 = -np.log(dx * np.abs(t))
    if np.any(l1 < 0) or np.any(l2 < 0):
        raise DomainError("logarithm arguments exceed 1")
    return dt ** 0.25 * np.sqrt(l1) + dx ** 0.5 * np.sqrt(l2)


def eval_log_modulus(m: LogModulatedModulus, pair) -> float:
    pair = as_pair(pair)
    return float(m.evaluate(np.array(pair.x), np.array(pair.y)))


def parse_moduli(spec: str, dim: int | None = None) -> tuple:
    """Comma-separated modulus specs; a single spec is broadcast to ``dim`` axes."""
    parts = [s for s in spec.split(",") if s.strip()]
    moduli = tuple(ModulusFunction.parse(s) for s in parts)
    if dim is not None and len(moduli) == 1:
        moduli = moduli * dim
    if dim is not None and len(moduli) != dim:
        raise ParameterError(f"expected {dim} moduli, got {len(moduli)}")
    return moduli


def power_moduli(exponents) -> tuple:
    return tuple(ModulusFunction.power(g) for g in exponents)
