"""Gaussian fields on ``[0, 1]^n``: covariance models, increment variances,
sequential moduli and exact grid sampling.

The variance of a rectangular increment is the doubled-variable increment of
the covariance,

    E |box_y W(x)|^2 = box^{2n}_{(y, y)} Q(x, x),

which for product covariances ``Q = prod_k Q_k`` factorizes into one-axis
terms ``Q_k(x,x) - Q_k(x,y) - Q_k(y,x) + Q_k(y,y)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import _exact
from .errors import DivergenceError, ModelError, ParameterError
from .field_grid import GridField, as_pair, axis_pairs
from .heat import heat_cov
from .modulus import ModulusFunction

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)


def fbm_cov(s, t, hurst: float):
    """``R_H(s, t) = (|s|^{2H} + |t|^{2H} - |s-t|^{2H}) / 2``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(s) ** h2 + np.abs(t) ** h2 - np.abs(s - t) ** h2)


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """``Q(x, y)`` on ``[0, 1]^n``.

    kinds: ``fbm`` (product of fBm factors), ``product`` (user factors
    ``Q_k(s, t)``), ``heat`` (space-time covariance of the heat equation, points
    ``(t, y)``) and ``custom`` (any vectorized ``Q(x, y)`` on ``(..., n)`` arrays).
    """

    kind: str
    dim: int
    hurst: tuple = ()
    factors: tuple = ()
    func: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("fbm", "product", "heat", "custom"):
            raise ParameterError(f"unknown covariance kind {self.kind!r}")
        if self.kind == "fbm":
            if len(self.hurst) != self.dim or not all(0 < h <= 1 for h in self.hurst):
                raise ParameterError(f"need {self.dim} Hurst indices in (0, 1], got {self.hurst}")
        if self.kind == "product" and len(self.factors) != self.dim:
            raise ParameterError(f"need {self.dim} covariance factors")
        if self.kind == "heat" and self.dim != 2:
            raise ParameterError("the heat model lives on (t, y), so dim must be 2")
        if self.kind == "custom" and self.func is None:
            raise ParameterError("custom models need a covariance callable")

    @classmethod
    def fbm(cls, hurst: Sequence[float]) -> "CovarianceModel":
        hurst = tuple(float(h) for h in np.atleast_1d(hurst))
        return cls("fbm", len(hurst), hurst=hurst)

    @classmethod
    def product(cls, factors: Sequence[Callable]) -> "CovarianceModel":
        return cls("product", len(factors), factors=tuple(factors))

    @classmethod
    def heat(cls) -> "CovarianceModel":
        return cls("heat", 2)

    @classmethod
    def custom(cls, func: Callable, dim: int) -> "CovarianceModel":
        return cls("custom", dim, func=func)

    @property
    def is_product(self) -> bool:
        return self.kind in ("fbm", "product")

    def factor(self, k: int, s, t):
        if self.kind == "fbm":
            return fbm_cov(s, t, self.hurst[k])
        if self.kind == "product":
            return np.asarray(self.factors[k](np.asarray(s, dtype=float), np.asarray(t, dtype=float)), dtype=float)
        raise ParameterError(f"{self.kind} model has no product factors")

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.is_product:
            out = 1.0
            for k in range(self.dim):
                out = out * self.factor(k, x[..., k], y[..., k])
            return np.asarray(out, dtype=float) * np.ones(np.broadcast_shapes(x.shape, y.shape)[:-1])
        if self.kind == "heat":
            return heat_cov(x, y)
        return np.asarray(self.func(x, y), dtype=float)

    def describe(self) -> dict:
        out = {"kind": self.kind, "dim": self.dim}
        if self.kind == "fbm":
            out["hurst"] = list(self.hurst)
        return out


def _corner_bits(n: int) -> tuple[np.ndarray, np.ndarray]:
    bits = np.array(np.unravel_index(np.arange(2 ** n), (2,) * n)).T.astype(bool)
    signs = np.where(bits.sum(axis=1) % 2, -1.0, 1.0)
    return bits, signs


def increment_variance_generic(model: CovarianceModel, x, y) -> np.ndarray:
    """``box^{2n} Q`` from all ``4^n`` signed corner pairs; ``x, y`` are ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1]
    bits, signs = _corner_bits(n)
    corners = np.where(bits, y[..., None, :], x[..., None, :])  # (..., 2^n, n)
    Q = model(corners[..., :, None, :], corners[..., None, :, :])  # (..., 2^n, 2^n)
    return np.einsum("...ij,i,j->...", Q, signs, signs)


def increment_variance_product(model: CovarianceModel, x, y) -> np.ndarray:
    """Product of one-axis second differences (product models only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = 1.0
    for k in range(model.dim):
        out = out * _axis_second_difference(model, k, x[..., k], y[..., k])
    return np.asarray(out, dtype=float)


def _axis_second_difference(model: CovarianceModel, k: int, a, b):
    return model.factor(k, a, a) - model.factor(k, a, b) - model.factor(k, b, a) + model.factor(k, b, b)


def increment_variance(model: CovarianceModel, pair, path: str = "auto") -> float:
    """``E|box_y W(x)|^2`` for one pair; ``path`` is ``auto``, ``product`` or ``generic``."""
    pair = as_pair(pair)
    x, y = np.asarray(pair.x), np.asarray(pair.y)
    if x.size != model.dim:
        raise ParameterError(f"{x.size}-D pair for a {model.dim}-D model")
    if path == "auto":
        path = "product" if model.is_product else "generic"
    if path == "product":
        if not model.is_product:
            raise ParameterError("product path needs a product model")
        return float(increment_variance_product(model, x, y))
    if path == "generic":
        return float(increment_variance_generic(model, x, y))
    raise ParameterError(f"unknown path {path!r}")


@dataclass
class EmpiricalModulus:
    """Tabulated moduli from the sequential sup construction (grid resolution only)."""

    moduli: tuple
    max_dominance_ratio: float
    resolution: str = "grid-resolution"

    def __iter__(self):
        return iter(self.moduli)

    def __len__(self):
        return len(self.moduli)


def _axis_increment_table(model: CovarianceModel, axes) -> tuple[np.ndarray, list]:
    """``box^{2n} Q`` for every combination of unordered per-axis node pairs."""
    per_axis = [axis_pairs(np.asarray(a), include_diagonal=True) for a in axes]
    if model.is_product:
        V = None
        for k, (a, (i, j)) in enumerate(zip(axes, per_axis)):
            v = _axis_second_difference(model, k, a[i], a[j])
            V = v if V is None else np.multiply.outer(V, v)
        return np.asarray(V), per_axis
    mesh = np.meshgrid(*[np.arange(len(p[0])) for p in per_axis], indexing="ij")
    xs = np.stack([np.asarray(axes[k])[per_axis[k][0]][mesh[k]] for k in range(len(axes))], axis=-1)
    ys = np.stack([np.asarray(axes[k])[per_axis[k][1]][mesh[k]] for k in range(len(axes))], axis=-1)
    V = increment_variance_generic(model, xs, ys)
    # degenerate rectangles vanish exactly; drop corner-sum rounding noise
    return np.where(np.any(xs == ys, axis=-1), 0.0, V), per_axis


def build_empirical_modulus(model: CovarianceModel, axes, rtol: float = 1e-12) -> EmpiricalModulus:
    """Sequential moduli ``p_1, ..., p_n`` on the grid ``axes``.

    ``p_1(u) = sup_{|x_1-y_1| <= u} V^{1/2}`` and
    ``p_k(u) = sup_{|x_k-y_k| <= u} V^{1/2} / prod_{j<k} p_j(|x_j-y_j|)``
    with ``V = box^{2n} Q`` and ``0/0 = 0``; sups run over grid pairs.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    n = len(axes)
    if n != model.dim:
        raise ParameterError(f"{n} axes for a {model.dim}-D model")
    V, per_axis = _axis_increment_table(model, axes)
    scale = max(float(np.max(np.abs(V))), 1e-300)
    if np.any(V < -rtol * scale):
        raise ModelError(f"negative increment variance {float(V.min())!r}: not a covariance")
    root = np.sqrt(np.maximum(V, 0.0))
    seps = [np.abs(a[j] - a[i]) for a, (i, j) in zip(axes, per_axis)]
    moduli, denom = [], np.ones_like(root)
    for k in range(n):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(denom > 0, root / denom, np.where(root > 0, np.inf, 0.0))
        other = tuple(a for a in range(n) if a != k)
        per_pair = np.max(ratio, axis=other) if other else ratio
        knots, inv = np.unique(seps[k], return_inverse=True)
        best = np.full(knots.size, 0.0)
        np.maximum.at(best, inv.ravel(), per_pair)
        if not np.all(np.isfinite(best)):
            raise ModelError(f"axis {k}: positive variance over a zero-modulus rectangle")
        table = np.maximum.accumulate(best)
        p = ModulusFunction.tabulated(knots, table)
        moduli.append(p)
        shape = [1] * n
        shape[k] = seps[k].size
        denom = denom * p(seps[k]).reshape(shape)
    # dominance re-check: V <= prod p_k^2
    with np.errstate(divide="ignore", invalid="ignore"):
        dom = np.where(denom > 0, root / denom, np.where(root > 0, np.inf, 0.0))
    worst = float(np.max(dom))
    if worst > 1.0 + 1e-12:
        raise ModelError(f"dominance fails on the construction grid (ratio {worst!r})")
    return EmpiricalModulus(tuple(moduli), worst)


def _cholesky_pinned(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower factor of ``cov`` with exact-zero-variance nodes pinned to 0.

    Nodes with zero diagonal are excluded from the factorization and get zero
    rows and columns; jitter ``(0, 1e-12, 1e-10, 1e-8) * trace/dim`` is tried
    in turn.  Returns the factor and the jitter used.
    """
    cov = np.asarray(cov, dtype=float)
    m = cov.shape[0]
    if not np.allclose(cov, cov.T, rtol=1e-12, atol=1e-14 * max(1.0, float(np.max(np.abs(cov))))):
        raise ModelError("covariance matrix is not symmetric")
    live = np.flatnonzero(np.diag(cov) != 0.0)
    L = np.zeros_like(cov)
    if live.size == 0:
        return L, 0.0
    sub = 0.5 * (cov[np.ix_(live, live)] + cov[np.ix_(live, live)].T)
    scale = float(np.trace(sub)) / live.size
    for jit in JITTER_LADDER:
        try:
            Ls = linalg.cholesky(sub + jit * scale * np.eye(live.size), lower=True, check_finite=True)
        except linalg.LinAlgError:
            continue
        L[np.ix_(live, live)] = Ls
        return L, jit * scale
    raise ModelError("covariance matrix is not positive definite even at the largest jitter")


def grid_points(axes) -> np.ndarray:
    return np.stack(np.meshgrid(*[np.asarray(a, dtype=float) for a in axes], indexing="ij"), axis=-1)


def normal_stream(seed: int, replicate: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for ``(seed, replicate, stream)``; independent of call order."""
    if seed < 0 or replicate < 0 or stream < 0:
        raise ParameterError("seed, replicate and stream must be non-negative")
    bitgen = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, seed >> 64], counter=[0, 0, stream, replicate])
    return np.random.Generator(bitgen)


class GaussianSampler:
    """Exact sampler for one model on one tensor grid.

    ``path="kronecker"`` (product models only) factorizes each axis separately
    and applies the factors axis by axis; ``path="full"`` factorizes the
    assembled covariance.  ``path="kron-dense"`` uses the dense Kronecker
    product of the per-axis factors, the full-matrix form of the same linear
    map.  With ``exact=True`` products are evaluated in exact dyadic arithmetic
    and rounded once, so ``kronecker`` and ``kron-dense`` agree bit for bit.
    """

    def __init__(self, model: CovarianceModel, axes, path: str = "auto", exact: bool = False):
        self.model = model
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        if len(self.axes) != model.dim:
            raise ParameterError(f"{len(self.axes)} axes for a {model.dim}-D model")
        self.shape = tuple(a.size for a in self.axes)
        if path == "auto":
            path = "kronecker" if model.is_product else "full"
        if path in ("kronecker", "kron-dense") and not model.is_product:
            raise ParameterError(f"{path} path needs a product model")
        if path not in ("kronecker", "kron-dense", "full"):
            raise ParameterError(f"unknown sampling path {path!r}")
        self.path = path
        self.exact = exact
        self.jitter: list[float] = []
        if path == "full":
            pts = grid_points(self.axes).reshape(-1, model.dim)
            cov = model(pts[:, None, :], pts[None, :, :])
            L, j = _cholesky_pinned(cov)
            self.factors = [L]
            self.jitter = [j]
        else:
            self.factors = []
            for k, a in enumerate(self.axes):
                L, j = _cholesky_pinned(model.factor(k, a[:, None], a[None, :]))
                self.factors.append(L)
                self.jitter.append(j)
        for L in self.factors:
            L.setflags(write=False)
        self._dense = None
        if path == "kron-dense":
            if exact:
                self._dense = _exact.kron_matrix(self.factors)
            else:
                d = np.ones((1, 1))
                for L in self.factors:
                    d = np.kron(d, L)
                self._dense = d

    def draw_normals(self, seed: int, replicate: int) -> np.ndarray:
        return normal_stream(seed, replicate).standard_normal(self.shape)

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Apply the covariance factor to standard normals of the grid shape."""
        z = np.asarray(z, dtype=float).reshape(self.shape)
        if self.path == "kronecker":
            if self.exact:
                return _exact.kron_apply(self.factors, z)
            g = z
            for k, L in enumerate(self.factors):
                g = np.moveaxis(np.tensordot(L, g, axes=([1], [k])), 0, k)
            return g
        if self.path == "kron-dense":
            if self.exact:
                mq, mk = self._dense
                return _exact.matvec(mq, mk, z).reshape(self.shape)
            return (self._dense @ z.ravel()).reshape(self.shape)
        L = self.factors[0]
        if self.exact:
            q, k = _exact.to_fixed(L)
            return _exact.matvec(q, k, z).reshape(self.shape)
        return (L @ z.ravel()).reshape(self.shape)

    def sample_values(self, seed: int, replicate: int) -> np.ndarray:
        return self.transform(self.draw_normals(seed, replicate))

    def sample(self, seed: int, replicate: int) -> GridField:
        return GridField(self.axes, self.sample_values(seed, replicate))

    def sample_batch(self, seed: int, replicates: Sequence[int]) -> np.ndarray:
        """Values for several replicates, shape ``(R, *grid)``; float paths only batch."""
        if self.exact:
            return np.stack([self.sample_values(seed, r) for r in replicates])
        Z = np.stack([self.draw_normals(seed, r) for r in replicates])
        if self.path == "kronecker":
            g = Z
            for k, L in enumerate(self.factors):
                g = np.moveaxis(np.tensordot(L, g, axes=([1], [k + 1])), 0, k + 1)
            return g
        M = self._dense if self.path == "kron-dense" else self.factors[0]
        return (Z.reshape(len(Z), -1) @ M.T).reshape((len(Z),) + self.shape)


def sample_field(model: CovarianceModel, axes, seed: int, replicate: int, **kw) -> GridField:
    return GaussianSampler(model, axes, **kw).sample(seed, replicate)


def sample_fields(model: CovarianceModel, axes, seed: int, replicates: int, threads: int = 1, **kw) -> list[GridField]:
    """Replicates ``0 .. replicates-1``; the output is independent of ``threads``."""
    sampler = GaussianSampler(model, axes, **kw)
    if threads <= 1:
        return [sampler.sample(seed, r) for r in range(replicates)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: sampler.sample(seed, r), range(replicates)))


def increment_moment_mc(model: CovarianceModel, pair, replicates: int, seed: int = 0) -> tuple[float, float]:
    """Mean and standard error of ``(box W)^2`` sampled on the ``2^n`` corner grid."""
    if replicates < 100:
        raise ParameterError("need at least 100 replicates")
    pair = as_pair(pair)
    x, y = np.asarray(pair.x), np.asarray(pair.y)
    if np.any(x == y):
        return 0.0, 0.0
    axes = [np.array(sorted((a, b))) for a, b in zip(x, y)]
    sampler = GaussianSampler(model, axes)
    vals = sampler.sample_batch(seed, range(replicates)).reshape(replicates, -1)
    bits, signs = _corner_bits(model.dim)
    # corner c picks y_k where bits set; map to sorted-axis index
    idx = np.where(bits, (y > x).astype(int), (x > y).astype(int))
    flat = np.ravel_multi_index(idx.T, sampler.shape)
    inc = vals[:, flat] @ signs
    sq = inc * inc
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(replicates))


def exp_quarter_moment(variance: float) -> float:
    """``E exp(N^2/4) = (1 - variance/2)^{-1/2}`` for ``N ~ N(0, variance)``."""
    if variance < 0:
        raise ParameterError("variance must be non-negative")
    if variance >= 2:
        raise DivergenceError(f"E exp(N^2/4) is infinite for variance {variance} >= 2")
    return 1.0 / math.sqrt(1.0 - 0.5 * variance)


@dataclass(frozen=True)
class ExpMomentReport:
    estimate: float
    std_error: float
    closed_form: float
    relative_error: float
    exceeds_15_14: bool


def exp_moment_check(variance: float, draws: int, seed: int = 0) -> ExpMomentReport:
    """Monte Carlo ``E exp(N^2/4)`` against the closed form.

    Also records whether the estimate exceeds the constant 15/14 that an
    over-tight series bound would suggest for unit variance.
    """
    closed = exp_quarter_moment(variance)
    if draws < 100_000:
        raise ParameterError("need at least 1e5 draws")
    if variance == 0:
        return ExpMomentReport(1.0, 0.0, 1.0, 0.0, False)
    z = normal_stream(seed, 0).standard_normal(draws) * math.sqrt(variance)
    v = np.exp(z * z / 4.0)
    est = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(draws))
    return ExpMomentReport(est, se, closed, abs(est / closed - 1.0), est > 15.0 / 14.0)
