"""Both sides of the Garsia-Rodemich-Rumsey inequality for rectangular increments.

For a continuous ``f`` on ``[0, 1]^n`` with

    B = iint Psi(|box_y f(x)| / prod_k p_k(|x_k - y_k|)) dx dy < inf

every box satisfies

    |box_s f(t)| <= 8^n int_0^{|s_1-t_1|} ... int_0^{|s_n-t_n|}
                    Psi^{-1}(4^n B / (u_1^2 ... u_n^2)) dp_1(u_1) ... dp_n(u_n).

This module evaluates the discretized ``B``, the right-hand side, pairwise
verification, the joint Kolmogorov constant and the one-dimensional chain
construction that drives the induction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DivergenceError, DomainError, ParameterError, ResolutionError
from .field_grid import GridField, axis_pairs, pair_increments, as_pair
from .modulus import ModulusFunction, YoungFunction
from .quadrature import stieltjes_tensor_integral


@dataclass(frozen=True)
class GrrProblem:
    """A field, a Young function and one modulus per axis.

    ``cells`` is the per-axis resolution of the midpoint rule used when
    ``field`` is a callable.
    """

    field: object
    psi: YoungFunction
    moduli: tuple
    cells: int = 32

    def __post_init__(self):
        object.__setattr__(self, "moduli", tuple(self.moduli))
        if isinstance(self.field, GridField) and self.field.dim != len(self.moduli):
            raise ParameterError(f"{len(self.moduli)} moduli for a {self.field.dim}-D field")

    @property
    def dim(self) -> int:
        return len(self.moduli)


def dual_cell_weights(axis: np.ndarray) -> np.ndarray:
    """Lengths of the cells of ``[0, 1]`` nearest to each node."""
    edges = np.concatenate([[0.0], 0.5 * (axis[1:] + axis[:-1]), [1.0]])
    return np.diff(edges)


def _discretize(prob: GrrProblem):
    """Quadrature points (per axis), weights (per axis) and values."""
    if isinstance(prob.field, GridField):
        axes = list(prob.field.axes)
        return axes, [dual_cell_weights(a) for a in axes], prob.field.values
    m = prob.cells
    centers = (np.arange(m) + 0.5) / m
    axes = [centers] * prob.dim
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    values = np.asarray(prob.field(pts), dtype=float)
    return axes, [np.full(m, 1.0 / m)] * prob.dim, values


def b_functional(prob: GrrProblem, chunk: int = 4_000_000) -> float:
    """Discretized ``B``: a product-rule sum over all ordered point pairs.

    A pair with a zero coordinate separation has a zero increment and a zero
    denominator; its ratio counts as 0, so it contributes ``Psi(0)``.  A zero
    denominator with a nonzero increment makes ``B`` infinite.
    """
    axes, weights, values = _discretize(prob)
    n = len(axes)
    pairs, pw, dens = [], [], []
    for a, w, p in zip(axes, weights, prob.moduli):
        i, j = axis_pairs(a, include_diagonal=True)
        pairs.append((i, j))
        # ordered pairs: off-diagonal unordered pairs count twice
        pw.append(np.where(i == j, 1.0, 2.0) * w[i] * w[j])
        dens.append(p(np.abs(a[j] - a[i])))
    psi = prob.psi
    # chunk over the first axis so the increment tensor stays bounded
    rest = int(np.prod([len(p[0]) for p in pairs[1:]])) if n > 1 else 1
    step = max(1, chunk // max(rest, 1))
    partial = []
    i0, j0 = pairs[0]
    for start in range(0, i0.size, step):
        sl = slice(start, start + step)
        sub = [(i0[sl], j0[sl])] + pairs[1:]
        inc = np.abs(pair_increments(values, sub))
        den = dens[0][sl]
        wt = pw[0][sl]
        for k in range(1, n):
            den = np.multiply.outer(den, dens[k])
            wt = np.multiply.outer(wt, pw[k])
        zero_den = den == 0
        if np.any(zero_den & (inc != 0)):
            return math.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(zero_den, 0.0, inc / np.where(zero_den, 1.0, den))
        contrib = psi(ratio) * wt
        partial.append(float(np.sum(contrib)))
    return math.fsum(partial)


def _all_power(psi: YoungFunction, moduli) -> bool:
    return psi.kind == "power" and all(p.kind == "power" for p in moduli)


def grr_rhs_closed_form(psi: YoungFunction, moduli, B: float, deltas) -> float:
    """Right-hand side for ``Psi = u**a``, ``p_k = u**g_k`` (needs ``a g_k > 2``)."""
    n = len(moduli)
    a = psi.alpha
    out = 8.0 ** n * (4.0 ** n * B) ** (1.0 / a)
    for p, d in zip(moduli, deltas):
        g = p.gamma
        if a * g <= 2:
            raise DivergenceError(f"alpha*gamma = {a * g} <= 2: the right-hand side diverges")
        e = g - 2.0 / a
        out *= g * d ** e / e
    return out


def grr_rhs(psi: YoungFunction, moduli, B: float, deltas, rtol: float = 1e-12) -> float:
    """``8^n int...int Psi^{-1}(4^n B / prod u_k^2) dp_1 ... dp_n``.

    Uses the closed form when everything is a power law, tensorized geometric
    quadrature otherwise.  Raises :class:`DivergenceError` for divergent
    power-law configurations.
    """
    moduli = tuple(moduli)
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    n = len(moduli)
    if deltas.size != n:
        raise ParameterError(f"{deltas.size} deltas for {n} moduli")
    if B < 0 or not np.isfinite(B):
        raise ParameterError(f"B must be finite and non-negative, got {B}")
    if np.any(deltas < 0) or np.any(deltas > 1):
        raise DomainError("deltas must lie in [0, 1]")
    if _all_power(psi, moduli):
        for p in moduli:
            if psi.alpha * p.gamma <= 2:
                raise DivergenceError(f"alpha*gamma = {psi.alpha * p.gamma} <= 2: the right-hand side diverges")
        if np.any(deltas == 0):
            return 0.0
        return grr_rhs_closed_form(psi, moduli, B, deltas)
    if np.any(deltas == 0):
        return 0.0
    c = 4.0 ** n * B

    def integrand(*us):
        prod_sq = 1.0
        for u in us:
            prod_sq = prod_sq * u * u
        return psi.inverse(c / prod_sq, clamp=True)

    return 8.0 ** n * stieltjes_tensor_integral(integrand, moduli, deltas, rtol=rtol)


@dataclass
class GrrReport:
    lhs: np.ndarray
    rhs: np.ndarray
    passed: np.ndarray
    vacuous: np.ndarray
    B: float
    slack: float
    x: np.ndarray = field(repr=False, default=None)
    y: np.ndarray = field(repr=False, default=None)

    @property
    def ok(self) -> bool:
        return bool(np.all(self.passed | self.vacuous))

    @property
    def n_pairs(self) -> int:
        return int(self.lhs.size)

    @property
    def max_ratio(self) -> float:
        good = ~self.vacuous & (self.rhs > 0)
        if not np.any(good):
            return 0.0
        return float(np.max(self.lhs[good] / self.rhs[good]))

    def summary(self) -> dict:
        return {
            "B": self.B,
            "slack": self.slack,
            "pairs": self.n_pairs,
            "failures": int(np.sum(~self.passed & ~self.vacuous)),
            "vacuous": int(np.sum(self.vacuous)),
            "max_lhs_over_rhs": self.max_ratio,
            "pass": self.ok,
        }


def _grid_pairs(field: GridField):
    """All node pairs, one orientation per axis (``i <= j``)."""
    per_axis = [axis_pairs(a, include_diagonal=True) for a in field.axes]
    mesh = np.meshgrid(*[np.arange(len(p[0])) for p in per_axis], indexing="ij")
    xs, ys = [], []
    for k, (ii, jj) in enumerate(per_axis):
        sel = mesh[k].ravel()
        xs.append(field.axes[k][ii[sel]])
        ys.append(field.axes[k][jj[sel]])
    return np.stack(xs, axis=-1), np.stack(ys, axis=-1)


def _pair_arrays(pairs):
    if isinstance(pairs, tuple) and len(pairs) == 2 and isinstance(pairs[0], np.ndarray):
        return np.atleast_2d(pairs[0]), np.atleast_2d(pairs[1])
    pp = [as_pair(p) for p in pairs]
    return np.array([p.x for p in pp]), np.array([p.y for p in pp])


def _increments(field, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    bits = np.array(np.unravel_index(np.arange(2 ** n), (2,) * n)).T.astype(bool)
    signs = np.where(bits.sum(axis=1) % 2, -1.0, 1.0)
    pts = np.where(bits[None, :, :], y[:, None, :], x[:, None, :])
    vals = np.asarray(field(pts), dtype=float)
    return vals @ signs


def _rhs_table(psi, moduli, B, deltas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """RHS per pair, computed once per distinct separation vector."""
    rhs = np.empty(deltas.shape[0])
    vac = np.zeros(deltas.shape[0], dtype=bool)
    if _all_power(psi, moduli):
        if not np.isfinite(B) or any(psi.alpha * p.gamma <= 2 for p in moduli):
            rhs[:] = np.inf
            vac[:] = True
            return rhs, vac
        n = len(moduli)
        val = 8.0 ** n * (4.0 ** n * B) ** (1.0 / psi.alpha)
        for k, p in enumerate(moduli):
            e = p.gamma - 2.0 / psi.alpha
            val = val * p.gamma * deltas[:, k] ** e / e
        rhs[:] = np.where(np.all(deltas > 0, axis=1), val, 0.0)
        return rhs, vac
    uniq, inv = np.unique(deltas, axis=0, return_inverse=True)
    vals = np.empty(uniq.shape[0])
    vflag = np.zeros(uniq.shape[0], dtype=bool)
    for u, d in enumerate(uniq):
        if not np.isfinite(B):
            vals[u], vflag[u] = np.inf, True
            continue
        try:
            vals[u] = grr_rhs(psi, moduli, B, d)
        except DivergenceError:
            vals[u], vflag[u] = np.inf, True
    inv = inv.ravel()
    return vals[inv], vflag[inv]


def verify_grr(prob: GrrProblem, pairs=None, slack: float | None = None, B: float | None = None) -> GrrReport:
    """Check ``|box| <= (1 + slack) * RHS`` pair by pair.

    ``B`` defaults to :func:`b_functional`; pass a closed-form value to remove
    discretization error.  ``slack`` defaults to 0 for a supplied ``B`` and
    0.05 for a grid estimate.  ``pairs=None`` uses every node pair of a
    :class:`GridField`.
    """
    if slack is None:
        slack = 0.0 if B is not None else 0.05
    if slack < 0:
        raise ParameterError("slack must be non-negative")
    if B is None:
        B = b_functional(prob)
    if pairs is None:
        if not isinstance(prob.field, GridField):
            raise ParameterError("pairs are required for callable fields")
        x, y = _grid_pairs(prob.field)
    else:
        x, y = _pair_arrays(pairs)
    lhs = np.abs(_increments(prob.field, x, y))
    rhs, vac = _rhs_table(prob.psi, prob.moduli, B, np.abs(x - y))
    passed = ~vac & (lhs <= (1.0 + slack) * rhs)
    return GrrReport(lhs, rhs, passed, vac, float(B), float(slack), x, y)


def kolmogorov_constant(n: int, alpha: float, beta, eps) -> float:
    """``8^n 4^(n/alpha) prod_k (1 + 2 / (beta_k - alpha eps_k))``."""
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (n,))
    if alpha <= 0 or np.any(eps * alpha <= 0) or np.any(eps * alpha >= beta):
        raise ParameterError("need 0 < eps_k * alpha < beta_k for every axis")
    c = 8.0 ** n * 4.0 ** (n / alpha)
    for b, e in zip(beta, eps):
        c *= 1.0 + 2.0 / (b - alpha * e)
    return float(c)


@dataclass
class KolmogorovReport:
    C: float
    B: float
    eta: float
    exponents: np.ndarray
    max_ratio: float
    passed: bool
    vacuous: bool
    mean_B_bound: float | None = None

    def summary(self) -> dict:
        return {
            "C": self.C,
            "B": self.B,
            "eta": self.eta,
            "exponents": [float(e) for e in self.exponents],
            "max_ratio": self.max_ratio,
            "pass": self.passed,
            "vacuous": self.vacuous,
            "mean_B_bound": self.mean_B_bound,
        }


def kolmogorov_bound_check(field: GridField, alpha: float, beta, eps, K_hat: float | None = None,
                           slack: float = 0.05) -> KolmogorovReport:
    """Check ``|box| <= C eta prod |t_k - s_k|^(beta_k/alpha - eps_k)`` on every node pair.

    ``eta = B^(1/alpha)`` with ``B`` built from ``Psi = u**alpha`` and
    ``p_k = u**gamma_k``, ``gamma_k = (2 + beta_k)/alpha - eps_k``, so the
    bound is exactly the GRR right-hand side for that choice.  With ``K_hat``
    (a moment constant ``E|box|^alpha <= K prod |d_k|^(1+beta_k)``) the report
    also carries the implied bound on ``E B``.
    """
    n = field.dim
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (n,))
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (n,))
    C = kolmogorov_constant(n, alpha, beta, eps)
    gammas = (2.0 + beta) / alpha - eps
    prob = GrrProblem(field, YoungFunction.power(alpha), tuple(ModulusFunction.power(g) for g in gammas))
    B = b_functional(prob)
    expo = beta / alpha - eps
    mean_bound = None
    if K_hat is not None:
        a = alpha * eps - 1.0  # exponent of |x_k - y_k| in E[integrand]
        mean_bound = float(K_hat * np.prod(2.0 / ((a + 1.0) * (a + 2.0))))
    if not np.isfinite(B):
        return KolmogorovReport(C, B, math.inf, expo, math.nan, True, True, mean_bound)
    eta = B ** (1.0 / alpha)
    per_axis = [axis_pairs(a, include_diagonal=False) for a in field.axes]
    inc = np.abs(pair_increments(field.values, per_axis))
    bound = C * eta
    for k, (ii, jj) in enumerate(per_axis):
        d = np.abs(field.axes[k][jj] - field.axes[k][ii]) ** expo[k]
        shape = [1] * n
        shape[k] = d.size
        bound = bound * d.reshape(shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, inc / bound, np.where(inc > 0, np.inf, 0.0))
    max_ratio = float(np.max(ratio)) if ratio.size else 0.0
    return KolmogorovReport(C, B, eta, expo, max_ratio, bool(max_ratio <= 1.0 + slack), False, mean_bound)


@dataclass
class GrrChain:
    t: list
    d: list
    I_values: list
    step_integrals: list
    step_bounds: list
    B: float

    def check(self, p: ModulusFunction, tol: float = 1e-9) -> bool:
        """Chain relations and the per-step integral bound."""
        for k in range(1, len(self.t)):
            dk = self.d[k - 1]
            if not self.t[k] <= dk:
                return False
            target = 0.5 * float(p(self.t[k - 1]))
            if abs(float(p(dk)) - target) > tol * max(1.0, abs(target)):
                return False
            if not self.step_integrals[k - 1] <= self.step_bounds[k - 1]:
                return False
        return True


def build_grr_chain(g: Callable, z_nodes, z_weights, psi: YoungFunction, p: ModulusFunction,
                    B: float | None = None, t_grid=None, s_cells: int = 1024,
                    max_refine: int = 24, max_steps: int = 200) -> GrrChain:
    """Decreasing sequences ``t_k``, ``d_k`` with ``t_k <= d_{k-1} = p^{-1}(p(t_{k-1})/2)``.

    ``g(z_nodes, t)`` returns the values of ``g(., t)`` on the nodes of the
    discretized measure ``mu = sum_i z_weights[i] delta_{z_i}``.  ``I(t)`` is
    integrated over ``s`` with a ``s_cells`` midpoint rule.  At each step the
    largest candidate ``t_k <= d_{k-1}`` on the (dyadically refined) grid
    satisfying

        I(t_k) <= 2B / d_{k-1}   and
        int Psi(|g(., t_k) - g(., t_{k-1})| / p(|t_k - t_{k-1}|)) dmu <= 2 I(t_{k-1}) / d_{k-1}

    is selected; both imply the step bound ``<= 4B / d_{k-1}^2``.  The chain
    stops once ``d_{k-1}`` drops below the finest allowed grid spacing.
    ``B`` defaults to the mean of ``I`` over ``t_grid``; ``t_0`` is the
    largest grid point with ``I(t_0) <= B``.
    """
    z_weights = np.asarray(z_weights, dtype=float)
    s = (np.arange(s_cells) + 0.5) / s_cells
    ws = 1.0 / s_cells
    gs = np.stack([np.asarray(g(z_nodes, si), dtype=float) for si in s])  # (s, z)

    def ratio_integral(ga, gb, dist):
        num = np.abs(ga - gb)
        den = float(p(dist))
        if den == 0:
            if np.any(num != 0):
                return math.inf
            return float(psi.at_zero * z_weights.sum())
        return math.fsum(psi(num / den) * z_weights)

    cache = {}

    def I(t):
        if t not in cache:
            gt = np.asarray(g(z_nodes, t), dtype=float)
            num = np.abs(gt[None, :] - gs)
            den = p(np.abs(t - s))[:, None]
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(den == 0, np.where(num == 0, 0.0, np.inf), num / np.where(den == 0, 1.0, den))
            cache[t] = math.fsum((psi(r) * z_weights[None, :]).ravel()) * ws
        return cache[t]

    if t_grid is None:
        t_grid = np.arange(1, 1024) / 1024.0
    grid = np.unique(np.asarray(t_grid, dtype=float))
    grid = grid[(grid > 0) & (grid < 1)]
    if grid.size < 2:
        raise ParameterError("t_grid needs at least two interior points")
    base_h = float(np.min(np.diff(grid)))
    min_h = base_h / 2.0 ** max_refine

    if B is None:
        # mean of I over the t-grid, so min I <= B holds on the grid itself
        B = math.fsum(I(float(t)) for t in grid) / grid.size
    admissible = [float(t) for t in grid if I(float(t)) <= B]
    if not admissible:
        raise ResolutionError("no grid point with I(t) <= B")
    t_seq = [float(max(admissible))]
    d_seq, I_vals, steps, bounds = [], [I(t_seq[0])], [], []
    h = base_h
    for _ in range(max_steps):
        t_prev = t_seq[-1]
        d = float(p.inverse(0.5 * float(p(t_prev))))
        if d < min_h:
            break
        while d / h < 4 and h > min_h:
            h /= 2.0
        if d / h < 1:
            break
        cands = np.arange(np.floor(d / h), 0, -1) * h
        cands = cands[cands <= d]
        g_prev = np.asarray(g(z_nodes, t_prev), dtype=float)
        chosen = None
        for tk in cands:
            tk = float(tk)
            if tk >= t_prev:
                continue
            if I(tk) > 2.0 * B / d:
                continue
            step = ratio_integral(np.asarray(g(z_nodes, tk), dtype=float), g_prev, abs(tk - t_prev))
            if step <= 2.0 * I(t_prev) / d:
                chosen = (tk, step)
                break
        if chosen is None:
            raise ResolutionError(f"no admissible t_k below d = {d:g} at spacing {h:g}")
        tk, step = chosen
        d_seq.append(d)
        t_seq.append(tk)
        I_vals.append(I(tk))
        steps.append(step)
        bounds.append(4.0 * B / d ** 2)
    return GrrChain(t_seq, d_seq, I_vals, steps, bounds, float(B))
