"""Tensorized quadrature against products of Stieltjes measures ``dp_k(u_k)``.

Each axis integral over ``[0, delta]`` is split into geometric pieces
``[delta 2**-(j+1), delta 2**-j]`` shrinking toward the singular endpoint
``u = 0``; every piece gets a Gauss-Legendre rule.  The n-fold integral is
accumulated shell by shell (shell ``J`` = pieces whose deepest axis level is
``J``), refined until the newest shell is negligible, and otherwise closed
with a geometric tail estimate fitted to the last shells.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DivergenceError
from .modulus import ModulusFunction


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _map_rule(a: float, b: float, order: int):
    x, w = _gauss_legendre(order)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def axis_rule(p: ModulusFunction, delta: float, levels: int, order: int = 8):
    """Nodes, ``dp``-weights and level index for one axis on ``[0, delta]``.

    Level ``j`` covers ``[a 2**-(j+1), a 2**-j]`` where ``a`` is ``delta`` for
    power moduli and the end of the first (linear) table segment otherwise;
    level 0 also carries the table segments above ``a``.
    """
    nodes, weights, level = [], [], []
    if p.kind == "power":
        top = delta

        def density(u):
            return p.gamma * u ** (p.gamma - 1.0)
    else:
        segs = p.segments(delta)
        top, first_slope = segs[0][1], segs[0][2]
        for a, b, slope in segs[1:]:
            x, w = _map_rule(a, b, order)
            nodes.append(x)
            weights.append(w * slope)
            level.append(np.zeros(order, dtype=int))

        def density(u):
            return np.full_like(u, first_slope)
    for j in range(levels + 1):
        hi = top / 2.0 ** j
        x, w = _map_rule(hi / 2.0, hi, order)
        nodes.append(x)
        weights.append(w * density(x))
        level.append(np.full(order, j, dtype=int))
    return np.concatenate(nodes), np.concatenate(weights), np.concatenate(level)


def _shell_sums(integrand, rules, levels: int) -> np.ndarray:
    """Contribution of each shell ``J = 0..levels``."""
    n = len(rules)
    grids = np.ix_(*[r[0] for r in rules])
    vals = np.asarray(integrand(*grids), dtype=float)
    vals = np.broadcast_to(vals, tuple(r[0].size for r in rules))
    # collapse nodes into per-axis level blocks
    blocks = vals
    for k, (_, w, lev) in enumerate(rules):
        shape = [1] * n
        shape[k] = w.size
        blocks = blocks * w.reshape(shape)
        starts = np.flatnonzero(np.r_[True, lev[1:] != lev[:-1]])
        blocks = np.add.reduceat(blocks, starts, axis=k)
    # blocks[j_0, ..., j_{n-1}]; shell J = max index
    idx = np.indices(blocks.shape).max(axis=0)
    return np.bincount(idx.ravel(), weights=blocks.ravel(), minlength=levels + 1)


def stieltjes_tensor_integral(integrand, moduli, deltas, rtol: float = 1e-12,
                              order: int = 8, start_levels: int = 16, max_levels: int = 256) -> float:
    """Integrate ``integrand(u_0, ..., u_{n-1})`` against ``dp_0 ... dp_{n-1}``.

    ``integrand`` receives open-mesh coordinate arrays and must broadcast.
    Raises :class:`DivergenceError` when the shells do not decay.
    """
    deltas = [float(d) for d in deltas]
    if any(d <= 0 for d in deltas):
        return 0.0
    # keep prod u_k^2 above the double underflow threshold at the deepest level
    max_levels = min(max_levels, 1000 // (2 * len(deltas)))
    levels = min(start_levels, max_levels)
    while True:
        rules = [axis_rule(p, d, levels, order) for p, d in zip(moduli, deltas)]
        shells = _shell_sums(integrand, rules, levels)
        total = float(np.sum(shells))
        if not np.isfinite(total):
            raise DivergenceError("integrand is not finite on the quadrature nodes")
        last = shells[-1]
        if abs(last) <= rtol * abs(total):
            return total
        s1, s2, s3 = shells[-3], shells[-2], shells[-1]
        if s2 != 0 and s1 != 0:
            q, q_prev = s3 / s2, s2 / s1
            if 0 < q < 1 and 0 < q_prev < 1:
                tail = s3 * q / (1.0 - q)
                err = abs(tail) * abs(q - q_prev) / (1.0 - q) + abs(s3) * 1e-15
                if err <= rtol * abs(total + tail):
                    return total + tail
        if levels >= max_levels:
            if s2 != 0 and 0 < s3 / s2 < 1:
                q = s3 / s2
                return total + s3 * q / (1.0 - q)
            raise DivergenceError("geometric shells do not decay toward the singular endpoint")
        levels = min(2 * levels, max_levels)
