"""Sampled fields on rectangular grids and rectangular (joint) increments.

The joint increment of ``f`` over the axis-aligned box spanned by ``x`` and ``y``
is the alternating corner sum

    box(f; x, y) = sum over corners c of (-1)**(#axes where c takes y_k) * f(c)

i.e. the product of the commuting difference operators ``(I - V_k)`` where
``V_k`` replaces the k-th coordinate of the argument by ``y_k``.

Callable fields follow the numpy convention ``f(points) -> values`` where
``points`` has shape ``(..., n)`` and the result has shape ``(...)``.
"""

from __future__ import annotations

import itertools
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, ParameterError

MAX_DIM = 8


@dataclass(frozen=True)
class PointPair:
    x: tuple
    y: tuple

    def __post_init__(self):
        x = tuple(float(v) for v in np.atleast_1d(self.x))
        y = tuple(float(v) for v in np.atleast_1d(self.y))
        if len(x) != len(y):
            raise ParameterError(f"points have different dimensions: {len(x)} vs {len(y)}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        return len(self.x)

    @property
    def deltas(self) -> np.ndarray:
        return np.abs(np.subtract(self.x, self.y))

    def swapped(self, axis: int) -> "PointPair":
        """Exchange x_k and y_k along a single axis."""
        x, y = list(self.x), list(self.y)
        x[axis], y[axis] = y[axis], x[axis]
        return PointPair(tuple(x), tuple(y))


def as_pair(pair) -> PointPair:
    if isinstance(pair, PointPair):
        return pair
    x, y = pair
    return PointPair(x, y)


@dataclass(frozen=True)
class CornerSign:
    corner: tuple  # 0 selects x_k, 1 selects y_k
    sign: int


def corner_expansion(n: int) -> list[CornerSign]:
    """Signed corners of an n-dimensional box, axis 0 varying slowest."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_DIM:
        raise ParameterError(f"dimension must be an integer in [1, {MAX_DIM}], got {n!r}")
    return [
        CornerSign(bits, -1 if sum(bits) % 2 else 1)
        for bits in itertools.product((0, 1), repeat=int(n))
    ]


def _strictly_increasing(a: np.ndarray) -> bool:
    return a.ndim == 1 and bool(np.all(np.diff(a) > 0))


class GridField:
    """Values of a field on the tensor grid ``axes[0] x ... x axes[n-1]``.

    Values are stored row-major (C order) with axis 0 slowest.  Instances are
    immutable: both the axes and the value array are read-only views.
    """

    def __init__(self, axes: Sequence[Sequence[float]], values, allow_degenerate: bool = False):
        axes = tuple(np.array(a, dtype=float) for a in axes)
        if not 1 <= len(axes) <= MAX_DIM:
            raise ParameterError(f"dimension must be in [1, {MAX_DIM}], got {len(axes)}")
        for k, a in enumerate(axes):
            if a.ndim != 1 or a.size == 0:
                raise ParameterError(f"axis {k} must be a non-empty 1-D vector")
            if a.size < 2 and not allow_degenerate:
                raise ParameterError(f"axis {k} has fewer than 2 points")
            if not _strictly_increasing(a):
                raise ParameterError(f"axis {k} is not strictly increasing")
            if a[0] < 0.0 or a[-1] > 1.0:
                raise ParameterError(f"axis {k} leaves [0, 1]")
            a.setflags(write=False)
        shape = tuple(a.size for a in axes)
        values = np.array(values, dtype=float)
        if values.size != int(np.prod(shape)):
            raise ParameterError(f"expected {int(np.prod(shape))} values for shape {shape}, got {values.size}")
        values = np.ascontiguousarray(values.reshape(shape))
        values.setflags(write=False)
        self._axes = axes
        self._values = values

    @classmethod
    def from_function(cls, f: Callable, axes: Sequence[Sequence[float]]) -> "GridField":
        axes = [np.asarray(a, dtype=float) for a in axes]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(axes, np.asarray(f(pts), dtype=float))

    @classmethod
    def uniform(cls, f: Callable, shape: Sequence[int]) -> "GridField":
        """Sample ``f`` on ``linspace(0, 1, m_k)`` along each axis."""
        return cls.from_function(f, [np.linspace(0.0, 1.0, m) for m in shape])

    @property
    def axes(self) -> tuple:
        return self._axes

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def dim(self) -> int:
        return len(self._axes)

    @property
    def shape(self) -> tuple:
        return self._values.shape

    def __repr__(self):
        return f"GridField(shape={self.shape})"

    def index_of(self, point) -> tuple:
        """Node indices of ``point``; exact membership is required."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        if point.shape != (self.dim,):
            raise DomainError(f"point of dimension {point.size} on a {self.dim}-D grid")
        idx = []
        for k, (a, v) in enumerate(zip(self._axes, point)):
            i = int(np.searchsorted(a, v))
            if i >= a.size or a[i] != v:
                raise DomainError(f"coordinate {v!r} is not a node of axis {k}")
            idx.append(i)
        return tuple(idx)

    def value_at(self, point) -> float:
        return float(self._values[self.index_of(point)])

    def __call__(self, points) -> np.ndarray:
        """Evaluate at grid nodes; ``points`` has shape ``(..., n)``."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != self.dim:
            raise DomainError(f"expected trailing dimension {self.dim}, got {points.shape[-1]}")
        idx = []
        for k, a in enumerate(self._axes):
            v = points[..., k]
            i = np.clip(np.searchsorted(a, v), 0, a.size - 1)
            if not np.all(a[i] == v):
                raise DomainError(f"off-grid coordinate on axis {k}")
            idx.append(i)
        return self._values[tuple(idx)]

    def subgrid(self, step: int) -> "GridField":
        """Every ``step``-th node along each axis (keeps the first node)."""
        sl = tuple(slice(None, None, step) for _ in range(self.dim))
        return GridField([a[::step] for a in self._axes], self._values[sl])

    def scaled(self, c: float) -> "GridField":
        return GridField(self._axes, c * self._values)

    # snapshot format: JSON manifest + raw little-endian float64 sidecar
    def save(self, manifest_path, seed=None, model=None, params=None) -> tuple[Path, Path]:
        manifest_path = Path(manifest_path)
        data_path = manifest_path.with_suffix(".bin")
        manifest = {
            "dim": self.dim,
            "shape": list(self.shape),
            "axes": [a.tolist() for a in self._axes],
            "seed": seed,
            "model": model,
            "params": params or {},
        }
        _atomic_write(data_path, self._values.astype("<f8").tobytes(order="C"))
        _atomic_write(manifest_path, (json.dumps(manifest, sort_keys=True) + "\n").encode())
        return manifest_path, data_path

    @classmethod
    def load(cls, manifest_path) -> tuple["GridField", dict]:
        manifest_path = Path(manifest_path)
        manifest = json.loads(manifest_path.read_text())
        raw = np.fromfile(manifest_path.with_suffix(".bin"), dtype="<f8")
        field = cls(manifest["axes"], raw.reshape(manifest["shape"]))
        return field, manifest


def _atomic_write(path: Path, payload: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _evaluate(f, points: np.ndarray) -> np.ndarray:
    return np.asarray(f(points), dtype=float)


def rect_increment(f, pair) -> float:
    """Joint increment of ``f`` over the box spanned by ``pair``.

    ``f`` is a :class:`GridField` (both points must be grid nodes) or a
    vectorized callable.
    """
    pair = as_pair(pair)
    x = np.asarray(pair.x)
    y = np.asarray(pair.y)
    n = x.size
    if isinstance(f, GridField):
        if f.dim != n:
            raise DomainError(f"{n}-D pair on a {f.dim}-D field")
        f.index_of(x)
        f.index_of(y)
    corners = corner_expansion(n)
    bits = np.array([c.corner for c in corners], dtype=bool)
    signs = np.array([c.sign for c in corners], dtype=float)
    pts = np.where(bits, y[None, :], x[None, :])
    vals = _evaluate(f, pts)
    return float(np.dot(signs, vals))


def rect_increment_iterated(f, pair, order: Sequence[int] | None = None) -> float:
    """Joint increment computed by composing ``(I - V_k)`` one axis at a time."""
    pair = as_pair(pair)
    y = np.asarray(pair.y)
    n = y.size
    order = list(range(n)) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise ParameterError(f"order must be a permutation of range({n})")

    def point_eval(g):
        return lambda p: float(_evaluate(g, np.asarray(p, dtype=float)[None, :])[0])

    g = point_eval(f)
    for k in order:
        def diff(p, g=g, k=k):
            q = np.array(p, dtype=float)
            q[k] = y[k]
            return g(p) - g(q)
        g = diff
    return g(np.asarray(pair.x, dtype=float))


def split_additivity_check(f, pair, axis: int, midpoint: float) -> tuple[float, float, float]:
    """Return the increments over the full box and its two halves split at ``midpoint``."""
    pair = as_pair(pair)
    lo, hi = sorted((pair.x[axis], pair.y[axis]))
    if not lo < midpoint < hi:
        raise ParameterError(f"midpoint {midpoint!r} is not strictly inside ({lo}, {hi}) on axis {axis}")
    y_mid = list(pair.y)
    y_mid[axis] = midpoint
    x_mid = list(pair.x)
    x_mid[axis] = midpoint
    full = rect_increment(f, pair)
    first = rect_increment(f, PointPair(pair.x, tuple(y_mid)))
    second = rect_increment(f, PointPair(tuple(x_mid), pair.y))
    return full, first, second


def axis_pairs(axis: np.ndarray, include_diagonal: bool = True, max_sep: float | None = None,
               ordered: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``(i, j)`` along one axis.

    Unordered pairs use ``i <= j`` (``i < j`` without the diagonal).  ``max_sep``
    keeps only pairs with ``0 < |a_j - a_i| <= max_sep`` plus the diagonal if
    requested.
    """
    m = axis.size
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    keep = np.ones_like(i, dtype=bool) if ordered else (i <= j)
    if not include_diagonal:
        keep &= i != j
    if max_sep is not None:
        sep = np.abs(axis[j] - axis[i])
        keep &= (sep <= max_sep) | (i == j)
    return i[keep], j[keep]


def pair_increments(values: np.ndarray, index_pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Joint increments for every combination of per-axis index pairs.

    ``index_pairs[k] = (I_k, J_k)`` selects x-indices ``I_k`` and y-indices
    ``J_k`` along axis k; the result has shape ``(len(I_0), ..., len(I_{n-1}))``.
    """
    g = np.asarray(values, dtype=float)
    for k, (ii, jj) in enumerate(index_pairs):
        g = np.take(g, ii, axis=k) - np.take(g, jj, axis=k)
    return g
