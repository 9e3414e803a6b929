"""Exact dyadic linear algebra for reproducible matrix-vector products.

Every finite double is ``m * 2**e`` for integers ``m, e``, so a float array
can be rescaled to Python integers without loss.  Products and sums of those
integers are exact; the single division at the end rounds correctly.  Two
contraction orders of the same linear map therefore give bit-identical
results, which floating-point summation cannot promise.
"""

from __future__ import annotations

import numpy as np


def to_fixed(a) -> tuple[np.ndarray, int]:
    """Integer array ``q`` and scale ``k`` with ``a == q / 2**k`` exactly."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries cannot be represented exactly")
    flat = a.ravel().tolist()
    ratios = [v.as_integer_ratio() for v in flat]
    k = max((d.bit_length() - 1 for _, d in ratios), default=0)
    q = np.empty(len(flat), dtype=object)
    for i, (num, den) in enumerate(ratios):
        q[i] = num << (k - (den.bit_length() - 1))
    return q.reshape(a.shape), k


def from_fixed(q: np.ndarray, k: int) -> np.ndarray:
    """Round ``q / 2**k`` to the nearest doubles."""
    den = 1 << k
    flat = [int(v) / den for v in np.asarray(q, dtype=object).ravel()]
    return np.array(flat, dtype=float).reshape(np.shape(q))


def kron_apply(factors, z) -> np.ndarray:
    """``(F_0 kron F_1 kron ...) @ vec(z)`` exactly, axis by axis.

    ``z`` has the grid shape ``(m_0, ..., m_{n-1})`` (C order).
    """
    g, scale = to_fixed(z)
    for k, f in enumerate(factors):
        fq, fk = to_fixed(f)
        g = np.moveaxis(np.tensordot(fq, g, axes=([1], [k])), 0, k)
        scale += fk
    return from_fixed(g, scale)


def kron_matrix(factors) -> tuple[np.ndarray, int]:
    """Dense Kronecker product of the factors in exact integer form."""
    out, scale = to_fixed(np.ones((1, 1)))
    for f in factors:
        fq, fk = to_fixed(f)
        out = np.kron(out, fq)
        scale += fk
    return out, scale


def matvec(mq: np.ndarray, mk: int, z) -> np.ndarray:
    """``M @ z`` exactly for ``M = mq / 2**mk``."""
    zq, zk = to_fixed(np.ravel(z))
    return from_fixed(mq.dot(zq), mk + zk)
