import math

import numpy as np
import pytest
from scipy import integrate, special

from multigrr.errors import BoundViolation, ParameterError
from multigrr.heat import (KernelIntegralTable, heat_cov, heat_cov_quad, heat_kernel, heat_sq_increment,
                           heat_sq_increment_bound, heat_sq_increment_corners, j_bound, kernel_gap_integral,
                           kernel_integral, lemma51_brackets, rho)


def test_cov_examples():
    assert heat_cov([1.0, 0.3], [1.0, 0.3]) == pytest.approx(math.sqrt(1 / math.pi), rel=1e-14)
    assert heat_cov([0.0, 0.3], [0.7, 0.1]) == 0.0
    assert heat_cov([1.0, 0.5], [2.0, 0.5]) == pytest.approx((math.sqrt(3) - 1) / math.sqrt(2 * math.pi), rel=1e-14)


def test_cov_diag_and_symmetry():
    rng = np.random.default_rng(0)
    a = rng.uniform(0, 1, (50, 2))
    b = rng.uniform(0, 1, (50, 2))
    assert np.allclose(heat_cov(a, a), np.sqrt(a[:, 0] / np.pi), rtol=1e-14)
    assert np.array_equal(heat_cov(a, b), heat_cov(b, a))


def test_cov_vs_quadrature():
    rng = np.random.default_rng(1)
    for _ in range(30):
        a, b = rng.uniform(0.01, 1, 2), rng.uniform(0.01, 1, 2)
        assert float(heat_cov(a, b)) == pytest.approx(heat_cov_quad(a, b), rel=1e-10)


def test_kernel_integral_vs_quad():
    rng = np.random.default_rng(2)
    for _ in range(100):
        T, d = rng.uniform(0.01, 2), rng.uniform(0, 1.5)
        ref, _ = integrate.quad(lambda v: 2 * v * float(heat_kernel(v * v, d)), 0, math.sqrt(T), epsabs=0, epsrel=1e-13)
        assert float(kernel_integral(T, d)) == pytest.approx(ref, rel=1e-10)


def test_gap_integral_properties():
    T = np.linspace(0, 2, 21)
    F = kernel_gap_integral(T, 0.3)
    assert np.all(np.diff(F) >= 0)
    assert np.all(kernel_gap_integral(T, 0.0) == 0)
    assert kernel_gap_integral(0.0, 0.5) == 0.0
    # tiny separations stay accurate: F ~ |d| erfc(...) + d^2 / sqrt(2 pi T) ...
    assert float(kernel_gap_integral(1.0, 1e-9)) == pytest.approx(1e-9, rel=1e-6)


def test_table_lookup():
    T = np.linspace(0, 2, 9)
    d = np.linspace(0, 1, 5)
    tab = KernelIntegralTable(T, d)
    assert tab(T[3], d[2]) == kernel_gap_integral(T[3], d[2])
    assert float(tab(0.33, 0.1)) == float(kernel_gap_integral(0.33, 0.1))


def test_sq_increment_examples():
    ref = 2 / math.sqrt(math.pi) - 2 / math.sqrt(math.pi) * math.exp(-0.25) + math.erfc(0.5)
    assert float(heat_sq_increment(0, 1, 0, 1)) == pytest.approx(ref, rel=1e-14)
    assert float(heat_sq_increment(0, 1, 0, 1)) == pytest.approx(0.729096, abs=1e-6)
    assert heat_sq_increment(0.2, 0.9, 0.4, 0.4) == 0.0
    assert heat_sq_increment(0.5, 0.5, 0.1, 0.7) == 0.0


def test_sq_increment_vs_corners():
    rng = np.random.default_rng(3)
    s, t, x, y = rng.uniform(0, 1, (4, 1000))
    a = heat_sq_increment(s, t, x, y)
    b = heat_sq_increment_corners(s, t, x, y)
    assert np.max(np.abs(a - b)) < 1e-10
    tab = KernelIntegralTable(np.r_[2 * s, 2 * t, s + t, abs(s - t)], abs(x - y))
    assert np.array_equal(heat_sq_increment(s, t, x, y, table=tab), a)


def test_bound_sweep():
    rng = np.random.default_rng(4)
    for _ in range(300):
        s, t = rng.uniform(0, 1, 2)
        x, y = rng.uniform(0, 1, 2)
        r = heat_sq_increment_bound(s, t, x, y, alpha=0.2)
        assert r.value <= r.bound1 * (1 + 1e-12)
        assert r.bound1 <= r.bound2 * (1 + 1e-12)
    r = heat_sq_increment_bound(0.4, 0.4, 0.1, 0.6, 0.1)
    assert r.value == r.bound1 == 0.0
    r = heat_sq_increment_bound(0.1, 0.6, 0.3, 0.3, 0.1)
    assert r.value == r.bound1 == 0.0
    with pytest.raises(ParameterError):
        heat_sq_increment_bound(0.1, 0.6, 0.3, 0.3, 0.7)


def test_j_bound_both_branches():
    from multigrr.heat import _gap_quad
    for a, d in [(0.01, 0.9), (0.5, 0.2), (1.0, 3.0), (2.0, 0.01)]:
        for alpha in (0.0, 0.25, 0.5):
            J = _gap_quad(0.0, a, d)
            assert J <= j_bound(a, d, alpha)


def test_gap_brackets():
    r = lemma51_brackets(1.0, 4.0, 1.0)
    assert r.lower == pytest.approx(0.235007, abs=1e-6)
    assert r.upper == pytest.approx(0.786939, abs=1e-6)
    assert r.lower <= r.I <= r.upper
    r = lemma51_brackets(1.0, 1.0 + 1e-9, 1.0)
    assert r.lower < 1e-8 and r.upper < 1e-8
    j = lemma51_brackets(1.0, 2.0, math.sqrt(2)).J
    ref = 2 * (1 - math.exp(-1)) + 4 * math.sqrt(math.pi) / 2 * special.erfc(1.0)
    assert j == pytest.approx(ref, abs=1e-9)
    assert j == pytest.approx(1.821853, abs=1e-6)
    with pytest.raises(ParameterError):
        lemma51_brackets(2.0, 1.0, 1.0)


def test_rho():
    assert rho(0.0) == 0.0
    assert rho(math.inf) == pytest.approx(2 * math.sqrt(2), abs=1e-10)
    u = 1e-6
    assert rho(u) / (2 * math.sqrt(2 / math.pi) * math.sqrt(u)) == pytest.approx(1.0, rel=0.01)
    us = [0.1, 0.5, 1.0, 3.0, 50.0]
    vals = [rho(v) for v in us]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_rho_bound():
    rng = np.random.default_rng(5)
    for _ in range(200):
        s, t, x, y = rng.uniform(0, 1, 4)
        d = abs(x - y)
        assert float(heat_sq_increment(s, t, x, y)) <= d * rho(abs(t - s) / d ** 2) * (1 + 1e-12)


def test_bound_violation_is_raised_for_bad_input(monkeypatch):
    import multigrr.heat as heat
    monkeypatch.setattr(heat, "heat_sq_increment", lambda *a: 10.0)
    with pytest.raises(BoundViolation):
        heat.heat_sq_increment_bound(0.1, 0.5, 0.2, 0.4, 0.2)
