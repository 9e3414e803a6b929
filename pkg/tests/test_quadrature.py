import math

import numpy as np
import pytest
from scipy import integrate

from multigrr.grr import grr_rhs_closed_form
from multigrr.modulus import ModulusFunction, YoungFunction
from multigrr.quadrature import stieltjes_tensor_integral


def _quad_rhs(psi, moduli, B, deltas):
    n = len(moduli)
    c = 4.0 ** n * B

    def f(*us):
        sq = 1.0
        for u in us:
            sq = sq * u * u
        return psi.inverse(c / sq, clamp=True)

    return 8.0 ** n * stieltjes_tensor_integral(f, moduli, deltas, rtol=1e-12)


def test_closed_form_matches_quadrature_random():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 3))
        alpha = rng.uniform(1.5, 6.0)
        gammas = rng.uniform(2.0 / alpha + 0.1, 2.0 / alpha + 1.5, n)
        B = 10 ** rng.uniform(-3, 2)
        deltas = rng.uniform(0.01, 1.0, n)
        psi = YoungFunction.power(alpha)
        moduli = [ModulusFunction.power(g) for g in gammas]
        exact = grr_rhs_closed_form(psi, moduli, B, deltas)
        approx = _quad_rhs(psi, moduli, B, deltas)
        worst = max(worst, abs(approx / exact - 1))
    assert worst < 1e-8


def test_one_dimensional_against_scipy():
    # p(u) = u^g, dp = g u^{g-1} du; integrand is integrable at 0 when a g > 2
    a, g, B, d = 3.0, 1.2, 0.7, 0.6
    psi = YoungFunction.power(a)
    f = lambda u: (4 * B / u ** 2) ** (1 / a) * g * u ** (g - 1)
    ref, _ = integrate.quad(f, 0, d, epsabs=0, epsrel=1e-13, limit=200)
    assert _quad_rhs(psi, [ModulusFunction.power(g)], B, [d]) == pytest.approx(8 * ref, rel=1e-10)


def test_tabulated_modulus_stieltjes():
    # piecewise linear p: dp is a step density; compare to the smooth sqrt version
    u = np.linspace(0, 1, 4097)
    tab = ModulusFunction.tabulated(u, u)
    val = stieltjes_tensor_integral(lambda x: np.sqrt(x), [tab], [0.5])
    assert val == pytest.approx(2 / 3 * 0.5 ** 1.5, rel=1e-8)


def test_log_integrand_closed_form():
    # int_0^d sqrt(log(1/u^2)) d(u^g) against its erfc closed form
    g, d = 0.45, 0.3
    L = -2 * math.log(d)
    c = 2 / g
    closed = d ** g * (math.sqrt(L) + math.sqrt(math.pi * c) / 2 * math.exp(L / c) * math.erfc(math.sqrt(L / c)))
    val = stieltjes_tensor_integral(lambda x: np.sqrt(np.log(1 / (x * x))), [ModulusFunction.power(g)], [d])
    assert val == pytest.approx(closed, rel=1e-11)
