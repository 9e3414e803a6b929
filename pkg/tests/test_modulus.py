import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from multigrr.errors import DomainError, ParameterError
from multigrr.modulus import (LogModulatedModulus, ModulusFunction, YoungFunction, eval_log_modulus,
                              p_inverse, parse_moduli, psi_inverse)


def test_psi_inverse_examples():
    assert psi_inverse(YoungFunction.power(4), 16.0) == pytest.approx(2.0)
    assert psi_inverse(YoungFunction.expq(), 1.0) == 0.0
    assert psi_inverse(YoungFunction.expq(), math.e) == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(DomainError):
        psi_inverse(YoungFunction.expq(), 0.5)
    assert float(YoungFunction.expq().inverse(0.5, clamp=True)) == 0.0


def test_psi_inverse_round_trip_grid():
    v = np.linspace(0, 6, 1000)
    for psi in (YoungFunction.power(4), YoungFunction.power(0.7), YoungFunction.expq()):
        assert np.allclose(psi.inverse(psi(v)), v, rtol=1e-10, atol=1e-10 if psi.kind == "power" else 1e-7)


def test_expq_is_exact():
    x = np.array([0.0, 0.5, 2.0, 3.0])
    assert np.array_equal(YoungFunction.expq()(x), np.exp(x ** 2 / 4))


def test_spec_parsing(tmp_path):
    assert YoungFunction.parse("pow:4").alpha == 4
    assert YoungFunction.parse("expq").kind == "expq"
    assert ModulusFunction.parse("pow:0.25").gamma == 0.25
    table = tmp_path / "p.csv"
    table.write_text("0.25,0.5\n1.0,1.0\n")
    p = ModulusFunction.parse(f"tab:{table}")
    assert float(p(0.125)) == pytest.approx(0.25)
    assert len(parse_moduli("pow:1", 3)) == 3
    with pytest.raises(ParameterError):
        parse_moduli("pow:1,pow:2", 3)
    with pytest.raises(ParameterError):
        YoungFunction.parse("log")


def test_p_inverse_examples():
    assert p_inverse(ModulusFunction.power(2), 0.25) == pytest.approx(0.5)
    assert p_inverse(ModulusFunction.power(3), 0.0) == 0.0
    u = np.linspace(0, 1, 257)
    tab = ModulusFunction.tabulated(u, np.sqrt(u))
    assert p_inverse(tab, 0.5) == pytest.approx(0.25, abs=1 / 256)
    with pytest.raises(DomainError):
        p_inverse(ModulusFunction.power(2), 1.5)


def test_tabulated_validation():
    with pytest.raises(ParameterError):
        ModulusFunction.tabulated([0.0, 0.5, 1.0], [0.0, 0.6, 0.5])
    with pytest.raises(ParameterError):
        ModulusFunction.tabulated([0.0, 0.5], [0.1, 0.6])
    p = ModulusFunction.tabulated([0.5, 1.0], [0.5, 0.7])
    assert p.knots[0] == 0.0 and float(p(0.0)) == 0.0


def test_flat_table_inverse_takes_rightmost():
    p = ModulusFunction.tabulated([0.0, 0.25, 0.5, 1.0], [0.0, 0.5, 0.5, 1.0])
    assert p_inverse(p, 0.5) == pytest.approx(0.5)
    assert p_inverse(p, 0.75) == pytest.approx(0.75)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.1, 3.0))
def test_p_inverse_dominates(v, gamma):
    p = ModulusFunction.power(gamma)
    assert p_inverse(p, float(p(v))) == pytest.approx(v, rel=1e-12, abs=1e-12)
    u = np.linspace(0, 1, 33)
    tab = ModulusFunction.tabulated(u, np.minimum(u ** gamma, 0.8))
    assert p_inverse(tab, float(tab(v))) >= v - 1e-12


def test_log_modulus_examples():
    e1 = math.exp(-1)
    hH = LogModulatedModulus.hH([0.5, 0.5])
    assert eval_log_modulus(hH, ((0.0, 0.0), (e1, e1))) == pytest.approx(e1 * math.sqrt(2), rel=1e-14)
    heat = LogModulatedModulus.heat(0.25)
    assert eval_log_modulus(heat, ((0.0, 0.0), (e1, e1))) == pytest.approx(math.exp(-0.5) * math.sqrt(2), rel=1e-14)
    for m in (hH, heat, LogModulatedModulus.sigmaH([0.5, 0.5])):
        with pytest.raises(DomainError):
            eval_log_modulus(m, ((0.2, 0.3), (0.2, 0.6)))
    with pytest.raises(DomainError):
        eval_log_modulus(hH, ((0.0, 0.0), (1.0, 0.5)))
    with pytest.raises(ParameterError):
        LogModulatedModulus.heat(0.3)


def _sigma_oracle(H, x, y):
    # direct transcription of the edge sum with z_{j,k} = x_j (j<k), y_j (j>k)
    n = len(x)
    total = 0.0
    for k in range(n):
        z = [x[j] if j < k else y[j] for j in range(n) if j != k]
        hs = [H[j] for j in range(n) if j != k]
        edge = math.prod(abs(zj) ** h for zj, h in zip(z, hs)) * math.sqrt(abs(math.log(math.prod(abs(v) for v in z))))
        d = abs(x[k] - y[k])
        total += edge * d ** H[k] * math.sqrt(abs(math.log(d)))
    return total


def test_sigmaH_matches_sigma_and_oracle():
    rng = np.random.default_rng(1)
    H = (0.3, 0.7, 0.5)
    s1 = LogModulatedModulus.sigmaH(H)
    s2 = LogModulatedModulus.sigma([ModulusFunction.power(h) for h in H])
    for _ in range(100):
        x = rng.uniform(0.05, 0.9, 3)
        y = np.clip(x + rng.uniform(-0.04, 0.04, 3), 0.01, 0.99)
        if np.any(x == y):
            continue
        a, b = s1.evaluate(x, y), s2.evaluate(x, y)
        assert a == b
        assert a == pytest.approx(_sigma_oracle(H, x, y), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 0.99), min_size=4, max_size=4))
def test_h_form_symmetric_and_positive(c):
    x, y = np.array(c[:2]), np.array(c[2:])
    if np.any(np.abs(x - y) < 1e-9):
        return
    m = LogModulatedModulus.h([ModulusFunction.power(0.4), ModulusFunction.power(0.8)])
    assert m.evaluate(x, y) == pytest.approx(float(m.evaluate(y, x)), rel=1e-15)
    assert m.evaluate(x, y) > 0


def test_h_form_vanishes_as_one_side_shrinks():
    m = LogModulatedModulus.hH([0.5, 0.5])
    vals = [eval_log_modulus(m, ((0.0, 0.0), (d, 0.3))) for d in (1e-2, 1e-4, 1e-8, 1e-12)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-5


def test_heat_uLIL2_form():
    m = LogModulatedModulus.heat_uLIL2()
    a, b = (0.2, 0.5), (0.6, 0.25)
    dt, dx = 0.4, 0.25
    expected = dt ** 0.25 * math.sqrt(math.log(1 / (0.5 * dt))) + dx ** 0.5 * math.sqrt(math.log(1 / (dx * 0.6)))
    assert eval_log_modulus(m, (a, b)) == pytest.approx(expected, rel=1e-14)
