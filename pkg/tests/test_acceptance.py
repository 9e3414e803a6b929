"""Acceptance criteria 1-12; each test prints one PASS/FAIL line."""
import math
import time

import numpy as np
import pytest

from multigrr.errors import BoundViolation
from multigrr.experiments import ExperimentSpec, refinement_sweep, run_experiment
from multigrr.field_grid import GridField
from multigrr.gaussian import (CovarianceModel, GaussianSampler, exp_moment_check, increment_moment_mc,
                               increment_variance)
from multigrr.grr import GrrProblem, build_grr_chain, grr_rhs, verify_grr
from multigrr.heat import (heat_cov, heat_cov_quad, heat_sq_increment, heat_sq_increment_bound,
                           heat_sq_increment_corners, lemma51_brackets, rho)
from multigrr.modulus import ModulusFunction, YoungFunction


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"
    return emit


def test_c01_grr_closed_form(report):
    t0 = time.perf_counter()
    P4, U1 = YoungFunction.power(4), ModulusFunction.power(1)
    r1 = grr_rhs(P4, [U1], 1.0, [1.0])
    r2 = grr_rhs(P4, [U1, U1], 1.0, [1.0, 1.0])
    ok = abs(r1 - 16 * math.sqrt(2)) < 1e-12 and abs(r2 - 512) < 1e-10
    worst = []
    for n in (1, 2, 3):
        f = GridField.uniform(lambda p: np.prod(p, axis=-1), (17,) * n)
        rep = verify_grr(GrrProblem(f, P4, [U1] * n), B=1.0, slack=0.0)
        ok &= rep.ok and not rep.vacuous.any()
        worst.append(rep.max_ratio)
    dt = time.perf_counter() - t0
    ok &= dt < 60
    report(1, "GRR inequality on 17^n grids, closed-form B, slack 0", ok,
           f"RHS {r1:.6f}, {r2:.1f}; max LHS/RHS {', '.join(f'{w:.3g}' for w in worst)}; {dt:.1f}s")


def test_c02_increment_variance_consistency(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for n in (2, 3):
        m = CovarianceModel.fbm(rng.uniform(0.1, 0.95, n))
        for _ in range(1000):
            pair = (rng.uniform(0, 1, n), rng.uniform(0, 1, n))
            worst = max(worst, abs(increment_variance(m, pair, "product") - increment_variance(m, pair, "generic")))
    m = CovarianceModel.fbm([0.3, 0.7])
    z_max = 0.0
    for k in range(10):
        x, y = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
        target = abs(x[0] - y[0]) ** 0.6 * abs(x[1] - y[1]) ** 1.4
        mean, se = increment_moment_mc(m, (x, y), 100_000, seed=100 + k)
        z_max = max(z_max, abs(mean - target) / se)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-12 and z_max < 4 and dt < 300
    report(2, "product vs corner increment variance; MC second moment", ok,
           f"max path gap {worst:.2e}; max |z| {z_max:.2f} over 10 rectangles; {dt:.1f}s")


def test_c03_sampler_exactness(report):
    ax = [np.linspace(0, 1, 9)] * 2
    m = CovarianceModel.fbm([0.3, 0.7])
    N = 20_000
    S = GaussianSampler(m, ax).sample_batch(7, range(N)).reshape(N, -1)
    pts = np.stack(np.meshgrid(*ax, indexing="ij"), -1).reshape(-1, 2)
    Q = m(pts[:, None], pts[None])
    C = S.T @ S / N  # mean is known to be 0
    d = np.diag(Q)
    se = np.sqrt((np.outer(d, d) + Q * Q) / N)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(C - Q) / se, np.where(C == Q, 0.0, np.inf))
    kron = GaussianSampler(m, ax, path="kronecker", exact=True)
    dense = GaussianSampler(m, ax, path="kron-dense", exact=True)
    identical = all(np.array_equal(kron.sample_values(7, r), dense.sample_values(7, r)) for r in range(N))
    full = GaussianSampler(m, ax, path="full")
    gap = max(float(np.max(np.abs(kron.sample_values(7, r) - full.sample_values(7, r)))) for r in range(20))
    ok = float(z.max()) < 5 and identical
    report(3, "9x9 fBm sampler covariance within 5 SE; Kronecker == full-matrix bits", ok,
           f"max |z| {z.max():.2f}; bit-identical over {N} replicates: {identical}; "
           f"gap to a separately factorized full covariance {gap:.1e}")


def test_c04_heat_covariance(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        a, b = rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)
        q = heat_cov_quad(a, b)
        worst = max(worst, abs(float(heat_cov(a, b)) - q) / abs(q))
    var = float(heat_cov([1.0, 0.4], [1.0, 0.4]))
    err = abs(var - math.sqrt(1 / math.pi))
    ok = worst < 1e-10 and err < 1e-10
    report(4, "heat covariance closed form vs quadrature", ok, f"max rel err {worst:.1e}; Var u(1,x) = {var:.6f}")


def test_c05_heat_increment_identity(report):
    rng = np.random.default_rng(5)
    s, t, x, y = rng.uniform(0, 1, (4, 1000))
    gap = float(np.max(np.abs(heat_sq_increment(s, t, x, y) - heat_sq_increment_corners(s, t, x, y))))
    ref = float(heat_sq_increment(0.0, 1.0, 0.0, 1.0))
    ok = gap < 1e-10 and abs(ref - 0.729096) < 1e-6
    report(5, "three-integral increment vs four-corner covariance", ok, f"max gap {gap:.1e}; value {ref:.6f}")


def test_c06_sign_claim(report):
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(1000):
        s, t = rng.uniform(0, 1, 2)
        x = rng.uniform(0, 1)
        y = x + rng.uniform(-1, 1)
        r = heat_sq_increment_bound(s, t, x, y, alpha=0.25, rtol=math.inf)
        bad += r.value > r.bound1
    report(6, "increment variance <= 2 int_0^|s-t| [p_r(0) - p_r(d)] dr", bad == 0, f"{bad} violations in 1000")


def test_c07_gap_brackets(report):
    rng = np.random.default_rng(7)
    bad, worst_j = 0, 0.0
    for _ in range(1000):
        a = 10 ** rng.uniform(-3, 1)
        b = a + 10 ** rng.uniform(-3, 1)
        d = 10 ** rng.uniform(-2, 0.5)
        try:
            r = lemma51_brackets(a, b, d, tol=1e-9)
        except BoundViolation:
            bad += 1
            continue
        worst_j = max(worst_j, abs(r.J - r.J_identity))
    ref = lemma51_brackets(1.0, 4.0, 1.0)
    ok = bad == 0 and abs(ref.lower - 0.235007) < 1e-6 and abs(ref.upper - 0.786939) < 1e-6
    report(7, "bracket lower <= I <= upper; J identity", ok,
           f"{bad} failures; max J gap {worst_j:.1e}; lower {ref.lower:.9f}, upper {ref.upper:.9f}")


def test_c08_rho(report):
    inf = rho(math.inf)
    u = 1e-6
    small = rho(u) / (2 * math.sqrt(2 / math.pi) * math.sqrt(u))
    rng = np.random.default_rng(8)
    bad = 0
    for _ in range(1000):
        s, t, x, y = rng.uniform(0, 1, 4)
        d = abs(x - y)
        bad += float(heat_sq_increment(s, t, x, y)) > d * rho(abs(t - s) / d ** 2) * (1 + 1e-12)
    ok = abs(inf - 2 * math.sqrt(2)) < 1e-6 and abs(small - 1) < 0.01 and bad == 0
    report(8, "rho endpoints and increment <= |d| rho(|t-s|/d^2)", ok,
           f"rho(inf) {inf:.9f}; small-u ratio {small:.6f}; {bad} violations")


def test_c09_exponential_moment(report):
    r = exp_moment_check(1.0, 1_000_000, seed=9)
    ok = abs(r.estimate / math.sqrt(2) - 1) < 0.01
    report(9, "E exp(N^2/4) at unit variance vs sqrt(2)", ok,
           f"estimate {r.estimate:.6f} +- {r.std_error:.1e}; exceeds 15/14 = {15 / 14:.6f}: {r.exceeds_15_14}")


def test_c10_path_certificate(report):
    spec = ExperimentSpec(CovarianceModel.fbm([0.3, 0.7]), (33, 33), delta_max=0.5, replicates=50, seed=10,
                          slack=0.05, certificate_moduli=(ModulusFunction.power(0.25), ModulusFunction.power(0.65)))
    rep = run_experiment(spec)
    finite = [r for r in rep.replicates if math.isfinite(r.B)]
    ok = all(r.certificate_pass for r in finite) and len(finite) > 0
    worst = max(r.certificate_max_ratio for r in finite)
    report(10, "per-path expq certificate, 50 fBm replicates on 33x33", ok,
           f"{len(finite)}/50 finite B; all pass: {ok}; worst LHS/bound {worst:.3g}")


def test_c11_refinement_stability(report):
    t0 = time.perf_counter()
    spec = ExperimentSpec(CovarianceModel.fbm([0.5, 0.5]), (17, 17), delta_max=0.25, replicates=50, seed=11)
    rep = refinement_sweep(spec, [(17, 17), (33, 33), (65, 65)])
    dt = time.perf_counter() - t0
    meds = [g["sup_ratio"]["median"] for g in rep.per_grid()]
    ok = rep.all_finite and rep.stable and dt < 600
    report(11, "sup-ratio medians across 17^2, 33^2, 65^2 within 50% per step", ok,
           f"medians {', '.join(f'{m:.3f}' for m in meds)}; {dt:.0f}s")


def test_c12_chain(report):
    g = lambda z, t: np.full(np.shape(z), t)
    p = ModulusFunction.power(1)
    ch = build_grr_chain(g, np.array([0.0]), np.array([1.0]), YoungFunction.power(2), p)
    halves = all(d == t / 2 for d, t in zip(ch.d, ch.t[:-1]))
    steps = all(s <= b for s, b in zip(ch.step_integrals, ch.step_bounds))
    ok = halves and steps and ch.check(p) and len(ch.d) > 0
    report(12, "chain with d_{k-1} = t_{k-1}/2 and the step integral bound", ok,
           f"{len(ch.d)} steps; step integrals in [{min(ch.step_integrals):.3g}, {max(ch.step_integrals):.3g}]")
