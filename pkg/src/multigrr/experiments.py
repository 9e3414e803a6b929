"""Monte Carlo harness: sup ratios against log-modulated moduli, per-path GRR
certificates with ``Psi(x) = exp(x^2/4)``, edge decompositions and grid
refinement sweeps.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, HypothesisError, ParameterError
from .field_grid import GridField, _atomic_write, axis_pairs, pair_increments
from .gaussian import CovarianceModel, GaussianSampler
from .grr import GrrProblem, b_functional
from .modulus import LogModulatedModulus, ModulusFunction, YoungFunction
from .quadrature import stieltjes_tensor_integral

SCHEMA = "grr-report/1"
SUBSAMPLE_PAIRS = 1_000_000
STABILITY_BAND = (0.5, 1.5)


def worker_count() -> int:
    env = os.environ.get("GRR_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"GRR_THREADS must be an integer, got {env!r}")
        return max(1, n)
    return os.cpu_count() or 1


# ---------------------------------------------------------------- sup ratios

@dataclass(frozen=True)
class SupRatio:
    value: float
    pairs: int
    subsample_seed: int | None = None
    max_increment: float = 0.0


def _admissible_axis_pairs(axis: np.ndarray, delta_max: float, box: float | None, ordered: bool):
    i, j = axis_pairs(axis, include_diagonal=False, max_sep=delta_max, ordered=ordered)
    if box is not None:
        inside = lambda v: (v > 0) & (v <= box)
        keep = inside(axis[i]) & inside(axis[j])
        i, j = i[keep], j[keep]
    return i, j


def _open_mesh(arrays):
    n = len(arrays)
    out = []
    for k, a in enumerate(arrays):
        shape = [1] * n
        shape[k] = a.size
        out.append(a.reshape(shape))
    return out


def _stratified_combos(sizes, count: int, seed: int):
    """``count`` combined indices, one uniform draw per equal-width stratum."""
    total = int(np.prod(sizes, dtype=object))
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    edges = np.linspace(0, total, count + 1)
    picks = np.floor(edges[:-1] + rng.random(count) * np.diff(edges)).astype(np.int64)
    picks = np.minimum(picks, total - 1)
    return np.unravel_index(picks, sizes)


def sup_ratio_stats(field: GridField, modulus: LogModulatedModulus, delta_max: float,
                    subsample_seed: int = 0) -> SupRatio:
    """Max of ``|increment| / modulus`` over grid pairs with ``0 < |d_k| <= delta_max``.

    Box forms use rectangular increments.  Point forms use ``|W(x) - W(y)|``
    over ordered node pairs with positive coordinates; for ``sigma`` and
    ``sigmaH`` both points must also lie in ``(0, delta_max]^n``, where every
    edge logarithm is nonzero.  Grids with more than ``65**n`` nodes use a
    stratified subsample of 10^6 pairs.
    """
    if not 0 < delta_max < 1:
        raise ParameterError(f"delta_max must lie in (0, 1), got {delta_max}")
    if modulus.dim != field.dim:
        raise ParameterError(f"{modulus.dim}-D modulus for a {field.dim}-D field")
    rect = modulus.is_rectangular
    axes = field.axes
    if rect:
        box = None
    else:
        # edge forms are only meaningful near the origin: both points in (0, delta_max]^n
        box = delta_max if modulus.form in ("sigma", "sigmaH") else 1.0
    per_axis = [_admissible_axis_pairs(a, delta_max, box, ordered=not rect) for a in axes]
    sizes = tuple(p[0].size for p in per_axis)
    if min(sizes) == 0:
        raise ParameterError("no admissible pair: every axis needs a separation in (0, delta_max]")
    n = field.dim
    n_pairs = int(np.prod(sizes, dtype=object))
    seed_used = None
    if field.values.size > 65 ** n and n_pairs > SUBSAMPLE_PAIRS:
        seed_used = int(subsample_seed)
        combo = _stratified_combos(sizes, SUBSAMPLE_PAIRS, seed_used)
        xi = [per_axis[k][0][combo[k]] for k in range(n)]
        yi = [per_axis[k][1][combo[k]] for k in range(n)]
        n_pairs = SUBSAMPLE_PAIRS
    else:
        xi = _open_mesh([p[0] for p in per_axis])
        yi = _open_mesh([p[1] for p in per_axis])
    xi = np.broadcast_arrays(*xi)
    yi = np.broadcast_arrays(*yi)
    vals = field.values
    if rect:
        inc = np.zeros(xi[0].shape)
        for bits in np.ndindex(*(2,) * n):
            idx = tuple(yi[k] if b else xi[k] for k, b in enumerate(bits))
            inc = inc + (-1.0) ** sum(bits) * vals[idx]
    else:
        inc = vals[tuple(xi)] - vals[tuple(yi)]
    X = np.stack([axes[k][xi[k]] for k in range(n)], axis=-1)
    Y = np.stack([axes[k][yi[k]] for k in range(n)], axis=-1)
    den = modulus.evaluate(X, Y)
    inc = np.abs(inc)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, inc / den, np.where(inc > 0, np.inf, 0.0))
    return SupRatio(float(np.max(ratio)), n_pairs, seed_used, float(np.max(inc)))


def sup_ratio(field: GridField, modulus: LogModulatedModulus, delta_max: float, subsample_seed: int = 0) -> float:
    return sup_ratio_stats(field, modulus, delta_max, subsample_seed).value


# ------------------------------------------------------------- certificates

class LogMomentTable:
    """``I(d) = int_0^{d_1} ... int_0^{d_n} sqrt(log 1/(u_1^2...u_n^2)) dp_1 ... dp_n``.

    Cached per separation vector so replicates on the same grid share it.  For
    power moduli ``I(d) = prod d_k^{g_k} Phi(-2 sum log d_k)`` and the cache is
    keyed on the log sum alone.
    """

    def __init__(self, moduli, rtol: float = 1e-10):
        self.moduli = tuple(moduli)
        self.rtol = rtol
        self.power = all(p.kind == "power" for p in self.moduli)
        self._cache: dict = {}

    def _integral(self, deltas) -> float:
        def integrand(*us):
            s = 0.0
            for u in us:
                s = s - 2.0 * np.log(u)
            return np.sqrt(s)
        return stieltjes_tensor_integral(integrand, self.moduli, deltas, rtol=self.rtol)

    def __call__(self, deltas) -> float:
        deltas = tuple(float(d) for d in deltas)
        if any(d <= 0 for d in deltas):
            return 0.0
        if any(d > 1 for d in deltas):
            raise DomainError("separations must lie in [0, 1]")
        if self.power:
            L = -2.0 * math.fsum(math.log(d) for d in deltas)
            key = round(L, 12)
            if key not in self._cache:
                # Phi(L) from the unit box scaled by exp(-L/2): pick u_k = e^{-L/2n}
                base = math.exp(-L / (2 * len(deltas)))
                v = self._integral([base] * len(deltas))
                self._cache[key] = v / math.prod(base ** p.gamma for p in self.moduli)
            return self._cache[key] * math.prod(d ** p.gamma for d, p in zip(deltas, self.moduli))
        if deltas not in self._cache:
            self._cache[deltas] = self._integral(deltas)
        return self._cache[deltas]

    def table(self, deltas: np.ndarray) -> np.ndarray:
        uniq, inv = np.unique(np.asarray(deltas, dtype=float), axis=0, return_inverse=True)
        vals = np.array([self(d) for d in uniq])
        return vals[inv.ravel()]


@dataclass
class CertificateReport:
    B: float
    lhs: np.ndarray = field(repr=False)
    bound: np.ndarray = field(repr=False)
    passed: np.ndarray = field(repr=False)
    slack: float = 0.05
    vacuous: bool = False

    @property
    def ok(self) -> bool:
        return self.vacuous or bool(np.all(self.passed))

    @property
    def max_ratio(self) -> float:
        good = self.bound > 0
        if self.vacuous or not np.any(good):
            return 0.0
        return float(np.max(self.lhs[good] / self.bound[good]))

    def summary(self) -> dict:
        return {"B": self.B, "vacuous": self.vacuous, "pairs": int(self.lhs.size),
                "failures": int(np.sum(~self.passed)) if not self.vacuous else 0,
                "max_lhs_over_bound": self.max_ratio, "pass": self.ok, "slack": self.slack}


def grr_certificate(field: GridField, psi: YoungFunction, moduli, pairs=None, slack: float = 0.05,
                    B: float | None = None, table: LogMomentTable | None = None,
                    delta_max: float | None = None) -> CertificateReport:
    """Per-pair check of the two-term bound that GRR gives for ``Psi = expq``:

        |box| <= 2 8^n I(d) + sqrt(log(4^n B)) prod_k p_k(|d_k|)

    with the path's own ``B`` (grid estimate unless given).  ``pairs`` defaults
    to all node pairs with positive separations (at most ``delta_max``).
    """
    if psi.kind != "expq":
        raise ParameterError("the certificate is stated for Psi(x) = exp(x^2/4)")
    if slack < 0:
        raise ParameterError("slack must be non-negative")
    moduli = tuple(moduli)
    n = field.dim
    if len(moduli) != n:
        raise ParameterError(f"{len(moduli)} moduli for a {n}-D field")
    if B is None:
        B = b_functional(GrrProblem(field, psi, moduli))
    if not np.isfinite(B):
        empty = np.zeros(0)
        return CertificateReport(float(B), empty, empty, empty.astype(bool), slack, vacuous=True)
    table = table if table is not None else LogMomentTable(moduli)
    if pairs is None:
        per_axis = [axis_pairs(a, include_diagonal=False, max_sep=delta_max) for a in field.axes]
        lhs = np.abs(pair_increments(field.values, per_axis)).ravel()
        seps = [np.abs(a[j] - a[i]) for a, (i, j) in zip(field.axes, per_axis)]
        mesh = np.meshgrid(*seps, indexing="ij")
        D = np.stack([m.ravel() for m in mesh], axis=-1)
    else:
        from .grr import _increments, _pair_arrays
        x, y = _pair_arrays(pairs)
        lhs = np.abs(_increments(field, x, y))
        D = np.abs(x - y)
    prod_p = np.ones(D.shape[0])
    for k, p in enumerate(moduli):
        prod_p = prod_p * p(D[:, k])
    bound = 2.0 * 8.0 ** n * table.table(D) + math.sqrt(math.log(4.0 ** n * B)) * prod_p
    passed = lhs <= (1.0 + slack) * bound
    return CertificateReport(float(B), lhs, bound, passed, slack)


# ------------------------------------------------------- edge decomposition

def edge_points(x, y) -> list[np.ndarray]:
    """``P_0 = y, ..., P_n = x`` with ``P_k = (x_1..x_k, y_{k+1}..y_n)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return [np.concatenate([x[:k], y[k:]]) for k in range(x.size + 1)]


def edge_increments(field, x, y) -> np.ndarray:
    """``W(P_k) - W(P_{k-1})``, k = 1..n; they telescope to ``W(x) - W(y)``."""
    pts = np.stack(edge_points(x, y))
    vals = np.asarray(field(pts), dtype=float)
    return np.diff(vals)


def vanishes_on_axes(field: GridField, atol: float = 0.0) -> bool:
    v = field.values
    for k, a in enumerate(field.axes):
        if a[0] == 0.0 and np.any(np.abs(np.take(v, 0, axis=k)) > atol):
            return False
    return True


def edge_decomposition_bound(field: GridField, pair, moduli, delta_max: float | None = None,
                             atol: float = 0.0) -> tuple[float, float]:
    """``(|W(x) - W(y)|, sigma(x, y))`` for a field vanishing on the coordinate axes."""
    if not vanishes_on_axes(field, atol):
        raise HypothesisError("field does not vanish where a coordinate is 0")
    x, y = (np.asarray(v, dtype=float) for v in pair)
    d = np.abs(x - y)
    if delta_max is not None and np.any(d > delta_max):
        raise ParameterError("pair separation exceeds delta_max")
    if np.all(d == 0):
        return 0.0, 0.0
    lhs = abs(float(field(x[None, :])[0] - field(y[None, :])[0]))
    rhs = float(LogModulatedModulus.sigma(moduli).evaluate(x, y))
    return lhs, rhs


# ------------------------------------------------------------------ reports

def _encode(obj):
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return format(v, ".17g") if math.isfinite(v) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats become null."""
    return _encode(obj)


@dataclass
class ReplicateResult:
    replicate: int
    grid: tuple
    sup_ratio: float
    max_increment: float
    pairs: int
    B: float | None = None
    certificate_pass: bool | None = None
    certificate_vacuous: bool | None = None
    certificate_max_ratio: float | None = None

    def as_dict(self) -> dict:
        return {"replicate": self.replicate, "grid": list(self.grid), "sup_ratio": self.sup_ratio,
                "max_increment": self.max_increment, "pairs": self.pairs, "B": self.B,
                "B_finite": None if self.B is None else bool(math.isfinite(self.B)),
                "certificate_pass": self.certificate_pass, "certificate_vacuous": self.certificate_vacuous,
                "certificate_max_ratio": self.certificate_max_ratio}


@dataclass
class ExperimentSpec:
    model: CovarianceModel
    grid: tuple
    delta_max: float = 0.5
    form: str = "hH"
    replicates: int = 50
    seed: int = 0
    slack: float = 0.05
    hurst: tuple = ()
    alpha: float = 0.125
    moduli: tuple = ()  # p_k for sup ratios with forms h / sigma
    certificate_moduli: tuple = ()  # enables the per-path certificate

    def __post_init__(self):
        if not 0 < self.delta_max < 1:
            raise ParameterError(f"delta_max must lie in (0, 1), got {self.delta_max}")
        if self.replicates < 1:
            raise ParameterError("need at least one replicate")
        if self.slack < 0:
            raise ParameterError("slack must be non-negative")
        self.grid = tuple(int(m) for m in self.grid)
        if len(self.grid) != self.model.dim or min(self.grid) < 2:
            raise ParameterError(f"grid {self.grid} does not fit a {self.model.dim}-D model")
        if not self.hurst and self.model.kind == "fbm":
            self.hurst = self.model.hurst
        self.log_modulus()

    def log_modulus(self, form: str | None = None) -> LogModulatedModulus:
        form = form or self.form
        if form in ("hH", "sigmaH"):
            if len(self.hurst) != self.model.dim:
                raise ParameterError(f"form {form} needs {self.model.dim} Hurst indices")
            return getattr(LogModulatedModulus, form)(self.hurst)
        if form in ("h", "sigma"):
            return LogModulatedModulus(form, tuple(self.moduli))
        if form == "heat":
            return LogModulatedModulus.heat(self.alpha)
        return LogModulatedModulus(form)

    def axes(self, shape=None) -> list:
        return [np.linspace(0.0, 1.0, m) for m in (shape or self.grid)]

    def describe(self) -> dict:
        return {"model": self.model.describe(), "grid": list(self.grid), "delta_max": self.delta_max,
                "form": self.form, "replicates": self.replicates, "seed": self.seed, "slack": self.slack,
                "hurst": list(self.hurst), "alpha": self.alpha,
                "moduli": [p.spec for p in self.moduli],
                "certificate_moduli": [p.spec for p in self.certificate_moduli]}


def _quantiles(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"median": float(np.median(v)), "p95": float(np.quantile(v, 0.95)),
            "min": float(np.min(v)), "max": float(np.max(v))}


@dataclass
class RegularityReport:
    spec: ExperimentSpec
    grids: list
    replicates: list  # ReplicateResult, ordered by (grid, replicate)
    jitter: dict = field(default_factory=dict)
    subsample_seed: int | None = None
    elapsed_s: float = 0.0

    def per_grid(self) -> list:
        out = []
        for g in self.grids:
            rs = [r for r in self.replicates if r.grid == tuple(g)]
            entry = {"grid": list(g), "sup_ratio": _quantiles([r.sup_ratio for r in rs])}
            Bs = [r.B for r in rs if r.B is not None]
            if Bs:
                fin = [b for b in Bs if math.isfinite(b)]
                entry["B"] = _quantiles(fin) if fin else None
                entry["B_infinite"] = len(Bs) - len(fin)
            out.append(entry)
        return out

    def steps(self) -> list:
        meds = [e["sup_ratio"]["median"] for e in self.per_grid()]
        out = []
        for a, b in zip(meds[:-1], meds[1:]):
            r = b / a if a > 0 else (math.inf if b > 0 else 1.0)
            out.append({"median_ratio": r, "grows_over_50pct": bool(r > STABILITY_BAND[1]),
                        "within_band": bool(STABILITY_BAND[0] <= r <= STABILITY_BAND[1])})
        return out

    @property
    def all_finite(self) -> bool:
        return all(math.isfinite(r.sup_ratio) and r.sup_ratio >= 0 for r in self.replicates)

    @property
    def stable(self) -> bool:
        return all(s["within_band"] for s in self.steps())

    @property
    def certificates_pass(self) -> bool:
        return all(r.certificate_pass is not False for r in self.replicates)

    @property
    def passed(self) -> bool:
        return self.all_finite and self.certificates_pass

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "spec": self.spec.describe(),
            "grids": [list(g) for g in self.grids],
            "per_grid": self.per_grid(),
            "refinement": {"steps": self.steps(), "band": list(STABILITY_BAND), "stable": self.stable,
                           "note": "band is a heuristic instability signal, not a theorem"},
            "modulus_resolution": "grid-resolution",
            "subsample_seed": self.subsample_seed,
            "jitter": self.jitter,
            "all_finite": self.all_finite,
            "certificates_pass": self.certificates_pass,
            "pass": self.passed,
            "replicates": [r.as_dict() for r in self.replicates],
        }

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"

    def to_csv(self) -> str:
        lines = ["replicate,grid,B,sup_ratio,pass"]
        for r in self.replicates:
            B = "" if r.B is None else format(r.B, ".17g")
            ok = "" if r.certificate_pass is None else str(bool(r.certificate_pass)).lower()
            lines.append(f"{r.replicate},{'x'.join(map(str, r.grid))},{B},{format(r.sup_ratio, '.17g')},{ok}")
        return "\n".join(lines) + "\n"

    def write(self, json_path=None, csv_path=None) -> None:
        if json_path:
            _atomic_write(json_path, self.to_json().encode())
        if csv_path:
            _atomic_write(csv_path, self.to_csv().encode())


def _run_replicate(spec: ExperimentSpec, sampler: GaussianSampler, modulus, shape, r: int,
                   table: LogMomentTable | None, expq: YoungFunction) -> ReplicateResult:
    f = sampler.sample(spec.seed, r)
    st = sup_ratio_stats(f, modulus, spec.delta_max, subsample_seed=spec.seed)
    res = ReplicateResult(r, tuple(shape), st.value, st.max_increment, st.pairs)
    if table is not None:
        cert = grr_certificate(f, expq, spec.certificate_moduli, slack=spec.slack, table=table)
        res.B = cert.B
        res.certificate_pass = cert.ok
        res.certificate_vacuous = cert.vacuous
        res.certificate_max_ratio = cert.max_ratio
    return res


def run_experiment(spec: ExperimentSpec, grids: Sequence[Sequence[int]] | None = None,
                   threads: int | None = None) -> RegularityReport:
    """Sup ratios (and certificates if requested) for every replicate on every grid."""
    t0 = time.perf_counter()
    grids = [tuple(int(m) for m in g) for g in (grids or [spec.grid])]
    threads = threads or worker_count()
    modulus = spec.log_modulus()
    expq = YoungFunction.expq()
    results, jitter = [], {}
    for shape in grids:
        if len(shape) != spec.model.dim:
            raise ParameterError(f"grid {shape} does not fit a {spec.model.dim}-D model")
        sampler = GaussianSampler(spec.model, spec.axes(shape))
        jitter["x".join(map(str, shape))] = sampler.jitter
        table = LogMomentTable(spec.certificate_moduli) if spec.certificate_moduli else None
        job = lambda r: _run_replicate(spec, sampler, modulus, shape, r, table, expq)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results.extend(pool.map(job, range(spec.replicates)))
        else:
            results.extend(job(r) for r in range(spec.replicates))
    sub = spec.seed if any(np.prod(g) > 65 ** len(g) for g in grids) else None
    return RegularityReport(spec, grids, results, jitter, sub, time.perf_counter() - t0)


def refinement_sweep(spec: ExperimentSpec, grids: Sequence[Sequence[int]], threads: int | None = None) -> RegularityReport:
    """Sup-ratio statistics across increasingly fine grids."""
    grids = [tuple(int(m) for m in g) for g in grids]
    sizes = [int(np.prod(g)) for g in grids]
    if any(b <= a for a, b in zip(sizes[:-1], sizes[1:])):
        raise ParameterError("grids must have strictly increasing resolution")
    return run_experiment(spec, grids, threads)
