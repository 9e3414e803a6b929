"""Batch command line: ``multigrr {simulate,verify-grr,holder,heat-holder,cov}``.

Exit codes: 0 pass, 1 certificate failure, 2 usage error, 3 I/O error.  Every
run ends with one JSON line ``{subcommand, seed, elapsed_ms, status}`` on stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GrrError
from .experiments import ExperimentSpec, dumps, run_experiment
from .field_grid import GridField, _atomic_write
from .gaussian import CovarianceModel, GaussianSampler
from .grr import GrrProblem, verify_grr
from .heat import heat_cov
from .modulus import ModulusFunction, YoungFunction, parse_moduli

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

BUILTINS = {
    "prod": lambda x: np.prod(x, axis=-1),
    "quad": lambda x: np.prod(x * x, axis=-1),
    "sinprod": lambda x: np.prod(np.sin(np.pi * x), axis=-1),
    "zero": lambda x: np.zeros(x.shape[:-1]),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def parse_grid(text: str) -> tuple:
    try:
        dims = tuple(int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise UsageError(f"bad grid {text!r}; expected e.g. 33x33")
    if not dims or min(dims) < 2:
        raise UsageError(f"grid {text!r} needs at least 2 nodes per axis")
    return dims


def parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise UsageError(f"bad number list {text!r}")


def closed_form_B(function: str, psi: YoungFunction, moduli, dim: int) -> float | None:
    """``B`` for builtin fields when it has a closed form, else ``None``."""
    unit = all(p.kind == "power" and p.gamma == 1.0 for p in moduli)
    if function == "zero":
        return psi.at_zero
    if psi.kind != "power" or not unit:
        return None
    a = psi.alpha
    if function == "prod":
        return 1.0  # box / prod |d_k| is +-1 off the diagonal
    if function == "quad":
        # box / prod |d_k| = prod (x_k + y_k)
        return ((2.0 ** (a + 2) - 2.0) / ((a + 1) * (a + 2))) ** dim
    return None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multigrr", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file with option values (command line wins)")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="sample Gaussian field replicates to snapshot files")
    s.add_argument("--model", choices=["fbm", "heat"], default="fbm")
    s.add_argument("--hurst", default="0.5,0.5")
    s.add_argument("--grid", default="33x33")
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=False)

    v = sub.add_parser("verify-grr", help="check the GRR inequality for a builtin field")
    v.add_argument("--function", choices=sorted(BUILTINS), default="prod")
    v.add_argument("--psi", default="pow:4")
    v.add_argument("--p", default="pow:1", help="comma list of moduli (one is broadcast)")
    v.add_argument("--grid", default="17x17")
    v.add_argument("--slack", type=float, default=None)
    v.add_argument("--pairs", default="all", help="'all' or a number of random node pairs")
    v.add_argument("--b", choices=["auto", "closed", "grid"], default="auto")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--report")

    for name in ("holder", "heat-holder"):
        h = sub.add_parser(name, help="sup-ratio statistics and per-path certificates")
        if name == "holder":
            h.add_argument("--model", choices=["fbm"], default="fbm")
            h.add_argument("--hurst", default="0.5,0.5")
            h.add_argument("--grid", default="33x33")
            h.add_argument("--form", choices=["hH", "sigmaH"], default="hH")
            h.add_argument("--cert-shift", type=float, default=0.05,
                           help="certificate moduli u**(H_k - shift); negative disables")
        else:
            h.add_argument("--t-grid", type=int, default=33)
            h.add_argument("--x-grid", type=int, default=33)
            h.add_argument("--alpha", type=float, default=0.125)
            h.add_argument("--form", choices=["heat", "heat_uLIL2"], default="heat")
        h.add_argument("--delta", type=float, default=0.5)
        h.add_argument("--replicates", type=int, default=50)
        h.add_argument("--seed", type=int, default=0)
        h.add_argument("--slack", type=float, default=0.05)
        h.add_argument("--refine", default="", help="extra grids for a refinement sweep, e.g. 17x17,65x65")
        h.add_argument("--report")
        h.add_argument("--csv")

    c = sub.add_parser("cov", help="evaluate a covariance")
    c.add_argument("--model", choices=["fbm", "heat"], default="heat")
    c.add_argument("--hurst", default="0.5")
    c.add_argument("--eval", help="x_1..x_n,y_1..y_n (heat: s,x,t,y)")
    c.add_argument("--seed", type=int, default=0)
    return p


@dataclass
class RunConfig:
    subcommand: str
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, **self.options}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        return cls(d.pop("subcommand"), d)

    def to_argv(self) -> list:
        argv = [self.subcommand]
        for k, v in self.options.items():
            if v is None:
                continue
            argv += ["--" + k.replace("_", "-"), str(v)]
        return argv

    @property
    def seed(self):
        return self.options.get("seed")


def _validate(cfg: RunConfig) -> None:
    o = cfg.options
    if "hurst" in o and o.get("model", "fbm") == "fbm":
        hs = parse_floats(o["hurst"])
        if not hs or not all(0 < h <= 1 for h in hs):
            raise UsageError(f"Hurst indices must lie in (0, 1], got {o['hurst']}")
    if "delta" in o and not 0 < o["delta"] < 1:
        raise UsageError(f"--delta must lie in (0, 1), got {o['delta']}")
    if "replicates" in o and o["replicates"] < 1:
        raise UsageError("--replicates must be at least 1")
    if o.get("slack") is not None and o["slack"] < 0:
        raise UsageError("--slack must be non-negative")
    if "grid" in o:
        parse_grid(o["grid"])
    if cfg.subcommand == "simulate" and not o.get("out"):
        raise UsageError("simulate needs --out")
    if cfg.subcommand == "cov" and not o.get("eval"):
        raise UsageError("cov needs --eval")


SUBCOMMANDS = ("simulate", "verify-grr", "holder", "heat-holder", "cov")


def _load_config(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except ValueError as e:
        raise UsageError(f"config is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    return data


def parse_args(argv) -> RunConfig:
    """Validated config; ``--config`` values act as defaults that flags override."""
    parser = build_parser()
    argv = list(argv)
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config:
        data = _load_config(known.config)
        sub_cli = _guess_sub(rest)
        sub = data.pop("subcommand", sub_cli)
        if sub is None:
            raise UsageError("no subcommand given on the command line or in the config")
        if sub_cli is not None and sub != sub_cli:
            raise UsageError(f"config is for {sub!r}, command line asks for {sub_cli!r}")
        cfg_argv = RunConfig(sub, {k.replace("-", "_"): v for k, v in data.items()}).to_argv()
        if sub_cli is None:
            rest = cfg_argv + rest
        else:
            at = rest.index(sub_cli)
            # argparse keeps the last occurrence, so explicit flags win
            rest = rest[:at] + cfg_argv + rest[at + 1:]
    ns = parser.parse_args(rest)
    opts = {k: v for k, v in vars(ns).items() if k not in ("config", "subcommand")}
    cfg = RunConfig(ns.subcommand, opts)
    _validate(cfg)
    return cfg


def _fbm_model(hurst_text: str, dim: int | None = None) -> CovarianceModel:
    hs = parse_floats(hurst_text)
    if dim is not None and len(hs) == 1:
        hs = hs * dim
    return CovarianceModel.fbm(hs)


def _cmd_simulate(o: dict, out_stream) -> tuple[int, dict]:
    shape = parse_grid(o["grid"])
    if o["model"] == "heat":
        if len(shape) != 2:
            raise UsageError("the heat model needs a 2-D (t x y) grid")
        model = CovarianceModel.heat()
        params = {}
    else:
        model = _fbm_model(o["hurst"], len(shape))
        if model.dim != len(shape):
            raise UsageError(f"{model.dim} Hurst indices for a {len(shape)}-D grid")
        params = {"hurst": list(model.hurst)}
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    sampler = GaussianSampler(model, [np.linspace(0.0, 1.0, m) for m in shape])
    params["jitter"] = sampler.jitter
    params["path"] = sampler.path
    files = []
    for r in range(o["replicates"]):
        f = sampler.sample(o["seed"], r)
        m, _ = f.save(out / f"replicate_{r:05d}.json", seed=o["seed"], model=model.kind,
                      params={**params, "replicate": r})
        files.append(m.name)
    print(f"wrote {len(files)} replicate(s) to {out}", file=out_stream)
    return EXIT_OK, {"files": len(files)}


def _cmd_verify(o: dict, out_stream) -> tuple[int, dict]:
    shape = parse_grid(o["grid"])
    n = len(shape)
    psi = YoungFunction.parse(o["psi"])
    moduli = parse_moduli(o["p"], n)
    f = GridField.uniform(BUILTINS[o["function"]], shape)
    B = None
    if o["b"] in ("auto", "closed"):
        B = closed_form_B(o["function"], psi, moduli, n)
        if B is None and o["b"] == "closed":
            raise UsageError(f"no closed-form B for {o['function']} with {o['psi']} / {o['p']}")
    pairs = None
    if o["pairs"] != "all":
        try:
            count = int(o["pairs"])
        except ValueError:
            raise UsageError("--pairs must be 'all' or an integer")
        rng = np.random.Generator(np.random.Philox(key=[o["seed"], 0]))
        xi = np.stack([rng.integers(0, m, count) for m in shape], axis=-1)
        yi = np.stack([rng.integers(0, m, count) for m in shape], axis=-1)
        pairs = (np.array([[f.axes[k][i] for k, i in enumerate(row)] for row in xi]),
                 np.array([[f.axes[k][i] for k, i in enumerate(row)] for row in yi]))
    rep = verify_grr(GrrProblem(f, psi, moduli), pairs=pairs, slack=o["slack"], B=B)
    summary = {"function": o["function"], "psi": psi.spec, "p": [p.spec for p in moduli],
               "grid": list(shape), "B_source": "closed" if B is not None else "grid", **rep.summary()}
    text = dumps(summary)
    print(text, file=out_stream)
    if o.get("report"):
        _atomic_write(Path(o["report"]), (text + "\n").encode())
    return (EXIT_OK if rep.ok else EXIT_FAIL), {}


def _cmd_holder(o: dict, out_stream, heat: bool) -> tuple[int, dict]:
    if heat:
        model = CovarianceModel.heat()
        grid = (o["t_grid"], o["x_grid"])
        spec = ExperimentSpec(model, grid, delta_max=o["delta"], form=o["form"], replicates=o["replicates"],
                              seed=o["seed"], slack=o["slack"], alpha=o["alpha"])
    else:
        grid = parse_grid(o["grid"])
        model = _fbm_model(o["hurst"], len(grid))
        cert = ()
        if o["cert_shift"] >= 0:
            gam = [h - o["cert_shift"] for h in model.hurst]
            if min(gam) <= 0:
                raise UsageError("certificate exponents H_k - shift must be positive")
            cert = tuple(ModulusFunction.power(g) for g in gam)
        spec = ExperimentSpec(model, grid, delta_max=o["delta"], form=o["form"], replicates=o["replicates"],
                              seed=o["seed"], slack=o["slack"], certificate_moduli=cert)
    grids = [spec.grid]
    if o.get("refine"):
        grids += [parse_grid(g) for g in o["refine"].split(",") if g.strip()]
        grids.sort(key=lambda g: int(np.prod(g)))
    report = run_experiment(spec, grids)
    report.write(o.get("report"), o.get("csv"))
    d = report.to_dict()
    print(dumps({k: d[k] for k in ("per_grid", "refinement", "all_finite", "certificates_pass", "pass")}),
          file=out_stream)
    return (EXIT_OK if report.passed else EXIT_FAIL), {}


def _cmd_cov(o: dict, out_stream) -> tuple[int, dict]:
    vals = parse_floats(o["eval"])
    if o["model"] == "heat":
        if len(vals) != 4:
            raise UsageError("--eval for the heat model is s,x,t,y")
        v = float(heat_cov(vals[:2], vals[2:]))
    else:
        if len(vals) % 2:
            raise UsageError("--eval needs x_1..x_n,y_1..y_n")
        n = len(vals) // 2
        model = _fbm_model(o["hurst"], n)
        v = float(model(np.array(vals[:n]), np.array(vals[n:])))
    print(f"{v:.6f}", file=out_stream)
    return EXIT_OK, {"value": v}


def run(cfg: RunConfig, out_stream=None) -> int:
    out_stream = out_stream or sys.stdout
    t0 = time.perf_counter()
    extra = {}
    try:
        _validate(cfg)
        o = cfg.options
        if cfg.subcommand == "simulate":
            code, extra = _cmd_simulate(o, out_stream)
        elif cfg.subcommand == "verify-grr":
            code, extra = _cmd_verify(o, out_stream)
        elif cfg.subcommand in ("holder", "heat-holder"):
            code, extra = _cmd_holder(o, out_stream, heat=cfg.subcommand == "heat-holder")
        elif cfg.subcommand == "cov":
            code, extra = _cmd_cov(o, out_stream)
        else:
            raise UsageError(f"unknown subcommand {cfg.subcommand!r}")
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        code = EXIT_USAGE
    except GrrError as e:
        print(f"error: {e}", file=sys.stderr)
        code = EXIT_USAGE if isinstance(e, ValueError) else EXIT_FAIL
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        code = EXIT_IO
    _final_line(cfg.subcommand, cfg.seed, t0, code, out_stream, extra)
    return code


STATUS = {EXIT_OK: "pass", EXIT_FAIL: "fail", EXIT_USAGE: "usage-error", EXIT_IO: "io-error"}


def _final_line(sub, seed, t0, code, out_stream, extra=None):
    line = {"subcommand": sub, "seed": seed, "elapsed_ms": int(round((time.perf_counter() - t0) * 1000.0)),
            "status": STATUS[code]}
    if extra:
        line.update({k: v for k, v in extra.items() if k == "value"})
    print(dumps(line), file=out_stream, flush=True)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    t0 = time.perf_counter()
    try:
        cfg = parse_args(argv)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        _final_line(_guess_sub(argv), None, t0, EXIT_USAGE, sys.stdout)
        return EXIT_USAGE
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        _final_line(_guess_sub(argv), None, t0, EXIT_IO, sys.stdout)
        return EXIT_IO
    return run(cfg)


def _guess_sub(argv):
    return next((a for a in argv if a in SUBCOMMANDS), None)


if __name__ == "__main__":
    sys.exit(main())
