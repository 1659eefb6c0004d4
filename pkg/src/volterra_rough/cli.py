"""Command-line experiment driver.

    volterra-rough COMMAND --config cfg.json --out DIR [--set key=value ...] [--threads N] [--gnuplot]

Commands: signature, chen-check, norms, sew-rate, integrate, solve,
kernel-audit.  Exit status is 0 on success, 2 on a validation error and 3
on a numerical failure; failures also write ``error.json`` into the
output directory.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import _parallel
from ._version import __version__
from .controlled import builtin_function, canonical_lift, compose, tau_constant_lift
from .driver import from_csv, linear, piecewise_linear, sample_fbm, trig
from .errors import ConfigError, ExponentError, VolterraRoughError
from .grid import dyadic_partition, simplex_iter
from .integrator import integrate_to_controlled
from .kernel import FAMILIES, audit_bounds, make_kernel
from .norms import NormParams, controlled_norm, volterra_norm, w_norm, write_csv
from .sewing import SewingExponents, fit_rate, probe_integrand, sew_double, sew_single
from .signature import TreeSymbol, VolterraSignature, chen_residual
from .solver import SolverOptions, solve

log = logging.getLogger("volterra_rough")

COMMANDS = ("signature", "chen-check", "norms", "sew-rate", "integrate", "solve", "kernel-audit")
NEEDS_REGIME = {"integrate", "solve"}
SCHEMA_DIR = Path(__file__).with_name("schemas")

DEFAULTS: dict = {
    "kernel": {"family": "fractional", "gamma": 0.25},
    "driver": {"kind": "linear", "T": 1.0, "params": {}, "seed": 0},
    "exponents": {"alpha": 0.8},
    "grid": {"level": 3},
    "tolerances": {"sewing": None, "picard": 1e-9},
    "function": {"name": "sin", "m": 1},
    "y0": None,
    "signature": {"symbols": ["dot", "cherry", "chain3", "vee", "pair"]},
    "chen": {"symbols": ["cherry", "chain3", "vee"]},
    "norms": {"target": "signature"},
    "sew_rate": {"beta": None, "kappa": None, "theta": 0.0, "max_level": 12, "fit_levels": [4, 12]},
    "integrate": {"taus": [], "max_level": 12},
    "solve": {"T": None, "output_level": 6, "taus": []},
    "kernel_audit": {"etas": [0.0, 0.25, 0.5, 0.75, 1.0], "betas": [0.0, 0.25, 0.5, 0.75, 1.0]},
}


def stamp(what: str) -> str:
    return f"# volterra-rough {__version__} {what}\n"


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}", "config.set")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def load_config(path: Optional[str], overrides=()) -> dict:
    user: dict = {}
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}", "config.read") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}", "config.json") from exc
        if not isinstance(user, dict):
            raise ConfigError("config root must be an object", "config.root")
    cfg = _merge(DEFAULTS, user)
    for item in overrides:
        apply_override(cfg, item)
    return cfg


def _num(cfg, *keys, positive=False):
    node = cfg
    for k in keys:
        node = node.get(k) if isinstance(node, dict) else None
    try:
        val = float(node)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{'.'.join(keys)} must be a number", f"config.{'.'.join(keys)}") from exc
    if positive and not val > 0:
        raise ConfigError(f"{'.'.join(keys)} must be positive", f"config.{'.'.join(keys)}")
    return val


def validate(cfg: dict, command: str) -> dict:
    """Check the config before any computation; returns resolved exponents."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}", "config.command")
    fam = cfg["kernel"].get("family")
    if fam not in FAMILIES:
        raise ConfigError(f"kernel.family must be one of {FAMILIES}", "config.kernel.family")
    gamma = _num(cfg, "kernel", "gamma")
    if not 0.0 <= gamma < 1.0:
        raise ConfigError("kernel.gamma must lie in [0, 1)", "config.kernel.gamma")
    exps = cfg.get("exponents", {})
    if exps.get("gamma") is not None and abs(float(exps["gamma"]) - gamma) > 1e-15:
        raise ConfigError("exponents.gamma disagrees with kernel.gamma", "config.exponents.gamma")
    alpha = _num(cfg, "exponents", "alpha")
    if not gamma < alpha <= 1.0:
        raise ConfigError("exponents.alpha must lie in (gamma, 1]", "config.exponents.alpha")
    if command in NEEDS_REGIME and not alpha - gamma > 0.25:
        raise ExponentError(f"alpha - gamma = {alpha - gamma:.4g} must exceed 1/4 for {command}",
                            "alpha-gamma>1/4")
    level = cfg["grid"].get("level")
    if not isinstance(level, int) or not 0 <= level <= 12:
        raise ConfigError("grid.level must be an integer in [0, 12]", "config.grid.level")
    _num(cfg, "driver", "T", positive=True)
    if cfg["driver"].get("kind") not in ("linear", "trig", "fbm", "samples", "csv"):
        raise ConfigError("driver.kind must be linear, trig, fbm, samples or csv", "config.driver.kind")
    return {"alpha": alpha, "gamma": gamma, "beta": exps.get("beta")}


def build_driver(cfg: dict):
    dc = cfg["driver"]
    kind, T, p = dc["kind"], float(dc["T"]), dc.get("params") or {}
    if kind == "linear":
        return linear(T, p.get("slope", 1.0))
    if kind == "trig":
        return trig(T, p.get("sin_amp", [1.0]), p.get("cos_amp", [0.0]), p.get("omega", [1.0]), p.get("drift", [0.0]))
    if kind == "fbm":
        return sample_fbm(float(p.get("hurst", 0.75)), int(p.get("n", 1024)), int(dc.get("seed", 0)), T,
                          int(p.get("dim", 1)))
    if kind == "samples":
        return piecewise_linear(p["times"], p["values"])
    if not dc.get("path"):
        raise ConfigError("driver.kind=csv needs driver.path", "config.driver.path")
    return from_csv(dc["path"])


def build_signature(cfg: dict) -> VolterraSignature:
    k = make_kernel(cfg["kernel"]["family"], float(cfg["kernel"]["gamma"]))
    x = build_driver(cfg)
    return VolterraSignature(k, x, grid=dyadic_partition((0.0, x.T), cfg["grid"]["level"]))


def build_function(cfg: dict, d: int):
    fc = cfg["function"]
    return builtin_function(fc.get("name", "sin"), int(fc.get("m", 1)), d, fc.get("value"), float(fc.get("scale", 1.0)))


def _y0(cfg: dict, m: int) -> np.ndarray:
    y0 = cfg.get("y0")
    if y0 is None:
        return np.zeros(m)
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.shape != (m,):
        raise ConfigError(f"y0 must have {m} entries", "config.y0")
    return y0


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

class Artifacts:
    def __init__(self, out: Path, gnuplot: bool):
        self.out, self.gnuplot, self.files = out, gnuplot, []

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text)
        self.files.append(name)
        return path

    def csv(self, name: str, header, rows, what: str, plot=None) -> Path:
        buf = io.StringIO()
        buf.write(stamp(what))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        path = self.write(name, buf.getvalue())
        if self.gnuplot and plot:
            self.write(name.rsplit(".", 1)[0] + ".gp", _gnuplot_stub(name, *plot))
        return path

    def json(self, name: str, obj) -> Path:
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _gnuplot_stub(csv_name: str, xcol: int, ycol: int, extra: str = "") -> str:
    return ("set datafile separator ','\n"
            f"set key autotitle columnhead\n{extra}"
            f"plot '{csv_name}' every ::2 using {xcol}:{ycol} with linespoints\n")


def _f(x) -> str:
    return repr(float(x))


def cmd_signature(cfg, ex, art: Artifacts) -> dict:
    sig = build_signature(cfg)
    syms = [TreeSymbol.parse(s) for s in cfg["signature"]["symbols"]]
    tuples = [tup.coords for tup in simplex_iter(sig.grid, 3, allow_boundary=True)]
    records = []
    for sym in syms:
        vals = _parallel.pmap(lambda c, sym=sym: sig.value(sym, *c), tuples)
        for (s, t, tau), v in zip(tuples, vals):
            records.append({"sigma": sym.key, "s": s, "t": t, "tau": tau, "shape": list(v.shape),
                            "tensor": v.ravel().tolist()})
    art.json("signature.json", {"version": __version__, "d": sig.d, "records": records})
    return {"records": len(records)}


def cmd_chen(cfg, ex, art: Artifacts) -> dict:
    sig = build_signature(cfg)
    tuples = [tup.coords for tup in simplex_iter(sig.grid, 4, allow_boundary=True)]
    rows = []
    for name in cfg["chen"]["symbols"]:
        sym = TreeSymbol.parse(name)
        res = _parallel.pmap(lambda c, sym=sym: chen_residual(sig, sym, *c), tuples)
        rows += [(sym.key, *map(_f, c), _f(r)) for c, r in zip(tuples, res)]
    art.csv("chen.csv", ("sigma", "s", "u", "t", "tau", "residual"), rows, "chen residuals")
    worst = max((float(r[-1]) for r in rows), default=0.0)
    return {"rows": len(rows), "max_residual": worst}


def cmd_norms(cfg, ex, art: Artifacts) -> dict:
    sig = build_signature(cfg)
    grid = sig.grid
    rho, gamma = ex["alpha"] - ex["gamma"], ex["gamma"]
    target = cfg["norms"].get("target", "signature")
    reports = []
    if target == "signature":
        for name in cfg["signature"]["symbols"]:
            sym = TreeSymbol.parse(name)
            if sym is TreeSymbol.PAIR:
                continue
            params = NormParams(sym.vertices * rho + gamma, gamma)
            reports.append(volterra_norm(lambda s, t, tau, n=name: sig.values(n, s, t, tau), params, grid,
                                         kind="delta", family=f"z:{sym.key}"))
    elif target == "canonical":
        y = canonical_lift(sig)
        reports.append(volterra_norm(y.y, NormParams(ex["alpha"], gamma), grid, family="canonical"))
        reports.append(w_norm(lambda t, a, b: y.y_dot(t, a, b), 2, NormParams(ex["alpha"], gamma), grid,
                              family="canonical.dot"))
    elif target == "tau_constant":
        y = tau_constant_lift(lambda t: build_driver(cfg).value(t), (sig.d,), sig.d)
        reports.append(volterra_norm(y.y, NormParams(ex["alpha"], gamma), grid, family="tau_constant"))
    elif target == "composed":
        f = build_function(cfg, sig.d)
        if f.m != sig.d:
            raise ConfigError("norms.target=composed needs function.m == driver dimension", "config.function.m")
        total, reps = controlled_norm(sig, compose(f, canonical_lift(sig, _y0(cfg, sig.d))),
                                      NormParams(ex["alpha"], gamma), grid, detail=True)
        reports.extend(reps.values())
    else:
        raise ConfigError("norms.target must be signature, canonical, tau_constant or composed", "config.norms.target")
    art.json("norms.json", {"version": __version__, "reports": [r.to_dict() for r in reports]})
    art.write("norms.csv", stamp("norm report") + write_csv(reports))
    return {"reports": len(reports), "totals": {r.family: r.total for r in reports}}


def cmd_sew_rate(cfg, ex, art: Artifacts) -> dict:
    sc = cfg["sew_rate"]
    rho, gamma = ex["alpha"] - ex["gamma"], ex["gamma"]
    beta = float(sc["beta"]) if sc.get("beta") is not None else 4 * rho + gamma
    kappa = float(sc["kappa"]) if sc.get("kappa") is not None else gamma
    theta = float(sc.get("theta") or 0.0)
    exps = SewingExponents(beta, kappa, theta)
    max_level = int(sc.get("max_level", 12))
    xi = probe_integrand(beta, kappa, theta)
    if theta == 0.0:
        val, diag = sew_single(xi, exps, (0.0, 1.0), 1.0, tol=0.0, max_level=max_level, vectorized=True)
    else:
        val, diag = sew_double(xi, exps, 0.0, (0.5, 1.0), 1.0, tol=0.0, max_level=max_level, vectorized=True)
    lo, hi = sc.get("fit_levels", [4, max_level])
    slope = diag.slope_between(int(lo), int(hi))
    rows = []
    for i, (n, dv) in enumerate(zip(diag.levels, diag.level_diffs)):
        running = fit_rate(diag.levels[: i + 1], diag.level_diffs[: i + 1])
        rows.append((n, _f(dv), "" if running is None else _f(running)))
    art.csv("sew_rate.csv", ("level", "diff", "slope"), rows, "sewing rate", plot=(1, 2, "set logscale y\n"))
    summary = {"beta": beta, "kappa": kappa, "theta": theta, "value": float(val), "fit_levels": [lo, hi],
               "slope": slope, "target": beta - 1.0 - 0.1, "diagnostics": diag.to_dict()}
    art.json("sew_rate.json", summary)
    return {"slope": slope}


def cmd_integrate(cfg, ex, art: Artifacts) -> dict:
    sig = build_signature(cfg)
    f = build_function(cfg, sig.d)
    y = canonical_lift(sig)
    if f.m != sig.d:
        raise ConfigError("integrate composes f with the driver lift and needs function.m == driver dimension",
                          "config.function.m")
    ic = cfg["integrate"]
    res = integrate_to_controlled(sig, compose(f, y), sig.grid, tol=cfg["tolerances"].get("sewing"),
                                  taus=[float(t) for t in ic.get("taus", [])], alpha=ex["alpha"],
                                  max_level=int(ic.get("max_level", 12)))
    art.write("integrate.csv", res.to_csv())
    if art.gnuplot:
        art.write("integrate.gp", _gnuplot_stub("integrate.csv", 1, 4))
    art.json("integrate.json", {"version": __version__, **res.diagnostics_dict()})
    return {"points": int(len(sig.grid)), "quadrature_gap": res.quadrature_gap}


def cmd_solve(cfg, ex, art: Artifacts) -> dict:
    sig = build_signature(cfg)
    f = build_function(cfg, sig.d)
    sc = cfg["solve"]
    extra = {k: sc[k] for k in ("cells", "nodes_per_cell", "grading", "m_level", "max_step", "breakpoints",
                                "initial_perturbation", "max_picard", "c_hat", "enforce_ball") if k in sc}
    opts = SolverOptions(alpha=ex["alpha"], gamma=ex["gamma"], beta=ex["beta"],
                         picard_tol=float(cfg["tolerances"].get("picard") or 1e-9),
                         output_level=int(sc.get("output_level", 6)), **extra)
    T = sig.T if sc.get("T") is None else float(sc["T"])
    trace = solve(sig, f, _y0(cfg, f.m), T, opts, taus=[float(t) for t in sc.get("taus", [])])
    art.write("solution.csv", trace.to_csv())
    if art.gnuplot:
        art.write("solution.gp", _gnuplot_stub("solution.csv", 1, 3))
    art.json("solution.json", trace.diagnostics_dict())
    return {"steps": len(trace.steps), "max_q_hat": max(trace.q_hats, default=0.0)}


def cmd_kernel_audit(cfg, ex, art: Artifacts) -> dict:
    k = make_kernel(cfg["kernel"]["family"], float(cfg["kernel"]["gamma"]))
    T = float(cfg["driver"]["T"])
    kc = cfg["kernel_audit"]
    rep = audit_bounds(k, dyadic_partition((0.0, T), cfg["grid"]["level"]), kc["etas"], kc["betas"])
    art.json("kernel_audit.json", rep.to_dict())
    return {"constants": rep.constants}


HANDLERS = {"signature": cmd_signature, "chen-check": cmd_chen, "norms": cmd_norms, "sew-rate": cmd_sew_rate,
            "integrate": cmd_integrate, "solve": cmd_solve, "kernel-audit": cmd_kernel_audit}


def run(command: str, cfg: dict, out_dir, gnuplot: bool = False) -> int:
    """Validate, execute and write artifacts; returns the exit status."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        ex = validate(cfg, command)
        art = Artifacts(out, gnuplot)
        summary = HANDLERS[command](cfg, ex, art)
    except VolterraRoughError as exc:
        return run_failed(command, out, exc)
    except (KeyError, TypeError, ValueError) as exc:
        # malformed config entries surface as plain lookup or conversion errors
        return run_failed(command, out, ConfigError(f"invalid config entry: {exc!r}", "config.entry"))
    print(json.dumps({"command": command, "files": art.files, **summary}, default=float))
    return 0


def run_failed(command: str, out: Path, exc: VolterraRoughError) -> int:
    text = json.dumps({"version": __version__, "command": command, **exc.to_dict()}, indent=2, sort_keys=True)
    try:
        (out / "error.json").write_text(text + "\n")
    except OSError:
        pass
    print(text, file=sys.stderr)
    return exc.exit_code


def _setup_logging():
    level = os.environ.get("VOLTERRA_ROUGH_LOG", "error").lower()
    logging.basicConfig(level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    ap = argparse.ArgumentParser(prog="volterra-rough", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, e.g. kernel.gamma=0.1 (repeatable)")
    ap.add_argument("--gnuplot", action="store_true", help="also write gnuplot script stubs")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    args = ap.parse_args(argv)
    _parallel.set_threads(args.threads)
    try:
        cfg = load_config(args.config, args.overrides)
    except VolterraRoughError as exc:
        print(json.dumps({"version": __version__, "command": args.command, **exc.to_dict()}, indent=2),
              file=sys.stderr)
        return exc.exit_code
    return run(args.command, cfg, args.out, args.gnuplot)


if __name__ == "__main__":
    sys.exit(main())
