"""Timings of the compiled sweep kernels against the numpy fallback, plus end-to-end workloads.

    python benchmarks/bench_core.py [--repeat 3] [--level 4] [--json out.json]

Every number is the best of ``--repeat`` wall-clock runs.
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from volterra_rough import _backend, controlled, driver, kernel
from volterra_rough.grid import dyadic_partition, simplex_indices
from volterra_rough.signature import VolterraSignature, chen_audit
from volterra_rough.solver import SolverOptions, solve


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def sweep_inputs(level: int):
    pts = np.asarray(dyadic_partition((0, 1), level).points)
    idx = simplex_indices(pts.size, 4)
    s, t, tp, tau = (pts[idx[:, i]] for i in range(4))
    vals = np.abs(np.sin(7 * t) - np.sin(7 * s)) * (1 + tau - tp)
    return vals, tau - tp, tp - t, t - s, tp - s


def kernel_rows(level: int, repeat: int) -> list:
    vals, a, b, c, e = sweep_inputs(level)
    etas = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
    zetas = np.array([0.0, 0.1, 0.2, 0.3])
    k = kernel.make_kernel("fractional", 0.25)
    pts = np.asarray(dyadic_partition((0, 1), level).points)
    rows = []
    for name, call in [
        ("max_ratio_1", lambda m: m.max_ratio_1(vals, b, c, e, 0.8, 0.25)),
        ("max_ratio_h", lambda m: m.max_ratio_h(vals, a, b, c, e, 0.8, 0.25, etas, zetas)),
        ("kernel_audit", lambda m: m.kernel_audit(k.family_code, k.power, k.gamma, pts, etas, etas, 1e-3)),
    ]:
        py = best_of(lambda: call(_backend.python), repeat)
        row = {"kernel": name, "tuples": int(vals.size), "python_s": py}
        if _backend.NAME == "cython":
            cy = best_of(lambda: call(_backend.core), repeat)
            row.update(cython_s=cy, speedup=py / cy if cy > 0 else float("inf"))
        rows.append(row)
    return rows


def workload_rows(repeat: int) -> list:
    x = driver.trig(1.0, [1.0, 0.0], [0.0, 1.0], [1.0, 2.0])
    g = dyadic_partition((0, 1), 2)

    def chen():
        chen_audit(VolterraSignature(kernel.make_kernel("fractional", 0.25), x, grid=g), g)

    def solve_linear():
        sig = VolterraSignature(kernel.make_kernel("constant", 0.0), driver.linear(1.0))
        solve(sig, controlled.builtin_function("linear", m=1, d=1), [1.0], 0.5,
              SolverOptions(alpha=0.9, gamma=0.0, output_level=4))

    return [{"workload": "chen_audit level 2", "seconds": best_of(chen, repeat)},
            {"workload": "solve k=1, f(y)=y, T=0.5", "seconds": best_of(solve_linear, repeat)}]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--level", type=int, default=4, help="dyadic level of the sweep grid")
    ap.add_argument("--json", help="also write the results to this file")
    args = ap.parse_args(argv)
    out = {"backend": _backend.NAME, "kernels": kernel_rows(args.level, args.repeat),
           "workloads": workload_rows(args.repeat)}
    for r in out["kernels"]:
        extra = f"  cython {r['cython_s'] * 1e3:9.2f} ms  x{r['speedup']:.1f}" if "cython_s" in r else ""
        print(f"{r['kernel']:<14} {r['tuples']:>8} tuples  python {r['python_s'] * 1e3:9.2f} ms{extra}")
    for r in out["workloads"]:
        print(f"{r['workload']:<30} {r['seconds']:8.3f} s")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(out, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
