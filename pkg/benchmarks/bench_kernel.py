"""Compare the compiled and pure-Python simulator kernels.

Runs the same traces through both kernels, checks the reports are identical
and prints ticks per second for each.

    python benchmarks/bench_kernel.py --ticks 200000 --repeat 3
"""

from __future__ import annotations

import argparse
import json
import time

from diac import traces
from diac.sim import EnergyConfig, PlanCosts, kernel_module, run
from diac.sim import _ckernel


def bench(backend: str, trace, cfg, costs, ticks: int, repeat: int):
    best, rep = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        rep = run(trace, cfg, costs, duration=ticks * cfg.tick_ms, seed=1, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, rep


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ticks", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--family", choices=traces.FAMILIES, default="fig4")
    ap.add_argument("--json", action="store_true", help="print one JSON object instead of a table")
    a = ap.parse_args(argv)

    if _ckernel is None:
        ap.error("compiled kernel not built; reinstall with Cython available")
    kernel_module("cython")
    cfg = EnergyConfig()
    costs = PlanCosts(stage_cost=(2.0, 3.0, 1.5), stage_words=(3, 2, 4), stage_live=(2, 1, 0),
                      repeats=6)
    trace = traces.make(a.family, 0)

    t_py, r_py = bench("python", trace, cfg, costs, a.ticks, a.repeat)
    t_c, r_c = bench("cython", trace, cfg, costs, a.ticks, a.repeat)
    same = r_py.dumps() == r_c.dumps()
    out = {
        "ticks": a.ticks, "family": a.family,
        "python_s": t_py, "cython_s": t_c,
        "python_ticks_per_s": a.ticks / t_py, "cython_ticks_per_s": a.ticks / t_c,
        "speedup": t_py / t_c, "identical_reports": same,
        "cycles": r_c.completed_cycles, "backups": r_c.backups,
    }
    if a.json:
        print(json.dumps(out, indent=2))
    else:
        print(f"{a.ticks} ticks of '{a.family}' (best of {a.repeat})")
        print(f"  python  {t_py:8.3f} s  {out['python_ticks_per_s']:>12,.0f} ticks/s")
        print(f"  cython  {t_c:8.3f} s  {out['cython_ticks_per_s']:>12,.0f} ticks/s")
        print(f"  speedup {out['speedup']:.1f}x, reports identical: {same}")
    return 0 if same else 1


if __name__ == "__main__":
    raise SystemExit(main())
