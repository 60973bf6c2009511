"""Command-line entry point: ``diac parse|annotate|transform|place|codegen|simulate|evaluate``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from importlib import resources

from . import __version__
from . import traces as trace_gen
from .codegen import NvNetlist, generate, validate
from .energy import DEFAULT_LIBRARY, GateLibrary, annotate
from .evaluate import SCHEMES, EvalConfig, bundled_benchmarks, evaluate, load_benchmarks, \
    plan_costs, write_tables
from .netlist import NetlistError, graph_to_json, load_graph
from .placement import NvmParams, NvmPlan, PlacementWeights, place
from .sim import EnergyConfig, HarvestTrace, run
from .transform import (InfeasibleError, PolicyConfig, apply_policy, cluster_graph_from_json,
                        cluster_graph_to_json, initial_clusters, policy_report)


def _lib_doc(path: str | None) -> dict:
    if path is None:
        return json.loads(resources.files("diac.data").joinpath(DEFAULT_LIBRARY).read_text())
    with open(path) as fh:
        return json.load(fh)


def _read_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _emit(doc, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _nvm(spec: str) -> NvmParams:
    return NvmParams.from_file(spec) if os.path.exists(spec) else NvmParams.preset(spec)


def _seeds(text: str) -> list[int]:
    """``0..9`` (inclusive range) or a comma list."""
    out = []
    for part in text.split(","):
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty seed list")
    return out


def _cluster_graph(path: str, lib: str | None):
    doc = _read_json(path)
    if "clusters" in doc:
        return cluster_graph_from_json(doc, GateLibrary.from_dict(_lib_doc(lib)) if lib else None)
    # plain graph: one cluster per gate/group
    return initial_clusters(annotate(load_graph(path), GateLibrary.from_dict(_lib_doc(lib))))


# -- subcommands ------------------------------------------------------------

def cmd_parse(a) -> int:
    doc = graph_to_json(load_graph(a.file, a.format))
    if not a.dump_levels:
        for n in doc["nodes"]:
            n.pop("level", None)
    _emit(doc, a.out)
    return 0


def cmd_annotate(a) -> int:
    lib = GateLibrary.from_dict(_lib_doc(a.lib))
    ag = annotate(load_graph(a.graph, a.format), lib)
    extra = {n: {"feature": asdict(f)} for n, f in ag.features.items()}
    doc = graph_to_json(ag.graph, extra)
    doc["library"] = {"name": lib.name, "sha256": lib.digest}
    _emit(doc, a.out)
    return 0


def cmd_transform(a) -> int:
    lib_doc = _lib_doc(a.lib)
    ag = annotate(load_graph(a.graph, a.format), GateLibrary.from_dict(lib_doc))
    cfg = PolicyConfig(a.policy.upper(), upper=a.upper, lower=a.lower, v_th=a.v_th,
                       v_peak=a.v_peak, merge_ratio=a.merge_ratio)
    cg = apply_policy(initial_clusters(ag), cfg)
    doc = cluster_graph_to_json(cg, lib_doc)
    doc["report"] = policy_report(cg, cfg)
    _emit(doc, a.out)
    return 1 if doc["report"]["violations"] else 0


def cmd_place(a) -> int:
    cg = _cluster_graph(a.clustergraph, a.lib)
    plan = place(cg, a.budget, _nvm(a.nvm), PlacementWeights.parse(a.weights), safety=a.safety)
    _emit(plan.to_json(), a.out)
    return 0


def cmd_codegen(a) -> int:
    cg = _cluster_graph(a.clustergraph, a.lib)
    plan = NvmPlan.from_json(_read_json(a.plan))
    nv = generate(cg, plan)
    diags = validate(nv, clock_period=a.clock)
    for d in diags:
        sys.stderr.write(d.to_json() + "\n")
    _emit(nv.to_json(), a.out)
    return 1 if diags else 0


def cmd_simulate(a) -> int:
    nv = NvNetlist.from_json(_read_json(a.nvnetlist))
    energy = EnergyConfig.load(a.config) if a.config else EnergyConfig()
    costs = plan_costs(nv, kind=a.scheme, repeats=a.repeats)
    if a.scheme:
        energy = energy.with_safe_zone(a.scheme == "OPT_DIAC")
    trace = HarvestTrace.load(a.trace)
    rep = run(trace, energy, costs, duration=a.duration, target_cycles=a.target_cycles,
              seed=a.seed, log=bool(a.log))
    if a.log:
        with open(a.log, "w") as fh:
            fh.write(rep.log_csv())
    _emit(rep.to_json(), a.out)
    return 0


def _traces(spec: str) -> list:
    if os.path.isdir(spec):
        files = sorted(f for f in os.listdir(spec) if f.endswith(".csv"))
        return [HarvestTrace.load(os.path.join(spec, f)) for f in files]
    if os.path.isfile(spec):
        return [HarvestTrace.load(spec)]
    fams = [f for f in spec.split(",") if f]
    for f in fams:
        if f not in trace_gen.FAMILIES:
            raise SystemExit(f"unknown trace family {f!r} (choose from {', '.join(trace_gen.FAMILIES)})")
    return fams


def cmd_evaluate(a) -> int:
    benches = load_benchmarks(a.bench) if a.bench else bundled_benchmarks()
    schemes = SCHEMES if a.schemes == "all" else tuple(s.upper() for s in a.schemes.split(","))
    cfg = EvalConfig(nvm=_nvm(a.nvm), target_cycles=a.target_cycles,
                     clustering_ratio=a.clustering_ratio)
    if a.config:
        cfg = replace(cfg, energy=EnergyConfig.load(a.config))
    traces = _traces(a.traces)
    results, rows = evaluate(benches, schemes, traces, a.seeds, cfg, jobs=a.jobs)
    for path in write_tables(a.out, results, rows, cfg, a.seeds, traces):
        print(path)
    failed = sum(1 for r in rows if r["completed_cycles"] < 1)
    if failed:
        print(f"warning: {failed} runs completed no cycle (PDP excluded)", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diac", description=__doc__)
    ap.add_argument("--version", action="version", version=f"diac {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("parse", help="parse a netlist and print its JSON graph")
    p.add_argument("file")
    p.add_argument("--format", choices=("bench", "blif", "json"))
    p.add_argument("--dump-levels", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("annotate", help="attach per-gate power/delay features")
    p.add_argument("graph")
    p.add_argument("--lib", help="gate library JSON (default: bundled synthetic 45 nm)")
    p.add_argument("--format", choices=("bench", "blif", "json"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("transform", help="resize operands with Policy1/2/3")
    p.add_argument("graph")
    p.add_argument("--policy", choices=("p1", "p2", "p3"), default="p3")
    p.add_argument("--upper", type=float, help="upper bound U (mJ)")
    p.add_argument("--lower", type=float, help="lower bound L (mJ)")
    p.add_argument("--merge-ratio", type=float, default=0.8)
    p.add_argument("--v-th", type=float)
    p.add_argument("--v-peak", type=float)
    p.add_argument("--lib")
    p.add_argument("--format", choices=("bench", "blif", "json"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("place", help="choose NVM cut points under a budget")
    p.add_argument("clustergraph")
    p.add_argument("--budget", type=float, required=True, help="per-segment budget (mJ)")
    p.add_argument("--nvm", default="mram", help="mram, reram or an NvmParams JSON file")
    p.add_argument("--weights", default="1,1,1", help="level,power,fan weights")
    p.add_argument("--safety", type=float, default=1.0, help="budget derating factor")
    p.add_argument("--lib")
    p.add_argument("--out")
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("codegen", help="emit the NV-enhanced netlist and validate it")
    p.add_argument("clustergraph")
    p.add_argument("plan")
    p.add_argument("--clock", type=float, help="clock period (ns) for the timing check")
    p.add_argument("--lib")
    p.add_argument("--out")
    p.set_defaults(func=cmd_codegen)

    p = sub.add_parser("simulate", help="run the power-management FSM over a harvest trace")
    p.add_argument("nvnetlist")
    p.add_argument("--trace", required=True, help="CSV duration_ms,power_mW")
    p.add_argument("--config", help="EnergyConfig JSON (default config when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log", help="write the tick log CSV here")
    p.add_argument("--duration", type=float, help="simulated ms (default: trace length)")
    p.add_argument("--target-cycles", type=int)
    p.add_argument("--scheme", choices=SCHEMES,
                   help="cost model and safe-zone flag (default: from netlist metadata)")
    p.add_argument("--repeats", type=int, help="workload passes per compute op")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="four-scheme PDP comparison")
    p.add_argument("--bench", help="benchmark file or directory (default: bundled suite)")
    p.add_argument("--schemes", default="all", help="'all' or a comma list")
    p.add_argument("--traces", default=",".join(trace_gen.FAMILIES),
                   help="CSV file/directory, or a comma list of families")
    p.add_argument("--seeds", type=_seeds, default=list(range(10)), help="e.g. 0..9")
    p.add_argument("--nvm", default="mram")
    p.add_argument("--config", help="EnergyConfig JSON")
    p.add_argument("--target-cycles", type=int, default=3)
    p.add_argument("--clustering-ratio", type=float, default=0.5)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_evaluate)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NetlistError, InfeasibleError, ValueError, KeyError, OSError) as exc:
        print(f"diac {args.cmd}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
