"""Four-scheme comparison: build each design, run it over trace ensembles, report PDP.

PDP here is per-task: (energy consumed / completed cycles) x (makespan /
completed cycles), in mJ*ms.  A cycle is one full sense -> compute ->
transmit sequence; the compute op is the amplified workload (k passes over
the benchmark so that one compute needs more than a full capacitor).

Gate energies from the bundled library are rescaled so the mean gate costs
``gate_energy_mJ`` (default 3 MRAM word writes).  Raw 45 nm gate energies
are ~1e-11 mJ, which would make every NVM decision irrelevant next to the
mJ-scale sense/transmit costs.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from . import traces as trace_gen
from .codegen import NvNetlist, generate
from .energy import AnnotatedGraph, GateLibrary, annotate
from .netlist import CircuitGraph, load_graph, parse_bench
from .placement import (MRAM, CutInfo, NvmParams, NvmPlan, PlacementWeights, accumulate,
                        backup_energy, place, restore_energy, signals_stored)
from .sim.config import EnergyConfig, HarvestTrace, PlanCosts
from .sim.core import SimReport, pdp, run
from .transform import ClusterGraph, PolicyConfig, apply_policy3, initial_clusters

NV_BASED, NV_CLUSTERING, DIAC, OPT_DIAC = "NV_BASED", "NV_CLUSTERING", "DIAC", "OPT_DIAC"
SCHEMES = (NV_BASED, NV_CLUSTERING, DIAC, OPT_DIAC)
BUNDLED_BENCHMARKS = ("s27", "chain12", "diamond", "wide")


@dataclass(frozen=True)
class Scheme:
    kind: str
    clustering_ratio: float = 0.5

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}")
        if not 0 < self.clustering_ratio <= 1:
            raise ValueError("clustering_ratio must be in (0, 1]")

    @property
    def safe_zone_enabled(self) -> bool:
        return self.kind == OPT_DIAC


@dataclass(frozen=True)
class EvalConfig:
    energy: EnergyConfig = field(default_factory=EnergyConfig)
    nvm: NvmParams = MRAM
    gate_energy_mJ: float = 0.003
    alpha: float = 0.9  # budget derating
    budget_fraction: float = 0.5  # share of the usable charge one segment may take
    lower_ratio: float = 0.25  # Policy3 lower bound as a fraction of the upper bound
    target_cycles: int = 3
    clustering_ratio: float = 0.5
    sample_words: int = 2
    weights: PlacementWeights = field(default_factory=PlacementWeights)

    def budget(self) -> float:
        """Energy one checkpoint-free segment may consume (mJ)."""
        probe = PlanCosts(write_energy=self.nvm.write_energy_per_word,
                          read_energy=self.nvm.read_energy_per_word)
        th = self.energy.with_safe_zone(True).thresholds(probe)
        return self.alpha * self.budget_fraction * (self.energy.e_max - th["Th_Safe_Zone"])

    def with_nvm(self, nvm: NvmParams) -> "EvalConfig":
        return replace(self, nvm=nvm)


@dataclass
class SchemeBuild:
    scheme: Scheme
    costs: PlanCosts
    netlist: NvNetlist
    energy: EnergyConfig
    info: dict


def amplify_workload(graph_energy: float, capacity: float) -> int:
    """Smallest k >= 1 with k * graph_energy strictly above ``capacity``."""
    if not graph_energy > 0:
        raise ValueError("graph energy must be > 0")
    k = max(1, math.floor(capacity / graph_energy) + 1)
    while k * graph_energy <= capacity:
        k += 1
    while k > 1 and (k - 1) * graph_energy > capacity:
        k -= 1
    return k


def compute_pdp(report: SimReport) -> float:
    """Per-task energy x per-task latency; NaN (excluded from averages) with no completed cycle."""
    return pdp(report)


def prepare(graph: CircuitGraph, cfg: EvalConfig, lib: GateLibrary | None = None) -> AnnotatedGraph:
    """Annotate ``graph`` with the library rescaled to the configured mean gate energy."""
    lib = lib or GateLibrary.load()
    ag = annotate(graph, lib)
    comb = graph.combinational
    if any(graph.nodes[n].power_mJ is not None for n in comb):
        return ag  # hand-annotated task graph, already in mJ
    mean = sum(ag.features[n].power for n in comb) / len(comb)
    return annotate(graph, lib.scaled(cfg.gate_energy_mJ / mean))


# -- scheme construction ----------------------------------------------------

def _stage_table(nv: NvNetlist) -> tuple[list[float], list[int], list[int]]:
    """Per-stage compute energy (including checkpoint reads), words written, live words."""
    cg = nv.clusters
    cuts = set(nv.plan.cut_nodes)
    read = nv.plan.nvm.read_energy_per_word
    words = {c: signals_stored(cg, c) for c in cg.clusters}
    cost, wr, live = [], [], []
    for s, members in sorted(nv.stage_clusters().items()):
        feeders = {p for c in members for p in cg.preds(c) if nv.stage_index[p] < s}
        cost.append(sum(cg.power(c) for c in members) + sum(words[f] * read for f in feeders))
        wr.append(sum(words[c] for c in members if c in cuts))
        live.append(sum(words[c] for c in members))
    return cost, wr, live


def _plan_all_cuts(cg: ClusterGraph, budget: float, nvm: NvmParams) -> NvmPlan:
    cuts = tuple(sorted(cg.clusters))
    acc = accumulate(cg, cuts, nvm)
    per_cut = {c: CutInfo(signals_stored(cg, c), backup_energy(cg, c, nvm),
                          restore_energy(cg, c, nvm), acc[c]) for c in cuts}
    return NvmPlan(cuts, per_cut, acc, budget, nvm)


def _thin_words(words: list[int], ratio: float) -> list[int]:
    """Scale a word sequence by ``ratio`` so the total is ceil(ratio * total)."""
    out, cum, prev = [], 0, 0
    for w in words:
        cum += w
        now = math.ceil(ratio * cum - 1e-12)
        out.append(now - prev)
        prev = now
    return out


def plan_costs(nv: NvNetlist, kind: str | None = None, repeats: int | None = None,
               cfg: EvalConfig | None = None, clustering_ratio: float | None = None) -> PlanCosts:
    """Simulator cost model of an NV-enhanced netlist.

    ``kind`` and ``repeats`` default to the ``scheme`` and ``repeats`` recorded
    in the netlist metadata (DIAC and 1 for hand-built netlists).
    """
    cfg = cfg or EvalConfig()
    meta = nv.metadata
    kind = kind or meta.get("scheme") or DIAC
    k = int(repeats or meta.get("repeats") or 1)
    ratio = clustering_ratio if clustering_ratio is not None else \
        meta.get("clustering_ratio", cfg.clustering_ratio)
    nvm = nv.plan.nvm
    graph = nv.base
    cg = nv.clusters
    result_words = max(1, len(graph.primary_outputs))
    state_words = len(graph.primary_outputs) + len(graph.sequential_elements)
    cost, wr, _ = _stage_table(nv)
    if kind in (NV_BASED, NV_CLUSTERING):
        total = sum(signals_stored(cg, c) for c in cg.clusters)
        live = [total] * len(cost)  # NV-FFs: every register is saved at a backup
        if kind == NV_CLUSTERING:
            wr = _thin_words(wr, ratio)
            live = [math.ceil(ratio * total - 1e-12)] * len(cost)
        n_rep = k
    else:
        # a backup keeps Reg_Flag and the segment index (one control word) plus the
        # sample/result data; in-flight partial results are re-executed from the last cut
        live = [0] * len(cost)
        if len(cost) == 1:
            # the whole pass fits: checkpoint the pass state only every few passes
            per = cost[0] + state_words * (nvm.write_energy_per_word + nvm.read_energy_per_word)
            groups = min(k, max(1, math.ceil(k * per / nv.plan.budget - 1e-12)))
            cost = [k * cost[0] / groups]
            wr = [state_words]
            n_rep = groups
        else:
            wr[-1] += state_words
            n_rep = k
    return PlanCosts(tuple(cost), tuple(wr), tuple(live), n_rep,
                     sample_words=cfg.sample_words, result_words=result_words,
                     write_energy=nvm.write_energy_per_word,
                     read_energy=nvm.read_energy_per_word)


def build_scheme(ag: AnnotatedGraph, scheme: Scheme | str, budget: float | None = None,
                 nvm: NvmParams | None = None, cfg: EvalConfig | None = None) -> SchemeBuild:
    """Produce the NV-enhanced design of ``scheme`` and its simulator cost model."""
    cfg = cfg or EvalConfig()
    if isinstance(scheme, str):
        scheme = Scheme(scheme, cfg.clustering_ratio)
    nvm = nvm or cfg.nvm
    budget = cfg.budget() if budget is None else budget
    base = initial_clusters(ag)
    pass_energy = sum(base.power(c) for c in base.clusters)
    k = amplify_workload(pass_energy, cfg.energy.e_max)
    meta = {"scheme": scheme.kind, "repeats": k, "workload_mJ": k * pass_energy,
            "clustering_ratio": scheme.clustering_ratio}
    info = {"repeats": k, "pass_energy_mJ": pass_energy, "budget_mJ": budget}
    if scheme.kind in (NV_BASED, NV_CLUSTERING):
        plan = _plan_all_cuts(base, budget, nvm)
        meta.update(policy=None)
        nv = generate(base, plan, meta)
    else:
        pcfg = PolicyConfig("P3", upper=budget, lower=cfg.lower_ratio * budget)
        cg = apply_policy3(base, pcfg)
        plan = place(cg, budget, nvm, cfg.weights)
        meta.update(policy=asdict(pcfg))
        nv = generate(cg, plan, meta)
        info.update(clusters=len(cg.clusters))
    costs = plan_costs(nv, scheme.kind, k, cfg, scheme.clustering_ratio)
    info.update(cuts=len(plan.cut_nodes), stages=len(costs.stage_cost),
                checkpoint_words_per_task=sum(costs.stage_words) * costs.repeats)
    return SchemeBuild(scheme, costs, nv, cfg.energy.with_safe_zone(scheme.safe_zone_enabled), info)


# -- evaluation -------------------------------------------------------------

def bundled_benchmarks() -> dict[str, CircuitGraph]:
    root = resources.files("diac.data").joinpath("benchmarks")
    return {n: parse_bench(root.joinpath(f"{n}.bench").read_text(), n) for n in BUNDLED_BENCHMARKS}


def load_benchmarks(path: str) -> dict[str, CircuitGraph]:
    if os.path.isdir(path):
        files = sorted(f for f in os.listdir(path) if f.endswith((".bench", ".blif", ".json")))
        return {f.rsplit(".", 1)[0]: load_graph(os.path.join(path, f)) for f in files}
    return {os.path.basename(path).rsplit(".", 1)[0]: load_graph(path)}


def _cell(args):
    bench, kind, family, seed, costs, energy, target = args
    tr = trace_gen.make(family, seed) if isinstance(family, str) else family
    rep = run(tr, energy, costs, target_cycles=target, seed=seed)
    return {
        "benchmark": bench, "scheme": kind, "trace": tr.name if not isinstance(family, str) else family,
        "seed": seed, "pdp": compute_pdp(rep), "energy_mJ": rep.energy_consumed,
        "makespan_ms": rep.makespan, "nvm_word_writes": rep.nvm_word_writes,
        "completed_cycles": rep.completed_cycles, "backups": rep.backups,
        "restores": rep.restores, "shutdowns": rep.shutdowns,
        "safe_zone_entries": rep.safe_zone_entries,
    }


@dataclass
class BenchResult:
    benchmark: str
    per_scheme: dict
    base: str = NV_BASED

    def normalized_pdp(self) -> dict:
        b = self.per_scheme[self.base]["pdp_mean"]
        return {s: v["pdp_mean"] / b for s, v in self.per_scheme.items()}


_STAT_KEYS = (("pdp", "pdp"), ("energy_mJ", "energy"), ("makespan_ms", "makespan"),
              ("nvm_word_writes", "nvm_word_writes"), ("completed_cycles", "completed_cycles"))


def _summarize(rows: list[dict], benches, schemes, base: str) -> list[BenchResult]:
    out = []
    for b in benches:
        per = {}
        for s in schemes:
            cell = [r for r in rows if r["benchmark"] == b and r["scheme"] == s]
            p = np.array([r["pdp"] for r in cell], dtype=float)
            ok = np.isfinite(p)
            stats = {"n": len(cell), "n_failed": int((~ok).sum())}
            for key, name in _STAT_KEYS:
                v = p[ok] if key == "pdp" else np.array([r[key] for r in cell], dtype=float)
                stats[f"{name}_mean"] = float(v.mean()) if len(v) else math.nan
                stats[f"{name}_std"] = float(v.std()) if len(v) else math.nan
            per[s] = stats
        out.append(BenchResult(b, per, base if base in schemes else schemes[0]))
    return out


def evaluate(benchmarks: dict[str, CircuitGraph], schemes=SCHEMES, traces=trace_gen.FAMILIES,
             seeds=range(10), cfg: EvalConfig | None = None, base: str = NV_BASED,
             jobs: int = 1) -> tuple[list[BenchResult], list[dict]]:
    """Run every (benchmark, scheme, trace, seed) cell; returns summaries and long-form rows.

    ``traces`` holds family names (seeded per run) or explicit HarvestTrace objects.
    """
    cfg = cfg or EvalConfig()
    schemes = tuple(schemes)
    seeds = list(seeds)
    cells, builds = [], {}
    for bname, graph in benchmarks.items():
        ag = prepare(graph, cfg)
        for s in schemes:
            bld = build_scheme(ag, Scheme(s, cfg.clustering_ratio), cfg=cfg)
            builds[(bname, s)] = bld
            for fam in traces:
                for seed in seeds:
                    cells.append((bname, s, fam, seed, bld.costs, bld.energy, cfg.target_cycles))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            rows = list(ex.map(_cell, cells, chunksize=8))
    else:
        rows = [_cell(c) for c in cells]
    return _summarize(rows, list(benchmarks), schemes, base), rows


# -- report tables ----------------------------------------------------------

ROW_FIELDS = ("benchmark", "scheme", "trace", "seed", "pdp", "energy_mJ", "makespan_ms",
              "nvm_word_writes", "completed_cycles", "backups", "restores", "shutdowns",
              "safe_zone_entries")


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def results_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in ROW_FIELDS])
    return buf.getvalue()


def normalized_csv(results: list[BenchResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    schemes = list(results[0].per_scheme) if results else []
    w.writerow(["benchmark"] + schemes)
    for r in results:
        n = r.normalized_pdp()
        w.writerow([r.benchmark] + [f"{n[s]:.6f}" for s in schemes])
    return buf.getvalue()


def fig5_dat(results: list[BenchResult]) -> str:
    """Gnuplot-ready clustered-bar table: one row per benchmark, one column per scheme."""
    schemes = list(results[0].per_scheme) if results else []
    lines = ["# normalized PDP (base = %s)" % (results[0].base if results else ""),
             "benchmark " + " ".join(schemes)]
    for r in results:
        n = r.normalized_pdp()
        lines.append(r.benchmark + " " + " ".join(f"{n[s]:.6f}" for s in schemes))
    return "\n".join(lines) + "\n"


def summary_json(results: list[BenchResult], cfg: EvalConfig, seeds, traces) -> str:
    doc = {
        "pdp_definition": "(energy_consumed / completed_cycles) * (makespan / completed_cycles), mJ*ms",
        "config": {"nvm": asdict(cfg.nvm), "gate_energy_mJ": cfg.gate_energy_mJ, "alpha": cfg.alpha,
                   "budget_fraction": cfg.budget_fraction, "budget_mJ": cfg.budget(),
                   "target_cycles": cfg.target_cycles, "clustering_ratio": cfg.clustering_ratio,
                   "energy": cfg.energy.to_json()},
        "seeds": list(seeds),
        "traces": [t if isinstance(t, str) else t.name for t in traces],
        "benchmarks": {r.benchmark: {"base": r.base, "per_scheme": r.per_scheme,
                                     "normalized_pdp": r.normalized_pdp()} for r in results},
    }
    return json.dumps(doc, indent=2, sort_keys=True, default=lambda x: None)


def write_tables(outdir: str, results: list[BenchResult], rows: list[dict], cfg: EvalConfig,
                 seeds, traces) -> list[str]:
    os.makedirs(outdir, exist_ok=True)
    files = {
        "results.csv": results_csv(rows),
        "normalized.csv": normalized_csv(results),
        "summary.json": summary_json(results, cfg, seeds, traces),
        "fig5.dat": fig5_dat(results),
    }
    for name, text in files.items():
        with open(os.path.join(outdir, name), "w") as fh:
            fh.write(text)
    return [os.path.join(outdir, n) for n in files]
