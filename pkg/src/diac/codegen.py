"""NV-enhanced netlist emission and post-placement validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Mapping

from . import __version__
from .energy import critical_delay
from .netlist import CircuitGraph, NetlistError, graph_to_json
from .placement import NvmPlan
from .transform import ClusterGraph, cluster_graph_from_json, cluster_graph_to_json

REQUIRED_METADATA = ("library_sha256", "policy", "weights", "tool_version", "budget_mJ", "nvm")


@dataclass(frozen=True)
class NvNetlist:
    clusters: ClusterGraph
    plan: NvmPlan
    stage_index: Mapping[str, int]
    metadata: Mapping[str, object] = field(default_factory=dict)

    @property
    def base(self) -> CircuitGraph:
        return self.clusters.graph

    @property
    def n_stages(self) -> int:
        return 1 + max(self.stage_index.values(), default=0)

    def stage_clusters(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {}
        for c in sorted(self.stage_index, key=lambda c: (self.stage_index[c], c)):
            out.setdefault(self.stage_index[c], []).append(c)
        return out

    def to_json(self) -> dict:
        cuts = set(self.plan.cut_nodes)
        owner = self.clusters.provenance
        graph = self.base
        leaving = {}
        for n, g in graph.nodes.items():
            for s in g.inputs:
                if s in owner and owner.get(n) != owner[s]:
                    leaving[s] = True
        extra = {}
        for n in graph.nodes:
            if n not in owner:
                continue
            c = owner[n]
            extra[n] = {"cluster": c, "stage": self.stage_index[c],
                        "nvm": c in cuts and (leaving.get(n, False) or n in graph.primary_outputs)}
        doc = graph_to_json(graph, extra)
        cdoc = cluster_graph_to_json(self.clusters)
        doc["clusters"] = cdoc["clusters"]
        doc["cluster_edges"] = cdoc["edges"]
        doc["nvm_plan"] = self.plan.to_json()
        doc["metadata"] = dict(self.metadata)
        return doc

    @classmethod
    def from_json(cls, doc: dict, lib=None) -> "NvNetlist":
        base = {k: doc[k] for k in ("name", "primary_inputs", "primary_outputs") if k in doc}
        base["nodes"] = [{k: v for k, v in n.items() if k not in ("cluster", "stage", "nvm", "level")}
                         for n in doc["nodes"]]
        cg = cluster_graph_from_json({"graph": base, "clusters": doc["clusters"]}, lib)
        stages = {}
        for n in doc["nodes"]:
            if "cluster" in n:
                stages[n["cluster"]] = n["stage"]
        return cls(cg, NvmPlan.from_json(doc["nvm_plan"]), stages, doc.get("metadata", {}))


@dataclass(frozen=True)
class Diagnostic:
    check: str
    subject: str
    message: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def assign_stages(cg: ClusterGraph, cuts) -> dict[str, int]:
    cuts = set(cuts)
    stage: dict[str, int] = {}
    for c in cg.topo_order():
        stage[c] = max((stage[p] + (1 if p in cuts else 0) for p in cg.preds(c)), default=0)
    return stage


def generate(cg: ClusterGraph, plan: NvmPlan, config: Mapping[str, object] | None = None) -> NvNetlist:
    unknown = [c for c in plan.cut_nodes if c not in cg.clusters]
    unknown += [c for c in plan.residual_accumulation if c not in cg.clusters]
    if unknown:
        raise NetlistError(f"plan refers to unknown cluster {unknown[0]!r}")
    meta = {
        "library_sha256": cg.lib.digest,
        "library": cg.lib.name,
        "policy": None,
        "weights": asdict(plan.weights),
        "tool_version": __version__,
        "budget_mJ": plan.budget,
        "nvm": asdict(plan.nvm),
    }
    meta.update(config or {})
    return NvNetlist(cg, plan, assign_stages(cg, plan.cut_nodes), meta)


# -- validation -------------------------------------------------------------

def _acyclic(nodes, edges) -> bool:
    indeg = {n: 0 for n in nodes}
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for a, b in edges:
        indeg[b] += 1
        succ[a].append(b)
    ready = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        n = ready.pop()
        seen += 1
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                ready.append(m)
    return seen == len(indeg)


def _stored_signals(nv: NvNetlist, c: str) -> int:
    graph = nv.base
    mem = nv.clusters.clusters[c].members
    consumed = {s for n, g in graph.nodes.items() if n not in mem for s in g.inputs}
    return len([n for n in mem if n in consumed or n in graph.primary_outputs])


def validate(nv: NvNetlist, budget: float | None = None,
             clock_period: float | None = None) -> list[Diagnostic]:
    """Run the five post-placement checks; an empty list means the netlist is sound.

    (a) acyclicity, (b) stage grading, (c) per-stage energy against the budget,
    (d) per-stage timing against ``clock_period`` (skipped without one),
    (e) restore consistency of every stage input.
    """
    diags: list[Diagnostic] = []
    cg = nv.clusters
    graph = nv.base
    plan = nv.plan
    cuts = set(plan.cut_nodes)
    stage = nv.stage_index
    nvm = plan.nvm
    if budget is None:
        budget = plan.budget * plan.safety

    missing = [k for k in REQUIRED_METADATA if k not in nv.metadata]
    if missing:
        diags.append(Diagnostic("metadata", "netlist", f"missing metadata {missing}"))

    # (a)
    comb = set(graph.combinational)
    gate_edges = [(d, s) for d, s in graph.edges if d in comb and s in comb]
    if not _acyclic(comb, gate_edges):
        diags.append(Diagnostic("acyclicity", "gates", "combinational gate graph has a cycle"))
    if not _acyclic(cg.clusters, cg.edges):
        diags.append(Diagnostic("acyclicity", "clusters", "cluster graph has a cycle"))
        return diags

    # (b)
    for c in cg.clusters:
        if c not in stage:
            diags.append(Diagnostic("grading", c, "cluster has no stage"))
    for a, b in cg.edges:
        if a not in stage or b not in stage:
            continue
        if stage[b] < stage[a]:
            diags.append(Diagnostic("grading", f"{a}->{b}",
                                    f"edge goes from stage {stage[a]} down to {stage[b]}"))
        elif a in cuts and stage[b] == stage[a]:
            diags.append(Diagnostic("grading", f"{a}->{b}",
                                    "checkpointed output consumed inside its own stage"))
    if any(d.check == "grading" for d in diags):
        return diags

    preds: dict[str, list[str]] = {c: [] for c in cg.clusters}
    for a, b in cg.edges:
        preds[b].append(a)

    # (c) cone of same-stage ancestors, rebuilt from the stage map
    for c in sorted(cg.clusters):
        cone, stack = set(), [c]
        while stack:
            for p in preds[stack.pop()]:
                if stage[p] == stage[c] and p not in cone:
                    cone.add(p)
                    stack.append(p)
        region = cone | {c}
        feeders = {p for n in region for p in preds[n] if stage[p] < stage[c]}
        energy = sum(cg.clusters[n].record.power for n in region)
        energy += sum(_stored_signals(nv, f) * nvm.read_energy_per_word for f in feeders)
        if c in cuts:
            energy += _stored_signals(nv, c) * nvm.write_energy_per_word
        if energy > budget + 1e-12:
            diags.append(Diagnostic("energy", c, f"segment closing at {c} needs {energy:.6g} mJ "
                                                 f"> budget {budget:.6g} mJ"))

    # (d)
    if clock_period is not None:
        for s, members in nv.stage_clusters().items():
            gates = [graph.nodes[n] for c in members for n in cg.clusters[c].members]
            cdp = critical_delay(gates, cg.lib)
            latency = nvm.write_latency if any(c in cuts for c in members) else 0.0
            if cdp + latency > clock_period:
                diags.append(Diagnostic("timing", f"stage {s}",
                                        f"CDP {cdp:g} ns + write latency {latency:g} ns "
                                        f"> clock {clock_period:g} ns"))

    # (e)
    owner = cg.provenance
    for n, g in graph.nodes.items():
        if n not in owner:
            continue
        c = owner[n]
        for s in g.inputs:
            if s in graph.primary_inputs or graph.nodes[s].kind == "DFF":
                continue
            d = owner[s]
            if stage[d] == stage[c]:
                continue
            if d not in cuts:
                diags.append(Diagnostic("restore", f"{s}->{n}",
                                        f"stage {stage[c]} reads {s} from stage {stage[d]}, "
                                        "which is not checkpointed"))
    for c in sorted(cuts & set(cg.clusters)):
        info = plan.per_cut.get(c)
        need = _stored_signals(nv, c)
        if info is None or info.signals_stored < need:
            have = 0 if info is None else info.signals_stored
            diags.append(Diagnostic("restore", c, f"cut stores {have} of {need} leaving signals"))
    return diags
