"""Operand resizing: split large clusters (Policy1), merge small ones (Policy2), or both (Policy3).

A :class:`ClusterGraph` groups the combinational gates of an annotated
circuit into operands.  Flip-flops never belong to a cluster, so no operand
spans a register boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .energy import AnnotatedGraph, FeatureRecord, GateLibrary, annotate, cluster_power
from .netlist import CircuitGraph, graph_to_json, parse_taskgraph_json

log = logging.getLogger(__name__)

# "<<" in the policy conditions: warn when the ratio exceeds this margin
MUCH_LESS_MARGIN = 0.5


class InfeasibleError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    policy: str = "P3"
    upper: float | None = None
    lower: float | None = None
    v_th: float | None = None
    v_peak: float | None = None
    merge_ratio: float = 0.8

    def __post_init__(self):
        if self.policy not in ("P1", "P2", "P3"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if not 0 < self.merge_ratio <= 1:
            raise ValueError("merge_ratio must be in (0, 1]")
        if self.policy in ("P1", "P3") and self.upper is None:
            raise ValueError(f"{self.policy} needs an upper bound")
        if self.policy == "P3" and self.lower is None:
            raise ValueError("P3 needs a lower bound")
        if self.lower is not None and self.lower <= 0:
            raise ValueError("lower bound must be > 0")
        if self.lower is not None and self.upper is not None and not self.lower < self.upper:
            raise ValueError("need lower < upper")
        chain = [x for x in (self.upper, self.v_th, self.v_peak) if x is not None]
        if any(a >= b for a, b in zip(chain, chain[1:])):
            raise ValueError("need upper < v_th < v_peak")


@dataclass(frozen=True)
class Cluster:
    name: str
    members: frozenset[str]
    record: FeatureRecord


@dataclass(frozen=True)
class ClusterGraph:
    annotated: AnnotatedGraph
    clusters: Mapping[str, Cluster]
    edges: tuple[tuple[str, str], ...]
    provenance: Mapping[str, str] = field(compare=False)

    @property
    def graph(self) -> CircuitGraph:
        return self.annotated.graph

    @property
    def lib(self) -> GateLibrary:
        return self.annotated.lib

    def preds(self, c: str) -> list[str]:
        return sorted(a for a, b in self.edges if b == c)

    def succs(self, c: str) -> list[str]:
        return sorted(b for a, b in self.edges if a == c)

    def power(self, c: str) -> float:
        return self.clusters[c].record.power

    def topo_order(self) -> list[str]:
        return sorted(self.clusters, key=lambda c: (self.clusters[c].record.level, c))

    def members(self) -> dict[str, frozenset[str]]:
        return {c: cl.members for c, cl in self.clusters.items()}


def _cluster_edges(graph: CircuitGraph, owner: Mapping[str, str]) -> tuple[tuple[str, str], ...]:
    es = set()
    for drv, sink in graph.edges:
        if drv in owner and sink in owner and owner[drv] != owner[sink]:
            es.add((owner[drv], owner[sink]))
    return tuple(sorted(es))


def _dag_levels(names: Iterable[str], edges) -> dict[str, int]:
    preds: dict[str, list[str]] = {n: [] for n in names}
    succ: dict[str, list[str]] = {n: [] for n in names}
    for a, b in edges:
        preds[b].append(a)
        succ[a].append(b)
    indeg = {n: len(p) for n, p in preds.items()}
    level = {}
    ready = sorted(n for n, d in indeg.items() if d == 0)
    while ready:
        nxt = []
        for n in ready:
            level[n] = 1 + max((level[p] for p in preds[n]), default=0)
            for s in succ[n]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    nxt.append(s)
        ready = sorted(nxt)
    if len(level) != len(preds):
        raise InfeasibleError("cluster graph is cyclic")
    return level


def build_cluster_graph(ag: AnnotatedGraph, groups: Mapping[str, Iterable[str]]) -> ClusterGraph:
    """Assemble a ClusterGraph from a name -> member-nodes mapping."""
    graph = ag.graph
    owner: dict[str, str] = {}
    for cname, mem in groups.items():
        for n in mem:
            if n in owner:
                raise ValueError(f"node {n!r} in two clusters")
            owner[n] = cname
    comb = set(graph.combinational)
    if set(owner) != comb:
        missing = sorted(comb - set(owner)) or sorted(set(owner) - comb)
        raise ValueError(f"clusters do not partition the combinational nodes ({missing[:3]})")
    edges = _cluster_edges(graph, owner)
    levels = _dag_levels(groups, edges)
    clusters = {}
    for cname in sorted(groups):
        rec = cluster_power(groups[cname], graph, ag.lib)
        rec = FeatureRecord(rec.fan_in, rec.fan_out, levels[cname], rec.power, rec.delay)
        clusters[cname] = Cluster(cname, frozenset(groups[cname]), rec)
    return ClusterGraph(ag, clusters, edges, owner)


def initial_clusters(ag: AnnotatedGraph) -> ClusterGraph:
    """One cluster per ``group`` tag (JSON task graphs) or per gate."""
    groups: dict[str, list[str]] = {}
    for n in ag.graph.combinational:
        groups.setdefault(ag.graph.nodes[n].group or n, []).append(n)
    return build_cluster_graph(ag, groups)


def as_cluster_graph(g) -> ClusterGraph:
    if isinstance(g, ClusterGraph):
        return g
    if isinstance(g, AnnotatedGraph):
        return initial_clusters(g)
    raise TypeError("expected an AnnotatedGraph or ClusterGraph")


# -- Policy1 ----------------------------------------------------------------

def _cut_signals(a: set[str], b: set[str], graph: CircuitGraph) -> int:
    return len({s for n in b for s in graph.nodes[n].inputs if s in a})


def _split(members: frozenset[str], cg: ClusterGraph, upper: float) -> list[frozenset[str]]:
    graph, lib = cg.graph, cg.lib
    power = cluster_power(members, graph, lib).power
    if power <= upper:
        return [members]
    if len(members) == 1:
        (n,) = members
        raise InfeasibleError(f"gate {n!r} needs {power:.6g} mJ, above the {upper:g} mJ bound; "
                              "it cannot be split further")
    levels = graph.levels or {}
    lv = sorted({levels[n] for n in members})
    options = []
    if len(lv) > 1:
        for i, t in enumerate(lv[:-1]):
            a = frozenset(n for n in members if levels[n] <= t)
            options.append((a, members - a, i))
    else:
        order = sorted(members)
        for i in range(1, len(order)):
            a = frozenset(order[:i])
            options.append((a, members - a, i))
    best = None
    for a, b, i in options:
        key = (max(cluster_power(a, graph, lib).power, cluster_power(b, graph, lib).power),
               _cut_signals(set(a), set(b), graph), i)
        if best is None or key < best[0]:
            best = (key, a, b)
    _, a, b = best
    return _split(a, cg, upper) + _split(b, cg, upper)


def apply_policy1(g, cfg: PolicyConfig) -> ClusterGraph:
    """Split every cluster above ``cfg.upper`` along level frontiers."""
    cg = as_cluster_graph(g)
    levels = cg.graph.levels or {}
    groups: dict[str, frozenset[str]] = {}
    for cname, cl in cg.clusters.items():
        parts = _split(cl.members, cg, cfg.upper)
        if len(parts) == 1:
            groups[cname] = parts[0]
            continue
        parts.sort(key=lambda p: (min(levels[n] for n in p), min(p)))
        for i, p in enumerate(parts, 1):
            groups[f"{cname}.{i}"] = p
    out = build_cluster_graph(cg.annotated, groups)
    if cfg.v_th is not None:
        avg = sum(c.record.power for c in out.clusters.values()) / max(len(out.clusters), 1)
        if avg >= cfg.v_th:
            log.warning("average cluster power %.4g mJ is not below v_th=%.4g", avg, cfg.v_th)
    return out


# -- Policy2 ----------------------------------------------------------------

def _reaches(cg_succ: Mapping[str, list[str]], src: str, dst: str, skip_direct: bool) -> bool:
    stack = [s for s in cg_succ[src] if not (skip_direct and s == dst)]
    seen = set(stack)
    while stack:
        n = stack.pop()
        if n == dst:
            return True
        for m in cg_succ[n]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return False


def merge_keeps_acyclic(succ: Mapping[str, list[str]], a: str, b: str) -> bool:
    """Merging adjacent a, b is legal iff no path joins them through a third cluster."""
    return not (_reaches(succ, a, b, True) or _reaches(succ, b, a, True))


def _merge_name(a: str, b: str) -> str:
    return "+".join(sorted(a.split("+") + b.split("+")))


def apply_policy2(g, cfg: PolicyConfig) -> ClusterGraph:
    """Greedily merge small adjacent clusters.

    A cluster is small when below ``cfg.lower`` or, without a lower bound,
    below ``merge_ratio`` times the current largest cluster.  Merges stop when
    no small cluster has a small, adjacent partner whose union stays within
    the upper bound (``v_th`` stands in when no upper bound is given).
    """
    cg = as_cluster_graph(g)
    cap = cfg.upper if cfg.upper is not None else (cfg.v_th if cfg.v_th is not None else math.inf)
    while True:
        powers = {c: cl.record.power for c, cl in cg.clusters.items()}
        if not powers:
            return cg
        small = cfg.lower if cfg.lower is not None else cfg.merge_ratio * max(powers.values())
        target = (small + cap) / 2 if math.isfinite(cap) else None
        succ = {c: cg.succs(c) for c in cg.clusters}
        pred = {c: cg.preds(c) for c in cg.clusters}
        merged = None
        for a in sorted((c for c in powers if powers[c] < small), key=lambda c: (powers[c], c)):
            best = None
            for b in sorted(set(succ[a]) | set(pred[a])):
                if powers[b] >= small or not merge_keeps_acyclic(succ, a, b):
                    continue
                p = cluster_power(cg.clusters[a].members | cg.clusters[b].members,
                                  cg.graph, cg.lib).power
                if p > cap:
                    continue
                key = (abs(p - target) if target is not None else p, b)
                if best is None or key < best[0]:
                    best = (key, b)
            if best is not None:
                merged = (a, best[1])
                break
        if merged is None:
            return cg
        a, b = merged
        groups = {c: cl.members for c, cl in cg.clusters.items() if c not in (a, b)}
        groups[_merge_name(a, b)] = cg.clusters[a].members | cg.clusters[b].members
        cg = build_cluster_graph(cg.annotated, groups)


def apply_policy3(g, cfg: PolicyConfig) -> ClusterGraph:
    return apply_policy2(apply_policy1(g, cfg), cfg)


def apply_policy(g, cfg: PolicyConfig) -> ClusterGraph:
    fn = {"P1": apply_policy1, "P2": apply_policy2, "P3": apply_policy3}[cfg.policy]
    return fn(g, cfg)


def legal_partners(cg: ClusterGraph, c: str, small: float, cap: float) -> list[str]:
    succ = {n: cg.succs(n) for n in cg.clusters}
    out = []
    for b in sorted(set(succ[c]) | set(cg.preds(c))):
        if cg.power(b) >= small or not merge_keeps_acyclic(succ, c, b):
            continue
        p = cluster_power(cg.clusters[c].members | cg.clusters[b].members, cg.graph, cg.lib).power
        if p <= cap:
            out.append(b)
    return out


def policy_report(cg: ClusterGraph, cfg: PolicyConfig | None = None, bins: int = 10) -> dict:
    powers = {c: cl.record.power for c, cl in cg.clusters.items()}
    if not powers:
        return {"clusters": 0, "min": None, "avg": None, "max": None, "avg_per_gate": None,
                "histogram": [], "violations": [], "warnings": []}
    vals = sorted(powers.values())
    lo, hi = vals[0], vals[-1]
    width = (hi - lo) / bins if hi > lo else 1.0
    hist = [0] * bins
    for v in vals:
        hist[min(int((v - lo) / width), bins - 1)] += 1
    n_gates = sum(len(cl.members) for cl in cg.clusters.values())
    report = {
        "clusters": len(powers),
        "min": lo, "avg": sum(vals) / len(vals), "max": hi,
        "avg_per_gate": sum(vals) / n_gates,
        "histogram": [{"from": lo + i * width, "to": lo + (i + 1) * width, "count": c}
                      for i, c in enumerate(hist)],
        "violations": [], "warnings": [],
    }
    if cfg is not None:
        if cfg.upper is not None:
            report["violations"] += [f"{c}: {p:.6g} mJ > upper {cfg.upper:g}"
                                     for c, p in sorted(powers.items()) if p > cfg.upper]
        if cfg.lower is not None and cfg.policy in ("P2", "P3"):
            cap = cfg.upper if cfg.upper is not None else math.inf
            for c, p in sorted(powers.items()):
                if p < cfg.lower and legal_partners(cg, c, cfg.lower, cap):
                    report["violations"].append(f"{c}: {p:.6g} mJ < lower with a legal merge left")
        if cfg.v_th is not None:
            if report["avg"] >= cfg.v_th:
                report["warnings"].append("avg cluster power not below v_th")
            if hi > MUCH_LESS_MARGIN * cfg.v_th:
                report["warnings"].append("max cluster power not << v_th")
        if cfg.v_peak is not None and cfg.v_th is not None and cfg.v_th > MUCH_LESS_MARGIN * cfg.v_peak:
            report["warnings"].append("v_th not << v_peak")
    return report


# -- serialization ----------------------------------------------------------

def cluster_graph_to_json(cg: ClusterGraph, lib_doc: dict | None = None) -> dict:
    doc = {
        "graph": graph_to_json(cg.graph),
        "clusters": [
            {"name": c, "members": sorted(cl.members), "power_mJ": cl.record.power,
             "delay_ns": cl.record.delay, "fan_in": cl.record.fan_in,
             "fan_out": cl.record.fan_out, "level": cl.record.level}
            for c, cl in cg.clusters.items()
        ],
        "edges": [list(e) for e in cg.edges],
        "library_sha256": cg.lib.digest,
    }
    if lib_doc is not None:
        doc["library"] = lib_doc
    return doc


def cluster_graph_from_json(doc: dict, lib: GateLibrary | None = None) -> ClusterGraph:
    if lib is None:
        lib = GateLibrary.from_dict(doc["library"]) if "library" in doc else GateLibrary.load()
    ag = annotate(parse_taskgraph_json(doc["graph"]), lib)
    return build_cluster_graph(ag, {c["name"]: c["members"] for c in doc["clusters"]})
