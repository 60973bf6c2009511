"""Gate-level power/delay annotation and operand energy estimates.

Units: library values are µW and ns, every public energy is mJ, delays are ns.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping

from .netlist import CircuitGraph, GateNode

log = logging.getLogger(__name__)

# µW * ns = fJ = 1e-15 J = 1e-12 mJ
UW_NS_TO_MJ = 1e-12
DEFAULT_LIBRARY = "gatelib_45nm_synthetic.json"


def uw_ns_to_mj(power_uW: float, delay_ns: float) -> float:
    return power_uW * delay_ns * UW_NS_TO_MJ


class LibraryError(KeyError):
    pass


@dataclass(frozen=True)
class GateParams:
    dyn_uW: float
    static_uW: float
    delay_ns: float


@dataclass(frozen=True)
class GateLibrary:
    name: str
    voltage_V: float
    gates: Mapping[str, Mapping[int, GateParams]]
    digest: str = ""

    @classmethod
    def from_dict(cls, doc: dict) -> "GateLibrary":
        raw = json.dumps(doc, sort_keys=True).encode()
        gates: dict[str, dict[int, GateParams]] = {}
        for kind, table in doc["gates"].items():
            gates[kind.upper()] = {}
            for arity, p in table.items():
                gp = GateParams(float(p["dyn_uW"]), float(p["static_uW"]), float(p["delay_ns"]))
                if min(gp.dyn_uW, gp.static_uW, gp.delay_ns) <= 0:
                    raise ValueError(f"library values must be > 0 ({kind}/{arity})")
                gates[kind.upper()][int(arity)] = gp
        return cls(doc.get("name", "library"), float(doc.get("voltage_V", 1.0)), gates,
                   hashlib.sha256(raw).hexdigest())

    @classmethod
    def load(cls, path: str | None = None) -> "GateLibrary":
        if path is None:
            text = resources.files("diac.data").joinpath(DEFAULT_LIBRARY).read_text()
        else:
            with open(path) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))

    def scaled(self, factor: float) -> "GateLibrary":
        """Same table with every power figure multiplied by ``factor`` (energies scale linearly)."""
        if factor <= 0:
            raise ValueError("scale factor must be > 0")
        gates = {k: {a: GateParams(p.dyn_uW * factor, p.static_uW * factor, p.delay_ns)
                     for a, p in t.items()} for k, t in self.gates.items()}
        digest = hashlib.sha256(f"{self.digest}*{factor!r}".encode()).hexdigest()
        return GateLibrary(f"{self.name} x{factor:g}", self.voltage_V, gates, digest)

    def lookup(self, kind: str, arity: int) -> GateParams:
        try:
            return self.gates[kind][arity]
        except KeyError:
            raise LibraryError(f"no library entry for {kind} with {arity} inputs") from None


@dataclass(frozen=True)
class FeatureRecord:
    fan_in: int
    fan_out: int
    level: int
    power: float  # mJ per activation
    delay: float  # ns


@dataclass(frozen=True)
class AnnotatedGraph:
    graph: CircuitGraph
    lib: GateLibrary
    params: Mapping[str, GateParams]
    features: Mapping[str, FeatureRecord]


def _gate_params(g: GateNode, lib: GateLibrary) -> GateParams:
    """Resolve a node; explicit JSON annotations win over the library."""
    if g.power_mJ is not None:
        try:
            delay = lib.lookup(g.kind, len(g.inputs)).delay_ns
        except LibraryError:
            delay = 0.0
        if g.delay_ns is not None:
            delay = g.delay_ns
        # dynamic share carries the whole override; no static term
        return GateParams(float("nan"), 0.0, delay)
    p = lib.lookup(g.kind, len(g.inputs))
    if g.delay_ns is not None:
        p = GateParams(p.dyn_uW, p.static_uW, g.delay_ns)
    return p


def _dyn(g: GateNode, p: GateParams) -> float:
    if g.power_mJ is not None:
        return g.power_mJ
    return 2.0 * uw_ns_to_mj(p.dyn_uW, p.delay_ns)


def dynamic_energy(cluster: Iterable[GateNode], lib: GateLibrary) -> float:
    """2 x sum(delay_i * dynamic_power_i) over the cluster, in mJ."""
    gates = list(cluster)
    if not gates:
        raise ValueError("empty cluster")
    return sum(_dyn(g, _gate_params(g, lib)) for g in gates)


def critical_delay(cluster: Iterable[GateNode], lib: GateLibrary) -> float:
    """Longest delay path (ns) through the cluster's internal DAG."""
    gates = {g.name: g for g in cluster}
    memo: dict[str, float] = {}

    def arrive(n: str) -> float:
        if n not in memo:
            g = gates[n]
            preds = [s for s in g.inputs if s in gates and gates[s].kind != "DFF"]
            memo[n] = _gate_params(g, lib).delay_ns + max((arrive(s) for s in preds), default=0.0)
        return memo[n]

    order = sorted(gates)
    # iterative warm-up keeps recursion shallow on long chains
    for n in order:
        stack = [n]
        while stack:
            top = stack[-1]
            if top in memo:
                stack.pop()
                continue
            pending = [s for s in gates[top].inputs
                       if s in gates and gates[s].kind != "DFF" and s not in memo]
            if pending:
                stack.extend(pending)
            else:
                arrive(top)
                stack.pop()
    return max((memo[n] for n in order), default=0.0)


def static_energy(cluster: Iterable[GateNode], lib: GateLibrary) -> float:
    """CDP x (sum of static power minus the largest single-gate static power).

    The largest static contributor stands in for the gate that is switching,
    so a single gate has zero static energy.
    """
    gates = list(cluster)
    if not gates:
        raise ValueError("empty cluster")
    statics = [_gate_params(g, lib).static_uW for g in gates]
    idle = sum(statics) - max(statics)
    if idle <= 0:
        return 0.0
    return uw_ns_to_mj(idle, critical_delay(gates, lib))


def _is_connected(names: set[str], graph: CircuitGraph) -> bool:
    if not names:
        return True
    adj: dict[str, set[str]] = {n: set() for n in names}
    for drv, sink in graph.edges:
        if drv in names and sink in names:
            adj[drv].add(sink)
            adj[sink].add(drv)
    start = min(names)
    seen, stack = {start}, [start]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen == names


def boundary_fans(names: set[str], graph: CircuitGraph) -> tuple[int, int]:
    """(distinct signals entering, sink terminals leaving) for a node set.

    Outgoing terminals count each external consumer gate once per signal plus
    one per primary output; DFF inputs count as consumers.
    """
    fan_in = len({s for n in names for s in graph.nodes[n].inputs if s not in names})
    fanout = graph.fanout_map()
    pos = set(graph.primary_outputs)
    fan_out = 0
    for n in names:
        fan_out += sum(1 for s in fanout[n] if s not in names)
        fan_out += 1 if n in pos else 0
    return fan_in, fan_out


def cluster_power(cluster: Iterable[str], graph: CircuitGraph, lib: GateLibrary) -> FeatureRecord:
    names = set(cluster)
    if not names:
        raise ValueError("empty cluster")
    gates = [graph.nodes[n] for n in sorted(names)]
    if not _is_connected(names, graph):
        log.warning("cluster %s is disconnected; using the plain sum", sorted(names)[:4])
        return _disconnected_power(names, graph, lib)
    fi, fo = boundary_fans(names, graph)
    levels = graph.levels or {}
    return FeatureRecord(
        fan_in=fi, fan_out=fo, level=max((levels.get(n, 0) for n in names), default=0),
        power=dynamic_energy(gates, lib) + static_energy(gates, lib),
        delay=critical_delay(gates, lib),
    )


def _components(names: set[str], graph: CircuitGraph) -> list[set[str]]:
    adj: dict[str, set[str]] = {n: set() for n in names}
    for drv, sink in graph.edges:
        if drv in names and sink in names:
            adj[drv].add(sink)
            adj[sink].add(drv)
    comps, seen = [], set()
    for start in sorted(names):
        if start in seen:
            continue
        comp, stack = {start}, [start]
        while stack:
            for m in adj[stack.pop()]:
                if m not in comp:
                    comp.add(m)
                    stack.append(m)
        seen |= comp
        comps.append(comp)
    return comps


def _disconnected_power(names: set[str], graph: CircuitGraph, lib: GateLibrary) -> FeatureRecord:
    power, delay = 0.0, 0.0
    for comp in _components(names, graph):
        gates = [graph.nodes[n] for n in sorted(comp)]
        power += dynamic_energy(gates, lib) + static_energy(gates, lib)
        delay = max(delay, critical_delay(gates, lib))
    fi, fo = boundary_fans(names, graph)
    levels = graph.levels or {}
    return FeatureRecord(fi, fo, max(levels.get(n, 0) for n in names), power, delay)


def annotate(graph: CircuitGraph, lib: GateLibrary) -> AnnotatedGraph:
    params = {n: _gate_params(g, lib) for n, g in graph.nodes.items()}
    levels = graph.levels or {}
    fanout = graph.fanout_map()
    pos = set(graph.primary_outputs)
    feats = {}
    for n, g in graph.nodes.items():
        feats[n] = FeatureRecord(
            fan_in=len(set(g.inputs)),
            fan_out=len(fanout[n]) + (1 if n in pos else 0),
            level=levels.get(n, 0),
            power=_dyn(g, params[n]),
            delay=params[n].delay_ns,
        )
    return AnnotatedGraph(graph, lib, params, feats)
