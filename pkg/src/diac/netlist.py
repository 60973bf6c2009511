"""Netlist ingestion: ISCAS ``.bench``, a structural BLIF subset and JSON task graphs.

All three readers produce a :class:`CircuitGraph`.  Flip-flops are kept as
nodes but are cut for every combinational analysis: a DFF output behaves like
a primary input (level 0) and a DFF input like a primary output.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping

GATE_KINDS = ("AND", "NAND", "OR", "NOR", "XOR", "XNOR", "NOT", "BUF", "DFF", "LUT")
SINGLE_INPUT_KINDS = frozenset({"NOT", "BUF", "DFF"})
BENCH_KINDS = frozenset(GATE_KINDS) - {"LUT"}
MAX_ARITY = 64

_BENCH_ALIASES = {"BUFF": "BUF"}
_NAME = r"[^\s(),=#]+"
_IO_RE = re.compile(rf"^(INPUT|OUTPUT)\s*\(\s*({_NAME})\s*\)\s*$", re.IGNORECASE)
_GATE_RE = re.compile(rf"^({_NAME})\s*=\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$")


class NetlistError(ValueError):
    """Raised for malformed or structurally invalid netlists."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class GateNode:
    name: str
    kind: str
    inputs: tuple[str, ...]
    output: str
    # explicit annotations (JSON task graphs); override the gate library
    power_mJ: float | None = None
    delay_ns: float | None = None
    group: str | None = None


@dataclass(frozen=True)
class CircuitGraph:
    """Levelizable DAG of gates.

    ``nodes`` maps node name to :class:`GateNode`; node names double as their
    output signal names.  ``levels`` is filled in by :func:`levelize`.
    """

    nodes: Mapping[str, GateNode]
    primary_inputs: tuple[str, ...]
    primary_outputs: tuple[str, ...]
    name: str = "circuit"
    levels: Mapping[str, int] | None = field(default=None, compare=False)

    @property
    def sequential_elements(self) -> tuple[str, ...]:
        return tuple(n for n, g in self.nodes.items() if g.kind == "DFF")

    @property
    def combinational(self) -> tuple[str, ...]:
        return tuple(n for n, g in self.nodes.items() if g.kind != "DFF")

    def driver(self, signal: str) -> str | None:
        """Name of the node driving ``signal``, or None for primary inputs."""
        return signal if signal in self.nodes else None

    @property
    def edges(self) -> list[tuple[str, str]]:
        """Driver -> sink node pairs (one per distinct signal use)."""
        out = []
        for sink, g in self.nodes.items():
            for s in dict.fromkeys(g.inputs):
                if s in self.nodes:
                    out.append((s, sink))
        return out

    def fanout_map(self) -> dict[str, list[str]]:
        fo: dict[str, list[str]] = {n: [] for n in self.nodes}
        for drv, sink in self.edges:
            fo[drv].append(sink)
        return fo

    def comb_preds(self, name: str) -> list[str]:
        """Combinational predecessors (DFF outputs are cut)."""
        return [s for s in dict.fromkeys(self.nodes[name].inputs)
                if s in self.nodes and self.nodes[s].kind != "DFF"]

    def is_pseudo_output(self, signal: str) -> bool:
        return any(g.kind == "DFF" and signal in g.inputs for g in self.nodes.values())


def _check(graph: CircuitGraph) -> CircuitGraph:
    pis = graph.primary_inputs
    if len(set(pis)) != len(pis):
        raise NetlistError("duplicate primary input")
    for name, g in graph.nodes.items():
        if name != g.output:
            raise NetlistError(f"node {name!r} must be named after its output signal")
        if g.kind not in GATE_KINDS:
            raise NetlistError(f"unknown gate kind {g.kind!r} for {name!r}")
        n = len(g.inputs)
        if g.kind in SINGLE_INPUT_KINDS and n != 1:
            raise NetlistError(f"{g.kind} {name!r} takes exactly one input, got {n}")
        if g.kind == "LUT" and n < 1:
            raise NetlistError(f"LUT {name!r} needs at least one input")
        if g.kind not in SINGLE_INPUT_KINDS and g.kind != "LUT" and n < 2:
            raise NetlistError(f"{g.kind} {name!r} needs at least two inputs, got {n}")
        if n > MAX_ARITY:
            raise NetlistError(f"{name!r} exceeds the {MAX_ARITY}-input arity limit")
        if name in pis:
            raise NetlistError(f"signal {name!r} is both a primary input and a gate output")
        for s in g.inputs:
            if s not in graph.nodes and s not in pis:
                raise NetlistError(f"signal {s!r} used by {name!r} is undriven")
    for po in graph.primary_outputs:
        if po not in graph.nodes and po not in pis:
            raise NetlistError(f"primary output {po!r} is undriven")
    _comb_levels(graph)
    return graph


def _comb_levels(graph: CircuitGraph) -> dict[str, int]:
    """Longest-path levels with DFFs cut; raises on combinational cycles."""
    indeg: dict[str, int] = {}
    succ: dict[str, list[str]] = {n: [] for n in graph.nodes}
    for n, g in graph.nodes.items():
        if g.kind == "DFF":
            indeg[n] = 0
            continue
        preds = graph.comb_preds(n)
        indeg[n] = len(preds)
        for p in preds:
            succ[p].append(n)
    level = {n: 0 for n in graph.nodes}
    ready = sorted(n for n, d in indeg.items() if d == 0)
    seen = 0
    while ready:
        nxt = []
        for n in ready:
            seen += 1
            g = graph.nodes[n]
            if g.kind != "DFF":
                level[n] = 1 + max((level[p] for p in graph.comb_preds(n)), default=0)
            for s in succ[n]:
                indeg[s] -= 1
                if indeg[s] == 0:
                    nxt.append(s)
        ready = sorted(nxt)
    if seen != len(graph.nodes):
        stuck = sorted(n for n, d in indeg.items() if d > 0)
        raise NetlistError(f"cyclic combinational logic through {', '.join(stuck[:5])}")
    return level


def levelize(graph: CircuitGraph) -> CircuitGraph:
    """Return a copy of ``graph`` with ``levels`` filled in.

    Primary inputs and DFF outputs sit at level 0, every combinational gate at
    one more than its deepest driver.
    """
    return replace(graph, levels=_comb_levels(graph))


def make_graph(nodes: Iterable[GateNode], primary_inputs: Iterable[str],
               primary_outputs: Iterable[str], name: str = "circuit") -> CircuitGraph:
    table: dict[str, GateNode] = {}
    for g in nodes:
        if g.name in table:
            raise NetlistError(f"duplicate definition of {g.name!r}")
        table[g.name] = g
    graph = CircuitGraph(table, tuple(primary_inputs), tuple(primary_outputs), name)
    return levelize(_check(graph))


# -- .bench -----------------------------------------------------------------

def parse_bench(text: str, name: str = "circuit") -> CircuitGraph:
    pis: list[str] = []
    pos: list[str] = []
    nodes: dict[str, GateNode] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        m = _IO_RE.match(line)
        if m:
            target = pis if m.group(1).upper() == "INPUT" else pos
            if m.group(2) in target:
                raise NetlistError(f"duplicate {m.group(1).upper()} {m.group(2)!r}", lineno, col)
            target.append(m.group(2))
            continue
        m = _GATE_RE.match(line)
        if not m:
            raise NetlistError(f"cannot parse {line!r}", lineno, col)
        out, kind, args = m.group(1), m.group(2).upper(), m.group(3)
        kind = _BENCH_ALIASES.get(kind, kind)
        if kind not in BENCH_KINDS:
            raise NetlistError(f"unknown gate {m.group(2)!r}", lineno, col + line.index(m.group(2)))
        ins = tuple(a.strip() for a in args.split(",")) if args.strip() else ()
        if any(not a or not re.fullmatch(_NAME, a) for a in ins):
            raise NetlistError(f"malformed argument list {args!r}", lineno, col + line.index("("))
        if out in nodes:
            raise NetlistError(f"duplicate definition of {out!r}", lineno, col)
        try:
            _check_arity(kind, out, ins)
        except NetlistError as exc:
            raise NetlistError(str(exc), lineno, col) from None
        nodes[out] = GateNode(out, kind, ins, out)
    return make_graph(nodes.values(), pis, pos, name)


def _check_arity(kind: str, name: str, ins: tuple[str, ...]) -> None:
    if kind in SINGLE_INPUT_KINDS and len(ins) != 1:
        raise NetlistError(f"{kind} {name!r} takes exactly one input, got {len(ins)}")
    if kind not in SINGLE_INPUT_KINDS and kind != "LUT" and len(ins) < 2:
        raise NetlistError(f"{kind} {name!r} needs at least two inputs, got {len(ins)}")
    if len(ins) > MAX_ARITY:
        raise NetlistError(f"{name!r} exceeds the {MAX_ARITY}-input arity limit")


def emit_bench(graph: CircuitGraph) -> str:
    bad = [n for n, g in graph.nodes.items() if g.kind not in BENCH_KINDS]
    if bad:
        raise NetlistError(f"node kind not expressible in .bench: {bad[0]!r} "
                           f"({graph.nodes[bad[0]].kind})")
    lines = [f"# {graph.name}"]
    lines += [f"INPUT({s})" for s in graph.primary_inputs]
    lines += [f"OUTPUT({s})" for s in graph.primary_outputs]
    for n, g in graph.nodes.items():
        lines.append(f"{n} = {g.kind}({', '.join(g.inputs)})")
    return "\n".join(lines) + "\n"


# -- BLIF subset ------------------------------------------------------------

_BLIF_OK = {".model", ".inputs", ".outputs", ".names", ".latch", ".end"}


def _blif_lines(text: str):
    buf, start = "", 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not buf:
            start = lineno
        if line.endswith("\\"):
            buf += line[:-1] + " "
            continue
        buf += line
        if buf.strip():
            yield start, buf.strip()
        buf = ""
    if buf.strip():
        yield start, buf.strip()


def parse_blif_subset(text: str) -> CircuitGraph:
    name = "circuit"
    pis: list[str] = []
    pos: list[str] = []
    nodes: list[GateNode] = []
    current: tuple[int, str, tuple[str, ...]] | None = None
    rows = 0

    def close():
        nonlocal current
        if current is not None:
            lineno, out, ins = current
            if not ins:
                raise NetlistError(f".names {out!r} has no inputs (constants unsupported)", lineno)
            if rows == 0:
                raise NetlistError(f".names {out!r} has an empty truth table", lineno)
            nodes.append(GateNode(out, "LUT", ins, out))
        current = None

    for lineno, line in _blif_lines(text):
        tok = line.split()
        if tok[0].startswith("."):
            close()
            d = tok[0]
            if d not in _BLIF_OK:
                raise NetlistError(f"unsupported directive {d}", lineno, 1)
            if d == ".model":
                name = tok[1] if len(tok) > 1 else name
            elif d == ".inputs":
                pis += tok[1:]
            elif d == ".outputs":
                pos += tok[1:]
            elif d == ".names":
                if len(tok) < 2:
                    raise NetlistError(".names without an output", lineno, 1)
                current = (lineno, tok[-1], tuple(tok[1:-1]))
                rows = 0
            elif d == ".latch":
                if len(tok) < 3:
                    raise NetlistError(".latch needs input and output", lineno, 1)
                nodes.append(GateNode(tok[2], "DFF", (tok[1],), tok[2]))
            elif d == ".end":
                break
            continue
        if current is None:
            raise NetlistError(f"truth-table row outside .names: {line!r}", lineno, 1)
        n_in = len(current[2])
        parts = tok if n_in else [""] + tok
        if len(parts) != 2 or len(parts[0]) != n_in or len(parts[1]) != 1 \
                or set(parts[0]) - set("01-") or parts[1] not in "01":
            raise NetlistError(f"malformed truth table row {line!r} for {n_in} inputs", lineno, 1)
        rows += 1
    close()

    used = {s for g in nodes for s in g.inputs} | set(pos)
    for g in nodes:
        if g.kind == "LUT" and g.output not in used:
            raise NetlistError(f"dangling .names output {g.output!r}")
    return make_graph(nodes, pis, pos, name)


# -- JSON task graph --------------------------------------------------------

def taskgraph_schema() -> dict:
    return json.loads(resources.files("diac.data").joinpath("taskgraph.schema.json").read_text())


def parse_taskgraph_json(text: str | dict) -> CircuitGraph:
    import jsonschema

    doc = json.loads(text) if isinstance(text, str) else text
    try:
        jsonschema.validate(doc, taskgraph_schema())
    except jsonschema.ValidationError as exc:
        raise NetlistError(f"schema violation: {exc.message}") from None
    nodes = []
    for spec in doc["nodes"]:
        delay = spec.get("delay_ms")
        nodes.append(GateNode(
            spec["name"], spec.get("kind", "LUT").upper(), tuple(spec["inputs"]), spec["name"],
            power_mJ=spec.get("power_mJ"),
            delay_ns=None if delay is None else delay * 1e6,
            group=spec.get("group"),
        ))
    names = [n.name for n in nodes]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise NetlistError(f"name collision: {sorted(dupes)[0]!r}")
    return make_graph(nodes, doc.get("primary_inputs", []), doc.get("primary_outputs", []),
                      doc.get("name", "taskgraph"))


def graph_to_json(graph: CircuitGraph, extra: Mapping[str, Mapping] | None = None) -> dict:
    """Serialize to the task-graph dialect; ``extra`` adds per-node fields."""
    levels = graph.levels or {}
    nodes = []
    for n, g in graph.nodes.items():
        d: dict = {"name": n, "kind": g.kind, "inputs": list(g.inputs)}
        if g.power_mJ is not None:
            d["power_mJ"] = g.power_mJ
        if g.delay_ns is not None:
            d["delay_ms"] = g.delay_ns / 1e6
        if g.group is not None:
            d["group"] = g.group
        if n in levels:
            d["level"] = levels[n]
        if extra and n in extra:
            d.update(extra[n])
        nodes.append(d)
    return {"name": graph.name, "primary_inputs": list(graph.primary_inputs),
            "primary_outputs": list(graph.primary_outputs), "nodes": nodes}


def load_graph(path: str, fmt: str | None = None) -> CircuitGraph:
    with open(path) as fh:
        text = fh.read()
    if fmt is None:
        fmt = {"bench": "bench", "blif": "blif", "json": "json"}.get(path.rsplit(".", 1)[-1], "bench")
    if fmt == "bench":
        stem = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        return parse_bench(text, name=stem)
    if fmt == "blif":
        return parse_blif_subset(text)
    if fmt == "json":
        doc = json.loads(text)
        # ClusterGraph / NvNetlist documents embed the base graph
        if "graph" in doc and "nodes" not in doc:
            doc = doc["graph"]
        return parse_taskgraph_json(doc)
    raise ValueError(f"unknown format {fmt!r}")


def isomorphic(a: CircuitGraph, b: CircuitGraph) -> bool:
    """Name-preserving structural equality, ignoring line order."""
    if set(a.primary_inputs) != set(b.primary_inputs):
        return False
    if set(a.primary_outputs) != set(b.primary_outputs):
        return False
    if a.nodes.keys() != b.nodes.keys():
        return False
    return all(a.nodes[n].kind == b.nodes[n].kind and a.nodes[n].inputs == b.nodes[n].inputs
               for n in a.nodes)
