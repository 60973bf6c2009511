"""Bottom-up energy accumulation and NVM checkpoint insertion over a ClusterGraph.

A cut at cluster ``c`` stores every signal leaving ``c`` in NVM.  Execution
downstream of a cut restarts from the stored values, so the energy that has
to fit into one charge is the cone of uncut ancestors of a cluster, plus the
cost of reading the checkpoints that feed the cone, plus the backup cost when
the cluster itself closes a segment with a cut.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

from .transform import ClusterGraph, InfeasibleError


@dataclass(frozen=True)
class NvmParams:
    technology: str
    write_energy_per_word: float  # mJ
    read_energy_per_word: float  # mJ
    write_latency: float  # ns
    word_bits: int = 32

    def __post_init__(self):
        if not self.write_energy_per_word >= self.read_energy_per_word > 0:
            raise ValueError("need write_energy >= read_energy > 0")
        if self.word_bits <= 0 or self.write_latency < 0:
            raise ValueError("bad word size or latency")

    @classmethod
    def preset(cls, name: str) -> "NvmParams":
        name = name.lower()
        if name == "mram":
            return MRAM
        if name == "reram":
            return RERAM
        raise KeyError(f"unknown NVM preset {name!r}")

    @classmethod
    def from_file(cls, path: str) -> "NvmParams":
        with open(path) as fh:
            doc = json.load(fh)
        doc.setdefault("technology", "custom")
        return cls(**doc)


# synthetic configuration values, not device measurements
MRAM = NvmParams("MRAM", write_energy_per_word=0.001, read_energy_per_word=0.0002, write_latency=10.0)
RERAM = NvmParams("ReRAM", write_energy_per_word=0.001 * 4.4, read_energy_per_word=0.0002,
                  write_latency=10.0)


@dataclass(frozen=True)
class PlacementWeights:
    w_level: float = 1.0
    w_power: float = 1.0
    w_fan: float = 1.0

    def __post_init__(self):
        ws = (self.w_level, self.w_power, self.w_fan)
        if min(ws) < 0 or not any(ws):
            raise ValueError("weights must be non-negative and not all zero")

    @classmethod
    def parse(cls, text: str) -> "PlacementWeights":
        return cls(*(float(x) for x in text.split(",")))


@dataclass(frozen=True)
class CutInfo:
    signals_stored: int
    backup_energy: float
    restore_energy: float
    # P_total of the cut cluster, recorded as its checkpoint annotation
    checkpoint_energy: float


@dataclass(frozen=True)
class NvmPlan:
    cut_nodes: tuple[str, ...]
    per_cut: Mapping[str, CutInfo]
    residual_accumulation: Mapping[str, float]
    budget: float
    nvm: NvmParams
    weights: PlacementWeights = field(default_factory=PlacementWeights)
    safety: float = 1.0

    def to_json(self) -> dict:
        return {
            "cut_nodes": list(self.cut_nodes),
            "per_cut": {c: asdict(i) for c, i in self.per_cut.items()},
            "residual_accumulation": dict(self.residual_accumulation),
            "budget_mJ": self.budget, "safety": self.safety,
            "nvm": asdict(self.nvm), "weights": asdict(self.weights),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NvmPlan":
        return cls(
            tuple(doc["cut_nodes"]),
            {c: CutInfo(**i) for c, i in doc["per_cut"].items()},
            dict(doc["residual_accumulation"]),
            doc["budget_mJ"], NvmParams(**doc["nvm"]),
            PlacementWeights(**doc.get("weights", {})), doc.get("safety", 1.0),
        )


def signals_stored(cg: ClusterGraph, c: str) -> int:
    """Distinct signals produced inside ``c`` and consumed outside it."""
    mem = cg.clusters[c].members
    graph = cg.graph
    pos = set(graph.primary_outputs)
    used_outside = {s for n, g in graph.nodes.items() if n not in mem for s in g.inputs}
    return sum(1 for n in mem if n in used_outside or n in pos)


def backup_energy(cg: ClusterGraph, c: str, nvm: NvmParams) -> float:
    return signals_stored(cg, c) * nvm.write_energy_per_word


def restore_energy(cg: ClusterGraph, c: str, nvm: NvmParams) -> float:
    return signals_stored(cg, c) * nvm.read_energy_per_word


class _Cones:
    """Bitset cones of uncut ancestors, recomputed per cut set."""

    def __init__(self, cg: ClusterGraph):
        self.cg = cg
        self.order = cg.topo_order()
        self.index = {c: i for i, c in enumerate(self.order)}
        self.preds = {c: cg.preds(c) for c in self.order}

    def compute(self, cuts: set[str]) -> tuple[dict[str, int], dict[str, int]]:
        cone: dict[str, int] = {}
        feeders: dict[str, int] = {}
        for c in self.order:
            cm, fm = 0, 0
            for p in self.preds[c]:
                if p in cuts:
                    fm |= 1 << self.index[p]
                else:
                    cm |= cone[p] | (1 << self.index[p])
                    fm |= feeders[p]
            cone[c], feeders[c] = cm, fm
        return cone, feeders

    def members(self, mask: int) -> list[str]:
        out, i = [], 0
        while mask:
            if mask & 1:
                out.append(self.order[i])
            mask >>= 1
            i += 1
        return out


def accumulate(cg: ClusterGraph, cuts: Iterable[str], nvm: NvmParams | None = None,
               propagate_cut_energy: bool = False) -> dict[str, float]:
    """P_total per cluster: own power plus every uncut ancestor, each counted once.

    Ancestors behind a cut contribute nothing; reading the checkpoint costs its
    restore energy instead (zero without ``nvm``).  With
    ``propagate_cut_energy`` the cut's own P_total is carried downstream
    instead of the restore cost.
    """
    cuts = set(cuts)
    cones = _Cones(cg)
    cone, feeders = cones.compute(cuts)
    total: dict[str, float] = {}
    for c in cones.order:
        e = cg.power(c) + sum(cg.power(a) for a in cones.members(cone[c]))
        for f in cones.members(feeders[c]):
            if propagate_cut_energy:
                e += total[f]
            elif nvm is not None:
                e += restore_energy(cg, f, nvm)
        total[c] = e
    return total


def score(cg: ClusterGraph, c: str, p_total: Mapping[str, float],
          weights: PlacementWeights) -> float:
    """Rank a cut candidate: higher level, larger accumulated energy, wider fan."""
    recs = {n: cl.record for n, cl in cg.clusters.items()}
    l_max = max(r.level for r in recs.values()) or 1
    p_max = max(p_total.values()) or 1.0
    f_max = max(r.fan_in + r.fan_out for r in recs.values()) or 1
    r = recs[c]
    return (weights.w_level * r.level / l_max
            + weights.w_power * p_total[c] / p_max
            + weights.w_fan * (r.fan_in + r.fan_out) / f_max)


def is_feasible(cg: ClusterGraph, cuts: Iterable[str], budget: float, nvm: NvmParams,
                propagate_cut_energy: bool = False) -> bool:
    cuts = set(cuts)
    acc = accumulate(cg, cuts, nvm, propagate_cut_energy)
    return all(acc[c] + (backup_energy(cg, c, nvm) if c in cuts else 0.0) <= budget + 1e-12
               for c in acc)


def place(cg: ClusterGraph, budget: float, nvm: NvmParams,
          weights: PlacementWeights | None = None, safety: float = 1.0,
          propagate_cut_energy: bool = False) -> NvmPlan:
    """Insert NVM cuts bottom-up so every segment fits the energy budget.

    Levels are swept from the inputs upward.  All clusters of one level are
    checked against the same snapshot of cuts; when a cluster's accumulated
    energy exceeds the (derated) budget, a cut is committed at the best-scoring
    uncut ancestor in its cone that can itself close a segment.  A final pass
    drops cuts that became redundant, lowest score first.
    """
    if not cg.clusters:
        raise InfeasibleError("degenerate graph: no clusters")
    weights = weights or PlacementWeights()
    limit = safety * budget
    bk = {c: backup_energy(cg, c, nvm) for c in cg.clusters}
    for c in sorted(cg.clusters):
        if cg.power(c) > limit:
            raise InfeasibleError(f"cluster {c!r} needs {cg.power(c):.6g} mJ, above the "
                                  f"{limit:.6g} mJ budget; split it further (Policy1)")
    cones = _Cones(cg)
    cuts: set[str] = set()

    def totals():
        return accumulate(cg, cuts, nvm, propagate_cut_energy)

    by_level: dict[int, list[str]] = {}
    for c in cones.order:
        by_level.setdefault(cg.clusters[c].record.level, []).append(c)

    for level in sorted(by_level):
        acc = totals()
        for c in by_level[level]:
            while acc[c] > limit + 1e-12:
                cone, _ = cones.compute(cuts)
                cands = [a for a in cones.members(cone[c]) if acc[a] + bk[a] <= limit + 1e-12]
                if not cands:
                    raise InfeasibleError(f"cluster {c!r} cannot fit the {limit:.6g} mJ budget "
                                          f"(accumulated {acc[c]:.6g} mJ)")
                fixing = []
                for a in cands:
                    trial = accumulate(cg, cuts | {a}, nvm, propagate_cut_energy)
                    if trial[c] <= limit + 1e-12:
                        fixing.append(a)
                pool = fixing or cands
                best = max(pool, key=lambda a: (score(cg, a, acc, weights), a))
                cuts.add(best)
                acc = totals()

    # redundant-cut pruning, weakest candidates first
    acc = totals()
    for c in sorted(cuts, key=lambda a: (score(cg, a, acc, weights), a)):
        if is_feasible(cg, cuts - {c}, limit, nvm, propagate_cut_energy):
            cuts.discard(c)
    cuts = _reduce_writes(cg, cuts, limit, nvm, weights, propagate_cut_energy)
    # second start: from "everything checkpointed", when that is feasible
    every = set(cg.clusters)
    if len(every) <= 64 and is_feasible(cg, every, limit, nvm, propagate_cut_energy):
        alt = _reduce_writes(cg, every, limit, nvm, weights, propagate_cut_energy)
        w = {c: signals_stored(cg, c) for c in every}
        if sum(w[c] for c in alt) < sum(w[c] for c in cuts):
            cuts = alt

    acc = totals()
    if not is_feasible(cg, cuts, limit, nvm, propagate_cut_energy):
        raise InfeasibleError("no feasible cut set found (restore costs exceed the budget)")
    per_cut = {
        c: CutInfo(signals_stored(cg, c), bk[c], restore_energy(cg, c, nvm), acc[c])
        for c in sorted(cuts)
    }
    return NvmPlan(tuple(sorted(cuts)), per_cut, acc, budget, nvm, weights, safety)


def _reduce_writes(cg: ClusterGraph, cuts: set[str], limit: float, nvm: NvmParams,
                   weights: PlacementWeights, propagate: bool, pair_limit: int = 64) -> set[str]:
    """Local search on stored words: drop a cut, swap one for a cheaper one, or fuse two into one.

    Each pass takes the feasible move that saves the most words (ties: higher
    score of the cuts kept, then name) and stops when no move helps.
    """
    words = {c: signals_stored(cg, c) for c in cg.clusters}
    names = sorted(cg.clusters)
    cuts = set(cuts)
    while True:
        acc = accumulate(cg, cuts, nvm, propagate)
        rank = {c: score(cg, c, acc, weights) for c in names}
        moves = []
        for a in sorted(cuts):
            moves.append((words[a], 0.0, (a,), ()))
            for b in names:
                if b not in cuts and words[b] < words[a]:
                    moves.append((words[a] - words[b], rank[b], (a,), (b,)))
        if len(names) <= pair_limit:
            ordered = sorted(cuts)
            for i, a in enumerate(ordered):
                for b in ordered[i + 1:]:
                    for c in names:
                        if c not in cuts and words[c] < words[a] + words[b]:
                            moves.append((words[a] + words[b] - words[c], rank[c], (a, b), (c,)))
        moves.sort(key=lambda m: (-m[0], -m[1], m[2], m[3]))
        for _, _, out, into in moves:
            trial = (cuts - set(out)) | set(into)
            if is_feasible(cg, trial, limit, nvm, propagate):
                cuts = trial
                break
        else:
            return cuts


def plan_cost(plan: NvmPlan, workload_repeats: int = 1) -> dict:
    writes = sum(i.signals_stored for i in plan.per_cut.values()) * workload_repeats
    return {
        "writes": writes,
        "backup_energy_total": sum(i.backup_energy for i in plan.per_cut.values()) * workload_repeats,
        "restore_energy_total": sum(i.restore_energy for i in plan.per_cut.values()) * workload_repeats,
    }
