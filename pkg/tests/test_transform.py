import json
from dataclasses import replace

import pytest
from hypothesis import assume, given, settings, strategies as st

from diac.energy import GateLibrary, annotate
from diac.netlist import load_graph, parse_taskgraph_json
from diac.transform import (InfeasibleError, PolicyConfig, apply_policy1, apply_policy2,
                            apply_policy3, cluster_graph_from_json, cluster_graph_to_json,
                            initial_clusters, policy_report)

LIB = GateLibrary.load()
P3 = PolicyConfig("P3", upper=25.0, lower=20.0)


def clusters_of(nodes, pis=("a",), pos=None):
    doc = {"primary_inputs": list(pis), "primary_outputs": pos or [nodes[-1]["name"]], "nodes": nodes}
    return initial_clusters(annotate(parse_taskgraph_json(doc), LIB))


def member_sets(cg):
    return sorted(sorted(cl.members) for cl in cg.clusters.values())


def acyclic(cg):
    indeg = {c: 0 for c in cg.clusters}
    for _, b in cg.edges:
        indeg[b] += 1
    ready = [c for c, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        c = ready.pop()
        seen += 1
        for a, b in cg.edges:
            if a == c:
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
    return seen == len(cg.clusters)


def fig2(data_dir):
    return initial_clusters(annotate(load_graph(f"{data_dir}/fig2a.json"), LIB))


def test_policy1_splits_f2(data_dir):
    cg = apply_policy1(fig2(data_dir), PolicyConfig("P1", upper=25.0))
    f2 = [cl for cl in cg.clusters.values() if cl.members <= {"F2a", "F2b", "F2c"}]
    assert len(f2) >= 2 and max(cl.record.power for cl in f2) <= 25.0
    assert max(cg.power(c) for c in cg.clusters) <= 25.0


def test_policy1_identity_when_in_bound():
    cg = clusters_of([{"name": "x", "inputs": ["a"], "power_mJ": 10.0},
                      {"name": "y", "inputs": ["x"], "power_mJ": 12.0}])
    assert member_sets(apply_policy1(cg, PolicyConfig("P1", upper=25.0))) == member_sets(cg)


def test_policy1_single_gate_infeasible():
    cg = clusters_of([{"name": "x", "inputs": ["a"], "power_mJ": 30.0}])
    with pytest.raises(InfeasibleError):
        apply_policy1(cg, PolicyConfig("P1", upper=25.0))


def test_policy2_merges_f5_f8(data_dir):
    cg = apply_policy2(fig2(data_dir), PolicyConfig("P2", upper=25.0, lower=20.0))
    assert ["F5", "F6", "F7", "F8"] in member_sets(cg)


def test_policy2_identity_when_large():
    cg = clusters_of([{"name": "x", "inputs": ["a"], "power_mJ": 21.0},
                      {"name": "y", "inputs": ["x"], "power_mJ": 22.0}])
    assert member_sets(apply_policy2(cg, PolicyConfig("P2", upper=25.0, lower=20.0))) == member_sets(cg)


def test_policy2_two_small_nodes_merge_and_stop():
    cg = clusters_of([{"name": "x", "inputs": ["a"], "power_mJ": 5.0},
                      {"name": "y", "inputs": ["x"], "power_mJ": 5.0}])
    out = apply_policy2(cg, PolicyConfig("P2", upper=25.0, lower=20.0))
    assert member_sets(out) == [["x", "y"]]
    assert next(iter(out.clusters.values())).record.power == pytest.approx(10.0)


def test_policy3_fig2(data_dir):
    cg = apply_policy3(fig2(data_dir), P3)
    sets = member_sets(cg)
    assert ["F5", "F6", "F7", "F8"] in sets
    assert sum(1 for s in sets if set(s) <= {"F2a", "F2b", "F2c"}) >= 2
    assert max(cg.power(c) for c in cg.clusters) <= 25.0
    rep = policy_report(cg, P3)
    assert rep["violations"] == []
    small = [c for c in cg.clusters if cg.power(c) < 20.0]
    assert small  # unmergeable leftovers are reported, not violations


def test_policy3_uniform_identity():
    cg = clusters_of([{"name": f"n{k}", "inputs": ["a" if k == 0 else f"n{k - 1}"], "power_mJ": 22.0}
                      for k in range(4)])
    assert member_sets(apply_policy3(cg, P3)) == member_sets(cg)


def test_policy3_splits_60mj_group():
    cg = clusters_of([{"name": "g0", "inputs": ["a"], "power_mJ": 20.0, "group": "G"},
                      {"name": "g1", "inputs": ["g0"], "power_mJ": 20.0, "group": "G"},
                      {"name": "g2", "inputs": ["g1"], "power_mJ": 20.0, "group": "G"}])
    assert len(cg.clusters) == 1
    out = apply_policy3(cg, P3)
    assert member_sets(out) == [["g0"], ["g1"], ["g2"]]
    assert all(out.power(c) == pytest.approx(20.0) for c in out.clusters)


def test_policy_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig("P3", upper=20.0, lower=25.0)
    with pytest.raises(ValueError):
        PolicyConfig("P1")
    with pytest.raises(ValueError):
        PolicyConfig("P2", merge_ratio=0.0)
    with pytest.raises(ValueError):
        PolicyConfig("P1", upper=25.0, v_th=20.0)


def test_report_identity_and_empty():
    cg = clusters_of([{"name": "x", "inputs": ["a"], "power_mJ": 21.0},
                      {"name": "y", "inputs": ["x"], "power_mJ": 23.0}])
    rep = policy_report(apply_policy3(cg, P3), P3)
    assert (rep["min"], rep["max"], rep["avg"]) == (21.0, 23.0, 22.0)
    assert sum(b["count"] for b in rep["histogram"]) == 2
    empty = policy_report(replace(cg, clusters={}, edges=(), provenance={}))
    assert empty["clusters"] == 0 and empty["histogram"] == [] and empty["violations"] == []


def test_json_round_trip(data_dir):
    cg = apply_policy3(fig2(data_dir), P3)
    back = cluster_graph_from_json(json.loads(json.dumps(cluster_graph_to_json(cg))), LIB)
    assert member_sets(back) == member_sets(cg)
    assert sorted(back.edges) == sorted(cg.edges)


@st.composite
def task_graphs(draw):
    n = draw(st.integers(1, 14))
    nodes = []
    for k in range(n):
        prev = [f"n{j}" for j in range(k)]
        ins = draw(st.lists(st.sampled_from(prev), max_size=2, unique=True)) if prev else []
        if not ins or draw(st.booleans()):
            ins = ins + ["a"]
        node = {"name": f"n{k}", "inputs": ins,
                "power_mJ": draw(st.floats(0.5, 24.0, allow_nan=False))}
        if draw(st.integers(0, 4)) == 0:
            node["group"] = f"G{draw(st.integers(0, 2))}"
        nodes.append(node)
    sinks = {f"n{k}" for k in range(n)} - {i for nd in nodes for i in nd["inputs"]}
    try:
        return clusters_of(nodes, pos=sorted(sinks))
    except InfeasibleError:  # a group wrapped around a node outside it
        assume(False)


@settings(max_examples=80, deadline=None)
@given(task_graphs(), st.sampled_from(["P1", "P2", "P3"]))
def test_policy_properties(cg, policy):
    cfg = PolicyConfig(policy, upper=25.0, lower=20.0 if policy != "P1" else None)
    if any(cg.power(c) > 25.0 for c in cg.clusters) and policy == "P2":
        cfg = PolicyConfig("P2", upper=None, lower=20.0)
    try:
        out = {"P1": apply_policy1, "P2": apply_policy2, "P3": apply_policy3}[policy](cg, cfg)
    except InfeasibleError:
        return
    # partition
    members = [m for cl in out.clusters.values() for m in cl.members]
    assert sorted(members) == sorted(cg.graph.combinational)
    assert all(out.provenance[m] == c for c, cl in out.clusters.items() for m in cl.members)
    assert acyclic(out)
    if policy in ("P1", "P3"):
        assert max(out.power(c) for c in out.clusters) <= 25.0 + 1e-9
    if policy == "P3":
        assert policy_report(out, cfg)["violations"] == []
    # idempotence and determinism
    fn = {"P1": apply_policy1, "P2": apply_policy2, "P3": apply_policy3}[policy]
    assert member_sets(fn(out, cfg)) == member_sets(out)
    again = fn(cg, cfg)
    assert json.dumps(cluster_graph_to_json(again)) == json.dumps(cluster_graph_to_json(out))
