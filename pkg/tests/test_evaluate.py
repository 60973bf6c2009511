import csv
import io
import json
import math
from dataclasses import replace

import pytest

from diac.energy import GateLibrary, annotate
from diac.evaluate import (DIAC, NV_BASED, NV_CLUSTERING, OPT_DIAC, SCHEMES, EvalConfig, Scheme,
                           amplify_workload, build_scheme, bundled_benchmarks, compute_pdp,
                           evaluate, fig5_dat, load_benchmarks, normalized_csv, plan_costs,
                           prepare, results_csv, write_tables)
from diac.netlist import parse_taskgraph_json
from diac.placement import MRAM, RERAM
from diac.sim import HarvestTrace, PlanCosts, SimReport


def report(cycles, energy, makespan):
    return SimReport(completed_cycles=cycles, nvm_word_writes=0, backups=0, restores=0,
                     shutdowns=0, safe_zone_entries=0, safe_zone_recoveries=0,
                     energy_spent_by_category={"compute": energy}, makespan=makespan, ticks=0,
                     initial_energy=0.0, final_energy=0.0, harvested=0.0, leaked=0.0,
                     spilled=0.0, senses=0, computes=0, seed=0, thresholds={},
                     target_reached=True)


def chain3():
    doc = {"primary_inputs": ["a"], "primary_outputs": ["c3"],
           "nodes": [{"name": f"c{k + 1}", "inputs": ["a" if k == 0 else f"c{k}"], "power_mJ": 1.0}
                     for k in range(3)]}
    return parse_taskgraph_json(doc)


@pytest.mark.parametrize("energy,cap,k", [(3.0, 25.0, 9), (30.0, 25.0, 1), (25.0, 25.0, 2),
                                          (0.1, 25.0, 251), (12.5, 25.0, 3)])
def test_amplify_workload(energy, cap, k):
    assert amplify_workload(energy, cap) == k
    assert k * energy > cap and (k == 1 or (k - 1) * energy <= cap)


def test_amplify_rejects_zero():
    with pytest.raises(ValueError):
        amplify_workload(0.0, 25.0)


def test_pdp_arithmetic():
    assert compute_pdp(report(10, 50.0, 1000.0)) == pytest.approx(500.0)
    assert compute_pdp(report(10, 50.0, 2000.0)) == pytest.approx(2 * 500.0)
    assert math.isnan(compute_pdp(report(0, 50.0, 1000.0)))


def test_nv_based_cuts_every_cluster():
    cfg = EvalConfig()
    bld = build_scheme(prepare(chain3(), cfg), NV_BASED, cfg=cfg)
    assert bld.info["cuts"] == 3 and bld.netlist.plan.cut_nodes == ("c1", "c2", "c3")
    assert bld.costs.repeats == amplify_workload(3.0, 25.0) == 9


def test_nv_clustering_halves_words():
    cfg = EvalConfig()
    ag = prepare(bundled_benchmarks()["s27"], cfg)
    base = build_scheme(ag, NV_BASED, cfg=cfg).costs
    half = build_scheme(ag, NV_CLUSTERING, cfg=cfg).costs
    assert sum(half.stage_words) == math.ceil(0.5 * sum(base.stage_words))
    assert half.stage_live[0] == math.ceil(0.5 * base.stage_live[0])
    third = build_scheme(ag, Scheme(NV_CLUSTERING, 1 / 3), cfg=cfg).costs
    assert sum(third.stage_words) == math.ceil(sum(base.stage_words) / 3 - 1e-12)


@pytest.mark.parametrize("name", ["s27", "chain12", "diamond", "wide"])
def test_opt_vs_diac_differ_only_in_thresholds(name):
    cfg = EvalConfig()
    ag = prepare(bundled_benchmarks()[name], cfg)
    d, o = build_scheme(ag, DIAC, cfg=cfg), build_scheme(ag, OPT_DIAC, cfg=cfg)
    assert d.netlist.plan == o.netlist.plan and d.costs == o.costs
    assert dict(d.netlist.stage_index) == dict(o.netlist.stage_index)
    td, to = d.energy.thresholds(d.costs), o.energy.thresholds(o.costs)
    assert td["Th_Safe_Zone"] == td["Th_Bk"]
    assert to["Th_Safe_Zone"] == pytest.approx(to["Th_Bk"] + 2.0)


def test_plan_costs_reads_metadata():
    cfg = EvalConfig()
    bld = build_scheme(prepare(bundled_benchmarks()["chain12"], cfg), OPT_DIAC, cfg=cfg)
    assert plan_costs(bld.netlist, cfg=cfg) == bld.costs
    meta = {k: v for k, v in bld.netlist.metadata.items() if k not in ("scheme", "repeats")}
    bare = plan_costs(replace(bld.netlist, metadata=meta), cfg=cfg)
    assert bare.repeats >= 1 and bare.stage_live == (0,) * len(bare.stage_cost)


def test_prepare_scales_mean_gate():
    cfg = EvalConfig()
    g = bundled_benchmarks()["s27"]
    ag = prepare(g, cfg)
    comb = g.combinational
    assert sum(ag.features[n].power for n in comb) / len(comb) == pytest.approx(0.003)
    task = chain3()
    assert prepare(task, cfg).features["c1"].power == 1.0  # explicit mJ kept


def test_budget_default():
    cfg = EvalConfig()
    probe = PlanCosts(write_energy=MRAM.write_energy_per_word, read_energy=MRAM.read_energy_per_word)
    th = cfg.energy.thresholds(probe)
    assert cfg.budget() == pytest.approx(0.9 * 0.5 * (25.0 - th["Th_Safe_Zone"]), rel=1e-12)


def test_scheme_validation():
    with pytest.raises(ValueError):
        Scheme("NV_MAGIC")
    with pytest.raises(ValueError):
        Scheme(NV_CLUSTERING, 0.0)
    assert Scheme(OPT_DIAC).safe_zone_enabled and not Scheme(DIAC).safe_zone_enabled


def test_single_cell_table_and_normalization():
    benches = {"s27": bundled_benchmarks()["s27"]}
    res, rows = evaluate(benches, schemes=[OPT_DIAC], traces=["constant"], seeds=[0])
    assert len(rows) == 1 and len(res) == 1
    assert res[0].normalized_pdp() == {OPT_DIAC: 1.0}
    lines = results_csv(rows).splitlines()
    assert len(lines) == 2 and lines[0].startswith("benchmark,scheme,trace,seed,pdp")


def test_normalization_base_column():
    benches = {"diamond": bundled_benchmarks()["diamond"]}
    res, rows = evaluate(benches, traces=["constant"], seeds=[0, 1])
    norm = res[0].normalized_pdp()
    assert norm[NV_BASED] == 1.0
    raw = res[0].per_scheme
    for s in SCHEMES:
        assert norm[s] == raw[s]["pdp_mean"] / raw[NV_BASED]["pdp_mean"]
    table = list(csv.reader(io.StringIO(normalized_csv(res))))
    assert table[0] == ["benchmark", *SCHEMES] and table[1][1] == "1.000000"
    assert fig5_dat(res).splitlines()[1] == "benchmark " + " ".join(SCHEMES)


def test_zero_cycle_cells_excluded():
    benches = {"s27": bundled_benchmarks()["s27"]}
    dead = HarvestTrace(((50, 0.0),), name="dead")
    res, rows = evaluate(benches, schemes=[DIAC], traces=[dead, "constant"], seeds=[0])
    assert math.isnan(rows[0]["pdp"]) and rows[0]["trace"] == "dead"
    st = res[0].per_scheme[DIAC]
    assert st["n"] == 2 and st["n_failed"] == 1 and st["pdp_mean"] == rows[1]["pdp"]


def test_tables_byte_stable(tmp_path):
    benches = {k: v for k, v in bundled_benchmarks().items() if k in ("s27", "wide")}
    outs = []
    for sub, jobs in (("a", 1), ("b", 2)):
        res, rows = evaluate(benches, traces=["rfid"], seeds=[0, 1], jobs=jobs)
        paths = write_tables(str(tmp_path / sub), res, rows, EvalConfig(), [0, 1], ["rfid"])
        outs.append({p.rsplit("/", 1)[-1]: open(p).read() for p in paths})
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"results.csv", "normalized.csv", "summary.json", "fig5.dat"}
    doc = json.loads(outs[0]["summary.json"])
    assert "completed_cycles" in doc["pdp_definition"]


def test_reram_raises_write_energy():
    cfg = EvalConfig().with_nvm(RERAM)
    bld = build_scheme(prepare(bundled_benchmarks()["s27"], cfg), NV_BASED, cfg=cfg)
    assert bld.costs.write_energy == RERAM.write_energy_per_word


def test_load_benchmarks(tmp_path):
    (tmp_path / "tiny.bench").write_text("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\n")
    (tmp_path / "skip.txt").write_text("x")
    assert list(load_benchmarks(str(tmp_path))) == ["tiny"]
    assert list(load_benchmarks(str(tmp_path / "tiny.bench"))) == ["tiny"]


def test_all_bundled_parse_and_annotate():
    lib = GateLibrary.load()
    for name, g in bundled_benchmarks().items():
        assert g.combinational, name
        annotate(g, lib)
