import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diac import traces
from diac.sim import (BACKEND, EnergyConfig, HarvestTrace, PlanCosts, SimState, interrupt_power,
                      interrupt_timer, kernel_module, pdp, run, step)
from diac.sim import _ckernel
from diac.sim.config import S

from reference_fsm import Device, Params

CFG = EnergyConfig()
BACKENDS = ["python"] + (["cython"] if _ckernel is not None else [])
ALLOWED = {(0, 0), (0, 4), (4, 4), (4, 2), (2, 2), (2, 1), (2, 0), (1, 1), (1, 0)}


def ref_params(cfg, costs, target_cycles=0):
    return Params(
        dt=cfg.tick_ms, e_max=cfg.e_max, leak_mW=cfg.leakage_mW, th=cfg.thresholds(costs),
        sense_mJ=cfg.sense_mJ, transmit_mJ=cfg.transmit_mJ,
        compute_mW=cfg.compute_mJ / cfg.compute_duration_ms,
        transmit_mW=cfg.transmit_mJ / cfg.transmit_duration_ms, spread=cfg.uncertainty,
        write_mJ=costs.write_energy, read_mJ=costs.read_energy, timer_ms=cfg.timer_interval_ms,
        target_mW=cfg.target_harvest_mW, sample_words=costs.sample_words,
        result_words=costs.result_words, stage_cost=list(costs.stage_cost),
        stage_words=list(costs.stage_words), stage_live=list(costs.stage_live),
        repeats=costs.repeats, transmit_every=costs.transmit_every, target_cycles=target_cycles)


def counters(rep):
    return dict(cycles=rep.completed_cycles, writes=rep.nvm_word_writes, backups=rep.backups,
                restores=rep.restores, shutdowns=rep.shutdowns, sz_entries=rep.safe_zone_entries,
                sz_recoveries=rep.safe_zone_recoveries)


def random_case(seed):
    r = random.Random(seed)
    n = r.randint(1, 3)
    costs = PlanCosts(tuple(r.uniform(0.5, 4.0) for _ in range(n)),
                      tuple(r.randint(0, 4) for _ in range(n)),
                      tuple(r.randint(0, 4) for _ in range(n)), r.randint(1, 3),
                      transmit_every=r.randint(1, 2),
                      write_energy=r.choice([0.001, 0.05, 0.2]), read_energy=0.0002)
    cfg = EnergyConfig(initial_energy_mJ=r.uniform(0, 25), safe_zone=r.random() < 0.5,
                       leakage_mW=r.uniform(0, 8))
    segs = tuple((r.randint(1, 40), r.choice([0.0, r.uniform(0, 120)]))
                 for _ in range(r.randint(1, 20)))
    return cfg, costs, HarvestTrace(segs), r.choice([0, 2])


# -- oracle equivalence -------------------------------------------------------

@pytest.mark.parametrize("backend", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2 ** 63 - 1))
def test_matches_reference_fsm(backend, seed):
    cfg, costs, trace, tc = random_case(seed)
    rep = run(trace, cfg, costs, seed=seed, log=True, target_cycles=tc, backend=backend)
    dev = Device(ref_params(cfg, costs, tc), seed, cfg.initial_energy_mJ)
    ref = dev.run(trace.ticks(cfg.tick_ms))
    got = list(zip(rep.states(), rep.log["reg"].astype(int).tolist(), rep.log["energy"].tolist()))
    assert got == ref
    assert counters(rep) == dev.counts
    if tc and dev.counts["cycles"] >= tc:
        assert rep.makespan == dev.makespan


@pytest.mark.parametrize("name", ["fig4_reference", "safe_zone_dips"])
def test_bundled_traces_match_reference(name):
    trace = traces.bundled(name)
    rep = run(trace, CFG, log=True)
    dev = Device(ref_params(CFG, PlanCosts()), 0, CFG.initial_energy_mJ)
    assert [s for s, _, _ in dev.run(trace.ticks(CFG.tick_ms))] == rep.states()
    assert counters(rep) == dev.counts


@pytest.mark.skipif(_ckernel is None, reason="compiled kernel not built")
@pytest.mark.parametrize("seed", range(40))
def test_kernels_bit_identical(seed):
    cfg, costs, trace, tc = random_case(seed)
    a = run(trace, cfg, costs, seed=seed, log=True, target_cycles=tc, backend="python")
    b = run(trace, cfg, costs, seed=seed, log=True, target_cycles=tc, backend="cython")
    assert a.dumps() == b.dumps()
    for k in ("fsm", "reg", "energy"):
        assert np.array_equal(a.log[k], b.log[k])


def test_backend_selection():
    assert BACKEND in ("python", "cython")
    assert kernel_module("python").__name__.endswith("_pykernel")
    with pytest.raises(ValueError):
        kernel_module("fortran")


# -- invariants on the tick log ----------------------------------------------

@pytest.mark.parametrize("seed", range(30))
def test_log_invariants(seed):
    cfg, costs, trace, _ = random_case(seed)
    rep = run(trace, cfg, costs, seed=seed, log=True)
    th = rep.thresholds
    e, reg, h = rep.log["energy"], rep.log["reg"].astype(int), rep.log["harvest"]
    states = rep.states()
    assert np.all(e >= 0) and np.all(e <= cfg.e_max)
    prev_reg, prev_s = 0, "Off" if rep.initial_energy < th["Th_Off"] else "Sp"
    prev_e = rep.initial_energy
    for i, s in enumerate(states):
        step_ok = (prev_reg, reg[i]) in ALLOWED
        # timer fire and sense inside one tick; restore reloads the shadow; shutdown clears
        step_ok |= s == "Se" and (prev_reg, reg[i]) == (0, 2)
        step_ok |= prev_s == "Off" or s == "Off"
        assert step_ok, (i, prev_reg, reg[i], s)
        # energy available at the start of the tick, before any work
        avail = prev_e - min(cfg.leakage_mW * cfg.tick_ms * 1e-3, prev_e)
        avail += min(h[i] * cfg.tick_ms * 1e-3, cfg.e_max - avail)
        if s == "Se":
            assert avail > th["Th_Se"]
        if s in ("Cp", "Tr") and (i == 0 or states[i - 1] != s):
            assert avail > th["Th_" + s]
        if s == "Bk":
            assert e[i] < th["Th_Bk"]
        prev_reg, prev_s, prev_e = reg[i], s, e[i]


def test_reg_restored_after_off_keeps_order():
    rep = run(traces.bundled("fig4_reference"), CFG, log=True)
    reg = rep.log["reg"].astype(int)
    states = rep.states()
    for i in range(1, len(reg)):
        a, b = reg[i - 1], reg[i]
        assert (a, b) in ALLOWED or (a, b) == (0, 2) and states[i] == "Se" \
            or "Off" in (states[i - 1], states[i])


def test_determinism():
    cfg, costs, trace, _ = random_case(3)
    assert run(trace, cfg, costs, seed=11).dumps() == run(trace, cfg, costs, seed=11).dumps()
    assert json.loads(run(trace, cfg, costs, seed=11).dumps())["seed"] == 11


# -- step examples -------------------------------------------------------------

def test_sense_from_full_store():
    s0 = SimState.initial(CFG, energy=25.0).set(reg=4)
    s1 = step(s0, CFG, 0.0)
    assert s1.fsm == "Sp" and s1.reg_flag == 0b010
    spent = 25.0 - CFG.leakage_mW * 1e-3 - s1.energy
    assert 2.0 * 0.9 - 1e-12 <= spent <= 2.0 * 1.1 + 1e-12


def test_compute_dip_reverts_without_writes():
    th = CFG.thresholds()
    s = SimState.initial(CFG, energy=th["Th_Safe_Zone"] + 0.5).set(reg=2, fsm=2)
    for _ in range(3):
        s = step(s, CFG, 0.0)
    assert s.fsm == "Sp" and s.reg_flag == 0b010
    assert s["writes"] == 0 and s.energy < th["Th_Safe_Zone"]


def test_clamp_at_e_max():
    s = step(SimState.initial(CFG, energy=25.0), CFG, 1000.0)
    assert s.energy == pytest.approx(25.0) and s.energy <= CFG.e_max
    assert s["spilled"] > 0


def test_off_charges_and_wakes():
    s = SimState.initial(CFG, energy=0.0)
    assert s.fsm == "Off"
    s = step(s, CFG, 300.0)
    assert s.energy == pytest.approx(0.3) and s.fsm == "Off"  # leak capped at the empty store
    s = step(s, CFG, 300.0)
    assert s.fsm == "Sp" and s["restores"] == 0  # cold boot: nothing in NVM


# -- interrupts ----------------------------------------------------------------

def test_interrupt_timer():
    s = SimState.initial(CFG, energy=10.0)
    s1 = interrupt_timer(s, CFG)
    assert s1.reg_flag == 0b100
    assert interrupt_timer(s1, CFG).reg_flag == 0b100
    assert interrupt_timer(s.set(reg=2), CFG).reg_flag == 0b010
    # no harvest seen: interval stretched to the 10x cap
    assert s1["timer_rem"] == pytest.approx(10 * CFG.timer_interval_ms)


def test_adaptive_interval_range():
    s = SimState.initial(CFG, energy=10.0).set(harvest_sum=400.0, ticks=10)
    assert interrupt_timer(s, CFG)["timer_rem"] == pytest.approx(CFG.timer_interval_ms)
    s = s.set(harvest_sum=100.0)
    assert interrupt_timer(s, CFG)["timer_rem"] == pytest.approx(2 * CFG.timer_interval_ms)


def test_interrupt_power_backup_words():
    costs = PlanCosts()
    idle = interrupt_power(SimState.initial(CFG, energy=0.505), CFG, costs)
    assert idle.fsm == "Sp" and idle["writes"] == 1 and idle["backups"] == 1
    busy = interrupt_power(SimState.initial(CFG, energy=0.505).set(reg=2, seg_done=0.5), CFG, costs)
    assert busy["writes"] == 1 + costs.sample_words + costs.stage_live[0]
    assert busy.nvm_shadow["sh_reg"] == 2
    tx = interrupt_power(SimState.initial(CFG, energy=0.505).set(reg=1), CFG, costs)
    assert tx["writes"] == 1 + costs.result_words


def test_interrupt_power_to_off():
    costs = PlanCosts(write_energy=0.01)
    s = interrupt_power(SimState.initial(CFG, energy=0.505).set(reg=2), CFG, costs)
    assert s.fsm == "Off" and s["shutdowns"] == 1


# -- run examples --------------------------------------------------------------

def test_constant_surplus():
    rep = run(HarvestTrace(((2000, 200.0),)), CFG)
    assert rep.completed_cycles > 0 and rep.backups == 0 and rep.nvm_word_writes == 0


def test_zero_harvest_one_backup_one_shutdown():
    amplified = PlanCosts(stage_cost=(4.0,), repeats=30)
    rep = run(HarvestTrace(((5000, 0.0),)), EnergyConfig(initial_energy_mJ=25.0), amplified)
    assert (rep.completed_cycles, rep.backups, rep.shutdowns) == (0, 1, 1)
    assert rep.nvm_word_writes > 0


def test_safe_zone_dips():
    rep = run(traces.bundled("safe_zone_dips"), CFG)
    assert rep.safe_zone_entries == 3 and rep.safe_zone_recoveries == 3
    assert rep.backups == 0 and rep.nvm_word_writes == 0


def test_fig4_reference_narrative():
    rep = run(traces.bundled("fig4_reference"), CFG, log=True)
    assert rep.backups == 2 and rep.shutdowns == 1 and rep.restores == 1
    assert rep.safe_zone_entries == 5 and rep.spilled > 0
    assert max(rep.log["energy"]) == pytest.approx(CFG.e_max)
    states = rep.states()
    first_bk = states.index("Bk")
    assert states[first_bk + 1] == "Off"
    last_bk = len(states) - 1 - states[::-1].index("Bk")
    assert "Off" not in states[last_bk:]  # harvest returned before Th_Off
    assert (rep.nvm_word_writes == 0) == (rep.backups == 0)


def test_target_cycles_and_makespan():
    trace = HarvestTrace(((100, 200.0),), repeat=True)
    rep = run(trace, CFG, target_cycles=3)
    assert rep.completed_cycles == 3 and rep.target_reached
    assert rep.makespan == rep.ticks * CFG.tick_ms
    assert math.isfinite(pdp(rep)) and pdp(rep) > 0


def test_categories_sum():
    rep = run(traces.bundled("fig4_reference"), CFG)
    assert abs(sum(rep.energy_spent_by_category.values()) - rep.energy_consumed) < 1e-6
    assert rep.conservation_error() <= 1e-9


def test_pdp_nan_without_cycles():
    rep = run(HarvestTrace(((10, 0.0),)), CFG)
    assert rep.completed_cycles == 0 and math.isnan(pdp(rep))


def test_log_csv():
    rep = run(HarvestTrace(((5, 100.0),)), EnergyConfig(initial_energy_mJ=20.0), log=True)
    lines = rep.log_csv().splitlines()
    assert lines[0] == "tick,time_ms,state,reg,energy_mJ" and len(lines) == 6
    with pytest.raises(ValueError):
        run(HarvestTrace(((5, 1.0),)), CFG).log_csv()


# -- configuration and traces --------------------------------------------------

def test_thresholds_and_e_max():
    th = CFG.thresholds()
    assert th["Th_Off"] < th["Th_Bk"] < th["Th_Safe_Zone"] <= min(th["Th_Se"], th["Th_Cp"], th["Th_Tr"])
    assert th["Th_Safe_Zone"] == pytest.approx(th["Th_Bk"] + 2.0)
    assert th["Th_Se"] == pytest.approx(th["Th_Safe_Zone"] + 2.2)
    assert abs(CFG.e_max - 25.0) / 25.0 < 1e-9
    off = CFG.with_safe_zone(False).thresholds()
    assert off["Th_Safe_Zone"] == off["Th_Bk"]
    with pytest.raises(ValueError):
        EnergyConfig(th_bk=0.1).thresholds()
    with pytest.raises(ValueError):
        EnergyConfig(th_tr=30.0).thresholds()
    assert EnergyConfig.from_json(json.loads(json.dumps(CFG.to_json()))) == CFG


def test_trace_csv():
    text = "# reference\nduration_ms,power_mW,repeat=true\n10,5\n20, 0\n"
    tr = HarvestTrace.from_csv(text)
    assert tr.repeat and tr.segments == ((10.0, 5.0), (20.0, 0.0)) and tr.duration == 30
    assert HarvestTrace.from_csv(tr.to_csv()) == HarvestTrace(tr.segments, True, "trace")
    assert list(tr.ticks(10.0, 60.0)) == [5.0, 0.0, 0.0, 5.0, 0.0, 0.0]
    assert list(HarvestTrace(((2, 1.0),)).ticks(1.0, 5.0)) == [1.0, 1.0]
    assert not HarvestTrace.from_csv("1,2\n").repeat


@pytest.mark.parametrize("bad", [((0, 1.0),), ((5, -1.0),)])
def test_trace_rejects(bad):
    with pytest.raises(ValueError):
        HarvestTrace(bad)


def test_zero_duration_errors():
    with pytest.raises(ValueError, match="zero-duration"):
        HarvestTrace.from_csv("# nothing\n")
    with pytest.raises(ValueError, match="zero-duration"):
        run(HarvestTrace(((5, 1.0),)), CFG, duration=0.0)


@pytest.mark.parametrize("family", traces.FAMILIES)
def test_trace_families_deterministic(family):
    a, b = traces.make(family, 4), traces.make(family, 4)
    assert a == b and a != traces.make(family, 5)
    assert all(p >= 0 for _, p in a.segments)
    assert a.repeat
