"""Public simulator API: one-tick stepping, interrupts and whole-trace runs."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _pykernel
from .config import (OFF, P, S, SP, STATE_NAMES, EnergyConfig, HarvestTrace, PlanCosts,
                     initial_state)

ENERGY_CATEGORIES = ("sense", "compute", "transmit", "nvm_checkpoint", "backup", "restore")
_CAT_FIELDS = ("e_sense", "e_compute", "e_transmit", "e_nvm", "e_backup", "e_restore")

# cap for open-ended runs on cyclic traces (simulated ms)
MAX_RUN_MS = 2_000_000.0
CHUNK_TICKS = 20_000


def _kernel(backend: str | None):
    from . import kernel_module
    return kernel_module(backend)


def _stage_arrays(costs: PlanCosts):
    return (np.asarray(costs.stage_cost, dtype=np.float64),
            np.asarray(costs.stage_words, dtype=np.int_),
            np.asarray(costs.stage_live, dtype=np.int_))


@dataclass
class SimState:
    """Snapshot of the device: FSM state, Reg_Flag, stored energy and bookkeeping."""

    vec: np.ndarray
    seed: int = 0

    @classmethod
    def initial(cls, cfg: EnergyConfig, costs: PlanCosts | None = None, seed: int = 0,
                energy: float | None = None) -> "SimState":
        costs = costs or PlanCosts()
        if energy is not None:
            from dataclasses import replace
            cfg = replace(cfg, initial_energy_mJ=energy)
        return cls(initial_state(cfg, costs), seed)

    def copy(self) -> "SimState":
        return SimState(self.vec.copy(), self.seed)

    def __getitem__(self, name: str) -> float:
        return float(self.vec[S[name]])

    def set(self, **kw) -> "SimState":
        out = self.copy()
        for k, v in kw.items():
            out.vec[S[k]] = v
        return out

    @property
    def fsm(self) -> str:
        return STATE_NAMES[int(self.vec[S["fsm"]])]

    @property
    def reg_flag(self) -> int:
        return int(self.vec[S["reg"]])

    @property
    def energy(self) -> float:
        return float(self.vec[S["energy"]])

    @property
    def clock(self) -> float:
        return float(self.vec[S["clock"]])

    @property
    def pending(self) -> dict:
        return {k: float(self.vec[S[k]]) for k in ("seg", "seg_done", "seg_cost", "tr_done", "tr_cost")}

    @property
    def nvm_shadow(self) -> dict:
        return {k: float(self.vec[S[k]]) for k in ("sh_reg", "sh_seg", "sh_seg_done", "sh_words")}


def step(state: SimState, cfg: EnergyConfig, harvest_power: float,
         plan_costs: PlanCosts | None = None, backend: str | None = None) -> SimState:
    """Advance one tick with ``harvest_power`` mW available; returns a new state."""
    costs = plan_costs or PlanCosts()
    out = state.copy()
    sc, sw, sl = _stage_arrays(costs)
    _kernel(backend).run_ticks(cfg.params(costs), sc, sw, sl, out.seed, out.vec,
                               np.array([float(harvest_power)]))
    return out


def interrupt_timer(state: SimState, cfg: EnergyConfig) -> SimState:
    """Queue a sample (0b000 -> 0b100) and rearm the adaptive sampling timer."""
    out = state.copy()
    s = out.vec.tolist()
    _pykernel.timer_interrupt(s, cfg.params(PlanCosts()).tolist())
    out.vec[:] = s
    return out


def interrupt_power(state: SimState, cfg: EnergyConfig,
                    plan_costs: PlanCosts | None = None) -> SimState:
    """Back up the live registers and return to Sp, or fall to Off below Th_Off."""
    costs = plan_costs or PlanCosts()
    p = cfg.params(costs).tolist()
    out = state.copy()
    s = out.vec.tolist()
    _pykernel.power_interrupt(s, p, list(costs.stage_live))
    if s[S["energy"]] < p[P["th_off"]]:
        s[S["fsm"]] = OFF
        s[S["shutdowns"]] += 1
        s[S["reg"]] = 0
    out.vec[:] = s
    return out


@dataclass
class SimReport:
    completed_cycles: int
    nvm_word_writes: int
    backups: int
    restores: int
    shutdowns: int
    safe_zone_entries: int
    safe_zone_recoveries: int
    energy_spent_by_category: dict
    makespan: float
    ticks: int
    initial_energy: float
    final_energy: float
    harvested: float
    leaked: float
    spilled: float
    senses: int
    computes: int
    seed: int
    thresholds: dict
    target_reached: bool
    log: dict | None = field(default=None, repr=False)

    @property
    def energy_consumed(self) -> float:
        return sum(self.energy_spent_by_category.values())

    def conservation_error(self) -> float:
        return abs(self.initial_energy + self.harvested - self.energy_consumed - self.leaked
                   - self.final_energy)

    def to_json(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "log"}
        d["energy_consumed"] = self.energy_consumed
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    def log_csv(self) -> str:
        if self.log is None:
            raise ValueError("run was not logged")
        buf = io.StringIO()
        buf.write("tick,time_ms,state,reg,energy_mJ\n")
        for i, (t, f, r, e) in enumerate(zip(self.log["time"], self.log["fsm"],
                                             self.log["reg"], self.log["energy"])):
            buf.write(f"{i},{t:g},{STATE_NAMES[int(f)]},{int(r):03b},{e:.9f}\n")
        return buf.getvalue()

    def states(self) -> list[str]:
        return [STATE_NAMES[int(f)] for f in self.log["fsm"]]


def run(trace: HarvestTrace, cfg: EnergyConfig, plan_costs: PlanCosts | None = None,
        duration: float | None = None, target_cycles: int | None = None, seed: int = 0,
        log: bool = False, backend: str | None = None,
        initial: SimState | None = None) -> SimReport:
    """Simulate ``trace``; stops after ``duration`` ms or at ``target_cycles`` completions.

    Without a duration, a one-shot trace runs to its end and a cyclic trace
    runs until the target is met (capped at MAX_RUN_MS).
    """
    costs = plan_costs or PlanCosts()
    if trace.duration <= 0:
        raise ValueError("zero-duration trace")
    if duration is None:
        if trace.repeat and target_cycles:
            duration = MAX_RUN_MS
        else:
            duration = trace.duration
    total = int(round(duration / cfg.tick_ms))
    if total == 0:
        raise ValueError("zero-duration trace")
    p = cfg.params(costs, target_cycles or 0)
    state = initial.copy() if initial is not None else SimState.initial(cfg, costs, seed)
    state.seed = seed
    e0 = state.energy
    clock0 = state.clock
    sc, sw, sl = _stage_arrays(costs)
    kern = _kernel(backend)
    parts: dict[str, list] = {k: [] for k in ("fsm", "reg", "energy", "harvest")}
    n = 0
    while n < total:
        m = min(CHUNK_TICKS, total - n)
        harvest = trace.ticks(cfg.tick_ms, m * cfg.tick_ms, start=n)
        if len(harvest) == 0:
            break
        if log:
            buf = {k: np.zeros(len(harvest)) for k in ("fsm", "reg", "energy")}
            done = kern.run_ticks(p, sc, sw, sl, seed, state.vec, harvest,
                                  buf["fsm"], buf["reg"], buf["energy"])
            for k in buf:
                parts[k].append(buf[k][:done])
            parts["harvest"].append(harvest[:done])
        else:
            done = kern.run_ticks(p, sc, sw, sl, seed, state.vec, harvest)
        n += done
        if done < len(harvest) or len(harvest) < m:
            break  # target reached or one-shot trace exhausted
        if target_cycles and state["cycles"] >= target_cycles:
            break
    logs = None
    if log:
        logs = {k: np.concatenate(v) if v else np.zeros(0) for k, v in parts.items()}
        logs["time"] = clock0 + cfg.tick_ms * np.arange(1, n + 1)
    v = state.vec
    cycles = int(v[S["cycles"]])
    reached = bool(target_cycles) and cycles >= target_cycles
    makespan = float(v[S["makespan"]]) if reached else float(v[S["clock"]])
    return SimReport(
        completed_cycles=cycles,
        nvm_word_writes=int(round(v[S["writes"]])),
        backups=int(v[S["backups"]]),
        restores=int(v[S["restores"]]),
        shutdowns=int(v[S["shutdowns"]]),
        safe_zone_entries=int(v[S["sz_entries"]]),
        safe_zone_recoveries=int(v[S["sz_recoveries"]]),
        energy_spent_by_category={c: float(v[S[f]]) for c, f in zip(ENERGY_CATEGORIES, _CAT_FIELDS)},
        makespan=makespan,
        ticks=n,
        initial_energy=e0,
        final_energy=float(v[S["energy"]]),
        harvested=float(v[S["harvested"]]),
        leaked=float(v[S["leaked"]]),
        spilled=float(v[S["spilled"]]),
        senses=int(v[S["senses"]]),
        computes=int(v[S["computes"]]),
        seed=seed,
        thresholds=cfg.thresholds(costs),
        target_reached=reached,
        log=logs,
    )


def pdp(report: SimReport) -> float:
    """Per-task energy times per-task latency (mJ*ms); NaN when nothing completed."""
    if report.completed_cycles < 1:
        return math.nan
    c = report.completed_cycles
    return (report.energy_consumed / c) * (report.makespan / c)
