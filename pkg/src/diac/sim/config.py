"""Energy configuration, harvesting traces and per-plan cost descriptors."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

# FSM codes shared by both kernels
SP, SE, CP, TR, BK, OFF = range(6)
STATE_NAMES = ("Sp", "Se", "Cp", "Tr", "Bk", "Off")
REG_SENSE, REG_COMPUTE, REG_TRANSMIT = 0b100, 0b010, 0b001

STATE_FIELDS = (
    "fsm", "reg", "energy", "seg", "seg_done", "seg_cost", "tr_done", "tr_cost",
    "timer_rem", "harvest_sum", "ticks", "draws", "clock", "armed",
    "sh_reg", "sh_seg", "sh_seg_done", "sh_seg_cost", "sh_tr_done", "sh_tr_cost", "sh_words",
    "in_sz", "sz_mark", "since_tx", "prev_energy",
    # counters
    "cycles", "writes", "backups", "restores", "shutdowns", "sz_entries", "sz_recoveries",
    "e_sense", "e_compute", "e_transmit", "e_nvm", "e_backup", "e_restore",
    "leaked", "harvested", "spilled", "makespan", "senses", "computes",
)
PARAM_FIELDS = (
    "dt", "e_max", "leak", "th_off", "th_bk", "th_sz", "th_se", "th_cp", "th_tr",
    "cost_se", "cost_tr", "cp_rate", "tr_rate", "unc", "write_e", "read_e",
    "timer_base", "target_rate", "sample_words", "result_words", "n_stages", "repeats",
    "transmit_every", "target_cycles",
)
S = {n: i for i, n in enumerate(STATE_FIELDS)}
P = {n: i for i, n in enumerate(PARAM_FIELDS)}


@dataclass(frozen=True)
class PlanCosts:
    """What one compute operation costs for a given NV-enhanced design.

    The compute op runs ``repeats`` passes over ``stage_cost``; closing a
    stage writes ``stage_words`` NVM words, and a backup taken inside a stage
    saves ``stage_live`` words of intermediate state.
    """

    stage_cost: tuple[float, ...] = (4.0,)
    stage_words: tuple[int, ...] = (0,)
    stage_live: tuple[int, ...] = (2,)
    repeats: int = 1
    sample_words: int = 2
    result_words: int = 1
    transmit_every: int = 1
    write_energy: float = 0.001
    read_energy: float = 0.0002

    def __post_init__(self):
        n = len(self.stage_cost)
        if n == 0 or len(self.stage_words) != n or len(self.stage_live) != n:
            raise ValueError("stage arrays must be non-empty and equally long")
        if self.repeats < 1 or self.transmit_every < 1:
            raise ValueError("repeats and transmit_every must be >= 1")

    def max_segment(self) -> float:
        return max(c + w * self.write_energy for c, w in zip(self.stage_cost, self.stage_words))

    def full_backup_words(self) -> int:
        return 1 + max(self.sample_words + max(self.stage_live), self.result_words)

    def compute_energy(self) -> float:
        per_pass = sum(c + w * self.write_energy for c, w in zip(self.stage_cost, self.stage_words))
        return per_pass * self.repeats


@dataclass(frozen=True)
class EnergyConfig:
    capacitance_mF: float = 2.0
    voltage_V: float = 5.0
    leakage_mW: float = 5.0
    tick_ms: float = 1.0
    sense_mJ: float = 2.0
    compute_mJ: float = 4.0
    transmit_mJ: float = 9.0
    uncertainty: float = 0.1
    compute_duration_ms: float = 2.0
    transmit_duration_ms: float = 5.0
    timer_interval_ms: float = 10.0
    target_harvest_mW: float = 20.0
    initial_energy_mJ: float = 0.0
    th_off: float = 0.5
    safe_margin: float = 2.0
    safe_zone: bool = True
    # explicit overrides; None means derived
    th_bk: float | None = None
    th_se: float | None = None
    th_cp: float | None = None
    th_tr: float | None = None

    @property
    def e_max(self) -> float:
        # mF * V^2 = mJ
        return 0.5 * self.capacitance_mF * self.voltage_V ** 2

    def thresholds(self, costs: PlanCosts | None = None) -> dict[str, float]:
        costs = costs or PlanCosts()
        bk = self.th_bk if self.th_bk is not None else \
            self.th_off + 1.2 * costs.full_backup_words() * costs.write_energy
        sz = bk + self.safe_margin if self.safe_zone else bk
        cp_unit = costs.max_segment()
        th = {
            "Th_Off": self.th_off, "Th_Bk": bk, "Th_Safe_Zone": sz,
            "Th_Se": self.th_se if self.th_se is not None else sz + 1.1 * self.sense_mJ,
            "Th_Cp": self.th_cp if self.th_cp is not None else sz + 1.1 * cp_unit,
            "Th_Tr": self.th_tr if self.th_tr is not None else sz + 1.1 * self.transmit_mJ,
        }
        if not th["Th_Off"] < th["Th_Bk"] <= th["Th_Safe_Zone"]:
            raise ValueError(f"threshold ordering violated: {th}")
        if max(th["Th_Se"], th["Th_Cp"], th["Th_Tr"]) > self.e_max:
            raise ValueError(f"a state threshold exceeds E_MAX={self.e_max}: {th}")
        if min(th["Th_Se"], th["Th_Cp"], th["Th_Tr"]) < sz:
            raise ValueError("state thresholds must not be below the safe zone")
        return th

    def params(self, costs: PlanCosts, target_cycles: int = 0) -> np.ndarray:
        th = self.thresholds(costs)
        vals = {
            "dt": self.tick_ms, "e_max": self.e_max, "leak": self.leakage_mW,
            "th_off": th["Th_Off"], "th_bk": th["Th_Bk"], "th_sz": th["Th_Safe_Zone"],
            "th_se": th["Th_Se"], "th_cp": th["Th_Cp"], "th_tr": th["Th_Tr"],
            "cost_se": self.sense_mJ, "cost_tr": self.transmit_mJ,
            "cp_rate": self.compute_mJ / self.compute_duration_ms,
            "tr_rate": self.transmit_mJ / self.transmit_duration_ms,
            "unc": self.uncertainty, "write_e": costs.write_energy, "read_e": costs.read_energy,
            "timer_base": self.timer_interval_ms, "target_rate": self.target_harvest_mW,
            "sample_words": costs.sample_words, "result_words": costs.result_words,
            "n_stages": len(costs.stage_cost), "repeats": costs.repeats,
            "transmit_every": costs.transmit_every, "target_cycles": target_cycles,
        }
        return np.array([float(vals[k]) for k in PARAM_FIELDS])

    def with_safe_zone(self, enabled: bool) -> "EnergyConfig":
        return replace(self, safe_zone=enabled)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "EnergyConfig":
        return cls(**doc)

    @classmethod
    def load(cls, path: str) -> "EnergyConfig":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class HarvestTrace:
    segments: tuple[tuple[float, float], ...]
    repeat: bool = False
    name: str = "trace"

    def __post_init__(self):
        for d, p in self.segments:
            if d <= 0:
                raise ValueError("segment durations must be > 0")
            if p < 0:
                raise ValueError("harvest power must be >= 0")

    @property
    def duration(self) -> float:
        return sum(d for d, _ in self.segments)

    def ticks(self, dt: float, duration: float | None = None, start: int = 0) -> np.ndarray:
        """Per-tick harvest power (mW), sampled at each tick's start time.

        ``start`` skips that many ticks, so long runs can be generated in chunks.
        """
        if self.duration <= 0:
            raise ValueError("zero-duration trace")
        if duration is None:
            duration = self.duration
        n = int(round(duration / dt))
        ends = np.cumsum([d for d, _ in self.segments])
        powers = np.array([p for _, p in self.segments], dtype=float)
        t = (start + np.arange(n)) * dt
        if self.repeat:
            t = np.mod(t, ends[-1])
        elif n and t[-1] >= ends[-1]:
            t = t[t < ends[-1]]
        idx = np.searchsorted(ends, t, side="right")
        return powers[np.minimum(idx, len(powers) - 1)]

    @classmethod
    def from_csv(cls, text: str, name: str = "trace") -> "HarvestTrace":
        repeat = False
        rows = []
        for line in text.splitlines():
            s = line.strip()
            if not s:
                continue
            if s.startswith("#"):
                if "repeat=true" in s.replace(" ", "").lower():
                    repeat = True
                continue
            low = s.lower().replace(" ", "")
            if low.startswith("duration"):
                if "repeat=true" in low:
                    repeat = True
                continue
            rows.append(s)
        segs = []
        for rec in csv.reader(io.StringIO("\n".join(rows))):
            segs.append((float(rec[0]), float(rec[1])))
        if not segs:
            raise ValueError("zero-duration trace")
        return cls(tuple(segs), repeat, name)

    @classmethod
    def load(cls, path: str) -> "HarvestTrace":
        with open(path) as fh:
            return cls.from_csv(fh.read(), path.rsplit("/", 1)[-1].rsplit(".", 1)[0])

    def to_csv(self) -> str:
        head = "duration_ms,power_mW" + (",repeat=true" if self.repeat else "")
        return head + "\n" + "\n".join(f"{d:g},{p:g}" for d, p in self.segments) + "\n"


def initial_state(cfg: EnergyConfig, costs: PlanCosts) -> np.ndarray:
    s = np.zeros(len(STATE_FIELDS))
    th = cfg.thresholds(costs)
    e = min(cfg.initial_energy_mJ, cfg.e_max)
    s[S["energy"]] = e
    s[S["prev_energy"]] = e
    s[S["fsm"]] = SP if e >= th["Th_Off"] else OFF
    s[S["reg"]] = 0
    s[S["seg_cost"]] = -1.0
    s[S["tr_cost"]] = -1.0
    s[S["sh_seg_cost"]] = -1.0
    s[S["sh_tr_cost"]] = -1.0
    s[S["sh_words"]] = 0.0  # cold boot: nothing to restore
    s[S["timer_rem"]] = cfg.timer_interval_ms
    s[S["armed"]] = 1.0 if e >= th["Th_Bk"] else 0.0
    s[S["makespan"]] = -1.0
    return s
