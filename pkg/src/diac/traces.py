"""Seeded harvesting-trace generators for evaluation ensembles."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .sim.config import HarvestTrace

FAMILIES = ("constant", "rfid", "fig4")


def bundled(name: str) -> HarvestTrace:
    """Load a trace shipped in ``diac/data/traces`` (e.g. ``fig4_reference``)."""
    text = resources.files("diac.data").joinpath("traces", f"{name}.csv").read_text()
    return HarvestTrace.from_csv(text, name)


def constant(seed: int, power_mW: float = 40.0, jitter: float = 0.1) -> HarvestTrace:
    rng = np.random.default_rng(seed)
    p = power_mW * (1.0 + jitter * rng.uniform(-1, 1))
    return HarvestTrace(((1000.0, float(p)),), repeat=True, name=f"constant-{seed}")


def rfid_burst(seed: int, on_mW: float = 150.0, period_ms: float = 100.0,
               duty: float = 0.35) -> HarvestTrace:
    """Square wave: a reader field that is present for ``duty`` of each period."""
    rng = np.random.default_rng(seed)
    period = round(period_ms * rng.uniform(0.8, 1.2))
    d = duty * rng.uniform(0.85, 1.15)
    on = max(1, round(period * d))
    return HarvestTrace(((float(on), on_mW), (float(period - on), 0.0)), repeat=True,
                        name=f"rfid-{seed}")


def fig4_like(seed: int, jitter: float = 0.1) -> HarvestTrace:
    """The reference scenario trace, cyclic, with segment lengths jittered by the seed."""
    base = bundled("fig4_reference")
    rng = np.random.default_rng(seed)
    segs = tuple((max(1.0, float(round(d * (1.0 + jitter * rng.uniform(-1, 1))))), p)
                 for d, p in base.segments)
    return HarvestTrace(segs, repeat=True, name=f"fig4-{seed}")


def make(family: str, seed: int) -> HarvestTrace:
    if family == "constant":
        return constant(seed)
    if family == "rfid":
        return rfid_burst(seed)
    if family == "fig4":
        return fig4_like(seed)
    raise ValueError(f"unknown trace family {family!r} (choose from {', '.join(FAMILIES)})")
