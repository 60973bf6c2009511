"""Tick-level simulator of the intermittent-aware power-management FSM.

The hot loop lives in a compiled Cython kernel when it is available and in a
pure-Python kernel otherwise.  Both produce bit-identical results.  Set
``DIAC_KERNEL=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pykernel

try:
    from . import _ckernel
except ImportError:  # not built
    _ckernel = None

BACKEND = "cython" if _ckernel is not None and os.environ.get("DIAC_KERNEL") != "python" else "python"


def kernel_module(name: str | None = None):
    name = name or BACKEND
    if name == "python":
        return _pykernel
    if name == "cython":
        if _ckernel is None:
            raise ImportError("compiled kernel not built; reinstall with Cython available")
        return _ckernel
    raise ValueError(f"unknown backend {name!r}")


from .config import (BK, CP, OFF, SE, SP, TR, STATE_NAMES, EnergyConfig, HarvestTrace,  # noqa: E402
                     PlanCosts)
from .core import (SimReport, SimState, interrupt_power, interrupt_timer, pdp, run,  # noqa: E402
                   step)

__all__ = ["BACKEND", "kernel_module", "EnergyConfig", "HarvestTrace", "PlanCosts", "SimState",
           "SimReport", "step", "run", "interrupt_timer", "interrupt_power", "pdp",
           "SP", "SE", "CP", "TR", "BK", "OFF", "STATE_NAMES"]
