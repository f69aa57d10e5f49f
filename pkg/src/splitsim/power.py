"""GOPS-based power model for virtual small cells and the macro site.

Every base station is split into an RF front end, a power amplifier and a
baseband (BB) unit.  BB effort is expressed in GOPS and converted to Watts
with a fixed GOPS-per-Watt efficiency.  A vSC in PHY-RF mode runs only RF+PA
locally and its BB moves to the macro site; in MAC-PHY mode the BB stays
local.  Site overhead (cooling, losses) is a multiplicative factor on the
site total.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class OperativeMode(IntEnum):
    """Per-slot operative mode of a vSC. Integer codes double as actions."""

    OFF = 0
    PHY_RF = 1
    MAC_PHY = 2


N_MODES = 3


@dataclass(frozen=True)
class PowerModelParams:
    """Electrical parameters of the cells and the macro site.

    BB figures are split into a static part and a part scaling linearly
    with load fraction; both are in GOPS and divided by gops_per_watt to
    get Watts.
    """

    gops_per_watt: float = 8.0
    vsc_bb_static_gops: float = 440.0
    vsc_bb_load_gops: float = 60.0
    mbs_bb_static_gops: float = 630.0
    mbs_bb_load_gops: float = 215.0
    vsc_rf_w: float = 2.6
    vsc_pa_w: float = 71.4
    mbs_rf_w: float = 9.18
    mbs_pa_w: float = 1100.0
    vsc_overhead_frac: float = 0.0
    mbs_overhead_frac: float = 0.10

    def __post_init__(self):
        if self.gops_per_watt <= 0:
            raise ValueError("gops_per_watt must be positive")
        for name in (
            "vsc_bb_static_gops", "vsc_bb_load_gops", "mbs_bb_static_gops",
            "mbs_bb_load_gops", "vsc_rf_w", "vsc_pa_w", "mbs_rf_w",
            "mbs_pa_w", "vsc_overhead_frac", "mbs_overhead_frac",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def gops_to_watts(gops, params: PowerModelParams = PowerModelParams()):
    """Convert a BB effort in GOPS to Watts."""
    if np.any(np.asarray(gops) < 0):
        raise ValueError("gops must be >= 0")
    return gops / params.gops_per_watt


def _check_fraction(value, name):
    arr = np.asarray(value)
    if np.any(arr < 0) or np.any(arr > 1):
        raise ValueError(f"{name} must lie in [0, 1]")


def vsc_power(mode, load_fraction: float, params: PowerModelParams = PowerModelParams()) -> float:
    """Power drawn from a vSC's battery in the given mode, in Watts.

    Off cells draw nothing.  PHY-RF keeps RF+PA local but not the BB.
    MAC-PHY adds the full BB (static + load-dependent) on top.
    """
    _check_fraction(load_fraction, "load_fraction")
    mode = OperativeMode(mode)
    if mode is OperativeMode.OFF:
        return 0.0
    total = params.vsc_rf_w + params.vsc_pa_w
    if mode is OperativeMode.MAC_PHY:
        bb = params.vsc_bb_static_gops + params.vsc_bb_load_gops * load_fraction
        total += bb / params.gops_per_watt
    return total * (1.0 + params.vsc_overhead_frac)


def mbs_site_power(mbs_load_fraction: float, offloaded,
                   params: PowerModelParams = PowerModelParams()) -> float:
    """Grid power of the macro site, including BB it hosts for PHY-RF vSCs.

    `offloaded` is an iterable of (vsc_load_fraction, mode) pairs; only
    PHY-RF entries contribute (their BB runs here), Off/MAC-PHY entries are
    ignored.  Overhead multiplies the whole site sum.
    """
    _check_fraction(mbs_load_fraction, "mbs_load_fraction")
    bb = params.mbs_bb_static_gops + params.mbs_bb_load_gops * mbs_load_fraction
    total = params.mbs_rf_w + params.mbs_pa_w + bb / params.gops_per_watt
    for load_fraction, mode in offloaded:
        _check_fraction(load_fraction, "vsc_load_fraction")
        if OperativeMode(mode) is OperativeMode.PHY_RF:
            vsc_bb = params.vsc_bb_static_gops + params.vsc_bb_load_gops * load_fraction
            total += vsc_bb / params.gops_per_watt
    return total * (1.0 + params.mbs_overhead_frac)


# ---------------------------------------------------------------------------
# Array forms used by the simulator and the off-line solver.  Same arithmetic
# as the scalar functions, broadcast over leading batch dimensions.

def vsc_power_array(modes, load_fractions, params: PowerModelParams) -> np.ndarray:
    """vsc_power over arrays: modes (..., N) int, load_fractions broadcastable."""
    modes = np.asarray(modes)
    load = np.asarray(load_fractions, dtype=float)
    bb = (params.vsc_bb_static_gops + params.vsc_bb_load_gops * load) / params.gops_per_watt
    active = params.vsc_rf_w + params.vsc_pa_w
    out = np.where(modes == OperativeMode.MAC_PHY, active + bb,
                   np.where(modes == OperativeMode.PHY_RF, active, 0.0))
    return out * (1.0 + params.vsc_overhead_frac)


def mbs_site_power_array(mbs_load_fraction, modes, load_fractions,
                         params: PowerModelParams) -> np.ndarray:
    """mbs_site_power over arrays: modes (..., N), vSC loads broadcastable."""
    modes = np.asarray(modes)
    load = np.asarray(load_fractions, dtype=float)
    frac = np.asarray(mbs_load_fraction, dtype=float)
    bb = params.mbs_bb_static_gops + params.mbs_bb_load_gops * frac
    hosted = np.where(
        modes == OperativeMode.PHY_RF,
        params.vsc_bb_static_gops + params.vsc_bb_load_gops * load, 0.0,
    ).sum(axis=-1)
    total = params.mbs_rf_w + params.mbs_pa_w + (bb + hosted) / params.gops_per_watt
    return total * (1.0 + params.mbs_overhead_frac)
