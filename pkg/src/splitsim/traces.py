"""Synthetic solar-harvest and traffic traces, plus CSV import/export.

Solar slots follow a half-sinusoid daylight bell whose height and daylight
window swing with the season; cloudiness enters as multiplicative day-level
lognormal noise (shared by all cells, same sky) plus smaller per-cell hourly
jitter.  Traffic follows a 24x7 weekly shape table per profile scaled to a
peak demand derived from the user mix, with per-slot normal perturbation
clipped at zero.  Generators are pure functions of (config, seed).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from importlib import resources

import numpy as np

DAYS_PER_YEAR = 365
MB_PER_HR_TO_MBPS = 8.0 / 3600.0


class Profile(Enum):
    RESIDENTIAL = "residential"
    OFFICE = "office"


class TraceParseError(ValueError):
    """Malformed trace file (bad header, ragged row, non-numeric field)."""


class TraceValidationError(ValueError):
    """Structurally valid trace with impossible content (negative entries)."""


def load_weekly_shape(profile: Profile) -> np.ndarray:
    """Return the built-in 24x7 shape table (hours x days, Monday first)."""
    fname = f"{profile.value}_weekly.csv"
    text = resources.files("splitsim.data").joinpath(fname).read_text()
    rows = list(csv.reader(text.strip().splitlines()))
    table = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    if table.shape != (24, 7):
        raise TraceParseError(f"{fname}: expected 24x7 table, got {table.shape}")
    return table


@dataclass(frozen=True)
class SolarConfig:
    """Panel geometry plus the seasonal/daily irradiance model knobs.

    The daylight window and the clear-sky scale are interpolated between
    their winter and summer extremes over the year.  One slot can never
    yield more than cap_wh = panel_area * peak density * slot_duration.
    """

    panel_area_m2: float = 4.48
    panel_peak_w_m2: float = 186.0
    season_amplitude: float = 0.75   # winter clear-sky scale is 1 - amplitude
    daily_variability_sd: float = 0.45
    slot_hours: float = 1.0
    winter_sunrise: float = 7.0
    winter_sunset: float = 17.0
    summer_sunrise: float = 5.0
    summer_sunset: float = 19.0
    summer_peak_day: int = 171       # day of year with longest daylight

    def __post_init__(self):
        if self.panel_area_m2 <= 0 or self.panel_peak_w_m2 <= 0:
            raise ValueError("panel area and peak density must be positive")
        if not 0.0 <= self.season_amplitude <= 1.0:
            raise ValueError("season_amplitude must lie in [0, 1]")
        if self.daily_variability_sd < 0:
            raise ValueError("daily_variability_sd must be >= 0")
        if self.slot_hours <= 0:
            raise ValueError("slot_hours must be positive")
        if not (self.winter_sunrise < self.winter_sunset
                and self.summer_sunrise < self.summer_sunset):
            raise ValueError("sunrise must precede sunset")

    @property
    def cap_wh(self) -> float:
        return self.panel_area_m2 * self.panel_peak_w_m2 * self.slot_hours


@dataclass(frozen=True)
class TrafficConfig:
    """User mix and temporal shape of the offered traffic.

    peak_mbps is the calibrated per-cell peak: the aggregate demand of the
    user mix (user_peak_mbps) times demand_scale.  demand_scale maps raw
    subscriber potential onto what a cell actually sees on air; the default
    keeps the peak below a 37.5 Mb/s cell so the scenario is feasible with
    every cell serving.  The MBS's own macro users follow the same shape
    scaled by mbs_peak_scale.
    """

    profile: Profile = Profile.RESIDENTIAL
    users_per_vsc: int = 90
    heavy_ratio: float = 0.5
    heavy_rate_mb_hr: float = 900.0
    ordinary_rate_mb_hr: float = 112.5
    weekly_shape: tuple | None = None   # 24x7 rows; None = built-in for profile
    noise_sd: float = 0.25
    demand_scale: float = 0.36
    mbs_peak_scale: float = 3.0

    def __post_init__(self):
        if not 0.0 <= self.heavy_ratio <= 1.0:
            raise ValueError("heavy_ratio must lie in [0, 1]")
        if self.heavy_rate_mb_hr < 0 or self.ordinary_rate_mb_hr < 0:
            raise ValueError("rates must be >= 0")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.users_per_vsc <= 0:
            raise ValueError("users_per_vsc must be positive")
        if self.demand_scale < 0 or self.mbs_peak_scale < 0:
            raise ValueError("scales must be >= 0")
        if self.weekly_shape is not None:
            shape = np.asarray(self.weekly_shape, dtype=float)
            if shape.shape != (24, 7):
                raise ValueError("weekly_shape must be 24x7")
            if shape.min() < 0 or shape.max() > 1:
                raise ValueError("shape multipliers must lie in [0, 1]")
            if shape.max() != 1.0:
                raise ValueError("shape table must peak at exactly 1")
            object.__setattr__(self, "weekly_shape",
                               tuple(tuple(row) for row in shape))

    def shape_table(self) -> np.ndarray:
        if self.weekly_shape is None:
            return load_weekly_shape(self.profile)
        return np.asarray(self.weekly_shape, dtype=float)

    @property
    def user_peak_mbps(self) -> float:
        """Aggregate subscriber demand if everyone pulls at once, in Mb/s."""
        heavy = self.users_per_vsc * self.heavy_ratio * self.heavy_rate_mb_hr
        ordinary = self.users_per_vsc * (1.0 - self.heavy_ratio) * self.ordinary_rate_mb_hr
        return (heavy + ordinary) * MB_PER_HR_TO_MBPS

    @property
    def peak_mbps(self) -> float:
        return self.user_peak_mbps * self.demand_scale

    @property
    def mbs_peak_mbps(self) -> float:
        return self.peak_mbps * self.mbs_peak_scale


@dataclass
class TraceSet:
    """One scenario's worth of aligned traces.

    harvest[i, t] is Wh collected by cell i during slot t; vsc_load[i, t]
    the offered Mb/s at cell i; mbs_load[t] the macro users' own Mb/s.
    """

    harvest: np.ndarray
    vsc_load: np.ndarray
    mbs_load: np.ndarray
    slot_hours: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        self.harvest = np.asarray(self.harvest, dtype=float)
        self.vsc_load = np.asarray(self.vsc_load, dtype=float)
        self.mbs_load = np.asarray(self.mbs_load, dtype=float)
        if self.harvest.ndim != 2 or self.vsc_load.shape != self.harvest.shape:
            raise TraceValidationError("harvest and vsc_load must be matching N x K")
        if self.mbs_load.shape != (self.harvest.shape[1],):
            raise TraceValidationError("mbs_load length must equal the horizon")
        for name, arr in (("harvest", self.harvest), ("vsc_load", self.vsc_load),
                          ("mbs_load", self.mbs_load)):
            if np.any(arr < 0):
                idx = np.argwhere(arr < 0)[0]
                raise TraceValidationError(f"negative {name} entry at {tuple(idx)}")

    @property
    def n_cells(self) -> int:
        return self.harvest.shape[0]

    @property
    def horizon(self) -> int:
        return self.harvest.shape[1]


# ---------------------------------------------------------------------------
# Generators

def _check_horizon(horizon, n_cells):
    if int(horizon) != horizon or horizon <= 0:
        raise ValueError("horizon must be a positive slot count")
    if int(n_cells) != n_cells or n_cells <= 0:
        raise ValueError("n_cells must be a positive count")


def _calendar(horizon: int, slot_hours: float):
    """Per-slot (day index, hour-of-day at slot midpoint, day of year, weekday)."""
    slots = np.arange(horizon)
    start_hour = slots * slot_hours
    day = (start_hour // 24).astype(int)
    mid_hour = (start_hour + 0.5 * slot_hours) % 24.0
    return day, mid_hour, day % DAYS_PER_YEAR, day % 7


def generate_solar_trace(config: SolarConfig, seed, horizon: int,
                         n_cells: int) -> np.ndarray:
    """N x K matrix of per-slot harvested energy in Wh."""
    _check_horizon(horizon, n_cells)
    rng = np.random.default_rng(seed)
    day, mid_hour, day_of_year, _ = _calendar(horizon, config.slot_hours)

    # 1 at the summer solstice, 0 at the winter one
    summer_w = 0.5 * (1.0 + np.cos(
        2.0 * np.pi * (day_of_year - config.summer_peak_day) / DAYS_PER_YEAR))
    scale = (1.0 - config.season_amplitude) + config.season_amplitude * summer_w
    sunrise = config.winter_sunrise + (config.summer_sunrise - config.winter_sunrise) * summer_w
    sunset = config.winter_sunset + (config.summer_sunset - config.winter_sunset) * summer_w

    daylight = (mid_hour > sunrise) & (mid_hour < sunset)
    bell = np.where(
        daylight,
        np.sin(np.pi * (mid_hour - sunrise) / np.maximum(sunset - sunrise, 1e-9)),
        0.0,
    )

    n_days = int(day[-1]) + 1
    sd = config.daily_variability_sd
    # same sky for every cell on a given day; hourly jitter is per cell
    day_factor = np.minimum(1.0, np.exp(rng.normal(0.0, sd, size=n_days)))
    jitter = np.minimum(1.0, np.exp(rng.normal(0.0, 0.5 * sd, size=(n_cells, horizon))))

    clear = config.cap_wh * bell * scale * day_factor[day]
    out = np.clip(clear[None, :] * jitter, 0.0, config.cap_wh)
    out[:, ~daylight] = 0.0
    return out


def generate_traffic_trace(config: TrafficConfig, seed, horizon: int,
                           n_cells: int) -> np.ndarray:
    """N x K matrix of offered per-cell traffic in Mb/s."""
    _check_horizon(horizon, n_cells)
    rng = np.random.default_rng(seed)
    _, _, _, weekday = _calendar(horizon, 1.0)
    hour = np.arange(horizon) % 24
    mult = config.shape_table()[hour, weekday]
    noise = np.maximum(0.0, 1.0 + rng.normal(0.0, config.noise_sd,
                                             size=(n_cells, horizon)))
    return config.peak_mbps * mult[None, :] * noise


def generate_mbs_trace(config: TrafficConfig, seed, horizon: int) -> np.ndarray:
    """Length-K vector of the macro users' own offered traffic in Mb/s."""
    _check_horizon(horizon, 1)
    rng = np.random.default_rng(seed)
    _, _, _, weekday = _calendar(horizon, 1.0)
    hour = np.arange(horizon) % 24
    mult = config.shape_table()[hour, weekday]
    noise = np.maximum(0.0, 1.0 + rng.normal(0.0, config.noise_sd, size=horizon))
    return config.mbs_peak_mbps * mult * noise


def generate_traces(solar: SolarConfig, traffic: TrafficConfig, seed: int,
                    horizon: int, n_cells: int) -> TraceSet:
    """Build a full TraceSet; sub-streams are spawned in a fixed order."""
    ss = np.random.SeedSequence(seed)
    s_solar, s_traffic, s_mbs = ss.spawn(3)
    return TraceSet(
        harvest=generate_solar_trace(solar, s_solar, horizon, n_cells),
        vsc_load=generate_traffic_trace(traffic, s_traffic, horizon, n_cells),
        mbs_load=generate_mbs_trace(traffic, s_mbs, horizon),
        slot_hours=solar.slot_hours,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# CSV interchange.  Header `slots,<K>,cells,<N>,slot_hours,<h>`, then one row
# per slot: t, H_1..H_N (Wh), L_1..L_N (Mb/s), rho0 (Mb/s).

def export_traces_csv(traces: TraceSet, path) -> None:
    n, k = traces.n_cells, traces.horizon
    with open(path, "w", newline="") as f:
        f.write(f"slots,{k},cells,{n},slot_hours,{traces.slot_hours!r}\n")
        for t in range(k):
            fields = [str(t)]
            fields += [repr(float(v)) for v in traces.harvest[:, t]]
            fields += [repr(float(v)) for v in traces.vsc_load[:, t]]
            fields.append(repr(float(traces.mbs_load[t])))
            f.write(",".join(fields) + "\n")


def load_traces_csv(path) -> TraceSet:
    with open(path, newline="") as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise TraceParseError(f"{path}: empty file")
    head = lines[0].split(",")
    if len(head) != 6 or head[0] != "slots" or head[2] != "cells" or head[4] != "slot_hours":
        raise TraceParseError(f"{path}: bad header {lines[0]!r}")
    try:
        k, n, slot_hours = int(head[1]), int(head[3]), float(head[5])
    except ValueError as exc:
        raise TraceParseError(f"{path}: non-numeric header field") from exc
    if len(lines) - 1 != k:
        raise TraceParseError(f"{path}: header declares {k} slots, found {len(lines) - 1}")

    width = 2 * n + 2
    harvest = np.empty((n, k))
    vsc_load = np.empty((n, k))
    mbs_load = np.empty(k)
    for row_no, line in enumerate(lines[1:]):
        fields = line.split(",")
        if len(fields) != width:
            raise TraceParseError(
                f"{path}: row {row_no}: expected {width} fields, got {len(fields)}")
        try:
            values = [float(v) for v in fields]
        except ValueError as exc:
            raise TraceParseError(f"{path}: row {row_no}: non-numeric field") from exc
        for col, v in enumerate(values[1:], start=1):
            if v < 0:
                raise TraceValidationError(
                    f"{path}: negative value at row {row_no}, column {col}")
        harvest[:, row_no] = values[1:1 + n]
        vsc_load[:, row_no] = values[1 + n:1 + 2 * n]
        mbs_load[row_no] = values[1 + 2 * n]
    return TraceSet(harvest, vsc_load, mbs_load, slot_hours=slot_hours)
