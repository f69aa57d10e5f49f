"""Slot-by-slot network simulation.

Each slot: agents request modes, the battery guard forces Off where the
request is unaffordable, traffic routes (active cells serve locally up to
capacity, traffic of Off cells falls back to the macro), the macro site's
grid energy and the system drop rate produce a shared scalar reward, and
batteries advance.  The same arithmetic exists twice: a plain-scalar path
driving live episodes (fast per slot) and a numpy batch path used by the
off-line solver and exhaustive search, which need thousands of parallel
evaluations per slot.  Tests hold the two paths together.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .agents import AgentObservation
from .power import (
    N_MODES,
    OperativeMode,
    PowerModelParams,
    mbs_site_power_array,
    vsc_power,
    vsc_power_array,
)


@dataclass(frozen=True)
class SimParams:
    """Scenario constants for one deployment.

    e_max_wh normalizes grid energy inside the cost; None means "use the
    per-slot maximum" (full macro load, every cell offloading at full load),
    which keeps the reward inside [0, 1].  harvest_norm_wh scales the
    harvest observation; the default is the clear-sky slot cap of the
    default panel.
    """

    n_cells: int = 3
    battery_capacity_wh: float = 2000.0
    battery_threshold_frac: float = 0.20
    slot_hours: float = 1.0
    vsc_capacity_mbps: float = 37.5
    mbs_capacity_mbps: float = 112.5
    w1: float = 0.5
    w2: float = 0.5
    e_max_wh: float | None = None
    harvest_norm_wh: float = 833.28
    initial_battery_frac: float = 1.0

    def __post_init__(self):
        if self.n_cells <= 0:
            raise ValueError("n_cells must be positive")
        if not 0.0 < self.battery_threshold_frac < 1.0:
            raise ValueError("battery_threshold_frac must lie in (0, 1)")
        if self.vsc_capacity_mbps <= 0 or self.mbs_capacity_mbps <= 0:
            raise ValueError("capacities must be positive")
        if self.w1 < 0 or self.w2 < 0 or abs(self.w1 + self.w2 - 1.0) > 1e-12:
            raise ValueError("w1, w2 must be nonnegative and sum to 1")
        if self.battery_capacity_wh <= 0 or self.slot_hours <= 0:
            raise ValueError("battery capacity and slot duration must be positive")
        if not 0.0 <= self.initial_battery_frac <= 1.0:
            raise ValueError("initial_battery_frac must lie in [0, 1]")

    @property
    def battery_threshold_wh(self) -> float:
        return self.battery_threshold_frac * self.battery_capacity_wh


def default_e_max(params: SimParams, power_params: PowerModelParams) -> float:
    """Largest possible per-slot grid energy: full macro load, all cells
    in PHY-RF at full load."""
    modes = np.full(params.n_cells, OperativeMode.PHY_RF.value)
    watts = mbs_site_power_array(1.0, modes, np.ones(params.n_cells), power_params)
    return float(watts) * params.slot_hours


def resolved_e_max(params: SimParams, power_params: PowerModelParams) -> float:
    if params.e_max_wh is not None:
        return params.e_max_wh
    return default_e_max(params, power_params)


@dataclass
class NetworkState:
    """Snapshot at the start of slot t (battery before this slot's flows)."""

    t: int
    battery: np.ndarray
    harvest: np.ndarray
    vsc_load: np.ndarray
    mbs_own_load: float
    mbs_utilization: float = 0.0   # previous slot's macro utilization

    def __post_init__(self):
        self.battery = np.asarray(self.battery, dtype=float)
        self.harvest = np.asarray(self.harvest, dtype=float)
        self.vsc_load = np.asarray(self.vsc_load, dtype=float)


def state_from_traces(traces, params: SimParams, t: int = 0,
                      battery=None, mbs_utilization: float = 0.0) -> NetworkState:
    if battery is None:
        battery = np.full(traces.n_cells,
                          params.initial_battery_frac * params.battery_capacity_wh)
    return NetworkState(
        t=t,
        battery=battery,
        harvest=traces.harvest[:, t],
        vsc_load=traces.vsc_load[:, t],
        mbs_own_load=float(traces.mbs_load[t]),
        mbs_utilization=mbs_utilization,
    )


@dataclass
class SlotOutcome:
    requested: np.ndarray
    applied: np.ndarray
    forced_off: np.ndarray
    grid_energy_wh: float
    drop_rate: float
    reward: float
    mbs_utilization: float
    next_battery: np.ndarray
    battery_clipped: np.ndarray


# ---------------------------------------------------------------------------
# Core slot arithmetic, batch (numpy) form.  Leading dimensions broadcast;
# the last axis is the cell axis.

def load_fractions(loads, params: SimParams) -> np.ndarray:
    return np.minimum(np.asarray(loads, dtype=float) / params.vsc_capacity_mbps, 1.0)


def forced_off_resolve(batteries, requested, harvest, loads,
                       params: SimParams, power_params: PowerModelParams):
    """Battery guard: requests the battery cannot cover become Off.

    batteries/requested broadcast over leading dims; harvest/loads are the
    slot's per-cell vectors.  Returns (applied, forced) arrays.
    """
    requested = np.asarray(requested)
    fracs = load_fractions(loads, params)
    draw = vsc_power_array(requested, fracs, power_params) * params.slot_hours
    end = np.asarray(batteries, dtype=float) + np.asarray(harvest, dtype=float) - draw
    forced = (requested != OperativeMode.OFF.value) & (end < params.battery_threshold_wh)
    applied = np.where(forced, OperativeMode.OFF.value, requested)
    return applied, forced


def applied_slot_metrics(applied, loads, mbs_own_load,
                         params: SimParams, power_params: PowerModelParams,
                         e_max_wh: float):
    """Routing, drop rate, grid energy and reward under applied modes.

    Returns dict of arrays keyed served/mbs_served/drop/energy/cost/reward/
    utilization, broadcast over the leading dims of `applied`.
    """
    applied = np.asarray(applied)
    loads = np.asarray(loads, dtype=float)
    active = applied != OperativeMode.OFF.value
    served = np.where(active, np.minimum(loads, params.vsc_capacity_mbps), 0.0)
    local_drop = np.where(active, np.maximum(loads - params.vsc_capacity_mbps, 0.0), 0.0)
    routed = np.where(active, 0.0, loads)
    mbs_offered = mbs_own_load + routed.sum(axis=-1)
    mbs_served = np.minimum(mbs_offered, params.mbs_capacity_mbps)
    dropped = local_drop.sum(axis=-1) + np.maximum(mbs_offered - params.mbs_capacity_mbps, 0.0)
    total_offered = loads.sum(axis=-1) + mbs_own_load
    drop = np.where(total_offered > 0.0, dropped / np.where(total_offered > 0, total_offered, 1.0), 0.0)
    utilization = mbs_served / params.mbs_capacity_mbps
    fracs = load_fractions(loads, params)
    energy = mbs_site_power_array(utilization, applied, fracs, power_params) * params.slot_hours
    cost = params.w1 * np.minimum(energy / e_max_wh, 1.0) + params.w2 * drop
    return {
        "served": served, "mbs_served": mbs_served, "drop": drop,
        "energy": energy, "cost": cost, "reward": 1.0 - cost,
        "utilization": utilization,
    }


def batteries_after(batteries, applied, harvest, loads,
                    params: SimParams, power_params: PowerModelParams):
    """Battery recursion with clipping at capacity and zero."""
    fracs = load_fractions(loads, params)
    draw = vsc_power_array(np.asarray(applied), fracs, power_params) * params.slot_hours
    raw = np.asarray(batteries, dtype=float) + np.asarray(harvest, dtype=float) - draw
    clipped = (raw > params.battery_capacity_wh) | (raw < 0.0)
    return np.clip(raw, 0.0, params.battery_capacity_wh), clipped


# ---------------------------------------------------------------------------
# Spec-level operations on NetworkState.

def enforce_battery(state: NetworkState, requested, params: SimParams,
                    power_params: PowerModelParams):
    applied, forced = forced_off_resolve(
        state.battery, requested, state.harvest, state.vsc_load, params, power_params)
    return applied, forced


def route_and_drop(state: NetworkState, applied, params: SimParams):
    """Returns (per-vSC served Mb/s, MBS carried Mb/s, drop_rate)."""
    applied = np.asarray(applied)
    active = applied != OperativeMode.OFF.value
    loads = state.vsc_load
    served = np.where(active, np.minimum(loads, params.vsc_capacity_mbps), 0.0)
    local_drop = np.where(active, np.maximum(loads - params.vsc_capacity_mbps, 0.0), 0.0).sum()
    mbs_offered = state.mbs_own_load + np.where(active, 0.0, loads).sum()
    mbs_served = min(mbs_offered, params.mbs_capacity_mbps)
    dropped = local_drop + max(mbs_offered - params.mbs_capacity_mbps, 0.0)
    total_offered = loads.sum() + state.mbs_own_load
    drop = dropped / total_offered if total_offered > 0 else 0.0
    return served, mbs_served, float(drop)


def slot_cost(e_m_wh: float, drop: float, params: SimParams,
              e_max_wh: float | None = None):
    """Weighted normalized cost and its reward complement."""
    if e_m_wh < 0:
        raise ValueError("grid energy must be >= 0")
    if not 0.0 <= drop <= 1.0:
        raise ValueError("drop rate must lie in [0, 1]")
    if e_max_wh is None:
        e_max_wh = params.e_max_wh
    if e_max_wh is None or e_max_wh <= 0:
        raise ValueError("e_max normalization constant is not set")
    f = params.w1 * min(e_m_wh / e_max_wh, 1.0) + params.w2 * drop
    return f, 1.0 - f


def step(state: NetworkState, requested, params: SimParams,
         power_params: PowerModelParams, traces):
    """Advance one slot; returns (next state or None at horizon end, outcome)."""
    e_max = resolved_e_max(params, power_params)
    applied, forced = enforce_battery(state, requested, params, power_params)
    metrics = applied_slot_metrics(applied, state.vsc_load, state.mbs_own_load,
                                   params, power_params, e_max)
    next_b, clipped = batteries_after(state.battery, applied, state.harvest,
                                      state.vsc_load, params, power_params)
    outcome = SlotOutcome(
        requested=np.asarray(requested, dtype=np.int8),
        applied=np.asarray(applied, dtype=np.int8),
        forced_off=np.asarray(forced, dtype=bool),
        grid_energy_wh=float(metrics["energy"]),
        drop_rate=float(metrics["drop"]),
        reward=float(metrics["reward"]),
        mbs_utilization=float(metrics["utilization"]),
        next_battery=next_b,
        battery_clipped=clipped,
    )
    if state.t + 1 >= traces.horizon:
        return None, outcome
    nxt = state_from_traces(traces, params, state.t + 1, battery=next_b,
                            mbs_utilization=outcome.mbs_utilization)
    return nxt, outcome


# ---------------------------------------------------------------------------
# Episode logging.

@dataclass
class EpisodeLog:
    """Struct-of-arrays record of one episode; totals recomputed on demand."""

    requested: np.ndarray      # (K, N) int8
    applied: np.ndarray        # (K, N) int8
    forced_off: np.ndarray     # (K, N) bool
    grid_energy_wh: np.ndarray
    drop_rate: np.ndarray
    reward: np.ndarray
    mbs_utilization: np.ndarray
    battery: np.ndarray        # (K, N) end-of-slot Wh
    battery_clipped: np.ndarray
    slot_hours: float = 1.0

    def __len__(self):
        return self.reward.shape[0]

    @property
    def n_cells(self) -> int:
        return self.applied.shape[1]

    def outcome(self, t: int) -> SlotOutcome:
        return SlotOutcome(
            requested=self.requested[t], applied=self.applied[t],
            forced_off=self.forced_off[t],
            grid_energy_wh=float(self.grid_energy_wh[t]),
            drop_rate=float(self.drop_rate[t]), reward=float(self.reward[t]),
            mbs_utilization=float(self.mbs_utilization[t]),
            next_battery=self.battery[t], battery_clipped=self.battery_clipped[t],
        )

    @property
    def total_grid_energy_kwh(self) -> float:
        return float(self.grid_energy_wh.sum()) / 1000.0

    @property
    def mean_drop_rate(self) -> float:
        return float(self.drop_rate.mean())

    @property
    def cumulative_reward(self) -> float:
        return float(self.reward.sum())

    @property
    def forced_off_count(self) -> int:
        return int(self.forced_off.sum())

    def summary_dict(self) -> dict:
        return {
            "slots": len(self),
            "cells": self.n_cells,
            "grid_energy_kwh": self.total_grid_energy_kwh,
            "mean_drop_rate": self.mean_drop_rate,
            "cumulative_reward": self.cumulative_reward,
            "forced_off_count": self.forced_off_count,
        }

    def to_csv(self, path) -> None:
        n = self.n_cells
        cols = (["t"] + [f"a_{i+1}" for i in range(n)] + ["forced_bitmap"]
                + ["e_m_wh", "drop_rate", "reward"] + [f"b_{i+1}" for i in range(n)])
        with open(path, "w", newline="") as f:
            f.write(",".join(cols) + "\n")
            for t in range(len(self)):
                bitmap = int(sum(1 << i for i in range(n) if self.forced_off[t, i]))
                fields = [str(t)]
                fields += [str(int(a)) for a in self.applied[t]]
                fields.append(str(bitmap))
                fields += [repr(float(self.grid_energy_wh[t])),
                           repr(float(self.drop_rate[t])),
                           repr(float(self.reward[t]))]
                fields += [repr(float(b)) for b in self.battery[t]]
                f.write(",".join(fields) + "\n")

    @classmethod
    def from_csv(cls, path) -> "EpisodeLog":
        """Rebuild the exported columns; fields outside the CSV schema
        (requested modes, clip flags, utilization) come back neutral."""
        with open(path, newline="") as f:
            lines = [ln for ln in f.read().splitlines() if ln.strip()]
        header = lines[0].split(",")
        n = sum(1 for c in header if c.startswith("a_"))
        k = len(lines) - 1
        applied = np.zeros((k, n), dtype=np.int8)
        forced = np.zeros((k, n), dtype=bool)
        energy = np.zeros(k)
        drop = np.zeros(k)
        reward = np.zeros(k)
        battery = np.zeros((k, n))
        for row_no, line in enumerate(lines[1:]):
            fields = line.split(",")
            applied[row_no] = [int(v) for v in fields[1:1 + n]]
            bitmap = int(fields[1 + n])
            forced[row_no] = [(bitmap >> i) & 1 for i in range(n)]
            energy[row_no], drop[row_no], reward[row_no] = (
                float(fields[2 + n]), float(fields[3 + n]), float(fields[4 + n]))
            battery[row_no] = [float(v) for v in fields[5 + n:5 + 2 * n]]
        return cls(requested=applied.copy(), applied=applied, forced_off=forced,
                   grid_energy_wh=energy, drop_rate=drop, reward=reward,
                   mbs_utilization=np.zeros(k), battery=battery,
                   battery_clipped=np.zeros((k, n), dtype=bool))

    def save_summary_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.summary_dict(), f, indent=2)
            f.write("\n")


# ---------------------------------------------------------------------------
# Episode driver.  The inner loop is deliberately plain-scalar Python: one
# training sweep touches ~10^4 slots and the numpy call overhead would
# dominate at this granularity.

def run_episode(agents, traces, params: SimParams,
                power_params: PowerModelParams) -> EpisodeLog:
    """Run one full pass over the traces with the given per-cell agents.

    Every agent sees its own observation, all agents receive the shared
    reward of the joint outcome.  Updates for slot t happen right before
    the selection at t+1 (the final slot's transition has no successor
    observation and is discarded).  Deterministic given agent state and
    traces.
    """
    n = traces.n_cells
    if len(agents) != n:
        raise ValueError(f"need {n} agents, got {len(agents)}")
    k = traces.horizon
    p, pp = params, power_params
    e_max = resolved_e_max(p, pp)
    cap = p.battery_capacity_wh
    th = p.battery_threshold_wh
    vcap, mcap = p.vsc_capacity_mbps, p.mbs_capacity_mbps
    dt = p.slot_hours
    hnorm = p.harvest_norm_wh
    gpw = pp.gops_per_watt
    vsc_active_w = (pp.vsc_rf_w + pp.vsc_pa_w)
    v_ov = 1.0 + pp.vsc_overhead_frac
    m_ov = 1.0 + pp.mbs_overhead_frac
    mbs_fixed_w = pp.mbs_rf_w + pp.mbs_pa_w

    harvest_rows = traces.harvest.T.tolist()
    load_rows = traces.vsc_load.T.tolist()
    mbs_rows = traces.mbs_load.tolist()

    battery = [p.initial_battery_frac * cap] * n
    rho_prev = 0.0

    req_log = np.empty((k, n), dtype=np.int8)
    app_log = np.empty((k, n), dtype=np.int8)
    forced_log = np.empty((k, n), dtype=bool)
    clip_log = np.empty((k, n), dtype=bool)
    energy_log = np.empty(k)
    drop_log = np.empty(k)
    reward_log = np.empty(k)
    util_log = np.empty(k)
    battery_log = np.empty((k, n))

    for agent in agents:
        agent.begin_episode()

    reward_prev = None
    off = OperativeMode.OFF.value
    phy_rf = OperativeMode.PHY_RF.value

    for t in range(k):
        h_row = harvest_rows[t]
        l_row = load_rows[t]
        mbs_own = mbs_rows[t]

        observations = []
        for i in range(n):
            h_n = h_row[i] / hnorm
            l_n = l_row[i] / vcap
            observations.append(AgentObservation(
                h=h_n if h_n < 1.0 else 1.0,
                b=battery[i] / cap,
                l=l_n if l_n < 1.0 else 1.0,
                rho=rho_prev,
            ))
        if reward_prev is not None:
            for agent, obs in zip(agents, observations):
                agent.observe(reward_prev, obs)
        requested = [agent.act(obs) for agent, obs in zip(agents, observations)]

        # battery guard, routing, site energy in one scalar sweep
        applied = list(requested)
        local_drop = 0.0
        routed = 0.0
        hosted_gops = 0.0
        total_load = mbs_own
        for i in range(n):
            a = requested[i]
            li = l_row[i]
            total_load += li
            frac = li / vcap
            if frac > 1.0:
                frac = 1.0
            if a != off:
                draw = vsc_active_w
                if a != phy_rf:
                    draw += (pp.vsc_bb_static_gops + pp.vsc_bb_load_gops * frac) / gpw
                if battery[i] + h_row[i] - draw * v_ov * dt < th:
                    applied[i] = off
            a = applied[i]
            if a == off:
                routed += li
            else:
                if li > vcap:
                    local_drop += li - vcap
                if a == phy_rf:
                    hosted_gops += pp.vsc_bb_static_gops + pp.vsc_bb_load_gops * frac

        mbs_offered = mbs_own + routed
        mbs_served = mbs_offered if mbs_offered < mcap else mcap
        dropped = local_drop + (mbs_offered - mcap if mbs_offered > mcap else 0.0)
        drop = dropped / total_load if total_load > 0.0 else 0.0
        util = mbs_served / mcap
        bb_gops = pp.mbs_bb_static_gops + pp.mbs_bb_load_gops * util
        e_m = (mbs_fixed_w + (bb_gops + hosted_gops) / gpw) * m_ov * dt
        e_norm = e_m / e_max
        cost = p.w1 * (e_norm if e_norm < 1.0 else 1.0) + p.w2 * drop
        reward = 1.0 - cost

        for i in range(n):
            a = applied[i]
            if a == off:
                draw = 0.0
            elif a == phy_rf:
                draw = vsc_active_w * v_ov
            else:
                frac = l_row[i] / vcap
                if frac > 1.0:
                    frac = 1.0
                draw = (vsc_active_w
                        + (pp.vsc_bb_static_gops + pp.vsc_bb_load_gops * frac) / gpw) * v_ov
            raw = battery[i] + h_row[i] - draw * dt
            clip_log[t, i] = raw > cap or raw < 0.0
            battery[i] = 0.0 if raw < 0.0 else (cap if raw > cap else raw)

        req_log[t] = requested
        app_log[t] = applied
        for i in range(n):
            forced_log[t, i] = applied[i] != requested[i]
        energy_log[t] = e_m
        drop_log[t] = drop
        reward_log[t] = reward
        util_log[t] = util
        battery_log[t] = battery
        rho_prev = util
        reward_prev = reward

    for agent in agents:
        agent.observe(reward_prev, None)

    return EpisodeLog(
        requested=req_log, applied=app_log, forced_off=forced_log,
        grid_energy_wh=energy_log, drop_rate=drop_log, reward=reward_log,
        mbs_utilization=util_log, battery=battery_log,
        battery_clipped=clip_log, slot_hours=p.slot_hours,
    )
