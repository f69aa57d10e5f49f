"""Clairvoyant lower bound on episode cost via dynamic programming.

With the full year of traces known in advance, the best mode schedule is a
shortest path through a layered graph: one layer per slot, one node per
joint battery state.  Two engines share the slot arithmetic with the
simulator:

* dense: batteries live on a uniform grid (`battery_levels` points per
  cell).  Slot cost never depends on the battery itself, only on the mode
  pattern, and on the grid every transition is an integer shift, so one
  backward sweep per slot folds the value cube cell axis by cell axis.
  Feasibility (the battery guard) enters as a per-cell minimum bin.
* exact: `battery_levels=None` keeps real-valued batteries and runs
  label correcting over reachable states with a FIFO or LIFO queue.  It
  reproduces exhaustive search bit for bit (same batch arithmetic, same
  add order) and exists to validate the dense engine on small instances.

`brute_force` enumerates every requested-mode sequence outright and is the
ground truth both engines are tested against.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import product

import numpy as np

try:
    from numba import njit
    _HAVE_NUMBA = True
except ImportError:      # pragma: no cover - numba is a hard dependency
    _HAVE_NUMBA = False

from .power import OperativeMode, PowerModelParams, vsc_power_array
from .simulator import (
    SimParams,
    applied_slot_metrics,
    batteries_after,
    forced_off_resolve,
    load_fractions,
    resolved_e_max,
)

OFF = OperativeMode.OFF.value
PHY = OperativeMode.PHY_RF.value
MAC = OperativeMode.MAC_PHY.value


class CapabilityError(RuntimeError):
    """The instance exceeds what the requested engine can handle."""


@dataclass(frozen=True)
class DPConfig:
    """battery_levels=None switches to the exact real-battery engine.
    queue_discipline only affects tie-breaking there, never the value."""

    battery_levels: int | None = 21
    max_cells: int = 3
    queue_discipline: str = "fifo"
    checkpoint_every: int = 96
    dtype: str = "auto"            # auto | f4 | f8
    state_limit: int = 500_000

    def __post_init__(self):
        if self.battery_levels is not None and self.battery_levels < 2:
            raise ValueError("battery_levels must be None or >= 2")
        if self.queue_discipline not in ("fifo", "lifo"):
            raise ValueError("queue_discipline must be 'fifo' or 'lifo'")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.dtype not in ("auto", "f4", "f8"):
            raise ValueError("dtype must be auto, f4 or f8")


@dataclass
class BoundResult:
    """actions holds the recovered per-slot mode requests, (K, N) int8.
    cumulative_reward = K - total_cost since reward is 1 - cost per slot."""

    actions: np.ndarray
    total_cost: float
    cumulative_reward: float
    engine: str
    meta: dict


def _mode_combos(n: int) -> np.ndarray:
    """All joint modes, cell 0 most significant: index c has cell i mode
    (c // 3**(n-1-i)) % 3."""
    return np.array(list(product((OFF, PHY, MAC), repeat=n)), dtype=np.int64)


def _round_half_away(x) -> np.ndarray:
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


# ---------------------------------------------------------------------------
# Shared per-stage tables.

class _StageTables:
    """Everything the dense engine needs, precomputed over the horizon.

    cost27[c, t]   exact slot cost of applied combo c (saturation included)
    g[p, t]        pattern part of the cost (p indexes off-sets, bit i set
                   means cell i off), valid while the energy term is not
                   saturated at that slot
    s_phy[i, t]    extra cost of hosting cell i's baseband at the macro
    shift[m, t, i] battery bin shift for mode m
    kmin[m, t, i]  smallest affordable bin for mode m (0 for Off)
    saturated[t]   True where some combo saturates the energy term, which
                   breaks the g + s split; those slots fall back to the
                   explicit 27-combo sweep
    """

    def __init__(self, traces, params: SimParams, power_params: PowerModelParams,
                 levels: int):
        n, k = traces.n_cells, traces.horizon
        pp = power_params
        dt = params.slot_hours
        e_max = resolved_e_max(params, power_params)
        loads = traces.vsc_load.T            # (K, N)
        harvest = traces.harvest.T           # (K, N)
        mbs_own = traces.mbs_load            # (K,)
        fracs = load_fractions(loads, params)

        combos = _mode_combos(n)             # (27, N)
        self.combos = combos
        metrics = applied_slot_metrics(combos[:, None, :], loads, mbs_own,
                                       params, power_params, e_max)
        self.cost27 = metrics["cost"]        # (27, K)

        # pattern tables over the 2^N off-sets
        p2 = 1 << n
        off_mask = np.array([[(p >> i) & 1 for i in range(n)] for p in range(p2)],
                            dtype=float)     # (P2, N)
        act_mask = 1.0 - off_mask
        offered = mbs_own[None, :] + off_mask @ loads.T            # (P2, K)
        util = np.minimum(offered, params.mbs_capacity_mbps) / params.mbs_capacity_mbps
        local_ex = np.maximum(loads - params.vsc_capacity_mbps, 0.0)
        dropped = act_mask @ local_ex.T + np.maximum(
            offered - params.mbs_capacity_mbps, 0.0)
        total = loads.sum(axis=1) + mbs_own
        drop = np.where(total > 0.0, dropped / np.where(total > 0, total, 1.0), 0.0)
        m_ov = 1.0 + pp.mbs_overhead_frac
        e_base = (pp.mbs_rf_w + pp.mbs_pa_w
                  + (pp.mbs_bb_static_gops + pp.mbs_bb_load_gops * util)
                  / pp.gops_per_watt) * m_ov * dt
        self.g = params.w1 * e_base / e_max + params.w2 * drop     # (P2, K)

        host_wh = ((pp.vsc_bb_static_gops + pp.vsc_bb_load_gops * fracs)
                   / pp.gops_per_watt) * m_ov * dt                 # (K, N)
        self.s_phy = (params.w1 * host_wh / e_max).T               # (N, K) -> index [i, t]
        worst = e_base + act_mask @ host_wh.T                      # (P2, K)
        self.saturated = np.any(worst > e_max * (1.0 + 1e-12), axis=0)

        # per-cell transitions on the bin grid
        cap = params.battery_capacity_wh
        step_wh = cap / (levels - 1)
        draw = np.empty((3, k, n))
        for m in (OFF, PHY, MAC):
            draw[m] = vsc_power_array(np.full((k, n), m), fracs, pp) * dt
        delta = harvest[None, :, :] - draw                         # (3, K, N)
        self.shift = _round_half_away(delta / step_wh)
        jvals = np.arange(levels) * step_wh
        end = jvals[:, None, None, None] + harvest[None, None] - draw[None]
        # number of bins that cannot afford the mode; monotone in j
        self.kmin = np.sum(end < params.battery_threshold_wh,
                           axis=0).astype(np.int64)               # (3, K, N)
        self.kmin[OFF] = 0
        self.levels = levels
        self.step_wh = step_wh
        self.n = n
        self.k = k

    def combo_pattern(self, c: int) -> int:
        p = 0
        for i in range(self.n):
            if self.combos[c, i] == OFF:
                p |= 1 << i
        return p

    def fold_cost(self, c: int, t: int) -> float:
        """Cost used inside the folded sweep (g + s split)."""
        v = self.g[self.combo_pattern(c), t]
        for i in range(self.n):
            if self.combos[c, i] == PHY:
                v += self.s_phy[i, t]
        return float(v)


# ---------------------------------------------------------------------------
# Dense engine.

def _fold_stage(v_next: np.ndarray, t: int, tabs: _StageTables) -> np.ndarray:
    """One backward sweep: fold each cell axis into off/active branches,
    then take the best pattern."""
    levels, n = tabs.levels, tabs.n
    base = np.arange(levels)
    cubes = {(): v_next}
    for cell in range(n - 1, -1, -1):
        idx = {m: np.clip(base + tabs.shift[m, t, cell], 0, levels - 1)
               for m in (OFF, PHY, MAC)}
        new = {}
        for key, u in cubes.items():
            off = np.take(u, idx[OFF], axis=cell)
            # plain-float scalars keep float32 cubes from promoting
            phy = np.take(u, idx[PHY], axis=cell) + float(tabs.s_phy[cell, t])
            mac = np.take(u, idx[MAC], axis=cell)
            for m, arr in ((PHY, phy), (MAC, mac)):
                km = int(tabs.kmin[m, t, cell])
                if km > 0:
                    sl = [slice(None)] * n
                    sl[cell] = slice(0, min(km, levels))
                    arr[tuple(sl)] = np.inf
            new[(0,) + key] = off
            new[(1,) + key] = np.minimum(phy, mac)
        cubes = new
    out = None
    for key, u in cubes.items():
        p = sum(1 << i for i in range(n) if key[i] == 0)   # key 0 = off branch
        cand = u + float(tabs.g[p, t])
        out = cand if out is None else np.minimum(out, cand)
    return out


def _sweep_stage_explicit(v_next: np.ndarray, t: int, tabs: _StageTables) -> np.ndarray:
    """Fallback when the energy term saturates: explicit min over combos
    using the exact cost table."""
    levels, n = tabs.levels, tabs.n
    base = np.arange(levels)
    out = np.full(v_next.shape, np.inf, dtype=v_next.dtype)
    for c in range(tabs.combos.shape[0]):
        modes = tabs.combos[c]
        if any(int(tabs.kmin[modes[i], t, i]) >= levels for i in range(n)):
            continue
        idx = tuple(np.clip(base + tabs.shift[modes[i], t, i], 0, levels - 1)
                    for i in range(n))
        cand = v_next[np.ix_(*idx)] + float(tabs.cost27[c, t])
        for i in range(n):
            km = int(tabs.kmin[modes[i], t, i])
            if km > 0:
                sl = [slice(None)] * n
                sl[i] = slice(0, km)
                cand[tuple(sl)] = np.inf
        np.minimum(out, cand, out=out)
    return out


def _backward_stage(v_next, t, tabs):
    if tabs.saturated[t]:
        return _sweep_stage_explicit(v_next, t, tabs)
    return _fold_stage(v_next, t, tabs)


if _HAVE_NUMBA:
    @njit(cache=True)
    def _stage3_kernel(v_next, out, a_off, a_act, oo, oa, ao, aa,
                       idx, kmin, s_phy, g3):
        """Fused 3-cell fold: one sweep per axis instead of a dozen numpy
        passes.  idx[(cell, mode, j)] is the clipped target bin, kmin the
        per-cell minimum affordable bin, g3[a0, a1, a2] the pattern cost
        (index 0 = off)."""
        n_bins = v_next.shape[0]
        inf = np.inf
        for j0 in range(n_bins):
            for j1 in range(n_bins):
                vrow = v_next[j0, j1]
                for j2 in range(n_bins):
                    a_off[j0, j1, j2] = vrow[idx[2, 0, j2]]
                    p = vrow[idx[2, 1, j2]] + s_phy[2] if j2 >= kmin[2, 1] else inf
                    m = vrow[idx[2, 2, j2]] if j2 >= kmin[2, 2] else inf
                    a_act[j0, j1, j2] = p if p < m else m
        for j0 in range(n_bins):
            for j1 in range(n_bins):
                i_off = idx[1, 0, j1]
                i_phy = idx[1, 1, j1]
                i_mac = idx[1, 2, j1]
                ok_p = j1 >= kmin[1, 1]
                ok_m = j1 >= kmin[1, 2]
                for j2 in range(n_bins):
                    oo[j0, j1, j2] = a_off[j0, i_off, j2]
                    p = a_off[j0, i_phy, j2] + s_phy[1] if ok_p else inf
                    m = a_off[j0, i_mac, j2] if ok_m else inf
                    ao[j0, j1, j2] = p if p < m else m
                    oa[j0, j1, j2] = a_act[j0, i_off, j2]
                    p = a_act[j0, i_phy, j2] + s_phy[1] if ok_p else inf
                    m = a_act[j0, i_mac, j2] if ok_m else inf
                    aa[j0, j1, j2] = p if p < m else m
        for j0 in range(n_bins):
            i_off = idx[0, 0, j0]
            i_phy = idx[0, 1, j0]
            i_mac = idx[0, 2, j0]
            ok_p = j0 >= kmin[0, 1]
            ok_m = j0 >= kmin[0, 2]
            for j1 in range(n_bins):
                for j2 in range(n_bins):
                    best = oo[i_off, j1, j2] + g3[0, 0, 0]
                    v = oa[i_off, j1, j2] + g3[0, 0, 1]
                    if v < best:
                        best = v
                    v = ao[i_off, j1, j2] + g3[0, 1, 0]
                    if v < best:
                        best = v
                    v = aa[i_off, j1, j2] + g3[0, 1, 1]
                    if v < best:
                        best = v
                    if ok_p or ok_m:
                        for cube, b1, b2 in ((oo, 0, 0), (oa, 0, 1),
                                             (ao, 1, 0), (aa, 1, 1)):
                            p = cube[i_phy, j1, j2] + s_phy[0] if ok_p else inf
                            m = cube[i_mac, j1, j2] if ok_m else inf
                            act = p if p < m else m
                            v = act + g3[1, b1, b2]
                            if v < best:
                                best = v
                    out[j0, j1, j2] = best


class _DenseSweeper:
    """Per-stage backward operator with reusable work buffers; uses the
    fused kernel for 3-cell instances, the numpy fold otherwise."""

    def __init__(self, tabs: _StageTables, dtype):
        self.tabs = tabs
        self.dtype = dtype
        self.fused = _HAVE_NUMBA and tabs.n == 3
        if self.fused:
            shape = (tabs.levels,) * 3
            self.work = [np.empty(shape, dtype=dtype) for _ in range(6)]
        self.base = np.arange(tabs.levels)

    def _stage_tables(self, t):
        tabs = self.tabs
        idx = np.empty((tabs.n, 3, tabs.levels), dtype=np.int64)
        for i in range(tabs.n):
            for m in (OFF, PHY, MAC):
                idx[i, m] = np.clip(self.base + tabs.shift[m, t, i],
                                    0, tabs.levels - 1)
        kmin = tabs.kmin[:, t, :].T.copy()       # (cell, mode)
        s_phy = np.ascontiguousarray(tabs.s_phy[:, t])
        g3 = np.empty((2,) * tabs.n)
        for key in product((0, 1), repeat=tabs.n):
            p = sum(1 << i for i in range(tabs.n) if key[i] == 0)
            g3[key] = tabs.g[p, t]
        return idx, kmin, s_phy, g3

    def stage(self, v_next, t, out=None):
        if self.tabs.saturated[t] or not self.fused:
            res = _backward_stage(v_next, t, self.tabs).astype(self.dtype,
                                                               copy=False)
            if out is None:
                return res
            out[:] = res
            return out
        if out is None:
            out = np.empty_like(v_next)
        idx, kmin, s_phy, g3 = self._stage_tables(t)
        _stage3_kernel(v_next, out, *self.work[:6], idx, kmin, s_phy, g3)
        return out


def _solve_dense(traces, params, power_params, config: DPConfig) -> BoundResult:
    n, k = traces.n_cells, traces.horizon
    if n > config.max_cells:
        raise CapabilityError(
            f"dense engine limited to {config.max_cells} cells, got {n}; "
            "raise max_cells knowingly or drop to the exact engine")
    levels = config.battery_levels
    if config.dtype == "auto":
        dtype = np.float64 if levels ** n <= 200_000 else np.float32
    else:
        dtype = np.float32 if config.dtype == "f4" else np.float64
    tabs = _StageTables(traces, params, power_params, levels)
    sweeper = _DenseSweeper(tabs, dtype)

    shape = (levels,) * n
    v = np.zeros(shape, dtype=dtype)
    spare = np.empty_like(v)
    checkpoints = {k: v.copy()}
    for t in range(k - 1, -1, -1):
        nxt = sweeper.stage(v, t, out=spare)
        spare, v = v, nxt
        if t % config.checkpoint_every == 0:
            checkpoints[t] = v.copy()

    b0 = params.initial_battery_frac * params.battery_capacity_wh
    j0 = int(_round_half_away(np.array(b0 / tabs.step_wh)))
    j0 = min(max(j0, 0), levels - 1)
    start = (j0,) * n
    dp_value = float(v[start])

    actions, total = _recover_path(start, tabs, checkpoints, sweeper)
    return BoundResult(
        actions=actions, total_cost=total,
        cumulative_reward=float(k - total), engine="dense",
        meta={"battery_levels": levels, "dp_value": dp_value,
              "dtype": np.dtype(dtype).name, "fused": sweeper.fused,
              "saturated_slots": int(tabs.saturated.sum()),
              "start_bin": j0},
    )


def _recover_path(start, tabs, checkpoints, sweeper):
    """Walk forward through checkpoint blocks, recomputing the in-block
    labels once, and pick the argmin combo at each slot.  The returned
    total re-accumulates the exact combo costs in float64."""
    k, n, levels = tabs.k, tabs.n, tabs.levels
    marks = sorted(checkpoints)
    actions = np.empty((k, n), dtype=np.int8)
    total = 0.0
    x = start
    for bi in range(len(marks) - 1):
        t0, t1 = marks[bi], marks[bi + 1]
        labels = [None] * (t1 - t0 + 1)
        labels[t1 - t0] = checkpoints[t1]
        for t in range(t1 - 1, t0, -1):
            labels[t - t0] = sweeper.stage(labels[t - t0 + 1], t)
        for t in range(t0, t1):
            v_next = labels[t + 1 - t0]
            best_c, best_val, best_nxt = -1, np.inf, None
            for c in range(tabs.combos.shape[0]):
                modes = tabs.combos[c]
                nxt = []
                ok = True
                for i in range(n):
                    m = int(modes[i])
                    if x[i] < tabs.kmin[m, t, i]:
                        ok = False
                        break
                    j = x[i] + int(tabs.shift[m, t, i])
                    nxt.append(min(max(j, 0), levels - 1))
                if not ok:
                    continue
                if tabs.saturated[t]:
                    c_cost = float(tabs.cost27[c, t])
                else:
                    c_cost = tabs.fold_cost(c, t)
                val = c_cost + float(v_next[tuple(nxt)])
                if val < best_val:
                    best_c, best_val, best_nxt = c, val, tuple(nxt)
            actions[t] = tabs.combos[best_c]
            total += float(tabs.cost27[best_c, t])
            x = best_nxt
    return actions, total


# ---------------------------------------------------------------------------
# Exact engine: label correcting over real-valued battery states.

def _expand_states(batteries, t, traces, params, power_params, e_max, combos):
    """All 27 successors of a battery vector, batch core arithmetic."""
    harvest = traces.harvest[:, t]
    loads = traces.vsc_load[:, t]
    mbs_own = float(traces.mbs_load[t])
    applied, _ = forced_off_resolve(batteries, combos, harvest, loads,
                                    params, power_params)
    metrics = applied_slot_metrics(applied, loads, mbs_own, params,
                                   power_params, e_max)
    nxt, _ = batteries_after(batteries, applied, harvest, loads,
                             params, power_params)
    return metrics["cost"], nxt


def _solve_exact(traces, params, power_params, config: DPConfig) -> BoundResult:
    n, k = traces.n_cells, traces.horizon
    e_max = resolved_e_max(params, power_params)
    combos = _mode_combos(n)
    b0 = params.initial_battery_frac * params.battery_capacity_wh
    start = (float(b0),) * n

    # labels[t][state] = [cost, parent_state, combo_index]
    labels = [dict() for _ in range(k + 1)]
    labels[0][start] = [0.0, None, -1]
    queue = deque([(0, start)])
    pop = queue.popleft if config.queue_discipline == "fifo" else queue.pop
    expanded = 0
    while queue:
        t, state = pop()
        if t == k:
            continue
        cost_here = labels[t][state][0]
        costs, nxt = _expand_states(np.array(state), t, traces, params,
                                    power_params, e_max, combos)
        expanded += 1
        layer = labels[t + 1]
        for c in range(combos.shape[0]):
            key = tuple(float(v) for v in nxt[c])
            cand = cost_here + float(costs[c])
            cur = layer.get(key)
            if cur is None or cand < cur[0]:
                layer[key] = [cand, state, c]
                queue.append((t + 1, key))
        if sum(len(d) for d in labels) > config.state_limit:
            raise CapabilityError(
                f"exact engine exceeded {config.state_limit} labels; "
                "use the dense engine for instances this large")

    best_state = min(labels[k], key=lambda s: labels[k][s][0])
    total = labels[k][best_state][0]
    actions = np.empty((k, n), dtype=np.int8)
    state = best_state
    for t in range(k, 0, -1):
        _, parent, c = labels[t][state]
        actions[t - 1] = combos[c]
        state = parent
    return BoundResult(
        actions=actions, total_cost=total,
        cumulative_reward=float(k - total), engine="exact",
        meta={"labels": sum(len(d) for d in labels), "expanded": expanded,
              "queue_discipline": config.queue_discipline},
    )


def solve_offline(traces, params: SimParams, power_params: PowerModelParams,
                  config: DPConfig | None = None) -> BoundResult:
    """Best clairvoyant mode schedule for the given traces."""
    if config is None:
        config = DPConfig()
    if traces.n_cells != params.n_cells:
        raise ValueError("traces and params disagree on the cell count")
    if config.battery_levels is None:
        return _solve_exact(traces, params, power_params, config)
    return _solve_dense(traces, params, power_params, config)


# ---------------------------------------------------------------------------
# Exhaustive search.

def brute_force(traces, params: SimParams, power_params: PowerModelParams,
                limit: int = 10_000_000) -> BoundResult:
    """Enumerate every requested-mode sequence (guard applied, exactly as
    the simulator would) and keep the cheapest."""
    n, k = traces.n_cells, traces.horizon
    n_seq = 3 ** (n * k)
    if n_seq > limit:
        raise CapabilityError(
            f"3^({n}*{k}) = {n_seq} sequences exceeds the limit of {limit}")
    e_max = resolved_e_max(params, power_params)
    combos = _mode_combos(n)
    nc = combos.shape[0]

    batteries = np.full((1, n), params.initial_battery_frac * params.battery_capacity_wh)
    totals = np.zeros(1)
    codes = np.zeros(1, dtype=np.int64)
    for t in range(k):
        harvest = traces.harvest[:, t]
        loads = traces.vsc_load[:, t]
        mbs_own = float(traces.mbs_load[t])
        applied, _ = forced_off_resolve(batteries[:, None, :], combos, harvest,
                                        loads, params, power_params)
        metrics = applied_slot_metrics(applied, loads, mbs_own, params,
                                       power_params, e_max)
        nxt, _ = batteries_after(batteries[:, None, :], applied, harvest, loads,
                                 params, power_params)
        totals = (totals[:, None] + metrics["cost"]).reshape(-1)
        codes = (codes[:, None] * nc + np.arange(nc, dtype=np.int64)).reshape(-1)
        batteries = nxt.reshape(-1, n)

    best = int(np.argmin(totals))
    total = float(totals[best])
    code = int(codes[best])
    actions = np.empty((k, n), dtype=np.int8)
    for t in range(k - 1, -1, -1):
        actions[t] = combos[code % nc]
        code //= nc
    return BoundResult(
        actions=actions, total_cost=total,
        cumulative_reward=float(k - total), engine="brute",
        meta={"sequences": int(n_seq)},
    )
