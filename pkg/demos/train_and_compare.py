"""Train the learners on a short horizon and line everyone up.

Eight weeks, a few epochs: enough to see the fuzzy and tabular learners
separate from the fixed baselines, and to read their operative-mode mixes.
Full-year runs go through the CLI or the harness directly.
"""

import numpy as np

from splitsim.harness import config_from_dict, metrics_summary, train, training_traces
from splitsim.offline_bound import solve_offline
from splitsim.simulator import run_episode

BASE = {"seed": 1, "horizon": 24 * 56,
        "learning": {"epochs": 8, "alpha": 0.5},
        "epsilon": {"initial": 0.9},
        "bound": {"battery_levels": 51}}

cfg = config_from_dict(BASE)
traces = training_traces(cfg)
bound = solve_offline(traces, cfg.sim, cfg.power, cfg.bound)
print(f"clairvoyant bound: reward {bound.cumulative_reward:.1f} "
      f"over {traces.horizon} slots")

rows = []
for algo in ("fql", "ql", "u-fql", "u-ql", "greedy", "static-macphy", "all-off"):
    c = config_from_dict({**BASE, "learning": {**BASE["learning"], "algorithm": algo}})
    if algo in ("fql", "ql", "u-fql", "u-ql"):
        agents, hist = train(c)
        reward = hist[-1]["cumulative_reward"]
        log = run_episode(agents, traces, c.sim, c.power)
    else:
        from splitsim.harness import make_agents
        log = run_episode(make_agents(c), traces, c.sim, c.power)
        reward = log.cumulative_reward
    m = metrics_summary(log)
    mix = np.bincount(log.applied.ravel(), minlength=3) / log.applied.size
    rows.append((algo, reward, m["grid_energy_kwh"], m["mean_drop_rate"], mix))

print(f"\n{'policy':14s} {'reward':>8s} {'of bound':>9s} {'grid kWh':>9s} "
      f"{'drop':>6s}   off/phyrf/macphy")
for algo, reward, grid, drop, mix in rows:
    print(f"{algo:14s} {reward:8.1f} {reward / bound.cumulative_reward:9.3f} "
          f"{grid:9.1f} {drop:6.3f}   "
          f"{mix[0]:.2f} / {mix[1]:.2f} / {mix[2]:.2f}")
