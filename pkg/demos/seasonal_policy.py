"""How a trained policy spends its battery across the seasons.

Trains a fuzzy learner briefly on a full year, replays it, and prints the
winter and summer hour-by-hour operative-mode selection rates next to the
clairvoyant schedule's. Winter is the interesting season: harvest covers
only a fraction of the day, so the policy has to choose which hours earn
the battery.
"""

import numpy as np

from splitsim.agents import FixedSequenceAgent
from splitsim.harness import config_from_dict, seasonal_mode_rates, train, training_traces
from splitsim.offline_bound import solve_offline
from splitsim.simulator import run_episode

cfg = config_from_dict({"seed": 1, "horizon": 8760,
                        "learning": {"algorithm": "fql", "alpha": 0.5, "epochs": 6},
                        "epsilon": {"initial": 0.9},
                        "bound": {"battery_levels": 51}})
traces = training_traces(cfg)

agents, hist = train(cfg)
log = run_episode(agents, traces, cfg.sim, cfg.power)
learned = seasonal_mode_rates(log)

bound = solve_offline(traces, cfg.sim, cfg.power, cfg.bound)
replay = run_episode([FixedSequenceAgent(bound.actions[:, i]) for i in range(3)],
                     traces, cfg.sim, cfg.power)
oracle = seasonal_mode_rates(replay)

print(f"trained reward {log.cumulative_reward:.1f}, "
      f"bound {bound.cumulative_reward:.1f}")
for season in ("winter", "summer"):
    print(f"\n{season}: mac-phy selection rate by hour, learned vs clairvoyant")
    for h in range(0, 24, 3):
        lw = learned[season][h, 2]
        ow = oracle[season][h, 2]
        print(f"  {h:02d}:00  learned {lw:5.1f}%  {'#' * int(lw / 5):20s} "
              f"oracle {ow:5.1f}%  {'#' * int(ow / 5)}")
