"""Deploying with zero knowledge vs deploying a trained policy.

The run-time protocol drops untrained agents into the validation year and
lets them learn on the job, epsilon decaying monthly. The alternative
pre-trains on the training year first, then validates on the same fresh
year. Shorter horizons keep the demo quick; the shapes match the full runs.
"""

from splitsim.harness import config_from_dict, runtime, train, validate

cfg = config_from_dict({"seed": 1, "horizon": 24 * 120,
                        "learning": {"algorithm": "fql", "alpha": 0.5, "epochs": 10},
                        "epsilon": {"initial": 0.9}})

print("run-time: learn online, no head start")
_, rt = runtime(cfg)
print(f"  reward {rt['cumulative_reward']:8.1f}  grid {rt['grid_energy_kwh']:7.1f} kWh  "
      f"drop {rt['mean_drop_rate']:.3f}")

print("pre-trained: ten epochs on the training year, then the same fresh year")
agents, hist = train(cfg)
print(f"  training went {hist[0]['cumulative_reward']:.1f} -> "
      f"{hist[-1]['cumulative_reward']:.1f} over {len(hist)} epochs")
_, va = validate(cfg, agents=agents)
print(f"  reward {va['cumulative_reward']:8.1f}  grid {va['grid_energy_kwh']:7.1f} kWh  "
      f"drop {va['mean_drop_rate']:.3f}")

edge = va["cumulative_reward"] - rt["cumulative_reward"]
print(f"\npre-training is worth {edge:.1f} reward on the deployment year")
