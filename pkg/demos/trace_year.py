"""Generate a synthetic year and look at its seasonal structure.

Prints daily harvest statistics for winter and summer, the traffic peaks
against the capacity limits, and writes the whole year to traces.csv in the
interchange format the CLI consumes.
"""

import numpy as np

from splitsim.traces import SolarConfig, TrafficConfig, export_traces_csv, generate_traces

solar = SolarConfig()
traffic = TrafficConfig()
traces = generate_traces(solar, traffic, seed=1, horizon=8760, n_cells=3)

day = np.arange(8760) // 24
daily = np.vstack([np.bincount(day, weights=traces.harvest[i]) for i in range(3)])
winter = np.r_[0:59, 334:365]
summer = np.r_[151:243]

print("harvest, Wh per cell per day")
print(f"  winter mean {daily[:, winter].mean():7.1f}   "
      f"min {daily[:, winter].min():7.1f}")
print(f"  summer mean {daily[:, summer].mean():7.1f}   "
      f"max {daily[:, summer].max():7.1f}")
print(f"  clear-sky slot cap {solar.cap_wh:.2f} Wh")

print("\ntraffic, Mb/s")
print(f"  nominal vSC peak {traffic.peak_mbps:.2f}  (capacity 37.5)")
print(f"  noisy vSC max    {traces.vsc_load.max():.2f}")
print(f"  nominal MBS peak {traffic.mbs_peak_mbps:.2f}  (capacity 112.5)")
print(f"  noisy MBS max    {traces.mbs_load.max():.2f}")

hour_mean = traces.vsc_load.mean(axis=0).reshape(365, 24).mean(axis=0)
print("\nmean vSC load by hour")
for h in range(0, 24, 4):
    bar = "#" * int(40 * hour_mean[h] / hour_mean.max())
    print(f"  {h:02d}:00 {hour_mean[h]:6.2f} {bar}")

export_traces_csv(traces, "traces.csv")
print("\nwrote traces.csv")
