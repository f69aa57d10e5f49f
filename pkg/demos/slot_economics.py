"""What each operative mode costs in a single slot.

Walks the power model anchors, then prices the three modes for one cell in
a congested evening slot: battery drawn, grid energy at the macro site, and
the resulting reward.
"""

import numpy as np

from splitsim.power import OperativeMode, PowerModelParams, mbs_site_power, vsc_power
from splitsim.simulator import NetworkState, SimParams, resolved_e_max, step
from splitsim.traces import TraceSet

pp = PowerModelParams()
print("vSC slot draw, W")
for mode in OperativeMode:
    for load in (0.0, 0.5, 1.0):
        print(f"  {mode.name:8s} load {load:.1f}: {vsc_power(mode, load, pp):7.2f}")
print(f"MBS site, idle, nothing hosted: {mbs_site_power(0.0, [], pp):.3f} W")
print(f"MBS site, one PhyRf cell at full load: "
      f"{mbs_site_power(0.0, [(1.0, OperativeMode.PHY_RF)], pp):.3f} W")

# one busy evening slot: full own MBS load, one cell deciding what to do
params = SimParams(n_cells=1)
print(f"\ne_max = {resolved_e_max(params, pp):.4f} Wh")
traces = TraceSet(harvest=np.zeros((1, 1)), vsc_load=np.array([[30.0]]),
                  mbs_load=np.array([100.0]))
for action in (0, 1, 2):
    state = NetworkState(t=0, battery=np.array([480.0]),
                         harvest=np.zeros(1), vsc_load=np.array([30.0]),
                         mbs_own_load=100.0)
    _, out = step(state, np.array([action]), params, pp, traces)
    name = OperativeMode(action).name
    print(f"  request {name:8s}: applied {OperativeMode(int(out.applied[0])).name:8s} "
          f"battery {480.0 - out.next_battery[0]:6.1f} Wh  "
          f"grid {out.grid_energy_wh:6.1f} Wh  "
          f"drop {out.drop_rate:.3f}  reward {out.reward:.4f}")
