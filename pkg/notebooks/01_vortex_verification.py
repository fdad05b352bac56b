# %% [markdown]
# # Two exact swirls
#
# Rigid rotation is a steady state with zero radial and axial flow; the
# pressure carries the centripetal balance.  The Oseen vortex diffuses its
# circulation Gamma = kappa (1 - exp(-r^2 / 4(t + t_shift))) and is also an
# exact solution.  Both give us something to measure the solver against.

# %%
import numpy as np

from axiswirl import Scenario, default_config, kinetic_energy, make_grid, run_scenario

# %%
g = make_grid(32, 32, 0.5, -0.5, 0.5)
rigid = Scenario("rigid", "rigid_rotation", {"omega": 1.0}, grid=g, duration=0.02, cadence=10)
res = run_scenario(rigid, default_config(rigid))
last = res.history.snapshots[-1]
print("rigid: snapshots", len(res.history), "max |u_theta - r|",
      np.max(np.abs(last.utheta.values - g.mesh()[0])))

# %% [markdown]
# The Oseen run at two resolutions.  Crank-Nicolson diffusion lets both grids
# share one time step, so the spatial error dominates.

# %%
errs = []
for N in (32, 64):
    g = make_grid(N, N, 1.0, -1.0, 1.0)
    scn = Scenario("oseen", "oseen_swirl", {"kappa": 1.0}, grid=g, duration=0.01, cadence=40)
    cfg = default_config(scn, dt=0.01 / 40, diffusion="cn")
    h = run_scenario(scn, cfg).history
    exact = scn.fields_at(h.times[-1])[1]
    e = np.sqrt(np.mean((h.snapshots[-1].utheta.values - exact) ** 2))
    errs.append(e)
    print(f"N={N:3d}  rms error {e:.3e}  energy {kinetic_energy(h.snapshots[-1]):.6f}")
print("observed order", np.log2(errs[0] / errs[1]))
