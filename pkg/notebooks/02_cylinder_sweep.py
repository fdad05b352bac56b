# %% [markdown]
# # Scale-invariant quantities over a shrinking cylinder
#
# A Gaussian swirl with a meridional stream is evolved briefly.  Then A, E,
# C, D and the weighted G are evaluated on cylinders that end at the last
# snapshot.  The Besov quantity is skipped here because it is the slow column.

# %%
from axiswirl import Cylinder, Scenario, cylinder_quantities, default_config, make_grid, run_scenario
from axiswirl.quadrature import sweep_to_csv

g = make_grid(32, 64, 0.5, -0.5, 0.5)
scn = Scenario("ring", "gaussian_swirl", {"swirl": 20.0, "sigma": 0.25, "stream": 2.0},
               grid=g, duration=0.0625, cadence=2)
h = run_scenario(scn, default_config(scn, dt=0.0625 / 250, diffusion="cn")).history
t0 = h.times[-1]

rows = [cylinder_quantities(h, Cylinder(0.0, t0, R), with_besov=False)
        for R in (0.25, 0.125, 0.0625)]
print(sweep_to_csv(rows))

# %%
for q in rows:
    print(f"R={q.R:<7g} A={q.A:.3e}  E={q.E:.3e}  script_E={q.script_E:.3e}  G_alpha={q.G_alpha:.3e}")
