"""Agent runs of increasing size against the deterministic limit.

Run with ``python demos/lln_walkthrough.py``; takes about a minute.
"""

# %%
import numpy as np

from spatial_sir import default_config, init_population, simulate, solve
from spatial_sir.experiments import TestFunctionSuite, limit_pairings

cfg = default_config()
T = float(cfg.simulation["T"])
fields = solve(cfg.model(), cfg.infectivity, cfg.gamma, cfg.solver_radius, float(cfg.solver["dt"]), T)
print(f"limit solved on {len(fields.nodes)} nodes, {len(fields.times)} steps, drift {fields.conservation_drift():.1e}")

# %% limit pairings with the test-function suite
suite = TestFunctionSuite.from_config(cfg)
times = np.linspace(0.0, T, 51)
limit = limit_pairings(fields, suite, times)
print("final susceptible mass in the limit:", round(float(limit["S"][-1, 0]), 4))

# %% mean over five replicates per size; the sup-error shrinks roughly like N^-1/2
for N in (250, 1000, 4000):
    errs = {c: [] for c in "SIRF"}
    for k in range(5):
        pop = init_population(cfg.density, cfg.infectivity, N, cfg.gamma, seed=1000 * k + N)
        log, traj = simulate(pop, cfg.infectivity, cfg.kernel, T)
        phis = suite.values(pop.positions)
        for c in errs:
            errs[c].append(np.max(np.abs(traj.pairing(c, times, phis) - limit[c])))
    print(f"N={N:5d} " + " ".join(f"{c}:{np.mean(e):.4f}" for c, e in errs.items()))
