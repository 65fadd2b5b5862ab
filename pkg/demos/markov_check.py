"""Homogeneous box: the limit solver reduces to the classical SIR equations.

Run with ``python demos/markov_check.py``.
"""

# %%
import numpy as np
from scipy.integrate import solve_ivp

from spatial_sir import solve
from spatial_sir.config import shipped_config

cfg = shipped_config("markov")
f = solve(cfg.model(), cfg.infectivity, cfg.gamma, cfg.solver_radius, 1e-3, float(cfg.simulation["T"]))

beta, rho = cfg.infectivity.cap, cfg.infectivity.new.duration.rate
s0, i0, _ = cfg.density.fractions
ode = solve_ivp(lambda t, y: [-beta * y[0] * y[1], beta * y[0] * y[1] - rho * y[1]],
                (0, f.times[-1]), [s0, i0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True).sol

# %%
ref = ode(f.times)
for t in (0.0, 1.0, 2.0, 4.0, 6.0):
    m = int(round(t / f.dt))
    S, I = f.pairing("S", [t])[0], f.pairing("I", [t])[0]
    print(f"t={t:3.1f}  S {S:.5f} (ode {ref[0, m]:.5f})  I {I:.5f} (ode {ref[1, m]:.5f})")
print("sup |S - S_ode| =", float(np.max(np.abs(f.pairing("S", f.times) - ref[0]))))
