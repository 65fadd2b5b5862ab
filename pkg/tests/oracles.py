"""Independent reference computations used by the tests.

Nothing here imports the package's numerical code paths: every oracle is a
direct loop, a closed form, or a generic scipy routine.
"""

import math

import numpy as np
from scipy.integrate import solve_ivp


def brute_force_rate(positions, kernel_fn, infected_lambda, gamma, x, M=None):
    """``(1/N) sum_j K(x, X^j) lambda_j / [(1/N) sum_l K(X^l, X^j)]^gamma`` by double loop.

    ``infected_lambda`` maps individual index to its current infectivity.
    With ``M`` the sums only see individuals in the closed ball of radius ``M``.
    """
    N = len(positions)
    inside = [M is None or np.linalg.norm(p) <= M for p in positions]
    total = 0.0
    for j, lam in infected_lambda.items():
        if not inside[j]:
            continue
        nu = sum(kernel_fn(positions[l], positions[j]) for l in range(N) if inside[l]) / N
        total += kernel_fn(x, positions[j]) * lam / nu**gamma
    return total / N


def three_individual_probability(g, T, eta0):
    """P(a susceptible under constant pressure ``g`` for ``min(T, eta0)`` is infected)."""
    return 1.0 - math.exp(-g * min(T, eta0))


def binomial_band(p, n, k=3.0):
    s = math.sqrt(p * (1.0 - p) / n)
    return p - k * s, p + k * s


def sir_ode(beta, rho, s0, i0, T):
    """Dense solution of ``S' = -beta S I, I' = beta S I - rho I``."""
    rhs = lambda t, y: [-beta * y[0] * y[1], beta * y[0] * y[1] - rho * y[1]]
    return solve_ivp(rhs, (0.0, T), [s0, i0], method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True).sol


def gaussian_mass_outside(a, radius):
    """Mass of the 1-d density proportional to ``exp(-a x^2)`` outside ``[-radius, radius]``."""
    return math.erfc(radius * math.sqrt(a))


def midpoint_normalizer(kernel_fn, density_fn, y, h, reach):
    """``int K(z, y) mu(z) dz`` in one dimension by an explicit midpoint loop on ``(k + 1/2) h``."""
    lo = math.floor((y - reach) / h) - 1
    hi = math.ceil((y + reach) / h) + 1
    total = 0.0
    for k in range(lo, hi + 1):
        z = (k + 0.5) * h
        if abs(z - y) <= reach:
            total += kernel_fn(z, y) * density_fn(z) * h
    return total
