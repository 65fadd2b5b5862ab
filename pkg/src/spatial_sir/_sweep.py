"""Compiled inner loop of the thinning simulation."""

import numpy as np
from numba import njit


@njit(cache=True)
def _level(breaks, levels, eta, j, age):
    if age < 0.0 or age >= eta[j]:
        return 0.0
    out = 0.0
    for k in range(breaks.shape[1]):
        if breaks[j, k] <= age:
            out = levels[j, k]
        else:
            break
    return out


@njit(cache=True)
def rate_at(i, t, w_ptr, w_idx, w_val, tau, breaks, levels, eta):
    """``Gamma(t, X^i) = sum_j w_ij lambda_j(t - tau_j)`` over infected ``j``."""
    total = 0.0
    for p in range(w_ptr[i], w_ptr[i + 1]):
        j = w_idx[p]
        tj = tau[j]
        if tj <= t:
            total += w_val[p] * _level(breaks, levels, eta, j, t - tj)
    return total


@njit(cache=True)
def sweep(atom_t, atom_i, atom_u, w_ptr, w_idx, w_val, wt_ptr, wt_idx, wt_val,
          tau, breaks, levels, eta, gstar, cap, budget):
    """Scan the driving Poisson atoms in time order and record infections.

    ``tau`` holds ``0`` for initially infected, ``+inf`` otherwise, and is
    updated in place.  ``gstar`` is the running dominator ``cap * sum w_ij``
    over ever-infected ``j``; atoms above it are rejected without evaluating
    the rate.  Returns the number of evaluated candidates, or ``-1`` once the
    budget is exhausted.
    """
    n_cand = 0
    for a in range(atom_t.shape[0]):
        i = atom_i[a]
        if tau[i] < np.inf:
            continue
        u = atom_u[a]
        if u > gstar[i]:
            continue
        n_cand += 1
        if n_cand > budget:
            return -1
        s = atom_t[a]
        if u <= rate_at(i, s, w_ptr, w_idx, w_val, tau, breaks, levels, eta):
            tau[i] = s
            for p in range(wt_ptr[i], wt_ptr[i + 1]):
                gstar[wt_idx[p]] += cap * wt_val[p]
    return n_cand
