"""Exact simulation of the individual-based spatial SIR model with varying infectivity.

Each initially susceptible individual ``i`` is driven by its own Poisson random
measure ``P^i`` on ``[0, T] x [0, inf)``; it is infected at the first atom
``(s, u)`` with ``u <= Gamma(s-, X^i)``.  The measure is generated in
horizontal bands ``[0, b), [b, 2b), [2b, 4b), ...`` from a stream keyed only by
the master seed and ``i``, so a run on the full domain and a run on a
truncated domain see exactly the same atoms.  Only the bands below the
largest rate ``i`` could ever experience are materialised.

Within the sweep, atoms above the running dominator (the rate with every
curve replaced by the cap) are rejected without evaluating the rate; the
dominator grows only at infection events.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from . import seeding
from ._sweep import sweep
from .errors import ConfigurationError, ParameterError, RunawaySimulationError, UsageError
from .geometry import check_gamma
from .infectivity import INITIAL, NEW, CurveBank, sample_curves

S, I, R = 0, 1, 2
COMPARTMENT_CODES = {"S": S, "I": I, "R": R}
BUDGET_FACTOR = 50


@dataclass
class Population:
    """Positions, initial states and pre-assigned curves of ``N`` individuals."""

    positions: np.ndarray
    states: np.ndarray
    gamma: float
    seed: int
    curves: CurveBank

    @property
    def N(self):
        return len(self.states)

    @property
    def dim(self):
        return self.positions.shape[1]

    @cached_property
    def susceptible(self):
        return np.flatnonzero(self.states == S)

    @cached_property
    def infected(self):
        return np.flatnonzero(self.states == I)

    @cached_property
    def recovered(self):
        return np.flatnonzero(self.states == R)

    @cached_property
    def radii(self):
        return np.linalg.norm(self.positions, axis=1)

    @cached_property
    def fingerprint(self):
        h = hashlib.sha256()
        for arr in (self.positions, self.states, self.curves.breaks, self.curves.levels, self.curves.eta):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr((self.gamma, self.seed)).encode())
        return h.hexdigest()[:16]

    def thinning_stream(self, i):
        return seeding.stream(self.seed, seeding.THINNING, i)


def _assign_curves(states, infectivity, seed):
    N = len(states)
    bank = CurveBank.empty(N)
    for cohort, state in ((INITIAL, I), (NEW, S)):
        rows = np.flatnonzero(states == state)
        if len(rows):
            rng = seeding.stream(seed, seeding.CURVES, cohort)
            bank.assign(rows, sample_curves(infectivity, rng, cohort, len(rows)))
    return bank


def population_from_arrays(positions, states, infectivity, gamma, seed):
    """Population with given positions and states; curves drawn from ``seed``."""
    check_gamma(gamma)
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    states = np.asarray(states, dtype=np.int8)
    if len(states) != len(positions) or len(states) < 1:
        raise ConfigurationError("positions and states must have the same positive length")
    if not np.isin(states, (S, I, R)).all():
        raise ConfigurationError("states must be 0 (S), 1 (I) or 2 (R)")
    return Population(positions, states, float(gamma), int(seed), _assign_curves(states, infectivity, seed))


def init_population(density, infectivity, N, gamma, seed):
    """Draw i.i.d. (state, position) pairs from ``density``."""
    if N < 1:
        raise ParameterError("population size must be at least 1")
    check_gamma(gamma)
    if abs(sum(density.fractions) - 1.0) > 1e-12:
        raise ConfigurationError("compartment fractions must sum to 1")
    states, pos = density.sample(int(N), lambda c: seeding.stream(seed, seeding.INIT, c + 1))
    return population_from_arrays(pos, states, infectivity, gamma, seed)


@dataclass
class Interaction:
    """Weights ``w_ij = K(X^i, X^j) / (N nu_j^gamma)`` (with truncation indicators).

    ``W`` has infectee rows, ``Wt`` infector rows.
    """

    W: sparse.csr_matrix
    Wt: sparse.csr_matrix
    nu: np.ndarray
    M: Optional[float]


def kernel_pairs(positions, kernel):
    """Symmetric sparse ``K(X^l, X^j)`` including the diagonal."""
    N = len(positions)
    pairs = cKDTree(positions).query_pairs(kernel.support, output_type="ndarray")
    vals = kernel.profile(np.linalg.norm(positions[pairs[:, 0]] - positions[pairs[:, 1]], axis=1))
    diag = np.full(N, float(kernel.profile(np.zeros(1))[0]))
    rows = np.concatenate([pairs[:, 0], pairs[:, 1], np.arange(N)])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0], np.arange(N)])
    mat = sparse.csr_matrix((np.concatenate([vals, vals, diag]), (rows, cols)), shape=(N, N))
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def interaction(pop, kernel, M=None, K=None):
    N = pop.N
    if K is None:
        K = kernel_pairs(pop.positions, kernel)
    inside = np.ones(N) if M is None else (pop.radii <= M).astype(float)
    nu = (K @ inside) / N
    scale = np.zeros(N)
    ok = (inside > 0) & (nu > 0)
    scale[ok] = 1.0 / (N * nu[ok] ** pop.gamma) if pop.gamma > 0 else 1.0 / N
    W = (K @ sparse.diags(scale)).tocsr()
    W.sort_indices()
    Wt = W.T.tocsr()
    Wt.sort_indices()
    return Interaction(W, Wt, nu, M)


def thinning_atoms(pop, ceiling, T, base):
    """Atoms of ``P^i`` in ``[0, T] x [0, ceiling_i)``, band by band, sorted by time."""
    ts, owners, us = [], [], []
    for i in pop.susceptible:
        top = ceiling[i]
        if not top > 0:
            continue
        rng = pop.thinning_stream(i)
        lo, hi = 0.0, base
        while lo < top:
            height = hi - lo
            n = rng.poisson(height * T)
            ts.append(rng.uniform(0.0, T, size=n))
            us.append(lo + height * rng.random(size=n))
            owners.append(np.full(n, i, dtype=np.int64))
            lo, hi = hi, 2.0 * hi
    if not ts:
        return np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0)
    t = np.concatenate(ts)
    order = np.argsort(t, kind="stable")
    return t[order], np.concatenate(owners)[order], np.concatenate(us)[order]


@dataclass
class EventLog:
    """Infection and recovery times of one run.

    ``tau`` is the driver array of the sweep: ``0`` for initially infected,
    the infection time for infected susceptibles, ``+inf`` otherwise.
    ``events`` is ordered by (time, transition, individual); transition ``0``
    is ``S>I`` and ``1`` is ``I>R``.  A truncated run lists events of the
    individuals in ``B(0, M)`` only.
    """

    population: Population
    T: float
    M: Optional[float]
    tau: np.ndarray
    infection_time: np.ndarray
    recovery_time: np.ndarray
    event_time: np.ndarray
    event_individual: np.ndarray
    event_kind: np.ndarray
    n_candidates: int

    @property
    def n_events(self):
        return len(self.event_time)

    def write_csv(self, path):
        """Columnar text: ``time,individual,transition,x0[,x1,...]``, full precision."""
        pos = self.population.positions
        d = pos.shape[1]
        names = ("S>I", "I>R")
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["time", "individual", "transition"] + [f"x{k}" for k in range(d)]) + "\n")
            for t, i, k in zip(self.event_time, self.event_individual, self.event_kind):
                coords = ",".join(repr(float(v)) for v in pos[i])
                fh.write(f"{float(t)!r},{int(i)},{names[k]},{coords}\n")


@dataclass
class EmpiricalTrajectory:
    """Event-indexed compartment counts plus everything needed to pair measures with test functions.

    In truncated runs the measures only charge individuals in ``B(0, M)``.
    """

    log: EventLog
    mask: np.ndarray
    times: np.ndarray
    counts: np.ndarray

    @property
    def population(self):
        return self.log.population

    def occupancy(self, compartment, times):
        """Matrix ``(len(times), N)`` of per-individual weights: indicators, or ``lambda_i(t - tau_i)`` for ``F``."""
        log, pop = self.log, self.population
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if (times > log.T).any() or (times < 0).any():
            raise ParameterError("pairing times must lie in [0, T]")
        t = times[:, None]
        st = pop.states[None, :]
        tau, rec = log.tau[None, :], log.recovery_time[None, :]
        if compartment == "total":
            out = np.ones((len(times), pop.N))
        elif compartment == "S":
            out = (st == S) & (tau > t)
        elif compartment == "I":
            # initially infected have tau = 0, so one rule covers both groups
            out = (st != R) & (tau <= t) & (t < rec)
        elif compartment == "R":
            out = (st == R) | ((st != R) & (rec <= t))
        elif compartment == "F":
            out = np.zeros((len(times), pop.N))
            rows = np.flatnonzero(np.isfinite(log.tau) & self.mask)
            if len(rows):
                out[:, rows] = pop.curves.evaluate(rows, t - log.tau[rows][None, :])
        else:
            raise ParameterError(f"unknown compartment {compartment!r}")
        return np.asarray(out, dtype=float) * self.mask

    def pairing(self, compartment, times, phi=None):
        """``(mu_t^{c,N}, phi)`` for every ``t`` in ``times``.

        ``phi`` holds values at the positions, shape ``(N,)``, or ``(n_phi, N)``
        for several test functions at once (result ``(len(times), n_phi)``).
        """
        pop = self.population
        occ = self.occupancy(compartment, times)
        if phi is None:
            return occ.sum(axis=1) / pop.N
        phi = np.asarray(phi, dtype=float)
        return occ @ phi.T / pop.N


def _phi_values(pop, phi):
    if phi is None:
        return None
    if callable(phi):
        return np.asarray(phi(pop.positions), dtype=float)
    return np.asarray(phi, dtype=float)


def measure_eval(traj, compartment, t, phi=None):
    """``(mu_t^{c,N}, phi)`` for ``compartment`` in ``S, I, R, F, total``."""
    return float(traj.pairing(compartment, [t], _phi_values(traj.population, phi))[0])


def _build_log(pop, T, M, tau, n_cand):
    N = pop.N
    st = pop.states
    infection = np.full(N, np.inf)
    sus = st == S
    infection[sus] = tau[sus]
    recovery = np.full(N, np.inf)
    inf_sus = sus & np.isfinite(tau)
    recovery[inf_sus] = tau[inf_sus] + pop.curves.eta[inf_sus]
    recovery[st == I] = pop.curves.eta[st == I]
    inside = np.ones(N, dtype=bool) if M is None else pop.radii <= M
    inf_ev = np.flatnonzero((infection <= T) & inside)
    rec_ev = np.flatnonzero((recovery <= T) & inside)
    times = np.concatenate([infection[inf_ev], recovery[rec_ev]])
    who = np.concatenate([inf_ev, rec_ev])
    kind = np.concatenate([np.zeros(len(inf_ev), np.int8), np.ones(len(rec_ev), np.int8)])
    order = np.lexsort((who, kind, times))
    return EventLog(pop, float(T), M, tau, infection, recovery, times[order], who[order], kind[order], int(n_cand))


def _trajectory(log, mask):
    pop = log.population
    st = pop.states
    counts0 = np.array([np.sum(mask & (st == c)) for c in (S, I, R)], dtype=np.int64)
    keep = mask[log.event_individual]
    kinds = log.event_kind[keep]
    delta = np.zeros((len(kinds), 3), dtype=np.int64)
    delta[kinds == 0, S] = -1
    delta[kinds == 0, I] = 1
    delta[kinds == 1, I] = -1
    delta[kinds == 1, R] = 1
    counts = np.vstack([counts0, counts0 + np.cumsum(delta, axis=0)])
    times = np.concatenate([[0.0], log.event_time[keep]])
    return EmpiricalTrajectory(log, mask, times, counts)


def simulate(pop, infectivity, kernel, T, truncation=None, event_budget=None, band_base=None, inter=None):
    """Run the model on ``[0, T]``, on ``D`` or on ``D cap B(0, truncation)``.

    Returns ``(EventLog, EmpiricalTrajectory)``.  ``band_base`` is the height of
    the lowest band of the driving measure and must be shared by runs that are
    meant to be coupled; it defaults to ``cap * C / 4``.
    """
    if not T > 0:
        raise ParameterError("simulation horizon must be positive")
    N = pop.N
    if inter is not None and inter.M != truncation:
        raise UsageError("interaction weights were built for another truncation radius")
    cap = float(infectivity.cap)
    budget = BUDGET_FACTOR * N if event_budget is None else int(event_budget)
    base = cap * kernel.C / 4.0 if band_base is None else float(band_base)
    tau = np.full(N, np.inf)
    tau[pop.infected] = 0.0
    n_cand = 0
    if cap > 0 and len(pop.susceptible):
        if inter is None:
            inter = interaction(pop, kernel, truncation)
        W, Wt = inter.W, inter.Wt
        could_infect = (pop.states != R).astype(float)
        ceiling = cap * (W @ could_infect)
        if truncation is not None:
            # the truncated system consists of the individuals in the ball only
            ceiling[pop.radii > truncation] = 0.0
        gstar = cap * (W @ (pop.states == I).astype(float))
        at, ai, au = thinning_atoms(pop, ceiling, T, base)
        c = pop.curves
        n_cand = sweep(at, ai, au, W.indptr, W.indices, W.data, Wt.indptr, Wt.indices, Wt.data,
                       tau, c.breaks, c.levels, c.eta, gstar, cap, budget)
        if n_cand < 0:
            raise RunawaySimulationError(f"more than {budget} thinning candidates before T={T}")
    log = _build_log(pop, T, truncation, tau, n_cand)
    mask = np.ones(N, dtype=bool) if truncation is None else pop.radii <= truncation
    return log, _trajectory(log, mask)


def force_of_infection(pop, log, kernel, t, x, truncation=None, cap=None):
    """Empirical force of infection ``Gamma^N(t, x)`` (``Gamma^N_n`` when truncated).

    With ``cap`` given, every individual infected by ``t`` contributes ``cap``
    instead of its curve: the dominator used for thinning.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(pop.dim)
    N = pop.N
    inside = np.ones(N, dtype=bool) if truncation is None else pop.radii <= truncation
    active = np.flatnonzero((log.tau <= t) & inside)
    if not len(active):
        return 0.0
    kx = kernel(pop.positions[active], x)
    near = kx > 0
    active, kx = active[near], kx[near]
    if not len(active):
        return 0.0
    if cap is not None:
        lam = np.full(len(active), float(cap))
    else:
        lam = pop.curves.evaluate(active, t - log.tau[active])
    if pop.gamma > 0:
        tree = cKDTree(pop.positions[inside])
        nb = tree.query_ball_point(pop.positions[active], kernel.support)
        src = pop.positions[inside]
        nu = np.array([kernel(src[idx], pop.positions[j]).sum() for idx, j in zip(nb, active)]) / N
        lam = lam / nu**pop.gamma
    return float(np.sum(kx * lam) / N)


def coupling_discrepancy(log_full, log_trunc, M):
    """Fraction of susceptibles in ``B(0, M)`` whose infection indicator ever differs on ``[0, T]``."""
    if log_full.population.fingerprint != log_trunc.population.fingerprint or log_full.T != log_trunc.T:
        raise UsageError("coupling needs two runs of the same population and horizon")
    pop = log_full.population
    T = log_full.T
    a = log_full.infection_time
    b = log_trunc.infection_time
    ever = (a <= T) | (b <= T)
    differs = ever & (a != b)
    sel = (pop.states == S) & (pop.radii <= M)
    return float(np.sum(differs & sel) / pop.N)
