"""Deterministic limit densities on a truncated domain.

Fields are densities with respect to the population density ``mu``:
``S(t, x) mu(x)`` is the susceptible density at ``x``.  With the flux
``B(s, x) = S(s, x) int Lambda_n(x, y) F(s, y) dy`` the system is a set of
Volterra equations

    S(t) = S(0) - int_0^t B
    F(t) = lam0(t) I(0) + int_0^t lam(t - s) B(s) ds
    I(t) = I(0) F0^c(t) + int_0^t F^c(t - s) B(s) ds
    R(t) = R(0) + I(0) F0(t) + int_0^t F(t - s) B(s) ds

discretised on ``t_m = m dt``.  The same discrete flux enters every
equation, so ``S + I + R`` is conserved to rounding.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import ParameterError, SingularNormalizerError, SolverDefectError, StabilityError
from .geometry import NU_FLOOR, Grid, check_gamma, kernel_matrix
from .infectivity import INITIAL, NEW, tabulate

SCHEMES = ("euler", "trapezoid")
FIXED_POINT_TOL = 1e-15
FIXED_POINT_ITERS = 100


@dataclass
class LimitFields:
    """Solution on ``grid`` at the times ``times`` (every step of the scheme)."""

    grid: Grid
    times: np.ndarray
    S: np.ndarray
    F: np.ndarray
    I: np.ndarray
    R: np.ndarray
    B: np.ndarray
    mu: np.ndarray
    W: sparse.csr_matrix
    gamma: float
    dt: float
    scheme: str
    cap: float

    @property
    def M(self):
        return self.grid.M

    @property
    def nodes(self):
        return self.grid.nodes

    def field(self, name):
        return {"S": self.S, "I": self.I, "R": self.R, "F": self.F}[name]

    def conservation_drift(self):
        total = self.S + self.I + self.R
        return float(np.max(np.abs(total - total[0])))

    def force(self, m):
        """``Gamma(t_m, x) = int Lambda_n(x, y) F(t_m, y) dy`` at every node."""
        return self.W @ self.F[m]

    def _interp(self, arr, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if (times < -1e-12).any() or (times > self.times[-1] + 1e-9).any():
            raise ParameterError("pairing times must lie in the solved interval")
        pos = np.clip(times / self.dt, 0.0, len(self.times) - 1)
        lo = np.floor(pos + 1e-9).astype(int)
        lo = np.minimum(lo, len(self.times) - 1)
        frac = np.clip(pos - lo, 0.0, None)
        hi = np.minimum(lo + 1, len(self.times) - 1)
        return arr[lo] * (1.0 - frac[:, None]) + arr[hi] * frac[:, None]

    def pairing(self, compartment, times, phi=None):
        """``int phi(x) field(t, x) mu(x) dx`` for each ``t``.

        ``phi`` holds values at the nodes, shape ``(n_nodes,)``, or
        ``(n_phi, n_nodes)`` for a result of shape ``(len(times), n_phi)``.
        """
        w = self.mu * self.grid.cell_volume
        if phi is not None:
            w = w * np.asarray(phi, dtype=float)
        if compartment == "total":
            arr = np.broadcast_to(self.S[0] + self.I[0] + self.R[0], (len(np.atleast_1d(times)), len(self.mu)))
        elif compartment in ("S", "I", "R", "F"):
            arr = self._interp(self.field(compartment), times)
        else:
            raise ParameterError(f"unknown compartment {compartment!r}")
        return arr @ w.T

    def to_csv(self, path, stride=1):
        """Rows ``t,x0[,x1...],S,F,I,R`` in full precision."""
        d = self.nodes.shape[1]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["t"] + [f"x{k}" for k in range(d)] + ["S", "F", "I", "R"]) + "\n")
            for m in range(0, len(self.times), stride):
                t = repr(float(self.times[m]))
                for j, x in enumerate(self.nodes):
                    vals = [t] + [repr(float(v)) for v in x]
                    vals += [repr(float(a[m, j])) for a in (self.S, self.F, self.I, self.R)]
                    fh.write(",".join(vals) + "\n")


def _weights_key(model, gamma, M):
    text = repr((model.domain, model.kernel, model.density, model.h, float(gamma), float(M)))
    return hashlib.sha256(text.encode()).hexdigest()[:20]


def weights(model, gamma, grid, cache_dir=None):
    """``Lambda_n(x_i, y_j) h^d`` on ``grid``, read from or written to ``cache_dir`` if given."""
    if cache_dir is None:
        return model.weight_matrix(gamma, grid)
    path = os.path.join(cache_dir, f"weights-{_weights_key(model, gamma, grid.M)}.npz")
    if os.path.exists(path):
        return sparse.load_npz(path).tocsr()
    W = model.weight_matrix(gamma, grid)
    os.makedirs(cache_dir, exist_ok=True)
    sparse.save_npz(path, W, compressed=False)
    return W


def solve(model, infectivity, gamma, M, dt, T, scheme="euler", cache_dir=None):
    """Solve on ``D cap B(0, M)`` up to ``T`` with step ``dt``."""
    check_gamma(gamma)
    if scheme not in SCHEMES:
        raise ParameterError(f"unknown scheme {scheme!r}; use one of {SCHEMES}")
    R_bar = model.kernel.support
    if model.h > R_bar / 4 * (1 + 1e-12):
        raise ParameterError(f"spatial step h={model.h} must not exceed support/4 = {R_bar / 4}")
    if dt > infectivity.min_time_scale / 4 * (1 + 1e-12):
        raise ParameterError(f"time step {dt} must not exceed a quarter of the shortest duration scale")
    if not (dt > 0 and T > 0):
        raise ParameterError("time step and horizon must be positive")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T:
        raise ParameterError("horizon must be a multiple of the time step")
    grid = model.grid(M)
    if not len(grid):
        raise ParameterError(f"no quadrature nodes inside radius {M}")
    W = weights(model, gamma, grid, cache_dir)
    mu = model.density(grid.nodes)
    S0, I0, R0 = model.density.shares(grid.nodes).T
    lam0, F0 = tabulate(infectivity, INITIAL, dt, n)
    lam, Fn = tabulate(infectivity, NEW, dt, n)
    Fc = 1.0 - Fn
    n_nodes = len(grid)
    S = np.empty((n + 1, n_nodes))
    Fi = np.empty_like(S)
    I = np.empty_like(S)
    R = np.empty_like(S)
    B = np.zeros_like(S)
    S[0], Fi[0], I[0], R[0] = S0, lam0[0] * I0, I0 * (1.0 - F0[0]), R0 + I0 * F0[0]
    B[0] = S[0] * (W @ Fi[0])
    # rev[:, n - k] holds the Volterra kernels at lag k, so rev[:, n-m:n] pairs lags m..1 with B[0..m-1]
    rev = np.ascontiguousarray(np.stack([lam, Fc, Fn])[:, ::-1])
    cS = np.zeros(n_nodes)
    for m in range(1, n + 1):
        cS += B[m - 1]
        cF, cI, cR = rev[:, n - m:n] @ B[:m]
        if scheme == "euler":
            S[m] = S0 - dt * cS
            Fi[m] = lam0[m] * I0 + dt * cF
            I[m] = I0 * (1.0 - F0[m]) + dt * cI
            R[m] = R0 + I0 * F0[m] + dt * cR
            _check_positive(S[m], m, dt, W, Fi[m - 1])
            B[m] = S[m] * (W @ Fi[m])
        else:
            # trapezoid: endpoints k = 0 and k = m carry weight 1/2
            b0 = B[0]
            baseS = S0 - dt * (cS - 0.5 * b0)
            baseF = lam0[m] * I0 + dt * (cF - 0.5 * lam[m] * b0)
            baseI = I0 * (1.0 - F0[m]) + dt * (cI - 0.5 * Fc[m] * b0)
            baseR = R0 + I0 * F0[m] + dt * (cR - 0.5 * Fn[m] * b0)
            bm = B[m - 1].copy()
            for _ in range(FIXED_POINT_ITERS):
                s_m = baseS - 0.5 * dt * bm
                f_m = baseF + 0.5 * dt * lam[0] * bm
                new = s_m * (W @ f_m)
                done = np.max(np.abs(new - bm)) <= FIXED_POINT_TOL * max(1.0, np.max(np.abs(new)))
                bm = new
                if done:
                    break
            S[m] = baseS - 0.5 * dt * bm
            Fi[m] = baseF + 0.5 * dt * lam[0] * bm
            I[m] = baseI + 0.5 * dt * Fc[0] * bm
            R[m] = baseR + 0.5 * dt * Fn[0] * bm
            _check_positive(S[m], m, dt, W, Fi[m - 1])
            B[m] = S[m] * (W @ Fi[m])
    times = dt * np.arange(n + 1)
    return LimitFields(grid, times, S, Fi, I, R, B, mu, W, float(gamma), float(dt), scheme, float(infectivity.cap))


def _check_positive(s, m, dt, W, f_prev):
    if (s < 0).any():
        rate = float(np.max(W @ f_prev)) if len(f_prev) else 0.0
        suggested = 0.5 / rate if rate > 0 else 0.5 * dt
        raise StabilityError(f"negative susceptible density at step {m}; reduce the time step", suggested_dt=min(suggested, 0.5 * dt))


def pi_n(model, gamma, M_n, M_out):
    """Truncation discrepancy ``int_D |int_{D_n} (Lambda - Lambda_n)(x, y) dy| mu(x) dx``."""
    check_gamma(gamma)
    R_bar = model.kernel.support
    if M_out < M_n + R_bar - 1e-12:
        raise ParameterError(f"outer radius {M_out} must reach M_n + support = {M_n + R_bar}")
    if gamma == 0.0:
        return 0.0
    g = Grid.build(model.domain, model.h, M_out + R_bar)
    ys = g.subset(M_n)
    xs = g.subset(M_n + R_bar)
    mu = model.density(g.nodes)
    nu = model.grid_normalizers(g, targets=ys)
    nu_n = model.grid_normalizers(g, targets=ys, M=M_n)
    pos = mu[ys] > 0
    if (nu_n[pos] < NU_FLOOR).any():
        raise SingularNormalizerError("truncated normalizer below the floor")
    diff = np.zeros(len(ys))
    diff[pos] = mu[ys][pos] * (nu[pos] ** -gamma - nu_n[pos] ** -gamma)
    K = kernel_matrix(model.kernel, g.nodes[xs], g.nodes[ys])
    inner = K @ diff * g.cell_volume
    return float(np.sum(np.abs(inner) * mu[xs]) * g.cell_volume)


@dataclass
class AprioriReport:
    s_margin: np.ndarray
    f_margin: np.ndarray
    C_hat: float

    @property
    def ok(self):
        return bool((self.s_margin >= 0).all() and (self.f_margin >= 0).all())


def apriori_check(fields, tol=1e-12):
    """Check ``|S(t)|_inf <= |S(0)|_inf`` and ``|F(t)|_inf <= cap |I(0)|_inf exp(cap C t)``.

    ``C`` is the largest row sum of the weight matrix, i.e. ``sup_x int Lambda_n(x, y) dy``.
    Returns the margins (bound minus value) per time.
    """
    C_hat = float(np.max(np.asarray(fields.W.sum(axis=1)).ravel(), initial=0.0))
    s_sup = np.max(np.abs(fields.S), axis=1)
    f_sup = np.max(np.abs(fields.F), axis=1)
    s_margin = s_sup[0] - s_sup
    i0 = np.max(np.abs(fields.I[0]))
    f_margin = fields.cap * i0 * np.exp(fields.cap * C_hat * fields.times) - f_sup
    report = AprioriReport(s_margin, f_margin, C_hat)
    scale = max(1.0, float(s_sup[0]), fields.cap)
    if (s_margin < -tol * scale).any() or (f_margin < -tol * scale * np.exp(fields.cap * C_hat * fields.times)).any():
        raise SolverDefectError("a priori bound violated by the solved fields")
    return report


def l1_distance(fine, coarse):
    """``sup_t sum_c int |c_fine - c_coarse| mu dx`` over S, I, R, F; coarse fields vanish outside their ball.

    Both solutions must share the lattice, step and horizon.
    """
    if fine.dt != coarse.dt or len(fine.times) != len(coarse.times):
        raise ParameterError("solutions must share the time lattice")
    pos = _embed(fine.grid, coarse.grid)
    w = fine.mu * fine.grid.cell_volume
    total = np.zeros(len(fine.times))
    for name in ("S", "I", "R", "F"):
        big = fine.field(name)
        small = np.zeros_like(big)
        small[:, pos] = coarse.field(name)
        total += np.abs(big - small) @ w
    return float(total.max())


def _embed(big, small):
    """Positions of ``small`` nodes inside ``big`` (shared lattice)."""
    lookup = {tuple(np.round(x / big.h - 0.5).astype(int)): k for k, x in enumerate(big.nodes)}
    try:
        return np.array([lookup[tuple(np.round(x / small.h - 0.5).astype(int))] for x in small.nodes], dtype=int)
    except KeyError:
        raise ParameterError("grids do not nest") from None
