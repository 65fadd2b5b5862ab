"""Random infectivity curves and their deterministic summaries.

Curves are piecewise constant: breakpoints ``0 = b_0 < b_1 < ... < b_{L-1}``
with strictly positive levels, and the curve vanishes from the infectious
duration ``eta`` on.  Curves of many individuals are stored together in a
:class:`CurveBank` of padded arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigurationError

DECAY_LEVELS = 64
MC_SAMPLES = 100_000
INITIAL, NEW = 0, 1


@dataclass(frozen=True)
class DurationLaw:
    """Law of the infectious duration: ``fixed``, ``exponential`` or ``uniform``."""

    kind: str = "fixed"
    eta0: float = 1.0
    rate: float = 1.0
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind == "fixed":
            if not self.eta0 > 0:
                raise ConfigurationError("fixed duration must be positive")
        elif self.kind == "exponential":
            if not self.rate > 0:
                raise ConfigurationError("exponential duration rate must be positive")
        elif self.kind == "uniform":
            if not 0 <= self.lo < self.hi:
                raise ConfigurationError("uniform duration needs 0 <= lo < hi")
        else:
            raise ConfigurationError(f"unknown duration law {self.kind!r}")

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "fixed":
            out = (t >= self.eta0).astype(float)
        elif self.kind == "exponential":
            out = -np.expm1(-self.rate * np.clip(t, 0.0, None))
        else:
            out = np.clip((t - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return np.where(t < 0, 0.0, out)

    def sample(self, n, rng):
        if self.kind == "fixed":
            return np.full(n, self.eta0)
        if self.kind == "exponential":
            return rng.exponential(1.0 / self.rate, size=n)
        return rng.uniform(self.lo, self.hi, size=n)

    @property
    def ess_sup(self):
        return {"fixed": self.eta0, "exponential": math.inf, "uniform": self.hi}[self.kind]

    @property
    def time_scale(self):
        """A typical short duration, used to bound solver steps."""
        if self.kind == "fixed":
            return self.eta0
        if self.kind == "exponential":
            return 1.0 / self.rate
        return self.lo if self.lo > 0 else 0.5 * self.hi

    def expect(self, g, t_min=0.0, breaks=()):
        """``E[g(eta) 1{eta > t_min}]`` for a function ``g`` that may jump at ``breaks``."""
        if self.kind == "fixed":
            return float(g(self.eta0)) if self.eta0 > t_min else 0.0
        if self.kind == "uniform":
            lo, hi = max(self.lo, t_min), self.hi
            if lo >= hi:
                return 0.0
            pts = sorted(b for b in breaks if lo < b < hi)
            edges = [lo, *pts, hi]
            total = sum(integrate.quad(g, u, v, epsabs=1e-13, epsrel=1e-11)[0] for u, v in zip(edges, edges[1:]))
            return total / (self.hi - self.lo)
        rho = self.rate
        f = lambda e: g(e) * rho * math.exp(-rho * e)
        pts = sorted(b for b in breaks if b > t_min)
        edges = [t_min, *pts]
        total = sum(integrate.quad(f, u, v, epsabs=1e-13, epsrel=1e-11)[0] for u, v in zip(edges, edges[1:]))
        total += integrate.quad(f, edges[-1], math.inf, epsabs=1e-13, epsrel=1e-11)[0]
        return total


@dataclass(frozen=True)
class CurveFamily:
    """Shape of a curve given its duration.

    ``constant``   one level ``level`` on ``[0, eta)``.
    ``piecewise``  levels ``levels[k]`` on the ``k``-th of ``J`` equal parts of ``[0, eta)``.
    ``expdecay``   ``level * exp(-decay * t)`` on ``[0, eta)``, held constant on
                   each of 64 equal parts (value at the left end).
    A ``level`` of ``None`` means the cap.
    """

    kind: str = "constant"
    level: float | None = None
    levels: tuple = ()
    decay: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "piecewise", "expdecay"):
            raise ConfigurationError(f"unknown curve family {self.kind!r}")
        if self.kind == "piecewise" and not self.levels:
            raise ConfigurationError("piecewise curves need at least one level")
        if self.kind == "expdecay" and self.decay < 0:
            raise ConfigurationError("decay rate must be non-negative")
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))

    def n_pieces(self):
        return {"constant": 1, "piecewise": len(self.levels), "expdecay": DECAY_LEVELS}[self.kind]

    def piece_levels(self, cap, eta):
        """Levels of the pieces for duration(s) ``eta``; shape ``(len(eta), J)``."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        J = self.n_pieces()
        amp = cap if self.level is None else self.level
        if self.kind == "constant":
            return np.full((len(eta), 1), amp)
        if self.kind == "piecewise":
            return np.broadcast_to(np.asarray(self.levels), (len(eta), J)).copy()
        left = eta[:, None] * np.arange(J)[None, :] / J
        return amp * np.exp(-self.decay * left)


@dataclass(frozen=True)
class CohortLaw:
    family: CurveFamily = CurveFamily()
    duration: DurationLaw = DurationLaw()


@dataclass(frozen=True)
class InfectivityModel:
    """Curve laws of the initially infected and of the newly infected, with cap ``cap``.

    A cap of zero switches transmission off: curves are identically zero but
    durations (and therefore recoveries) are still drawn.
    """

    cap: float
    initial: CohortLaw = CohortLaw()
    new: CohortLaw = CohortLaw()

    def __post_init__(self):
        if self.cap < 0:
            raise ConfigurationError("infectivity cap must be non-negative")
        for law in (self.initial, self.new):
            fam = law.family
            amp = [self.cap if fam.level is None else fam.level]
            if fam.kind == "piecewise":
                amp = list(fam.levels)
            if any(v > self.cap * (1 + 1e-12) or v < 0 for v in amp):
                raise ConfigurationError("curve levels must lie in [0, cap]")
            if self.cap > 0 and any(v <= 0 for v in amp):
                raise ConfigurationError("curve levels must be strictly positive before the duration ends")

    def law(self, cohort):
        return self.initial if cohort == INITIAL else self.new

    @property
    def min_time_scale(self):
        return min(self.initial.duration.time_scale, self.new.duration.time_scale)


@dataclass(frozen=True)
class SampledCurve:
    breaks: np.ndarray
    levels: np.ndarray
    eta: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.breaks, t, side="right") - 1
        val = self.levels[np.clip(k, 0, len(self.levels) - 1)]
        return np.where((t >= 0) & (t < self.eta), val, 0.0)


@dataclass
class CurveBank:
    """Padded curve arrays, one row per individual.

    Unused trailing slots carry breakpoint ``+inf``.  Rows with ``eta == 0``
    are empty curves (individuals that never infect).
    """

    breaks: np.ndarray
    levels: np.ndarray
    eta: np.ndarray

    @classmethod
    def empty(cls, n, width=1):
        return cls(np.full((n, width), np.inf), np.zeros((n, width)), np.zeros(n))

    def assign(self, rows, other):
        w = max(self.breaks.shape[1], other.breaks.shape[1])
        if w > self.breaks.shape[1]:
            pad = w - self.breaks.shape[1]
            self.breaks = np.pad(self.breaks, ((0, 0), (0, pad)), constant_values=np.inf)
            self.levels = np.pad(self.levels, ((0, 0), (0, pad)))
        ow = other.breaks.shape[1]
        self.breaks[rows, :ow] = other.breaks
        self.breaks[rows, ow:] = np.inf
        self.levels[rows, :ow] = other.levels
        self.levels[rows, ow:] = 0.0
        self.eta[rows] = other.eta

    def curve(self, j):
        keep = np.isfinite(self.breaks[j])
        return SampledCurve(self.breaks[j][keep].copy(), self.levels[j][keep].copy(), float(self.eta[j]))

    def evaluate(self, rows, ages):
        """``lambda_j(age_j)`` for paired arrays, or a grid when ``ages`` is 2-D ``(n_t, len(rows))``."""
        rows = np.asarray(rows)
        ages = np.asarray(ages, dtype=float)
        br = self.breaks[rows]
        lv = self.levels[rows]
        k = (br <= ages[..., None]).sum(axis=-1) - 1
        val = np.take_along_axis(np.broadcast_to(lv, ages.shape + lv.shape[-1:]), np.clip(k, 0, None)[..., None], axis=-1)[..., 0]
        return np.where((ages >= 0) & (ages < self.eta[rows]), val, 0.0)


def sample_curves(model, rng, cohort, n):
    """Draw ``n`` i.i.d. curves of ``cohort`` from ``rng``."""
    law = model.law(cohort)
    eta = law.duration.sample(n, rng)
    J = law.family.n_pieces()
    breaks = eta[:, None] * np.arange(J)[None, :] / J
    levels = law.family.piece_levels(model.cap, eta) if model.cap > 0 else np.zeros((n, J))
    return CurveBank(breaks, levels, eta)


def sample_curve(model, rng, cohort):
    return sample_curves(model, rng, cohort, 1).curve(0)


def duration_cdf(model, cohort, t):
    return model.law(cohort).duration.cdf(t)


def mean_curve(model, cohort, t):
    """``E[lambda(t)]`` for the cohort, exact up to 1-D quadrature."""
    t = float(t)
    if t < 0 or model.cap == 0:
        return 0.0
    law = model.law(cohort)
    fam, dur = law.family, law.duration
    amp = model.cap if fam.level is None else fam.level
    if fam.kind == "constant":
        return float(amp * (1.0 - dur.cdf(t)))
    if fam.kind == "piecewise":
        J = len(fam.levels)
        # piece k (1-based) is active iff tJ/k < eta <= tJ/(k-1)
        total = fam.levels[0] * (1.0 - float(dur.cdf(t * J)))
        for k in range(2, J + 1):
            total += fam.levels[k - 1] * float(dur.cdf(t * J / (k - 1)) - dur.cdf(t * J / k))
        return float(total)
    J = DECAY_LEVELS

    def g(e):
        k = min(math.floor(J * t / e), J - 1)
        return amp * math.exp(-fam.decay * k * e / J)

    breaks = [J * t / k for k in range(1, J)] if t > 0 else []
    return float(dur.expect(g, t_min=t, breaks=breaks))


def mean_curve_mc(model, cohort, t, rng, n=MC_SAMPLES):
    """Monte Carlo ``(mean, standard error)`` of ``lambda(t)``."""
    bank = sample_curves(model, rng, cohort, n)
    vals = bank.evaluate(np.arange(n), np.full(n, float(t)))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def tabulate(model, cohort, dt, n_steps):
    """``(lambda_bar, F)`` on the lattice ``k dt``, ``k = 0..n_steps``."""
    times = dt * np.arange(n_steps + 1)
    law = model.law(cohort)
    F = law.duration.cdf(times)
    fam = law.family
    if model.cap == 0:
        lam = np.zeros_like(times)
    elif fam.kind == "constant":
        amp = model.cap if fam.level is None else fam.level
        lam = amp * (1.0 - F)
    else:
        lam = np.array([mean_curve(model, cohort, t) for t in times])
    return lam, F
