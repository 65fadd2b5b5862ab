"""Stochastic runs against the deterministic limit.

Distances between measures are taken as a supremum over a finite suite of
bounded test functions and a finite time lattice.  Replicate seeds come from
``seeding.replicate_seed(master, k, N)``, so a report is a function of the
configuration alone.  The rate bands quoted in summaries (log-log slope near
``-1/2``, decay of the truncation discrepancy) are health checks of the
implementation, not theorems.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import seeding
from .agents import coupling_discrepancy, init_population, interaction, kernel_pairs, simulate
from .config import validate
from .limit import l1_distance, pi_n, solve

COMPARTMENTS = ("S", "I", "R", "F")


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function: ``const``, ``sigmoid`` (smooth box) or ``gauss`` bump."""

    __test__ = False

    kind: str
    center: tuple = ()
    width: float = 1.0

    @property
    def name(self):
        if self.kind == "const":
            return "const"
        return f"{self.kind}@" + ":".join(f"{c:g}" for c in self.center)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if self.kind == "const":
            return np.ones(len(x))
        c = np.asarray(self.center)
        if self.kind == "gauss":
            return np.exp(-np.sum((x - c) ** 2, axis=1) / (2.0 * self.width**2))
        s = self.width / 4.0
        lo = 1.0 / (1.0 + np.exp(-(x - c + self.width) / s))
        hi = 1.0 / (1.0 + np.exp(-(c + self.width - x) / s))
        return np.prod(lo * hi, axis=1)


@dataclass(frozen=True)
class TestFunctionSuite:
    __test__ = False

    functions: tuple

    @classmethod
    def build(cls, dim, centers, width):
        """Constant plus a sigmoid and a Gaussian bump at every point of ``centers^dim``."""
        fns = [TestFunction("const")]
        for c in itertools.product([float(v) for v in centers], repeat=dim):
            fns.append(TestFunction("sigmoid", c, float(width)))
            fns.append(TestFunction("gauss", c, float(width)))
        return cls(tuple(fns))

    @classmethod
    def from_config(cls, cfg):
        exp = cfg.experiment
        return cls.build(cfg.domain.dim, exp["phi_centers"], exp["phi_width"])

    def __len__(self):
        return len(self.functions)

    def values(self, x):
        """``(len(suite), len(x))`` matrix of test-function values."""
        return np.stack([f(x) for f in self.functions])


@dataclass
class ConvergenceReport:
    """Rows ``(compartment, N, replicate index, seed, sup_error)``."""

    gamma: float
    N_list: tuple
    rows: list = field(default_factory=list)

    def errors(self, compartment, N):
        return np.array([r[4] for r in self.rows if r[0] == compartment and r[1] == N])

    def mean(self, compartment):
        return np.array([self.errors(compartment, N).mean() for N in self.N_list])

    def sd(self, compartment):
        return np.array([self.errors(compartment, N).std(ddof=1) if len(self.errors(compartment, N)) > 1 else 0.0
                         for N in self.N_list])

    def slope(self, compartment):
        """Least-squares slope of ``log mean error`` against ``log N``."""
        if len(self.N_list) < 2:
            return math.nan
        return float(np.polyfit(np.log(self.N_list), np.log(self.mean(compartment)), 1)[0])

    def strictly_decreasing(self, compartment):
        m = self.mean(compartment)
        return bool(np.all(np.diff(m) < 0))

    def sorted_rows(self):
        order = {c: k for k, c in enumerate(COMPARTMENTS)}
        return sorted(self.rows, key=lambda r: (order.get(r[0], 99), r[1], r[2]))

    def csv_text(self):
        lines = ["compartment,N,seed,sup_error"]
        lines += [f"{c},{N},{seed},{err!r}" for c, N, _, seed, err in self.sorted_rows()]
        return "\n".join(lines) + "\n"

    def summary_lines(self):
        out = [f"law of large numbers, gamma = {self.gamma!r}"]
        if not self.rows:
            return out + ["  (no replicates)"]
        out.append("  compartment  N  mean_sup_error  sd")
        for c in COMPARTMENTS:
            if not any(r[0] == c for r in self.rows):
                continue
            for N, m, s in zip(self.N_list, self.mean(c), self.sd(c)):
                out.append(f"  {c}  {N}  {m!r}  {s!r}")
            out.append(f"  {c} log-log slope {self.slope(c)!r} (health band [-0.7, -0.3], not a theorem)")
        return out


@dataclass
class TruncationReport:
    """Rows ``(n, M_n, l1_distance, pi_n, coupling_mean)``; ``n`` counts from 1."""

    gamma: float
    rows: list = field(default_factory=list)

    def column(self, k):
        return np.array([r[k] for r in self.rows])

    def non_increasing(self, k):
        col = self.column(k)
        return bool(np.all(np.diff(col) <= 0))

    def csv_text(self):
        lines = ["n,M_n,l1_distance,pi_n,coupling_mean"]
        lines += [f"{n},{M!r},{d!r},{p!r},{c!r}" for n, M, d, p, c in sorted(self.rows)]
        return "\n".join(lines) + "\n"

    def summary_lines(self):
        out = [f"truncation, gamma = {self.gamma!r}"]
        if not self.rows:
            return out + ["  (no rungs)"]
        out.append("  n  M_n  l1_distance  pi_n  coupling_mean")
        out += [f"  {n}  {M!r}  {d!r}  {p!r}  {c!r}" for n, M, d, p, c in sorted(self.rows)]
        for k, name in ((2, "l1_distance"), (3, "pi_n"), (4, "coupling_mean")):
            out.append(f"  {name} non-increasing: {self.non_increasing(k)}")
        return out


def _pool_map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def _lln_replicate(task):
    data, N, k, seed, times, limit_vals = task
    cfg = validate(data)
    suite = TestFunctionSuite.from_config(cfg)
    sim = cfg.simulation
    pop = init_population(cfg.density, cfg.infectivity, N, cfg.gamma, seed)
    _, traj = simulate(pop, cfg.infectivity, cfg.kernel, float(sim["T"]), event_budget=sim["event_budget"])
    phis = suite.values(pop.positions)
    out = []
    for c in COMPARTMENTS:
        emp = traj.pairing(c, times, phis)
        out.append((c, N, k, seed, float(np.max(np.abs(emp - limit_vals[c])))))
    return out


def limit_pairings(fields, suite, times):
    """``{compartment: (len(times), len(suite))}`` limit pairings on the solver grid."""
    phis = suite.values(fields.nodes)
    return {c: fields.pairing(c, times, phis) for c in COMPARTMENTS}


def lln_experiment(cfg, N_list=None, seeds=None, T=None, workers=1, fields=None):
    """Sup-errors of every compartment for each ``(N, replicate)``."""
    if T is not None:
        cfg = cfg.with_updates(simulation={"T": float(T)})
    exp = cfg.experiment
    N_list = tuple(int(n) for n in (N_list if N_list is not None else exp["N_list"]))
    seeds = list(seeds) if seeds is not None else list(range(int(exp["seeds"])))
    T = float(cfg.simulation["T"])
    if fields is None:
        sol = cfg.solver
        fields = solve(cfg.model(), cfg.infectivity, cfg.gamma, cfg.solver_radius, float(sol["dt"]), T, sol["scheme"])
    suite = TestFunctionSuite.from_config(cfg)
    times = np.linspace(0.0, T, int(exp["t_points"]))
    lim = limit_pairings(fields, suite, times)
    tasks = [(cfg.data, N, k, seeding.replicate_seed(cfg.seed, k, N), times, lim) for N in N_list for k in seeds]
    report = ConvergenceReport(cfg.gamma, N_list)
    for rows in _pool_map(_lln_replicate, tasks, workers):
        report.rows.extend(rows)
    report.rows = report.sorted_rows()
    return report


def _coupling_replicate(task):
    data, N, k, seed, ladder = task
    cfg = validate(data)
    sim = cfg.simulation
    T = float(sim["T"])
    pop = init_population(cfg.density, cfg.infectivity, N, cfg.gamma, seed)
    K = kernel_pairs(pop.positions, cfg.kernel)
    full, _ = simulate(pop, cfg.infectivity, cfg.kernel, T, inter=interaction(pop, cfg.kernel, None, K),
                       event_budget=sim["event_budget"])
    out = []
    for M in ladder:
        trunc, _ = simulate(pop, cfg.infectivity, cfg.kernel, T, truncation=M,
                            inter=interaction(pop, cfg.kernel, M, K), event_budget=sim["event_budget"])
        out.append(coupling_discrepancy(full, trunc, M))
    return k, out


def truncation_experiment(cfg, ladder=None, seeds=None, N=None, workers=1):
    """Per rung: L1 distance to the top-rung solution, discrepancy ``Pi_n`` and mean coupling discrepancy."""
    ladder = tuple(float(m) for m in (ladder if ladder is not None else cfg.ladder))
    seeds = list(seeds) if seeds is not None else list(range(int(cfg.experiment["seeds"])))
    N = int(N if N is not None else cfg.experiment["coupling_N"])
    sol = cfg.solver
    T = float(cfg.simulation["T"])
    model = cfg.model()
    gamma = cfg.gamma
    solutions = [solve(model, cfg.infectivity, gamma, M, float(sol["dt"]), T, sol["scheme"]) for M in ladder]
    top = solutions[-1]
    dists = [l1_distance(top, f) for f in solutions]
    pis = [pi_n(model, gamma, M, M + cfg.kernel.support) for M in ladder]
    tasks = [(cfg.data, N, k, seeding.replicate_seed(cfg.seed, k, N), ladder) for k in seeds]
    results = sorted(_pool_map(_coupling_replicate, tasks, workers))
    coupling = np.mean([r[1] for r in results], axis=0) if results else np.zeros(len(ladder))
    report = TruncationReport(gamma)
    for n, (M, d, p, c) in enumerate(zip(ladder, dists, pis, coupling), start=1):
        report.rows.append((n, M, float(d), float(p), float(c)))
    return report


def emit_report(reports, out_dir):
    """Write ``lln.csv`` and/or ``truncation.csv`` plus ``summary.txt`` under ``out_dir``.

    Several LLN reports (one per ``gamma``) are concatenated with a leading
    ``gamma`` comment line each; identical inputs give identical bytes.
    """
    if not isinstance(reports, (list, tuple)):
        reports = [reports]
    os.makedirs(out_dir, exist_ok=True)
    written = []
    summary = []
    for kind, name in ((ConvergenceReport, "lln.csv"), (TruncationReport, "truncation.csv")):
        group = [r for r in reports if isinstance(r, kind)]
        if not group:
            continue
        if len(group) == 1:
            text = group[0].csv_text()
        else:
            head = group[0].csv_text().splitlines()[0]
            body = [head]
            for r in group:
                body += [f"# gamma={r.gamma!r}"] + r.csv_text().splitlines()[1:]
            text = "\n".join(body) + "\n"
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        written.append(path)
        for r in group:
            summary += r.summary_lines() + [""]
    path = os.path.join(out_dir, "summary.txt")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(summary) + ("\n" if summary else ""))
    written.append(path)
    return written
