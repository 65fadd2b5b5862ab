"""Run configuration: YAML text with fixed sections, validated up front.

Grammar (every section is a mapping; unknown keys are rejected)::

    seed: <int>                         master seed of every random stream
    domain:
      dim: <int>                        dimension d
      shape: full | half                R^d or {x_1 >= 0}
      cone_angle: <float>               interior cone half-angle (radians)
      cone_radius: <float>              interior cone radius
      ladder: [<float>, ...]            truncation radii M_1 < M_2 < ...
    kernel:
      family: indicator | tent
      C: <float>                        upper bound of K
      c_low: <float>                    lower bound of K on |x - y| <= r
      r: <float>
      support: <float>                  K vanishes beyond this distance
    density:
      fractions: [S, I, R]              initial compartment fractions (sum 1)
      S|I|R: {family: expower, a, delta} or {family: uniform, half_width}
    infectivity:
      cap: <float>                      upper bound of every curve
      initial|new:
        curve: constant | piecewise | expdecay
        level: <float or null>          null means the cap
        levels: [<float>, ...]          piecewise levels
        decay: <float>                  expdecay rate
        duration: fixed | exponential | uniform
        eta0 | rate | lo, hi: <float>   duration parameters
    simulation: {N, T, gamma, event_budget (null = 50 N), truncation (null = none)}
    solver: {h, dt, scheme: euler | trapezoid, M (null = top ladder rung)}
    experiment:
      N_list: [<int>, ...]              increasing population sizes
      seeds: <int>                      replicates per size
      t_points: <int>                   time lattice size (>= 50)
      phi_centers: [<float>, ...]       per-coordinate bump centres
      phi_width: <float>
      coupling_N: <int>                 population size of coupling runs
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources

import yaml

from .errors import ConfigurationError, ParameterError
from .geometry import BaselineDensity, CompartmentLaw, DomainSpec, KernelSpec, SpatialModel
from .infectivity import CohortLaw, CurveFamily, DurationLaw, InfectivityModel

SECTIONS = {
    "seed": None,
    "domain": {"dim", "shape", "cone_angle", "cone_radius", "ladder"},
    "kernel": {"family", "C", "c_low", "r", "support"},
    "density": {"fractions", "S", "I", "R"},
    "infectivity": {"cap", "initial", "new"},
    "simulation": {"N", "T", "gamma", "event_budget", "truncation"},
    "solver": {"h", "dt", "scheme", "M"},
    "experiment": {"N_list", "seeds", "t_points", "phi_centers", "phi_width", "coupling_N"},
}
LAW_KEYS = {"family", "a", "delta", "half_width"}
COHORT_KEYS = {"curve", "level", "levels", "decay", "duration", "eta0", "rate", "lo", "hi"}

DEFAULTS = {
    "domain": {"shape": "full", "cone_angle": math.pi / 4, "cone_radius": 0.5},
    "simulation": {"event_budget": None, "truncation": None},
    "solver": {"scheme": "euler", "M": None},
    "experiment": {"N_list": [250, 1000, 4000], "seeds": 20, "t_points": 51,
                   "phi_centers": [-1.0, 0.0, 1.0], "phi_width": 0.5, "coupling_N": 1000},
}


class ConfigViolations(ConfigurationError):
    """All violated clauses of a configuration."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class RunConfig:
    """Resolved configuration; ``data`` is the plain mapping it was built from."""

    data: dict
    domain: DomainSpec = field(init=False)
    kernel: KernelSpec = field(init=False)
    density: BaselineDensity = field(init=False)
    infectivity: InfectivityModel = field(init=False)

    def __post_init__(self):
        d = self.data
        dom = d["domain"]
        self.domain = DomainSpec(int(dom["dim"]), dom["shape"], float(dom["cone_angle"]),
                                 float(dom["cone_radius"]), tuple(float(m) for m in dom["ladder"]))
        k = d["kernel"]
        self.kernel = KernelSpec(k["family"], float(k["C"]), float(k["support"]), float(k["r"]), float(k["c_low"]))
        den = d["density"]
        laws = tuple(_law(den[c]) for c in ("S", "I", "R"))
        self.density = BaselineDensity(self.domain, tuple(den["fractions"]), laws)
        inf = d["infectivity"]
        self.infectivity = InfectivityModel(float(inf["cap"]), _cohort(inf["initial"]), _cohort(inf["new"]))

    @property
    def seed(self):
        return int(self.data["seed"])

    @property
    def simulation(self):
        return self.data["simulation"]

    @property
    def solver(self):
        return self.data["solver"]

    @property
    def experiment(self):
        return self.data["experiment"]

    @property
    def gamma(self):
        return float(self.simulation["gamma"])

    @property
    def ladder(self):
        return self.domain.ladder

    @property
    def solver_radius(self):
        M = self.solver.get("M")
        return float(M) if M is not None else self.ladder[-1]

    def model(self):
        return SpatialModel(self.domain, self.kernel, self.density, float(self.solver["h"]))

    def with_updates(self, **sections):
        """Copy with some section entries replaced, e.g. ``with_updates(simulation={"gamma": 0.0})``."""
        data = copy.deepcopy(self.data)
        for name, values in sections.items():
            if isinstance(values, dict):
                data[name].update(values)
            else:
                data[name] = values
        return validate(data)

    def dump(self):
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=None)


def _law(spec):
    return CompartmentLaw(spec.get("family", "expower"), float(spec.get("a", 1.0)),
                          float(spec.get("delta", 2.0)), float(spec.get("half_width", 1.0)))


def _cohort(spec):
    fam = CurveFamily(spec.get("curve", "constant"),
                      None if spec.get("level") is None else float(spec["level"]),
                      tuple(spec.get("levels", ())), float(spec.get("decay", 1.0)))
    dur = DurationLaw(spec.get("duration", "fixed"), float(spec.get("eta0", 1.0)), float(spec.get("rate", 1.0)),
                      float(spec.get("lo", 0.0)), float(spec.get("hi", 1.0)))
    return CohortLaw(fam, dur)


def _unknown(where, got, allowed, out):
    for key in sorted(set(got) - set(allowed)):
        out.append(f"unknown key {key!r} in {where}")


def validate(data):
    """Check every cross-field constraint and build a :class:`RunConfig`."""
    if not isinstance(data, dict):
        raise ConfigViolations(["configuration must be a mapping of sections"])
    data = copy.deepcopy(data)
    bad = []
    _unknown("top level", data, SECTIONS, bad)
    for name, keys in SECTIONS.items():
        if keys is None:
            continue
        sec = data.get(name)
        if not isinstance(sec, dict):
            bad.append(f"missing section {name!r}")
            continue
        for k, v in DEFAULTS.get(name, {}).items():
            sec.setdefault(k, copy.deepcopy(v))
        _unknown(name, sec, keys, bad)
    if "seed" not in data or not isinstance(data["seed"], int) or data["seed"] < 0:
        bad.append("seed must be a non-negative integer")
    if bad:
        raise ConfigViolations(bad)
    for c in ("S", "I", "R"):
        if not isinstance(data["density"].get(c), dict):
            bad.append(f"density.{c} must be a mapping")
        else:
            _unknown(f"density.{c}", data["density"][c], LAW_KEYS, bad)
    for c in ("initial", "new"):
        if not isinstance(data["infectivity"].get(c), dict):
            bad.append(f"infectivity.{c} must be a mapping")
        else:
            _unknown(f"infectivity.{c}", data["infectivity"][c], COHORT_KEYS, bad)
    missing = [f"{s}.{k}" for s, keys in (("domain", ("dim", "ladder")), ("kernel", ("family", "C", "c_low", "r", "support")),
                                          ("density", ("fractions",)), ("infectivity", ("cap",)),
                                          ("simulation", ("N", "T", "gamma")), ("solver", ("h", "dt")))
               for k in keys if k not in data[s]]
    bad += [f"missing key {m}" for m in missing]
    if bad:
        raise ConfigViolations(bad)

    sim, sol, exp = data["simulation"], data["solver"], data["experiment"]
    try:
        gamma = float(sim["gamma"])
        if not 0.0 <= gamma < 1.0:
            bad.append("γ must lie in [0,1)")
        fr = [float(f) for f in data["density"]["fractions"]]
        if len(fr) != 3 or min(fr) < 0 or abs(sum(fr) - 1.0) > 1e-12:
            bad.append("fractions must be three non-negative numbers summing to 1")
        ladder = [float(m) for m in data["domain"]["ladder"]]
        support = float(data["kernel"]["support"])
        if not ladder:
            bad.append("ladder must list at least one truncation radius")
        else:
            if ladder[0] <= support:
                bad.append("M_1 must exceed the kernel support R̄")
            if any(b <= a for a, b in zip(ladder, ladder[1:])):
                bad.append("ladder radii must be strictly increasing")
        if float(sol["h"]) <= 0 or float(sol["h"]) > support / 4 * (1 + 1e-12):
            bad.append("h must satisfy 0 < h ≤ R̄/4")
        if float(sol["dt"]) <= 0:
            bad.append("dt must be positive")
        if sol["scheme"] not in ("euler", "trapezoid"):
            bad.append("solver.scheme must be euler or trapezoid")
        if int(sim["N"]) < 1:
            bad.append("simulation.N must be at least 1")
        if float(sim["T"]) <= 0:
            bad.append("simulation.T must be positive")
        if sim["event_budget"] is not None and int(sim["event_budget"]) < 1:
            bad.append("simulation.event_budget must be positive")
        Ns = [int(n) for n in exp["N_list"]]
        if any(b <= a for a, b in zip(Ns, Ns[1:])) or not Ns or Ns[0] < 1:
            bad.append("experiment.N_list must be increasing positive sizes")
        if int(exp["seeds"]) < 1:
            bad.append("experiment.seeds must be at least 1")
        if int(exp["t_points"]) < 50:
            bad.append("experiment.t_points must be at least 50")
        if float(exp["phi_width"]) <= 0 or not exp["phi_centers"]:
            bad.append("experiment needs positive phi_width and at least one phi centre")
    except (TypeError, ValueError) as exc:
        bad.append(f"non-numeric value: {exc}")
    if bad:
        raise ConfigViolations(bad)
    try:
        cfg = RunConfig(data)
    except (ConfigurationError, ParameterError) as exc:
        raise ConfigViolations([str(exc)]) from None
    if float(sol["dt"]) > cfg.infectivity.min_time_scale / 4 * (1 + 1e-12):
        raise ConfigViolations(["dt must not exceed a quarter of the shortest duration scale"])
    return cfg


def parse_config(text):
    """Parse YAML text into a validated :class:`RunConfig`."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else "?"
        raise ConfigurationError(f"syntax error at line {line}: {getattr(exc, 'problem', exc)}") from None
    return validate(data)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


SHIPPED = ("default", "wide2d", "markov")


def shipped_config_text(name="default"):
    if name not in SHIPPED:
        raise ConfigurationError(f"no shipped configuration {name!r}; choose from {SHIPPED}")
    return resources.files("spatial_sir").joinpath(f"{name}.yaml").read_text(encoding="utf-8")


def shipped_config(name="default"):
    return parse_config(shipped_config_text(name))


def default_config_text():
    return shipped_config_text("default")


def default_config():
    return shipped_config("default")
