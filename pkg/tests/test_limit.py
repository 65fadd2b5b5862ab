import numpy as np
import pytest

from spatial_sir.config import shipped_config
from spatial_sir.errors import ParameterError, SolverDefectError, StabilityError
from spatial_sir.geometry import BaselineDensity, CompartmentLaw, DomainSpec, KernelSpec, SpatialModel
from spatial_sir.infectivity import CohortLaw, CurveFamily, DurationLaw, InfectivityModel
from spatial_sir.limit import apriori_check, l1_distance, pi_n, solve, weights

from oracles import sir_ode

IND = KernelSpec("indicator", 1.0, 1.0, 1.0, 1.0)
EXP = CohortLaw(CurveFamily("constant"), DurationLaw("exponential", rate=1.0))


def envelope_model(fractions=(0.9, 0.1, 0.0), h=0.05, dim=1):
    dom = DomainSpec(dim, ladder=(1.5, 2.5, 3.5, 5.0))
    s = CompartmentLaw("expower", 0.5, 2.0)
    i = CompartmentLaw("expower", 2.0, 2.0)
    return SpatialModel(dom, IND, BaselineDensity(dom, fractions, (s, i, s)), h)


def inf(cap=3.0, initial=EXP, new=EXP):
    return InfectivityModel(cap, initial, new)


def test_no_initial_infection_is_frozen():
    f = solve(envelope_model((0.7, 0.0, 0.3)), inf(), 0.5, 2.5, 0.01, 2.0)
    assert np.all(f.F == 0) and np.all(f.I == 0)
    assert np.all(f.S == f.S[0]) and np.all(f.R == f.R[0])


def test_no_transmission_pure_recovery():
    f = solve(envelope_model(), inf(cap=0.0), 0.5, 2.5, 0.01, 2.0)
    assert np.all(f.F == 0)
    assert np.all(f.S == f.S[0])
    surv = np.exp(-f.times)[:, None]
    assert np.allclose(f.I, f.I[0] * surv, rtol=0, atol=1e-15)
    assert np.allclose(f.R, f.R[0] + f.I[0] * (1 - surv), rtol=0, atol=1e-15)


@pytest.mark.parametrize("scheme", ["euler", "trapezoid"])
@pytest.mark.parametrize("gamma", [0.0, 0.5, 0.9])
def test_conservation_and_positivity(scheme, gamma):
    family = CohortLaw(CurveFamily("piecewise", levels=(3.0, 1.0)), DurationLaw("uniform", lo=0.5, hi=2.0))
    f = solve(envelope_model(), inf(3.0, EXP, family), gamma, 2.5, 0.02, 3.0, scheme)
    assert f.conservation_drift() <= 1e-9
    for name in "SFIR":
        assert f.field(name).min() >= 0
    s_sup = np.abs(f.S).max(axis=1)
    assert np.all(np.diff(s_sup) <= 1e-15)
    assert np.all(np.diff(f.S, axis=0) <= 1e-15)


def test_stability_error_suggests_step():
    with pytest.raises(StabilityError) as err:
        solve(envelope_model((0.5, 0.5, 0.0)), inf(cap=400.0), 0.0, 2.5, 0.25, 1.0)
    assert 0 < err.value.suggested_dt < 0.25


def test_solver_preconditions():
    m = envelope_model()
    with pytest.raises(ParameterError):
        solve(SpatialModel(m.domain, m.kernel, m.density, 0.3), inf(), 0.5, 2.5, 0.01, 1.0)
    with pytest.raises(ParameterError):
        solve(m, inf(), 0.5, 2.5, 0.3, 1.2)
    with pytest.raises(ParameterError):
        solve(m, inf(), 0.5, 2.5, 0.03, 1.0)
    with pytest.raises(ParameterError):
        solve(m, inf(), 0.5, 2.5, 0.01, 1.0, scheme="rk4")
    with pytest.raises(ParameterError):
        solve(m, inf(), 1.0, 2.5, 0.01, 1.0)


def test_pi_n_zero_cases_and_errors():
    m = envelope_model()
    for M in (1.5, 2.5, 3.5):
        assert pi_n(m, 0.0, M, M + 1.0) == 0.0
    with pytest.raises(ParameterError):
        pi_n(m, 0.5, 2.5, 3.0)
    dom = DomainSpec(1, ladder=(2.5,))
    u = CompartmentLaw("uniform", half_width=1.0)
    compact = SpatialModel(dom, IND, BaselineDensity(dom, (0.9, 0.1, 0.0), (u, u, u)), 0.05)
    assert pi_n(compact, 0.5, 2.5, 3.5) == pytest.approx(0.0, abs=1e-15)


def test_pi_n_decreasing_on_envelope_instance():
    m = envelope_model()
    vals = [pi_n(m, 0.5, M, M + 1.0) for M in (1.5, 2.5, 3.5, 5.0)]
    assert all(v > 0 for v in vals[:2])
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_apriori_on_frozen_solution():
    f = solve(envelope_model(), inf(cap=0.0), 0.5, 2.5, 0.01, 1.0)
    rep = apriori_check(f)
    assert np.all(rep.s_margin == 0)
    assert rep.f_margin[0] == 0.0 and rep.ok


def test_apriori_margins_positive_when_solving():
    f = solve(envelope_model(), inf(), 0.5, 2.5, 0.01, 3.0)
    rep = apriori_check(f)
    assert rep.ok and rep.C_hat > 0
    assert rep.f_margin[1:].min() > 0


def test_apriori_detects_defect():
    f = solve(envelope_model(), inf(), 0.5, 2.5, 0.01, 1.0)
    f.S[5] *= 2.0
    with pytest.raises(SolverDefectError):
        apriori_check(f)


def test_force_matches_independent_quadrature(tmp_path):
    m = envelope_model(h=0.05)
    f1 = solve(m, inf(), 0.5, 2.5, 0.01, 1.0, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("weights-*.npz"))) == 1
    f2 = solve(m, inf(), 0.5, 2.5, 0.01, 1.0, cache_dir=tmp_path)
    assert np.array_equal(f1.S, f2.S)
    W = weights(m, 0.5, f1.grid, tmp_path)
    assert (W != f1.W).nnz == 0
    nodes = f1.nodes
    h = f1.grid.h
    for m_step in (0, 50, 100):
        gamma_bar = f1.force(m_step)
        for i in (0, len(nodes) // 3, len(nodes) // 2):
            direct = sum(m.lambda_weight(0.5, nodes[i], nodes[j], M=2.5) * h * f1.F[m_step, j]
                         for j in range(len(nodes)) if abs(nodes[j, 0] - nodes[i, 0]) <= 1.0)
            assert gamma_bar[i] == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_euler_and_trapezoid_close():
    m = envelope_model()
    a = solve(m, inf(), 0.5, 2.5, 0.005, 2.0, "euler")
    b = solve(m, inf(), 0.5, 2.5, 0.005, 2.0, "trapezoid")
    assert np.max(np.abs(a.S - b.S)) < 5e-3
    assert b.conservation_drift() <= 1e-9


def test_l1_distance_properties():
    m = envelope_model()
    top = solve(m, inf(), 0.5, 3.5, 0.02, 2.0)
    low = solve(m, inf(), 0.5, 1.5, 0.02, 2.0)
    mid = solve(m, inf(), 0.5, 2.5, 0.02, 2.0)
    assert l1_distance(top, top) == 0.0
    assert l1_distance(top, low) > l1_distance(top, mid) > 0
    with pytest.raises(ParameterError):
        l1_distance(top, solve(m, inf(), 0.5, 2.5, 0.01, 2.0))


def test_markov_instance_against_ode():
    cfg = shipped_config("markov")
    f = solve(cfg.model(), cfg.infectivity, cfg.gamma, cfg.solver_radius, 0.002, 6.0)
    # the kernel covers the whole box, so every normalizer and every row mass is 1
    assert np.allclose(np.asarray(f.W.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    sol = sir_ode(3.0, 1.0, 0.95, 0.05, 6.0)
    t = f.times
    S_avg = f.pairing("S", t)
    I_avg = f.pairing("I", t)
    ref = sol(t)
    assert np.max(np.abs(S_avg - ref[0])) <= 2e-2
    assert np.max(np.abs(I_avg - ref[1])) <= 2e-2


def test_fields_csv(tmp_path):
    f = solve(envelope_model(), inf(), 0.5, 1.5, 0.02, 0.2)
    f.to_csv(tmp_path / "f.csv", stride=5)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "t,x0,S,F,I,R"
    assert len(lines) == 1 + 3 * len(f.nodes)
    assert float(lines[-1].split(",")[0]) == pytest.approx(0.2)
