import math

import numpy as np
import pytest

from spatial_sir.errors import ConfigurationError
from spatial_sir.infectivity import (
    DECAY_LEVELS,
    INITIAL,
    NEW,
    CohortLaw,
    CurveFamily,
    DurationLaw,
    InfectivityModel,
    duration_cdf,
    mean_curve,
    mean_curve_mc,
    sample_curve,
    sample_curves,
    tabulate,
)


def model(family, duration, cap=2.0):
    law = CohortLaw(family, duration)
    return InfectivityModel(cap, law, law)


CONST = CurveFamily("constant")
FIXED1 = DurationLaw("fixed", eta0=1.0)
EXP1 = DurationLaw("exponential", rate=1.0)


def test_constant_fixed_curve():
    m = model(CONST, FIXED1)
    c = sample_curve(m, np.random.default_rng(0), NEW)
    assert c.eta == 1.0
    assert np.array_equal(c(np.array([0.0, 0.3, 0.999])), [2.0, 2.0, 2.0])
    assert c(1.0) == 0.0 and c(5.0) == 0.0


def test_negative_age_is_zero():
    rng = np.random.default_rng(1)
    for fam in (CONST, CurveFamily("piecewise", levels=(1.0, 0.5)), CurveFamily("expdecay", decay=1.0)):
        c = sample_curve(model(fam, EXP1), rng, NEW)
        assert c(-0.5) == 0.0


def test_piecewise_single_level_matches_constant():
    rng = np.random.default_rng(2)
    a = sample_curves(model(CurveFamily("piecewise", levels=(2.0,)), EXP1), rng, NEW, 50)
    b = sample_curves(model(CONST, EXP1), np.random.default_rng(2), NEW, 50)
    assert np.array_equal(a.eta, b.eta)
    t = np.linspace(-0.5, 4.0, 40)
    for j in range(50):
        assert np.array_equal(a.curve(j)(t), b.curve(j)(t))


@pytest.mark.parametrize("fam", [CONST, CurveFamily("piecewise", levels=(2.0, 0.5, 1.0)),
                                 CurveFamily("expdecay", decay=0.7)])
def test_sampled_curves_bounded_and_eta_exact(fam):
    m = model(fam, DurationLaw("uniform", lo=0.5, hi=2.0))
    bank = sample_curves(m, np.random.default_rng(3), NEW, 200)
    for j in range(200):
        c = bank.curve(j)
        assert (c.levels > 0).all() and (c.levels <= m.cap).all()
        assert c(c.eta) == 0.0
        assert c(np.nextafter(c.eta, 0.0)) > 0.0
    assert bank.breaks.shape[1] == fam.n_pieces()


def test_expdecay_has_64_levels():
    c = sample_curve(model(CurveFamily("expdecay", decay=1.0), FIXED1), np.random.default_rng(0), NEW)
    assert len(c.levels) == DECAY_LEVELS
    assert c(0.0) == 2.0
    assert c(0.5) == pytest.approx(2.0 * math.exp(-0.5))


def test_mean_curve_examples():
    m = model(CONST, FIXED1)
    assert mean_curve(m, NEW, 0.5) == 2.0
    assert mean_curve(m, NEW, 1.0) == 0.0
    assert mean_curve(m, NEW, -0.1) == 0.0
    e = model(CONST, EXP1)
    for t in (0.0, 0.3, 1.0, 2.5):
        assert mean_curve(e, NEW, t) == pytest.approx(2.0 * math.exp(-t), rel=1e-14)


def test_constant_family_mean_is_cap_times_survival():
    for dur in (FIXED1, EXP1, DurationLaw("uniform", lo=1.0, hi=3.0)):
        m = model(CONST, dur)
        for t in np.linspace(0, 4, 17):
            assert mean_curve(m, NEW, t) == pytest.approx(2.0 * (1.0 - float(duration_cdf(m, NEW, t))), abs=1e-15)


def test_duration_cdf_examples():
    m = model(CONST, FIXED1)
    assert duration_cdf(m, NEW, 0.5) == 0.0
    assert duration_cdf(m, NEW, 1.0) == 1.0
    e = model(CONST, DurationLaw("exponential", rate=0.7))
    assert duration_cdf(e, NEW, 2.0) == pytest.approx(1.0 - math.exp(-1.4), rel=1e-14)
    u = model(CONST, DurationLaw("uniform", lo=1.0, hi=3.0))
    assert duration_cdf(u, NEW, 2.0) == 0.5


def test_complement_sums_to_one_exactly():
    for dur in (FIXED1, EXP1, DurationLaw("uniform", lo=1.0, hi=3.0)):
        t = np.linspace(-1, 5, 301)
        F = dur.cdf(t)
        assert np.all((1.0 - F) + F == 1.0)
        assert np.all(np.diff(F) >= 0)
        assert F[-1] == pytest.approx(1.0, abs=1e-2)


@pytest.mark.parametrize("fam,dur", [
    (CONST, EXP1),
    (CurveFamily("piecewise", levels=(2.0, 0.5, 1.0)), DurationLaw("exponential", rate=0.8)),
    (CurveFamily("piecewise", levels=(1.0, 2.0)), DurationLaw("uniform", lo=0.5, hi=2.5)),
    (CurveFamily("expdecay", decay=0.9), DurationLaw("exponential", rate=0.5)),
    (CurveFamily("expdecay", level=1.5, decay=2.0), DurationLaw("uniform", lo=0.2, hi=3.0)),
])
def test_mean_curve_against_monte_carlo(fam, dur):
    m = model(fam, dur)
    rng = np.random.default_rng(11)
    for t in (0.0, 0.4, 1.1, 2.3):
        mc, se = mean_curve_mc(m, NEW, t, rng)
        exact = mean_curve(m, NEW, t)
        assert abs(mc - exact) <= 4 * se + 1e-12


def test_mean_vanishes_beyond_essential_sup():
    m = model(CurveFamily("piecewise", levels=(1.0, 2.0)), DurationLaw("uniform", lo=0.5, hi=2.0))
    assert mean_curve(m, NEW, 2.0) == 0.0
    assert mean_curve(m, NEW, 7.0) == 0.0


def test_cohorts_independent_laws():
    m = InfectivityModel(2.0, CohortLaw(CONST, FIXED1), CohortLaw(CONST, EXP1))
    assert mean_curve(m, INITIAL, 0.5) == 2.0
    assert mean_curve(m, NEW, 0.5) == pytest.approx(2.0 * math.exp(-0.5))


def test_tabulate_consistent_with_pointwise():
    m = model(CurveFamily("piecewise", levels=(2.0, 1.0)), EXP1)
    lam, F = tabulate(m, NEW, 0.1, 20)
    for k in (0, 5, 13, 20):
        assert lam[k] == pytest.approx(mean_curve(m, NEW, 0.1 * k), abs=1e-14)
        assert F[k] == pytest.approx(1.0 - math.exp(-0.1 * k), abs=1e-15)


def test_zero_cap_gives_zero_curves_but_durations():
    m = model(CONST, EXP1, cap=0.0)
    bank = sample_curves(m, np.random.default_rng(0), NEW, 10)
    assert (bank.levels == 0).all() and (bank.eta > 0).all()
    assert mean_curve(m, NEW, 0.1) == 0.0


def test_invalid_laws_rejected():
    with pytest.raises(ConfigurationError):
        DurationLaw("weibull")
    with pytest.raises(ConfigurationError):
        DurationLaw("uniform", lo=2.0, hi=1.0)
    with pytest.raises(ConfigurationError):
        CurveFamily("spline")
    with pytest.raises(ConfigurationError):
        model(CurveFamily("constant", level=3.0), FIXED1, cap=2.0)
    with pytest.raises(ConfigurationError):
        model(CurveFamily("piecewise", levels=(1.0, 0.0)), FIXED1)
