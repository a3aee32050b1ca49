import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muller_ratchet.core import (
    ModelParams,
    TypeDistribution,
    distribution_metric,
    exp_moment,
    kappa1,
    kappa2,
    log_exp_moment,
    poisson_profile,
    summarize,
    total_variation,
)
from muller_ratchet.errors import DimensionMismatch, NormalizationDrift, OverflowRisk, ParameterError

from conftest import simplex_points


def poisson_by_hand(theta, k_max):
    return np.array([math.exp(-theta) * theta**k / math.factorial(k) for k in range(k_max + 1)])


# -- ModelParams ------------------------------------------------------------


def test_params_equilibrium_mean():
    assert ModelParams(0.03, 0.1, 1e-4).equilibrium_mean == pytest.approx(0.1 / 0.0301)
    assert ModelParams(0.0, 0.1, 0.0).equilibrium_mean == math.inf


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(alpha=0.1, lam=-1, gamma=0),
        dict(alpha=0.1, lam=0.1, gamma=-0.1),
        dict(alpha=0.1, lam=0.1, gamma=0, population_size=0),
        dict(alpha=-0.02, lam=0.1, gamma=0.01),
        dict(alpha=-0.02, lam=0.1, gamma=0.02),
        dict(alpha=float("nan"), lam=0.1, gamma=0),
        dict(alpha="0.1", lam=0.1, gamma=0),
    ],
)
def test_params_rejects_invalid(kwargs):
    with pytest.raises(ParameterError):
        ModelParams(**kwargs)


def test_negative_alpha_allowed_only_deterministically():
    p = ModelParams(alpha=-0.01, lam=0.1, gamma=0.02)
    with pytest.raises(ParameterError):
        p.require_stochastic()
    with pytest.raises(ParameterError):
        ModelParams(0.01, 0.1, 0.0).require_stochastic()  # N infinite
    ModelParams(0.01, 0.1, 0.0, population_size=100).require_stochastic()


# -- TypeDistribution -------------------------------------------------------


def test_distribution_is_normalized_and_read_only():
    d = TypeDistribution([0.25, 0.5, 0.25 + 1e-9])
    assert d.weights.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        d.weights[0] = 1.0


def test_distribution_rejects_drift_and_bad_input():
    with pytest.raises(NormalizationDrift):
        TypeDistribution([0.5, 0.4])
    with pytest.raises(ParameterError):
        TypeDistribution([1.5, -0.5])
    with pytest.raises(ParameterError):
        TypeDistribution([])
    with pytest.raises(ParameterError):
        TypeDistribution([np.inf, 0])
    with pytest.raises(NormalizationDrift):
        TypeDistribution.from_unnormalized([0.0, 0.0])


def test_from_unnormalized_and_delta():
    d = TypeDistribution.from_unnormalized([2.0, 6.0], overflow_mass=0.1)
    np.testing.assert_allclose(d.weights, [0.25, 0.75])
    assert d.overflow_mass == 0.1
    e = TypeDistribution.delta(3, 5)
    assert e.k_max == 5 and list(e.support) == [3]
    with pytest.raises(ParameterError):
        TypeDistribution.delta(6, 5)


def test_with_k_max_pads_and_cuts():
    d = TypeDistribution([0.5, 0.25, 0.25])
    assert d.with_k_max(4).k_max == 4 and d.with_k_max(4).weights[3:].sum() == 0
    cut = d.with_k_max(1)
    np.testing.assert_allclose(cut.weights, [2 / 3, 1 / 3])
    assert cut.overflow_mass == pytest.approx(0.25)


def test_dict_round_trip():
    d = TypeDistribution([0.1, 0.2, 0.7], overflow_mass=1e-12)
    assert TypeDistribution.from_dict(d.to_dict()) == d
    with pytest.raises(DimensionMismatch):
        TypeDistribution.from_dict({"weights": [1.0, 0.0], "k_max": 5})


# -- functionals ------------------------------------------------------------


def test_kappa1_examples():
    assert kappa1(TypeDistribution.delta(0, 10)) == 0.0
    assert kappa1(TypeDistribution.delta(7, 10)) == 7.0
    theta = 3.3223
    d = TypeDistribution.from_unnormalized(poisson_by_hand(theta, 100))
    assert kappa1(d) == pytest.approx(theta, abs=1e-9)


def test_kappa2_examples():
    for k in (0, 3, 9):
        assert kappa2(TypeDistribution.delta(k, 10)) == 0.0
    theta = 3.3223
    d = TypeDistribution.from_unnormalized(poisson_by_hand(theta, 100))
    assert kappa2(d) == pytest.approx(theta, abs=1e-8)
    assert kappa2(TypeDistribution([0.5, 0.5])) == pytest.approx(0.25)


def test_exp_moment_examples():
    d = TypeDistribution([0.2, 0.3, 0.5])
    assert exp_moment(d, 0.0) == 1.0
    assert exp_moment(TypeDistribution.delta(2, 4), 1.0) == pytest.approx(7.389056, abs=1e-6)
    for theta, xi in ((1.0, 0.5), (3.3, 1.0)):
        assert exp_moment(poisson_profile(theta, 120), xi) == pytest.approx(math.exp(theta * math.expm1(xi)), rel=1e-10)


def test_exp_moment_guards():
    with pytest.raises(ParameterError):
        exp_moment(TypeDistribution.delta(0, 4), -0.1)
    with pytest.raises(OverflowRisk):
        exp_moment(TypeDistribution.delta(0, 1000), 1.0)


def test_log_exp_moment_matches_direct_and_survives_large_zeta():
    w = np.array([0.2, 0.3, 0.5])
    assert log_exp_moment(w, 0.7) == pytest.approx(math.log(np.dot(w, np.exp(0.7 * np.arange(3)))))
    assert log_exp_moment(np.array([0.0, 1.0]), 1000.0) == pytest.approx(1000.0)


def test_metric_examples():
    a, b = TypeDistribution.delta(0, 3), TypeDistribution.delta(1, 3)
    assert distribution_metric(a, a, 0.3) == 0.0
    assert distribution_metric(a, b, 0.0) == 2.0
    assert distribution_metric(a, b, math.log(2)) == pytest.approx(3.0)
    assert total_variation(a, b) == 1.0
    with pytest.raises(DimensionMismatch):
        distribution_metric(a, TypeDistribution.delta(0, 4), 0.0)


def test_poisson_profile_examples(default_params):
    assert poisson_profile(0.0, 10) == TypeDistribution.delta(0, 10)
    d = poisson_profile(default_params.equilibrium_mean, 64)
    assert kappa1(d) == pytest.approx(3.3, abs=0.05)
    np.testing.assert_allclose(poisson_profile(1.0, 50).weights[:3], [math.exp(-1), math.exp(-1), math.exp(-1) / 2],
                               rtol=1e-12)
    np.testing.assert_allclose(poisson_profile(2.5, 60).weights, poisson_by_hand(2.5, 60), rtol=1e-10, atol=1e-300)
    small = poisson_profile(5.0, 8)
    assert small.overflow_mass == pytest.approx(1 - poisson_by_hand(5.0, 8).sum(), rel=1e-10)
    with pytest.raises(ParameterError):
        poisson_profile(-1.0, 5)


def test_summarize():
    s = summarize(TypeDistribution([0.5, 0.5]), xi=math.log(3), time=2.0)
    assert (s.kappa1, s.kappa2, s.time) == (0.5, 0.25, 2.0)
    assert s.h_xi == pytest.approx(2.0)


# -- properties -------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(simplex_points())
def test_normalization_property(d):
    assert abs(d.weights.sum() - 1.0) <= 1e-12
    assert np.all(d.weights >= 0)


@settings(max_examples=200, deadline=None)
@given(simplex_points(), st.floats(0.0, 2.0))
def test_jensen_bound(d, xi):
    assert exp_moment(d, xi) >= math.exp(xi * kappa1(d)) * (1 - 1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30).flatmap(lambda k: st.tuples(*(simplex_points(k_max=k) for _ in range(3)))),
       st.floats(0.0, 1.0))
def test_metric_axioms(triple, xi):
    a, b, c = triple
    assert distribution_metric(a, b, xi) == distribution_metric(b, a, xi)
    assert distribution_metric(a, c, xi) <= distribution_metric(a, b, xi) + distribution_metric(b, c, xi) + 1e-12
    assert 0.0 <= total_variation(a, b) <= 1.0 + 1e-15


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 20.0))
def test_poisson_profile_moments_match_theta(theta):
    d = poisson_profile(theta, 120)
    assert kappa1(d) == pytest.approx(theta, abs=1e-9)
    assert kappa2(d) == pytest.approx(theta, abs=1e-8)
