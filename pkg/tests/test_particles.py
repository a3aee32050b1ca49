import math

import numpy as np
import pytest
from scipy import stats

from muller_ratchet.core import ModelParams, TypeDistribution, poisson_profile, total_variation
from muller_ratchet.deterministic import closed_form
from muller_ratchet.errors import AllPathsKilled, ParameterError
from muller_ratchet.particles import (
    GAIN,
    KILL,
    LOSS,
    ParticlePath,
    aggregate_sigma,
    conditioned_distribution,
    final_state_law,
    mutation_counting_path,
    simulate_path,
)
from muller_ratchet.rng import make_rng


def two_sample_chi2_pvalue(h1, n1, h2, n2):
    """Homogeneity test on histograms, with the killed count as one extra cell."""
    size = max(h1.size, h2.size)
    a = np.r_[np.pad(h1, (0, size - h1.size)), n1]
    b = np.r_[np.pad(h2, (0, size - h2.size)), n2]
    keep = (a + b) >= 10
    table = np.vstack([a[keep], b[keep]])
    return stats.chi2_contingency(table)[1]


# -- single paths ---------------------------------------------------------------


def test_zero_rates_produce_no_events():
    p = simulate_path(3, ModelParams(0, 0, 0), 10.0, make_rng(0))
    assert p.events == [] and p.final_state == 3 and not p.killed


def test_mutation_free_line_at_zero_is_absorbed():
    p = simulate_path(0, ModelParams(0.7, 0.0, 0.4), 100.0, make_rng(1))
    assert p.events == [] and p.final_state == 0


def test_single_mutation_killing_time_is_exponential():
    rng = make_rng(2)
    params = ModelParams(1.0, 0.0, 0.0)
    t = 0.8
    killed = np.mean([simulate_path(1, params, t, rng).killed for _ in range(100_000)])
    p = 1 - math.exp(-t)
    assert abs(killed - p) <= 3 * math.sqrt(p * (1 - p) / 100_000)


def test_state_at_replays_events():
    path = ParticlePath(2, 5.0, [(1.0, GAIN), (2.0, LOSS), (2.5, LOSS), (4.0, KILL)], None)
    assert [path.state_at(t) for t in (0.5, 1.5, 2.2, 3.0, 4.5)] == [2, 3, 2, 1, None]
    assert path.killed


def test_mutation_counting_examples():
    p = mutation_counting_path(0, ModelParams(0.5, 0.0, 0.5), 10.0, make_rng(3))
    assert p.events == [] and p.final_state == 0
    with pytest.raises(ParameterError):
        mutation_counting_path(-1, ModelParams(0, 0, 0), 1.0, make_rng(0))
    with pytest.raises(ParameterError):
        simulate_path(0, ModelParams(-0.01, 0.1, 0.02), 1.0, make_rng(0))


def test_two_constructions_have_the_same_law():
    params = ModelParams(0.03, 0.1, 0.01)
    rng = make_rng(4)
    h1, n1 = final_state_law([simulate_path(2, params, 3.0, rng) for _ in range(100_000)])
    h2, n2 = final_state_law([mutation_counting_path(2, params, 3.0, rng) for _ in range(100_000)])
    assert two_sample_chi2_pvalue(h1, n1, h2, n2) > 1e-3


def test_without_selection_the_count_is_an_infinite_server_queue():
    params = ModelParams(0.0, 1.0, 1.0)
    rng = make_rng(5)
    hist, killed = final_state_law([mutation_counting_path(0, params, 30.0, rng) for _ in range(20_000)])
    assert killed == 0
    expected = stats.poisson.pmf(np.arange(hist.size), 1.0) * 20_000
    keep = expected >= 5
    chi2 = ((hist[keep] - expected[keep]) ** 2 / expected[keep]).sum()
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-3


# -- conditioned distribution --------------------------------------------------


def test_no_selection_means_no_killing():
    est = conditioned_distribution(poisson_profile(2.0, 30), ModelParams(0, 0.3, 0.1), 2.0, 5000, 6)
    assert est.survival_rate == 1.0 and est.n_survivors == 5000


def test_default_parameters_match_closed_form(default_params):
    x0 = TypeDistribution.delta(0, 64)
    est = conditioned_distribution(x0, default_params, 5.0, 100_000, 7)
    assert total_variation(est.distribution, closed_form(default_params, x0, 5.0)) <= 3 * aggregate_sigma(est.std_errors)


def test_pure_killing_tilts_the_initial_law():
    alpha, t = 0.2, 1.5
    x0 = TypeDistribution([0.1, 0.2, 0.3, 0.4] + [0.0] * 12)
    params = ModelParams(alpha, 0.0, 0.0)
    by_hand = x0.weights * np.exp(-alpha * np.arange(16) * t)
    by_hand /= by_hand.sum()
    np.testing.assert_allclose(closed_form(params, x0, t).weights, by_hand, atol=1e-14)
    est = conditioned_distribution(x0, params, t, 100_000, 8)
    assert np.all(np.abs(est.distribution.weights - by_hand) <= 4 * est.std_errors + 1e-12)


def test_matches_closed_form_across_parameter_grid():
    rng = np.random.default_rng(9)
    for i in range(10):
        params = ModelParams(rng.uniform(0, 0.3), rng.uniform(0, 1), rng.uniform(0, 0.3))
        x0 = poisson_profile(rng.uniform(0, 3), 48)
        t = float(rng.uniform(0.5, 8))
        est = conditioned_distribution(x0, params, t, 40_000, 100 + i)
        tv = total_variation(est.distribution, closed_form(params, x0, t))
        assert tv <= 3 * aggregate_sigma(est.std_errors)


def test_selection_thins_the_mutation_free_equilibrium():
    lam, gamma, alpha = 0.5, 0.25, 0.25
    params = ModelParams(alpha, lam, gamma)
    est = conditioned_distribution(poisson_profile(lam / gamma, 40), params, 40.0, 100_000, 10)
    target = poisson_profile(lam / (alpha + gamma), 40)
    assert total_variation(est.distribution, target) <= 3 * aggregate_sigma(est.std_errors)


def test_estimate_fields_and_reproducibility(default_params):
    x0 = TypeDistribution.delta(0, 20)
    a = conditioned_distribution(x0, default_params, 3.0, 2000, 11)
    b = conditioned_distribution(x0, default_params, 3.0, 2000, 11)
    assert a.distribution == b.distribution and a.survival_rate == b.survival_rate
    dist, surv, se = a
    assert dist is a.distribution and surv == a.survival_rate and se is a.std_errors
    p = dist.weights
    np.testing.assert_allclose(se, np.sqrt(p * (1 - p) / a.n_survivors))
    assert a.n_paths == 2000 and 0 < surv <= 1


def test_survivors_above_k_max_are_reported_as_overflow():
    est = conditioned_distribution(TypeDistribution.delta(0, 3), ModelParams(0.0, 2.0, 0.0), 4.0, 5000, 12)
    p_over = stats.poisson.sf(3, 8.0)
    assert abs(est.distribution.overflow_mass - p_over) <= 4 * math.sqrt(p_over * (1 - p_over) / 5000)


def test_guards(default_params):
    x0 = TypeDistribution.delta(5, 10)
    with pytest.raises(AllPathsKilled):
        conditioned_distribution(x0, ModelParams(50.0, 0.0, 0.0), 10.0, 100, 0)
    with pytest.raises(ParameterError):
        conditioned_distribution(x0, default_params, 1.0, 0, 0)
    with pytest.raises(ParameterError):
        conditioned_distribution(x0, default_params, -1.0, 10, 0)
