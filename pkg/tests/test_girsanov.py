import math

import numpy as np
import pytest

from muller_ratchet.core import ModelParams, TypeDistribution
from muller_ratchet.deterministic import OdeSolverConfig, integrate
from muller_ratchet.errors import DegenerateWeights, DimensionMismatch, ParameterError, UnsupportedDirection
from muller_ratchet.girsanov import (
    check_exp_moment_bound,
    girsanov_log_weight,
    log_weights,
    reweighted_expectation,
    self_normalized,
    statistic_values,
)
from muller_ratchet.sde import SdeConfig, ensemble_mean, run_sde_ensemble
from muller_ratchet.trajectory import TrajectoryRecord


def record(times, k1, k2, xi=0.0, h=None):
    times = np.asarray(times, dtype=float)
    k1 = np.asarray(k1, dtype=float)
    h = np.ones_like(times) if h is None else np.asarray(h, dtype=float)
    states = np.zeros((1, 2))
    states[0, 0] = 1.0
    return TrajectoryRecord(times, k1, np.asarray(k2, dtype=float), h, xi, times[:1], states)


def restrict(rec, t):
    keep = rec.times <= t
    skeep = rec.state_times <= t
    return TrajectoryRecord(rec.times[keep], rec.kappa1[keep], rec.kappa2[keep], rec.h_xi[keep], rec.xi,
                            rec.state_times[skeep], rec.states[skeep])


def test_weight_vanishes_at_same_alpha_and_zero_time():
    p = ModelParams(0.02, 0.1, 0.0, population_size=50)
    tr = record([0, 1, 2], [0, 0.5, 1.0], [0, 0.2, 0.4])
    assert girsanov_log_weight(tr, p, 0.02).log_weight == 0.0
    assert girsanov_log_weight(record([0.0], [0.3], [0.1]), p, 0.07).log_weight == 0.0


def test_weight_of_mutation_free_constant_path():
    p = ModelParams(0.0, 0.0, 0.0, population_size=50)
    tr = record(np.linspace(0, 3, 31), np.zeros(31), np.zeros(31))
    assert girsanov_log_weight(tr, p, 0.05).log_weight == 0.0
    # with mutation the constant path picks up -N (alpha - alpha') lam t
    q = ModelParams(0.0, 0.1, 0.0, population_size=50)
    assert girsanov_log_weight(tr, q, 0.05).log_weight == pytest.approx(-50 * (0 - 0.05) * 0.1 * 3)


def test_weight_by_hand():
    p = ModelParams(0.01, 0.2, 0.05, population_size=40)
    tr = record([0, 1, 2], [0.0, 1.0, 3.0], [0.0, 0.5, 1.0])
    a2 = 0.03
    f = [0.2 - 0.05 * k1 - 0.5 * (0.01 + a2) * k2 for k1, k2 in zip([0, 1, 3], [0, 0.5, 1])]
    integral = 0.5 * (f[0] + f[1]) + 0.5 * (f[1] + f[2])
    expected = 40 * (0.01 - a2) * (3.0 - 0.0 - integral)
    w = girsanov_log_weight(tr, p, a2)
    assert w.log_weight == pytest.approx(expected, rel=1e-14)
    assert w.integral_term == pytest.approx(integral, rel=1e-14)
    assert (w.alpha_from, w.alpha_to, w.t) == (0.01, a2, 2.0)


def test_refuses_decreasing_selection():
    with pytest.raises(UnsupportedDirection):
        girsanov_log_weight(record([0, 1], [0, 1], [0, 0]), ModelParams(0.05, 0.1, 0, population_size=10), 0.01)


def test_self_normalized_basics():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    res = self_normalized(v, np.zeros(4))
    assert res.estimate == 2.5 and res.effective_sample_size == pytest.approx(4.0) and res.n == 4
    res = self_normalized(v, np.array([0.0, 0.0, 0.0, math.log(3)]))
    assert res.estimate == pytest.approx((1 + 2 + 3 + 12) / 6)
    assert res.effective_sample_size == pytest.approx(36 / 12)
    # huge log weights do not overflow
    assert self_normalized(v, np.array([1000.0, 1000.0, -1000.0, -1000.0])).estimate == pytest.approx(1.5)


@pytest.fixture(scope="module")
def neutral_ensemble():
    params = ModelParams(0.0, 0.1, 0.0, population_size=50)
    ens = run_sde_ensemble(TypeDistribution.delta(0, 32), params, 2.0, SdeConfig(seed=21, record_every=10, xi=0.3),
                           4000)
    return params, ens


def test_same_alpha_gives_plain_mean(neutral_ensemble):
    params, ens = neutral_ensemble
    res = reweighted_expectation(ens, params, params.alpha, "kappa2_at_end")
    assert res.estimate == pytest.approx(np.mean([r.kappa2[-1] for r in ens]), rel=1e-12)
    assert res.effective_sample_size == pytest.approx(len(ens))


def test_ensemble_guards(neutral_ensemble):
    params, ens = neutral_ensemble
    with pytest.raises(DimensionMismatch):
        reweighted_expectation([ens[0], restrict(ens[1], 1.0)], params, 0.05)
    with pytest.raises(ParameterError):
        reweighted_expectation([], params, 0.05)
    with pytest.raises(ParameterError):
        statistic_values(ens[:2], "median")
    with pytest.raises(DegenerateWeights):
        reweighted_expectation(ens[:50], params, 5.0)


def test_weights_are_consistent_across_nested_horizons(neutral_ensemble):
    params, ens = neutral_ensemble
    short = run_sde_ensemble(TypeDistribution.delta(0, 32), params, 1.0, SdeConfig(seed=21, record_every=10, xi=0.3),
                             4000)
    a = log_weights(short[:200], params, 0.05)
    b = log_weights([restrict(r, 1.0) for r in ens[:200]], params, 0.05)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_likelihood_ratio_has_unit_mean(neutral_ensemble, t):
    params, ens = neutral_ensemble
    z = np.exp(log_weights([restrict(r, t) for r in ens], params, 0.05))
    assert abs(z.mean() - 1) <= 3 * z.std(ddof=1) / math.sqrt(z.size)


def test_reweighted_exponential_moment_matches_direct_simulation(neutral_ensemble):
    params, ens = neutral_ensemble
    ens1 = [restrict(r, 1.0) for r in ens]
    rw = reweighted_expectation(ens1, params, 0.03, "h_xi_at_end", xi=0.3)
    target = ModelParams(0.03, params.lam, params.gamma, population_size=params.population_size)
    direct = run_sde_ensemble(TypeDistribution.delta(0, 32), target, 1.0, SdeConfig(seed=22, record_every=10, xi=0.3),
                              4000)
    m, se = ensemble_mean(direct, "h_xi")
    assert abs(rw.estimate - m[-1]) <= 3 * math.hypot(rw.std_error, se[-1])
    # the statistic uses the last stored distribution, which equals the recorded h_xi here
    np.testing.assert_allclose(statistic_values(ens1[:10], "h_xi_at_end", 0.3),
                               [r.h_xi[-1] for r in ens1[:10]], rtol=1e-12)


def test_bound_without_mutation_is_never_exceeded():
    p = ModelParams(0.05, 0.0, 0.02)
    x0 = TypeDistribution.from_unnormalized(np.r_[np.ones(10), np.zeros(10)])
    rec = integrate(p, x0, 20.0, OdeSolverConfig(dt=1e-2, record_every=10, xi=0.5))
    rep = check_exp_moment_bound([rec], 0.5, 0.0, n_sigma=0.0, atol=0.0)
    assert rep.passed and rep.max_ratio <= 1.0


def test_bound_at_time_zero_is_tight():
    tr = record([0.0], [0.0], [0.0], xi=0.5, h=[1.7])
    rep = check_exp_moment_bound([tr], 0.5, 0.1)
    assert rep.ratio.tolist() == [1.0] and rep.passed
    with pytest.raises(ParameterError):
        check_exp_moment_bound([tr], 0.3, 0.1)


def test_bound_holds_for_diffusion_ensemble():
    params = ModelParams(0.03, 0.1, 1e-4, population_size=1000)
    ens = run_sde_ensemble(TypeDistribution.delta(0, 32), params, 5.0, SdeConfig(seed=23, record_every=100, xi=0.5),
                           1000)
    rep = check_exp_moment_bound(ens, 0.5, params.lam)
    assert rep.passed
    assert rep.empirical_sup >= rep.mean_h.max()
    d = rep.to_dict()
    assert len(d["times"]) == len(ens[0].times) and d["passed"] is True
