"""Acceptance suite.

Each ``criterion_*`` function runs one end-to-end check at its stated
tolerance and returns a :class:`CriterionResult`. Wall-clock budgets are
recorded next to the measured runtime but do not decide pass or fail, since
they depend on the machine.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ModelParams, TypeDistribution, poisson_profile, total_variation
from .deterministic import OdeSolverConfig, cgf_derivative_residual, closed_form, duality_residual, integrate
from .girsanov import check_exp_moment_bound, log_weights, reweighted_expectation
from .particles import aggregate_sigma, conditioned_distribution
from .rng import make_rng
from .sde import SdeConfig, ensemble_mean, run_sde_ensemble
from .wright_fisher import PopulationState, RunConfig, ensemble_run

DEFAULT_PARAMS = ModelParams(alpha=0.03, lam=0.1, gamma=1e-4)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    value: str
    tolerance: str
    runtime: float = 0.0
    budget: float | None = None
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f" (budget {self.budget:g}s)" if self.budget else ""
        return (f"[{status}] {self.number:>2}. {self.name}: {self.value}; "
                f"required {self.tolerance}; {self.runtime:.1f}s{budget}")

    def to_dict(self):
        return asdict(self)


def _timed(number, name, budget):
    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            passed, value, tol, details = fn()
            return CriterionResult(number, name, bool(passed), value, tol,
                                   time.perf_counter() - t0, budget, details)
        run.number = number
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed(1, "closed form vs RK4", 10)
def criterion_closed_form_vs_rk4():
    x0 = TypeDistribution.delta(0, 64)
    ode = integrate(DEFAULT_PARAMS, x0, 100.0, OdeSolverConfig(dt=1e-3, record_every=10**9)).final
    cf = closed_form(DEFAULT_PARAMS, x0, 100.0)
    sup = float(np.max(np.abs(ode.weights - cf.weights)))
    return sup <= 1e-6, f"sup-norm {sup:.2e}", "<= 1e-6", {"sup_norm": sup}


@_timed(2, "Poisson equilibrium", 5)
def criterion_poisson_equilibrium():
    x0 = TypeDistribution.delta(0, 64)
    cf = closed_form(DEFAULT_PARAMS, x0, 5000.0)
    target = poisson_profile(DEFAULT_PARAMS.equilibrium_mean, 64)
    tv = total_variation(cf, target)
    swapped = ModelParams(alpha=DEFAULT_PARAMS.gamma, lam=DEFAULT_PARAMS.lam, gamma=DEFAULT_PARAMS.alpha)
    split = float(np.max(np.abs(closed_form(swapped, x0, 5000.0).weights - cf.weights)))
    ok = tv <= 1e-6 and split <= 1e-9
    return ok, f"TV {tv:.2e}, split difference {split:.2e}", "TV <= 1e-6 and split <= 1e-9", \
        {"total_variation": tv, "split_difference": split}


@_timed(3, "particle oracle", 30)
def criterion_particle_oracle():
    x0 = TypeDistribution.delta(0, 64)
    est = conditioned_distribution(x0, DEFAULT_PARAMS, 5.0, 100_000, seed=3)
    tv = total_variation(est.distribution, closed_form(DEFAULT_PARAMS, x0, 5.0))
    tol = 3 * aggregate_sigma(est.std_errors)
    return tv <= tol, f"TV {tv:.4f}", f"<= 3 sigma = {tol:.4f}", \
        {"total_variation": tv, "tolerance": tol, "survival_rate": est.survival_rate}


def _click_check(n, replicates, lo, hi, seed):
    params = ModelParams(alpha=0.03, lam=0.1, gamma=0.0, population_size=n)
    cfg = RunConfig(seed=seed, generations=10 * n, record_every=n // 10, k_max=64)
    s = ensemble_run(PopulationState.monomorphic(n, 0, 64), params, cfg, replicates)
    return lo <= s.click_rate <= hi, s


@_timed(4, "click rates", 22 * 60)
def criterion_click_rates():
    ok_a, a = _click_check(1000, 20, 4.5, 7.0, seed=4)
    ok_b, b = _click_check(10_000, 5, 0.15, 0.70, seed=4)
    value = f"N=1e3: {a.click_rate:.2f} +- {a.click_rate_se:.2f}, N=1e4: {b.click_rate:.3f} +- {b.click_rate_se:.3f}"
    return ok_a and ok_b, value, "[4.5, 7.0] and [0.15, 0.70] clicks per N generations", \
        {"n1000": a.click_rate, "n10000": b.click_rate}


@_timed(5, "equilibrium mean with compensation", 20 * 60)
def criterion_equilibrium_mean():
    n = 10_000
    params = ModelParams(alpha=0.03, lam=0.1, gamma=1e-4, population_size=n)
    cfg = RunConfig(seed=5, generations=10 * n, record_every=10, k_max=64)
    s = ensemble_run(PopulationState.monomorphic(n, 0, 64), params, cfg, 1, window=(0.5, 1.0))
    ok = 2.8 <= s.kappa1_mean <= 4.3 and 2.3 <= s.kappa2_mean <= 4.5
    return ok, f"kappa1 {s.kappa1_mean:.3f}, kappa2 {s.kappa2_mean:.3f}", \
        "kappa1 in [2.8, 4.3], kappa2 in [2.3, 4.5]", {"kappa1": s.kappa1_mean, "kappa2": s.kappa2_mean}


@_timed(6, "asymmetry ordering", 5 * 60)
def criterion_asymmetry():
    n = 1000
    out = []
    for alpha, gamma in ((0.03, 1e-4), (1e-4, 0.03)):
        params = ModelParams(alpha=alpha, lam=0.1, gamma=gamma, population_size=n)
        cfg = RunConfig(seed=6, generations=10 * n, record_every=10, k_max=64)
        out.append(ensemble_run(PopulationState.monomorphic(n, 0, 64), params, cfg, 10))
    hi, lo = out
    sigma = math.hypot(hi.kappa1_se, lo.kappa1_se)
    sep = (hi.kappa1_mean - lo.kappa1_mean) / sigma
    return sep > 1.0, f"kappa1 {hi.kappa1_mean:.3f} vs {lo.kappa1_mean:.3f} ({sep:.1f} sigma)", \
        "first > second by more than 1 combined sigma", \
        {"kappa1_selection": hi.kappa1_mean, "kappa1_compensation": lo.kappa1_mean, "separation_sigma": sep}


@_timed(7, "duality residual", 30)
def criterion_duality():
    rng = make_rng(7)
    worst = 0.0
    for _ in range(10):
        params = ModelParams(alpha=rng.uniform(0, 0.1), lam=rng.uniform(0.01, 0.5), gamma=rng.uniform(0, 0.1))
        x0 = poisson_profile(rng.uniform(0.1, 3.0), 64)
        rep = duality_residual(params, x0, rng.uniform(0.1, 1.0), rng.uniform(0.5, 10.0))
        worst = max(worst, rep.residual)
    return worst <= 1e-6, f"max residual {worst:.2e}", "<= 1e-6", {"max_residual": worst}


@_timed(8, "CGF identity", 1)
def criterion_cgf():
    rng = make_rng(8)
    worst = 0.0
    for _ in range(100):
        params = ModelParams(alpha=rng.uniform(0, 0.1), lam=rng.uniform(0, 0.5), gamma=rng.uniform(0, 0.1))
        w = rng.dirichlet(np.ones(33))
        worst = max(worst, cgf_derivative_residual(params, TypeDistribution(w), rng.uniform(0.01, 1.0)))
    return worst <= 1e-10, f"max residual {worst:.2e}", "<= 1e-10", {"max_residual": worst}


@_timed(9, "exponential-moment bound", 2 * 60)
def criterion_exp_moment_bound():
    xi = 0.5
    x0 = TypeDistribution.delta(0, 64)
    ode = integrate(DEFAULT_PARAMS, x0, 50.0, OdeSolverConfig(dt=1e-3, record_every=100, xi=xi))
    ode_rep = check_exp_moment_bound([ode], xi, DEFAULT_PARAMS.lam, n_sigma=0.0, atol=1e-9)
    params = ModelParams(alpha=0.03, lam=0.1, gamma=1e-4, population_size=1000)
    ens = run_sde_ensemble(TypeDistribution.delta(0, 32), params, 5.0,
                           SdeConfig(dt=1e-3, seed=9, record_every=100, xi=xi), 1000)
    sde_rep = check_exp_moment_bound(ens, xi, params.lam, n_sigma=3.0)
    return ode_rep.passed and sde_rep.passed, \
        f"ODE max ratio {ode_rep.max_ratio:.6f}, SDE max ratio {sde_rep.max_ratio:.4f}", \
        "ODE ratio <= 1 + 1e-9, SDE mean <= bound + 3 sigma", \
        {"ode_max_ratio": ode_rep.max_ratio, "sde_max_ratio": sde_rep.max_ratio,
         "sde_empirical_sup": sde_rep.empirical_sup}


@_timed(10, "Girsanov consistency", 5 * 60)
def criterion_girsanov():
    n, t, m = 50, 1.0, 10_000
    x0 = TypeDistribution.delta(0, 32)
    base = ModelParams(alpha=0.0, lam=0.1, gamma=1e-4, population_size=n)
    target = ModelParams(alpha=0.05, lam=0.1, gamma=1e-4, population_size=n)
    cfg = SdeConfig(dt=1e-3, seed=10, record_every=10)
    ens = run_sde_ensemble(x0, base, t, cfg, m)
    rw = reweighted_expectation(ens, base, target.alpha, "kappa1_at_end")
    direct = run_sde_ensemble(x0, target, t, SdeConfig(dt=1e-3, seed=11, record_every=10), m)
    dm, dse = ensemble_mean(direct, "kappa1")
    dm, dse = float(dm[-1]), float(dse[-1])
    z = np.exp(log_weights(ens, base, target.alpha))
    z_mean, z_se = float(z.mean()), float(z.std(ddof=1) / math.sqrt(z.size))
    gap = abs(rw.estimate - dm) / math.hypot(rw.std_error, dse)
    z_gap = abs(z_mean - 1.0) / z_se
    return gap <= 3 and z_gap <= 3, \
        f"reweighted {rw.estimate:.5f} vs direct {dm:.5f} ({gap:.2f} sigma), mean Z {z_mean:.4f} ({z_gap:.2f} sigma)", \
        "both within 3 sigma", \
        {"reweighted": rw.estimate, "direct": dm, "gap_sigma": gap, "mean_z": z_mean, "z_gap_sigma": z_gap,
         "ess": rw.effective_sample_size}


@_timed(11, "neutral drift and determinism", 60)
def criterion_neutral_and_determinism():
    x = np.array([0.3, 0.5, 0.2])
    neutral_wf = ModelParams(0.0, 0.0, 0.0, population_size=100)
    init = PopulationState(np.array([30, 50, 20]))
    _, recs = ensemble_run(init, neutral_wf, RunConfig(seed=11, generations=50, record_every=50, k_max=2),
                           400, keep_records=True)
    end = np.stack([r.states[-1] for r in recs])
    wf_z = np.abs(end.mean(0) - x) / (end.std(0, ddof=1) / math.sqrt(end.shape[0]))

    neutral_sde = ModelParams(0.0, 0.0, 0.0, population_size=100)
    ens = run_sde_ensemble(TypeDistribution(x), neutral_sde, 0.5, SdeConfig(dt=1e-3, seed=11, record_every=500), 400)
    end = np.stack([r.states[-1] for r in ens])
    sde_z = np.abs(end.mean(0) - x) / (end.std(0, ddof=1) / math.sqrt(end.shape[0]))
    neutral_ok = bool(wf_z.max() <= 3 and sde_z.max() <= 3)

    p = ModelParams(0.03, 0.1, 1e-4, population_size=200)
    wf_cfg = RunConfig(seed=12, generations=300, k_max=32)
    a = ensemble_run(PopulationState.monomorphic(200, 0, 32), p, wf_cfg, 3, keep_records=True)[1]
    b = ensemble_run(PopulationState.monomorphic(200, 0, 32), p, wf_cfg, 3, keep_records=True)[1]
    sde_cfg = SdeConfig(dt=1e-3, seed=12, record_every=10)
    c = run_sde_ensemble(TypeDistribution.delta(0, 32), p, 0.5, sde_cfg, 5)
    d = run_sde_ensemble(TypeDistribution.delta(0, 32), p, 0.5, sde_cfg, 5)
    pa = conditioned_distribution(TypeDistribution.delta(0, 32), p, 2.0, 5000, 12)
    pb = conditioned_distribution(TypeDistribution.delta(0, 32), p, 2.0, 5000, 12)
    same = (all(np.array_equal(r.states, s.states) and r.clicks == s.clicks for r, s in zip(a, b))
            and all(np.array_equal(r.states, s.states) for r, s in zip(c, d))
            and pa.distribution == pb.distribution)
    return neutral_ok and same, \
        f"max |z| WF {wf_z.max():.2f}, SDE {sde_z.max():.2f}; reruns identical: {same}", \
        "|z| <= 3 per class and bit-identical reruns", \
        {"wf_max_z": float(wf_z.max()), "sde_max_z": float(sde_z.max()), "bit_identical": same}


CRITERIA = {
    fn.number: fn
    for fn in (
        criterion_closed_form_vs_rk4,
        criterion_poisson_equilibrium,
        criterion_particle_oracle,
        criterion_click_rates,
        criterion_equilibrium_mean,
        criterion_asymmetry,
        criterion_duality,
        criterion_cgf,
        criterion_exp_moment_bound,
        criterion_girsanov,
        criterion_neutral_and_determinism,
    )
}


def run_suite(numbers=None, echo=print) -> list[CriterionResult]:
    results = []
    for n in sorted(numbers or CRITERIA):
        res = CRITERIA[n]()
        if echo:
            echo(res.line())
        results.append(res)
    return results
