"""Reweighting diffusion paths between selection coefficients.

A path simulated with selection ``alpha`` is carried to ``alpha_to`` by the
likelihood ratio

    log Z = N (alpha - alpha_to) [ kappa1(X_t) - kappa1(X_0)
            - int_0^t (lam - gamma kappa1(X_s) - (alpha + alpha_to)/2 kappa2(X_s)) ds ],

which is a true martingale when ``alpha_to > alpha``. The module also
monitors the exponential-moment growth bound
``E h_xi(X_t) <= h_xi(x) exp(lam t (e^xi - 1))``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import trapezoid

from .core import ModelParams
from .errors import DegenerateWeights, DimensionMismatch, ParameterError, UnsupportedDirection

MIN_ESS = 10.0


@dataclass(frozen=True)
class PathWeight:
    alpha_from: float
    alpha_to: float
    log_weight: float
    integral_term: float
    t: float


def girsanov_log_weight(traj, params: ModelParams, alpha_to: float) -> PathWeight:
    """Log likelihood ratio of one recorded path, trapezoid rule on its statistics grid."""
    if alpha_to < params.alpha:
        raise UnsupportedDirection(
            f"alpha_to={alpha_to} < alpha={params.alpha}: only the local martingale property holds"
        )
    t = traj.times
    integrand = params.lam - params.gamma * traj.kappa1 - 0.5 * (params.alpha + alpha_to) * traj.kappa2
    integral = float(trapezoid(integrand, t)) if t.size > 1 else 0.0
    if alpha_to == params.alpha:
        return PathWeight(params.alpha, alpha_to, 0.0, integral, float(t[-1]))
    bracket = traj.kappa1[-1] - traj.kappa1[0] - integral
    log_w = params.population_size * (params.alpha - alpha_to) * bracket
    return PathWeight(params.alpha, alpha_to, float(log_w), integral, float(t[-1]))


def log_weights(ensemble, params: ModelParams, alpha_to: float) -> np.ndarray:
    return np.array([girsanov_log_weight(tr, params, alpha_to).log_weight for tr in ensemble])


def _kappa1_at_end(tr, xi):
    return tr.kappa1[-1]


def _kappa2_at_end(tr, xi):
    return tr.kappa2[-1]


def _h_xi_at_end(tr, xi):
    if xi is None:
        return tr.h_xi[-1]
    x = tr.states[-1]
    return float(np.dot(x, np.exp(xi * np.arange(x.size))))


STATISTICS = {
    "kappa1_at_end": _kappa1_at_end,
    "kappa2_at_end": _kappa2_at_end,
    "h_xi_at_end": _h_xi_at_end,
}


def statistic_values(ensemble, statistic: str, xi: float | None = None) -> np.ndarray:
    try:
        f = STATISTICS[statistic]
    except KeyError:
        raise ParameterError(f"unknown statistic {statistic!r}; choose from {sorted(STATISTICS)}") from None
    return np.array([f(tr, xi) for tr in ensemble], dtype=np.float64)


@dataclass(frozen=True)
class ReweightResult:
    estimate: float
    std_error: float
    effective_sample_size: float
    n: int

    def to_dict(self):
        return asdict(self)


def self_normalized(values: np.ndarray, logw: np.ndarray) -> ReweightResult:
    """Self-normalized importance-sampling mean with delta-method standard error."""
    w = np.exp(logw - logw.max())
    sw = w.sum()
    wn = w / sw
    est = float(np.dot(wn, values))
    se = float(math.sqrt(np.dot(wn**2, (values - est) ** 2)))
    ess = float(1.0 / np.dot(wn, wn))
    return ReweightResult(est, se, ess, values.size)


def reweighted_expectation(
    ensemble,
    params: ModelParams,
    alpha_to: float,
    statistic: str = "kappa1_at_end",
    xi: float | None = None,
) -> ReweightResult:
    """Estimate ``E^{alpha_to}[f]`` from paths simulated at ``params.alpha``.

    Raises :class:`DegenerateWeights` if the effective sample size drops
    below ``MIN_ESS``.
    """
    ensemble = list(ensemble)
    if not ensemble:
        raise ParameterError("empty ensemble")
    grid = ensemble[0].times
    if any(tr.times.shape != grid.shape or not np.array_equal(tr.times, grid) for tr in ensemble):
        raise DimensionMismatch("trajectories do not share a time grid")
    logw = log_weights(ensemble, params, alpha_to)
    res = self_normalized(statistic_values(ensemble, statistic, xi), logw)
    if res.effective_sample_size < MIN_ESS:
        raise DegenerateWeights(f"effective sample size {res.effective_sample_size:.1f} < {MIN_ESS}")
    return res


@dataclass
class BoundReport:
    times: np.ndarray
    mean_h: np.ndarray
    std_error: np.ndarray
    bound: np.ndarray
    ratio: np.ndarray
    max_ratio: float
    passed: bool
    empirical_sup: float
    tolerance: str

    def to_dict(self):
        d = asdict(self)
        for key in ("times", "mean_h", "std_error", "bound", "ratio"):
            d[key] = np.asarray(d[key]).tolist()
        return d


def check_exp_moment_bound(ensemble, xi: float, lam: float, n_sigma: float = 3.0, atol: float = 1e-9) -> BoundReport:
    """Compare the ensemble mean of ``h_xi`` with ``h_xi(x0) exp(lam t (e^xi - 1))``.

    Passes when ``mean <= bound * (1 + atol) + n_sigma * se`` at every
    recorded time. The trajectories must have been recorded with this ``xi``.
    ``empirical_sup`` is the largest ``h_xi`` seen on any path; no bound is
    asserted on it.
    """
    ensemble = list(ensemble)
    if not ensemble:
        raise ParameterError("empty ensemble")
    if any(abs(tr.xi - xi) > 0 for tr in ensemble):
        raise ParameterError("trajectories were recorded with a different xi")
    H = np.stack([tr.h_xi for tr in ensemble])
    t = ensemble[0].times
    mean = H.mean(axis=0)
    se = H.std(axis=0, ddof=1) / math.sqrt(H.shape[0]) if H.shape[0] > 1 else np.zeros_like(mean)
    bound = mean[0] * np.exp(lam * t * math.expm1(xi))
    ratio = mean / bound
    ok = mean <= bound * (1.0 + atol) + n_sigma * se
    return BoundReport(
        times=t,
        mean_h=mean,
        std_error=se,
        bound=bound,
        ratio=ratio,
        max_ratio=float(ratio.max()),
        passed=bool(ok.all()),
        empirical_sup=float(H.max()),
        tolerance=f"mean <= bound*(1+{atol:g}) + {n_sigma:g}*se",
    )
