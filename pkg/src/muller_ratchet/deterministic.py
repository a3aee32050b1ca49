"""The infinite-population system.

The type frequencies follow

    dx_k/dt = alpha (kappa1(x) - k) x_k + lam (x_{k-1} - x_k)
              + gamma ((k+1) x_{k+1} - k x_k),

which has an explicit solution and converges to Poisson weights with mean
``lam / (alpha + gamma)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit
from scipy import integrate as sp_integrate, stats

from .core import (
    DRIFT_TOL,
    ModelParams,
    TypeDistribution,
    _check_xi,
    kappa1,
    log_exp_moment,
)
from .errors import NormalizationDrift, ParameterError
from .trajectory import TrajectoryRecord


@dataclass(frozen=True)
class OdeSolverConfig:
    dt: float = 1e-3
    method: str = "rk4"
    record_every: int = 1000
    xi: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.record_every < 1:
            raise ParameterError(f"record_every must be >= 1, got {self.record_every}")
        if self.method != "rk4":
            raise ParameterError(f"unsupported method {self.method!r}; only 'rk4'")


@dataclass(frozen=True)
class DualityReport:
    t: float
    zeta0: float
    lhs: float
    rhs: float
    residual: float

    def to_dict(self):
        return asdict(self)


def _rhs(x: np.ndarray, alpha: float, lam: float, gamma: float) -> np.ndarray:
    """Right-hand side along the last axis; ``x_{-1} = x_{K+1} = 0``."""
    k = np.arange(x.shape[-1], dtype=np.float64)
    mass = x.sum(axis=-1, keepdims=True)
    mean = (x * k).sum(axis=-1, keepdims=True)
    out = alpha * (mean - k * mass) * x
    if lam:
        out -= lam * x
        out[..., 1:] += lam * x[..., :-1]
    if gamma:
        kx = k * x
        out -= gamma * kx
        out[..., :-1] += gamma * kx[..., 1:]
    return out


def ode_rhs(params: ModelParams, d) -> np.ndarray:
    """Time derivative of the type frequencies at ``d``.

    The entries sum to ``-lam * x_{k_max}``: the flux out of the top class
    has nowhere to go on the truncated vector.
    """
    x = d.weights if isinstance(d, TypeDistribution) else np.asarray(d, dtype=np.float64)
    return _rhs(x, params.alpha, params.lam, params.gamma)


@njit(cache=True)
def _rhs_1d(x, alpha, lam, gamma, out):
    n = x.size
    mass = 0.0
    mean = 0.0
    for k in range(n):
        mass += x[k]
        mean += k * x[k]
    for k in range(n):
        v = alpha * (mean - k * mass) * x[k] - lam * x[k] - gamma * k * x[k]
        if k > 0:
            v += lam * x[k - 1]
        if k + 1 < n:
            v += gamma * (k + 1) * x[k + 1]
        out[k] = v


@njit(cache=True)
def _rk4_run(x, grid, keep, alpha, lam, gamma, drift_tol, states):
    """Advance ``x`` over ``grid`` in place; returns (steps done, max drift).

    Stops early (returning the failing step) when the mass drifts past
    ``drift_tol``.
    """
    n = x.size
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    slot = 1
    max_drift = 0.0
    for i in range(1, grid.size):
        h = grid[i] - grid[i - 1]
        _rhs_1d(x, alpha, lam, gamma, k1)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * h * k1[j]
        _rhs_1d(tmp, alpha, lam, gamma, k2)
        for j in range(n):
            tmp[j] = x[j] + 0.5 * h * k2[j]
        _rhs_1d(tmp, alpha, lam, gamma, k3)
        for j in range(n):
            tmp[j] = x[j] + h * k3[j]
        _rhs_1d(tmp, alpha, lam, gamma, k4)
        total = 0.0
        for j in range(n):
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            total += x[j]
        drift = abs(total - 1.0)
        if not drift <= drift_tol:
            return i, drift
        if drift > max_drift:
            max_drift = drift
        for j in range(n):
            x[j] = max(x[j] / total, 0.0)
        if slot < keep.size and keep[slot] == i:
            states[slot, :] = x
            slot += 1
    return grid.size - 1, max_drift


def _time_grid(t_end: float, dt: float) -> np.ndarray:
    n = max(int(math.ceil(t_end / dt - 1e-9)), 0)
    grid = np.arange(n + 1, dtype=np.float64) * dt
    if n:
        grid[-1] = t_end
    return grid


def integrate(
    params: ModelParams,
    x0: TypeDistribution,
    t_end: float,
    cfg: OdeSolverConfig | None = None,
) -> TrajectoryRecord:
    """Fixed-step RK4 integration from ``x0`` up to ``t_end``.

    Each step is renormalized; a mass error above ``DRIFT_TOL`` raises
    :class:`NormalizationDrift`. States are stored every ``cfg.record_every``
    steps and always at ``t_end``.
    """
    cfg = cfg or OdeSolverConfig()
    if t_end < 0:
        raise ParameterError(f"t_end must be >= 0, got {t_end}")
    grid = _time_grid(t_end, cfg.dt)
    n = grid.size - 1
    keep = list(range(0, n + 1, cfg.record_every))
    if keep[-1] != n:
        keep.append(n)
    states = np.empty((len(keep), x0.k_max + 1))
    x = np.array(x0.weights)
    states[0] = x
    done, max_drift = _rk4_run(
        x, grid, np.asarray(keep, dtype=np.int64),
        params.alpha, params.lam, params.gamma, DRIFT_TOL, states,
    )
    if done < n or not max_drift <= DRIFT_TOL:
        raise NormalizationDrift(
            f"mass drift {max_drift:.3e} at t={grid[done]:.6g}; reduce dt or raise k_max"
        )
    times = grid[keep]
    return _record_from_states(
        times, states, cfg.xi,
        diagnostics={"max_mass_drift": max_drift, "top_class_mass": float(states[-1, -1])},
        metadata={"model": "ode", "dt": cfg.dt},
    )


def _record_from_states(times, states, xi, **kwargs) -> TrajectoryRecord:
    k = np.arange(states.shape[1], dtype=np.float64)
    k1 = states @ k
    k2 = states @ (k**2) - k1**2
    k2 = np.maximum(k2, 0.0)
    _check_xi(xi, states.shape[1] - 1)
    h = states @ np.exp(xi * k)
    return TrajectoryRecord(times, k1, k2, h, xi, times.copy(), states, **kwargs)


def _poisson_pmf(mean: float, k_max: int) -> np.ndarray:
    k = np.arange(k_max + 1)
    if mean <= 0:
        return (k == 0).astype(np.float64)
    return stats.poisson.pmf(k, mean)


def closed_form(params: ModelParams, x0: TypeDistribution, t: float) -> TypeDistribution:
    """Explicit solution at time ``t``.

    Each of the ``i`` initial mutations is still present with probability
    ``e^{-ct} / s`` given survival, where ``c = alpha + gamma`` and
    ``s = (gamma + alpha e^{-ct}) / c``; new mutations present at ``t`` are
    Poisson with mean ``lam (1 - e^{-ct}) / c``. Mixing over the initial
    class with weights ``x_i(0) s^i`` and renormalizing gives ``x(t)``.
    With ``alpha + gamma = 0`` the flow is pure mutation and ``x(t)`` is
    ``x0`` convolved with Poisson(``lam t``).
    """
    if t < 0:
        raise ParameterError(f"t must be >= 0, got {t}")
    k_max = x0.k_max
    c = params.alpha + params.gamma
    x = x0.weights
    support = np.flatnonzero(x)
    if c == 0:
        out = np.convolve(x, _poisson_pmf(params.lam * t, k_max))
        return TypeDistribution.from_unnormalized(out[: k_max + 1], float(out[k_max + 1:].sum()))
    decay = math.exp(-c * t)
    grown = -math.expm1(-c * t) / c  # (1 - e^{-ct}) / c
    survive = (params.gamma + params.alpha * decay) / c
    keep = decay / survive
    new = _poisson_pmf(params.lam * grown, k_max)
    # log-weights of the initial classes after conditioning on survival
    logw = np.log(x[support]) + support * math.log(survive)
    logw -= logw.max()
    mix = np.exp(logw)
    mix /= mix.sum()
    thinned = np.zeros(k_max + 1)
    for i, m in zip(support, mix):
        if m == 0.0:
            continue
        thinned[: i + 1] += m * stats.binom.pmf(np.arange(i + 1), i, keep)
    out = np.convolve(thinned, new)
    return TypeDistribution.from_unnormalized(out[: k_max + 1], float(out[k_max + 1:].sum()))


def _zeta_rhs(z, alpha, gamma):
    return -(alpha + gamma * (-math.expm1(-z)))


def zeta_path(params: ModelParams, zeta0: float, t: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 solution of ``zeta' = -(alpha + gamma (1 - e^{-zeta}))`` on the grid of :func:`integrate`."""
    if zeta0 < 0:
        raise ParameterError(f"zeta0 must be >= 0, got {zeta0}")
    grid = _time_grid(t, dt)
    z = np.empty(grid.size)
    z[0] = zeta0
    a, g = params.alpha, params.gamma
    for i in range(1, grid.size):
        h = grid[i] - grid[i - 1]
        zi = z[i - 1]
        k1 = _zeta_rhs(zi, a, g)
        k2 = _zeta_rhs(zi + 0.5 * h * k1, a, g)
        k3 = _zeta_rhs(zi + 0.5 * h * k2, a, g)
        k4 = _zeta_rhs(zi + h * k3, a, g)
        z[i] = zi + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return grid, z


def zeta_flow(params: ModelParams, zeta0: float, t: float, dt: float = 1e-3) -> float:
    return float(zeta_path(params, zeta0, t, dt)[1][-1])


def duality_residual(
    params: ModelParams,
    x0: TypeDistribution,
    zeta0: float,
    t: float,
    cfg: OdeSolverConfig | None = None,
) -> DualityReport:
    """Check ``log h_{z(0)}(x(t)) = log h_{z(t)}(x(0)) + int_0^t (lam(e^{z(t-s)} - 1) + alpha kappa1(x(s))) ds``.

    ``x`` comes from :func:`integrate` recorded at every step, ``z`` from
    :func:`zeta_path` on the same grid, and the integral is a composite
    trapezoid.
    """
    cfg = cfg or OdeSolverConfig()
    _check_xi(zeta0, x0.k_max)
    lhs0 = log_exp_moment(x0.weights, zeta0)
    if t == 0:
        return DualityReport(0.0, zeta0, lhs0, lhs0, 0.0)
    traj = integrate(params, x0, t, OdeSolverConfig(dt=cfg.dt, record_every=1))
    grid, z = zeta_path(params, zeta0, t, cfg.dt)
    # z(t - s_i) is z read backwards on a grid symmetric under s -> t - s
    backwards = t - traj.times
    zeta_back = np.interp(backwards, grid, z)
    integrand = params.lam * np.expm1(zeta_back) + params.alpha * traj.kappa1
    integral = float(sp_integrate.trapezoid(integrand, traj.times))
    lhs = log_exp_moment(traj.states[-1], zeta0)
    rhs = log_exp_moment(x0.weights, float(z[-1])) + integral
    return DualityReport(float(t), float(zeta0), lhs, rhs, abs(lhs - rhs))


def cgf_derivative_residual(
    params: ModelParams,
    d: TypeDistribution,
    zeta: float,
    dzeta: float | None = None,
) -> float:
    """Residual of the evolution equation of the cumulant generating function.

    Compares ``d/dt log h_zeta(x)`` (chain rule through :func:`ode_rhs`) with
    ``alpha kappa1 + lam (e^zeta - 1) - (alpha + gamma (1 - e^{-zeta})) d/dzeta log h_zeta``.
    The vector is padded by one class so the mutation flux out of ``k_max``
    is kept. The zeta-derivative is analytic unless ``dzeta`` is given, in
    which case a central difference with that step is used.
    """
    if not zeta > 0:
        raise ParameterError(f"zeta must be > 0, got {zeta}")
    x = np.append(d.weights, 0.0)
    _check_xi(zeta, x.size - 1)
    k = np.arange(x.size, dtype=np.float64)
    e = np.exp(zeta * k)
    h = np.dot(x, e)
    dt_log_h = np.dot(_rhs(x, params.alpha, params.lam, params.gamma), e) / h
    if dzeta is None:
        dz_log_h = np.dot(k * x, e) / h
    else:
        dz_log_h = (log_exp_moment(x, zeta + dzeta) - log_exp_moment(x, zeta - dzeta)) / (2 * dzeta)
    rhs = (
        params.alpha * kappa1(x)
        + params.lam * math.expm1(zeta)
        - (params.alpha + params.gamma * (-math.expm1(-zeta))) * dz_log_h
    )
    return float(abs(dt_log_h - rhs))
