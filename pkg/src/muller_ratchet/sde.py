"""Euler-Maruyama scheme for the finite-population diffusion.

    dX_k = drift_k(X) dt + sum_{l != k} sqrt(X_k X_l / N) dW_{kl},   W_{kl} = -W_{lk}

The drift is the deterministic right-hand side. After each raw step
negative coordinates are set to zero and the vector is renormalized.

Two noise constructions are available. ``pairwise`` draws one Gaussian per
unordered pair of occupied classes, exactly as written above. ``factored``
(the default) draws one Gaussian ``Z_k`` per class and sets

    dX_k^noise = sqrt(dt / N) (sqrt(S X_k) Z_k - X_k sum_l sqrt(X_l) Z_l / sqrt(S)),

with ``S = sum_l X_l``. Both are centered Gaussians with covariance
``dt / N (S diag(X) - X X^T)``, so the step has the same law; the factored
form costs O(k_max) instead of O(k_max^2) per path.

The core works on arrays of shape ``(M, k_max + 1)`` so ensembles advance
together; :func:`em_step` and :func:`run_sde` are the single-path views.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import DRIFT_TOL, ModelParams, TypeDistribution, _check_xi
from .deterministic import _rhs, _time_grid
from .errors import NormalizationDrift, ParameterError
from .rng import as_rng, make_rng
from .trajectory import TrajectoryRecord

CLIP_POLICIES = ("clip-renormalize",)
# default noise floor, in units of dt / N
FLOOR_FACTOR = 25.0
NOISE_KINDS = ("factored", "pairwise")


@dataclass(frozen=True)
class SdeConfig:
    """Integration controls.

    ``noise`` selects the Gaussian construction (see the module docstring).
    ``noise_floor``: classes at or below it in every path of the batch
    receive drift only. The default ``FLOOR_FACTOR * dt / N`` keeps one
    step's noise below a fifth of the class frequency, so clipping is rare;
    it shrinks with ``dt``. ``record_every``/``state_every`` thin
    the statistics and the stored distributions, in steps.
    """

    dt: float = 1e-3
    seed: int = 0
    clip_policy: str = "clip-renormalize"
    record_every: int = 1
    state_every: int | None = None
    xi: float = 0.0
    noise: str = "factored"
    noise_floor: float | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.clip_policy not in CLIP_POLICIES:
            raise ParameterError(f"unsupported clip_policy {self.clip_policy!r}")
        if self.noise not in NOISE_KINDS:
            raise ParameterError(f"noise must be one of {NOISE_KINDS}, got {self.noise!r}")
        if self.record_every < 1 or (self.state_every is not None and self.state_every < 1):
            raise ParameterError("record_every and state_every must be >= 1")


def drift(params: ModelParams, d) -> np.ndarray:
    """Drift of the diffusion; identical to :func:`deterministic.ode_rhs`."""
    x = d.weights if isinstance(d, TypeDistribution) else np.asarray(d, dtype=np.float64)
    return _rhs(x, params.alpha, params.lam, params.gamma)


def _active(X: np.ndarray, floor: float) -> np.ndarray:
    """Columns that may carry noise: above ``floor`` in at least one path.

    Within each path only entries above ``floor`` receive noise.

    Near ``dt / N`` the square-root noise is as large as the frequency
    itself; clipping would then create mass out of nothing and push it up
    the mutation ladder.
    """
    return np.flatnonzero((X > floor).any(axis=0))


def _masked(X: np.ndarray, idx: np.ndarray, floor: float) -> np.ndarray:
    Xa = X[:, idx]
    return np.where(Xa > floor, Xa, 0.0)


def _factored_noise(X: np.ndarray, idx: np.ndarray, floor: float, N: float, dt: float, rng) -> np.ndarray:
    out = np.zeros_like(X)
    if idx.size < 2:
        return out
    Xa = _masked(X, idx, floor)
    u = np.sqrt(Xa)
    S = np.sqrt(Xa.sum(axis=1, keepdims=True))
    Z = rng.standard_normal(Xa.shape)
    uz = (u * Z).sum(axis=1, keepdims=True)
    out[:, idx] = math.sqrt(dt / N) * (S * u * Z - Xa * uz / S)
    return out


def _pairwise_noise(X: np.ndarray, idx: np.ndarray, floor: float, N: float, dt: float, rng) -> np.ndarray:
    """``sum_l sqrt(X_k X_l / N) dW_kl`` over classes above ``floor``, zero elsewhere."""
    out = np.zeros_like(X)
    m = idx.size
    if m < 2:
        return out
    iu, ju = np.triu_indices(m, 1)
    G = rng.standard_normal((X.shape[0], iu.size)) * math.sqrt(dt)
    A = np.zeros((X.shape[0], m, m))
    A[:, iu, ju] = G
    A[:, ju, iu] = -G
    s = np.sqrt(_masked(X, idx, floor))
    out[:, idx] = s * np.einsum("mkl,ml->mk", A, s) / math.sqrt(N)
    return out


@njit(cache=True)
def _drift_clip_kernel(X, noise, alpha, lam, gamma, dt, clipped, flux):
    """Add drift and noise to each row in place, clip negatives, renormalize.

    Mutation out of the top class leaves the truncated system at rate
    ``lam * x_top``; it is added to ``flux`` and excluded from the raw mass
    error. Returns the largest such error over the rows.
    """
    M, K = X.shape
    worst = 0.0
    row = np.empty(K)
    for m in range(M):
        mass = 0.0
        mean = 0.0
        for k in range(K):
            mass += X[m, k]
            mean += k * X[m, k]
        total = 0.0
        for k in range(K):
            x = X[m, k]
            d = alpha * (mean - k * mass) * x - lam * x - gamma * k * x
            if k > 0:
                d += lam * X[m, k - 1]
            if k + 1 < K:
                d += gamma * (k + 1) * X[m, k + 1]
            row[k] = x + d * dt + noise[m, k]
            total += row[k]
        out = lam * X[m, K - 1] * dt
        flux[m] += out
        err = abs(total - (mass - out))
        if err > worst or err != err:
            worst = err
        cut = 0.0
        for k in range(K):
            if row[k] < 0.0:
                cut -= row[k]
                row[k] = 0.0
        clipped[m] += cut
        total += cut
        for k in range(K):
            X[m, k] = row[k] / total
    return worst


def _em_batch(X, params: ModelParams, rng, dt, noise="factored", floor=None, clipped=None, flux=None):
    """One raw step plus clip and renormalize, in place on ``X``.

    Adds the clipped mass and the truncation flux of each path to
    ``clipped`` and ``flux`` and returns the largest raw mass error.
    """
    N = params.population_size
    floor = FLOOR_FACTOR * dt / N if floor is None else floor
    idx = _active(X, floor)
    if noise == "pairwise":
        W = _pairwise_noise(X, idx, floor, N, dt, rng)
    else:
        W = _factored_noise(X, idx, floor, N, dt, rng)
    if clipped is None:
        clipped = np.zeros(X.shape[0])
    if flux is None:
        flux = np.zeros(X.shape[0])
    bad = _drift_clip_kernel(X, W, params.alpha, params.lam, params.gamma, dt, clipped, flux)
    if not bad <= DRIFT_TOL:
        raise NormalizationDrift(f"raw EM step mass error {bad:.3e}")
    return bad


def em_step(state: TypeDistribution, params: ModelParams, rng, dt: float, noise: str = "factored") -> TypeDistribution:
    """Advance a single distribution by one Euler-Maruyama step."""
    params.require_stochastic()
    if noise not in NOISE_KINDS:
        raise ParameterError(f"noise must be one of {NOISE_KINDS}, got {noise!r}")
    X = np.array(state.weights)[None, :]
    _em_batch(X, params, as_rng(rng), dt, noise)
    return TypeDistribution(X[0], state.overflow_mass)


def _check_stability(params: ModelParams, X: np.ndarray, dt: float):
    top = _active(X, 0.0)
    k_active = int(top[-1]) if top.size else 0
    if params.alpha > 0 and dt * params.alpha * max(k_active, 1) > 0.1:
        warnings.warn(
            f"dt={dt} is coarse for alpha={params.alpha} with {k_active} active classes",
            RuntimeWarning,
            stacklevel=3,
        )


def run_sde_ensemble(
    x0: TypeDistribution,
    params: ModelParams,
    t_end: float,
    cfg: SdeConfig,
    replicates: int,
) -> list[TrajectoryRecord]:
    """Simulate ``replicates`` paths advanced together on one random stream.

    The stream is ``make_rng(cfg.seed)``; the draw order is fixed, so a
    given (seed, replicates) pair is reproducible bit for bit.
    """
    params.require_stochastic()
    if replicates < 1:
        raise ParameterError("replicates must be >= 1")
    if t_end < 0:
        raise ParameterError("t_end must be >= 0")
    _check_xi(cfg.xi, x0.k_max)
    rng = make_rng(cfg.seed)
    grid = _time_grid(t_end, cfg.dt)
    n = grid.size - 1
    stat_idx = list(range(0, n + 1, cfg.record_every))
    if stat_idx[-1] != n:
        stat_idx.append(n)
    state_every = cfg.state_every or cfg.record_every
    state_idx = list(range(0, n + 1, state_every))
    if state_idx[-1] != n:
        state_idx.append(n)

    K = x0.k_max + 1
    k = np.arange(K, dtype=np.float64)
    ek = np.exp(cfg.xi * k)
    X = np.tile(np.asarray(x0.weights, dtype=np.float64), (replicates, 1))
    _check_stability(params, X, cfg.dt)
    k1 = np.empty((replicates, len(stat_idx)))
    k2 = np.empty_like(k1)
    h = np.empty_like(k1)
    states = np.empty((replicates, len(state_idx), K))
    clipped_total = np.zeros(replicates)
    flux_total = np.zeros(replicates)
    max_raw_drift = 0.0
    si = ti = 0

    def record(i):
        nonlocal si, ti
        if si < len(stat_idx) and stat_idx[si] == i:
            m1 = X @ k
            k1[:, si] = m1
            k2[:, si] = np.maximum(X @ (k * k) - m1 * m1, 0.0)
            h[:, si] = X @ ek
            si += 1
        if ti < len(state_idx) and state_idx[ti] == i:
            states[:, ti] = X
            ti += 1

    record(0)
    for i in range(1, n + 1):
        raw = _em_batch(X, params, rng, grid[i] - grid[i - 1], cfg.noise, cfg.noise_floor, clipped_total,
                        flux_total)
        max_raw_drift = max(max_raw_drift, raw)
        record(i)

    times = grid[stat_idx]
    state_times = grid[state_idx]
    clip_rate = clipped_total / t_end if t_end > 0 else np.zeros(replicates)
    meta = {
        "model": "sde",
        "population_size": params.population_size,
        "dt": cfg.dt,
        "noise": cfg.noise,
        "seed": cfg.seed,
        "replicates": replicates,
    }
    return [
        TrajectoryRecord(
            times, k1[r], k2[r], h[r], cfg.xi, state_times, states[r],
            diagnostics={"clipped_mass": float(clipped_total[r]), "clipped_mass_per_time": float(clip_rate[r]),
                         "max_raw_mass_drift": max_raw_drift, "truncation_flux": float(flux_total[r])},
            metadata=dict(meta, replicate=r),
        )
        for r in range(replicates)
    ]


def run_sde(x0: TypeDistribution, params: ModelParams, t_end: float, cfg: SdeConfig | None = None) -> TrajectoryRecord:
    """Single path; deterministic given ``cfg.seed``."""
    return run_sde_ensemble(x0, params, t_end, cfg or SdeConfig(), 1)[0]


def ensemble_mean(records, attr: str = "kappa1") -> tuple[np.ndarray, np.ndarray]:
    """Pointwise mean and standard error of a statistic across an ensemble."""
    v = np.stack([getattr(r, attr) for r in records])
    se = v.std(axis=0, ddof=1) / math.sqrt(v.shape[0]) if v.shape[0] > 1 else np.zeros(v.shape[1])
    return v.mean(axis=0), se
