"""Killed jump process for a single line of descent.

A line carrying ``k`` mutations gains one at rate ``lam``, loses one at rate
``k * gamma`` and is killed at rate ``k * alpha``. Conditioned on survival
to time ``t``, the law of its mutation count is the deterministic solution
``x(t)`` started from the law of the initial count, which makes these
simulations an independent check of the closed form.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, TypeDistribution
from .errors import AllPathsKilled, ParameterError
from .rng import as_rng, make_rng

GAIN, LOSS, KILL = "gain", "loss", "kill"


@dataclass
class ParticlePath:
    k0: int
    horizon: float
    events: list = field(default_factory=list)  # (time, kind)
    final_state: int | None = None  # None once killed

    @property
    def killed(self) -> bool:
        return self.final_state is None

    def state_at(self, t: float) -> int | None:
        k = self.k0
        for time, kind in self.events:
            if time > t:
                break
            if kind == KILL:
                return None
            k += 1 if kind == GAIN else -1
        return k


def _check(params: ModelParams, k0: int, t_end: float):
    if k0 < 0:
        raise ParameterError(f"k0 must be >= 0, got {k0}")
    if t_end < 0:
        raise ParameterError(f"t_end must be >= 0, got {t_end}")
    if params.alpha < 0:
        raise ParameterError("killing rate needs alpha >= 0")


def simulate_path(k0: int, params: ModelParams, t_end: float, rng) -> ParticlePath:
    """Exact event-driven simulation up to ``t_end``."""
    _check(params, k0, t_end)
    rng = as_rng(rng)
    lam, g, a = params.lam, params.gamma, params.alpha
    path = ParticlePath(k0, t_end)
    t, k = 0.0, k0
    while True:
        rate = lam + k * (g + a)
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t > t_end:
            break
        u = rng.random() * rate
        if u < lam:
            k += 1
            path.events.append((t, GAIN))
        elif u < lam + k * g:
            k -= 1
            path.events.append((t, LOSS))
        else:
            path.events.append((t, KILL))
            path.final_state = None
            return path
    path.final_state = k
    return path


def mutation_counting_path(k0: int, params: ModelParams, t_end: float, rng) -> ParticlePath:
    """Same process built from per-mutation clocks.

    Every mutation, initial or arriving at rate ``lam``, carries an
    Exp(``alpha + gamma``) clock; when it rings the line is killed with
    probability ``alpha / (alpha + gamma)`` and otherwise the mutation is
    removed.
    """
    _check(params, k0, t_end)
    rng = as_rng(rng)
    lam, g, a = params.lam, params.gamma, params.alpha
    c = a + g
    n_new = rng.poisson(lam * t_end) if lam > 0 else 0
    born = np.concatenate([np.zeros(k0), np.sort(rng.uniform(0.0, t_end, n_new))])
    if c > 0:
        ring = born + rng.exponential(1.0 / c, born.size)
        fatal = rng.random(born.size) < a / c
    else:
        ring = np.full(born.size, np.inf)
        fatal = np.zeros(born.size, dtype=bool)
    events = [(float(b), GAIN) for b in born[k0:]]
    events += [(float(r), KILL if f else LOSS) for r, f in zip(ring, fatal) if r <= t_end]
    events.sort(key=lambda e: e[0])
    path = ParticlePath(k0, t_end)
    k = k0
    for time, kind in events:
        path.events.append((time, kind))
        if kind == KILL:
            path.final_state = None
            return path
        k += 1 if kind == GAIN else -1
    path.final_state = k
    return path


def _final_states(k0: np.ndarray, params: ModelParams, t_end: float, rng) -> np.ndarray:
    """Vectorized :func:`simulate_path` returning only end states (-1 for killed)."""
    lam, g, a = params.lam, params.gamma, params.alpha
    k = k0.astype(np.int64).copy()
    t = np.zeros(k.size)
    alive = np.ones(k.size, dtype=bool)
    running = np.arange(k.size)
    while running.size:
        kk = k[running]
        rate = lam + kk * (g + a)
        live = rate > 0
        running = running[live]
        if not running.size:
            break
        kk, rate = kk[live], rate[live]
        t[running] += rng.exponential(1.0, running.size) / rate
        inside = t[running] <= t_end
        running, kk, rate = running[inside], kk[inside], rate[inside]
        u = rng.random(running.size) * rate
        gain = u < lam
        loss = ~gain & (u < lam + kk * g)
        kill = ~gain & ~loss
        k[running[gain]] += 1
        k[running[loss]] -= 1
        alive[running[kill]] = False
        running = running[~kill]
    k[~alive] = -1
    return k


@dataclass(frozen=True)
class ConditionedEstimate:
    distribution: TypeDistribution
    survival_rate: float
    std_errors: np.ndarray
    n_paths: int
    n_survivors: int
    truncation_bias: float

    def __iter__(self):
        # unpacks as (distribution, survival_rate, std_errors)
        return iter((self.distribution, self.survival_rate, self.std_errors))


def conditioned_distribution(
    x0: TypeDistribution,
    params: ModelParams,
    t_end: float,
    n_paths: int,
    seed: int,
) -> ConditionedEstimate:
    """Empirical law of the surviving lines at ``t_end``.

    Initial counts are drawn from ``x0``; killed lines are discarded.
    ``std_errors`` are per-class binomial standard errors
    ``sqrt(p (1 - p) / survivors)``. Survivors above ``x0.k_max`` are
    counted in ``distribution.overflow_mass``.
    """
    if n_paths < 1:
        raise ParameterError(f"n_paths must be >= 1, got {n_paths}")
    _check(params, 0, t_end)
    rng = make_rng(seed)
    k0 = rng.choice(x0.k_max + 1, size=n_paths, p=x0.weights)
    final = _final_states(k0, params, t_end, rng)
    surv = final[final >= 0]
    if surv.size == 0:
        raise AllPathsKilled(f"no survivors among {n_paths} paths; lower t_end or raise n_paths")
    K = x0.k_max
    counts = np.bincount(np.minimum(surv, K + 1), minlength=K + 2)
    p = counts[: K + 1] / surv.size
    over = counts[K + 1] / surv.size
    se = np.sqrt(p * (1.0 - p) / surv.size)
    return ConditionedEstimate(
        distribution=TypeDistribution.from_unnormalized(p, over),
        survival_rate=surv.size / n_paths,
        std_errors=se,
        n_paths=n_paths,
        n_survivors=int(surv.size),
        truncation_bias=x0.overflow_mass,
    )


def final_state_law(paths) -> tuple[np.ndarray, int]:
    """Histogram of surviving end states and the number of killed paths."""
    finals = [p.final_state for p in paths]
    killed = sum(f is None for f in finals)
    alive = np.array([f for f in finals if f is not None], dtype=np.int64)
    hist = np.bincount(alive) if alive.size else np.zeros(1, dtype=np.int64)
    return hist, killed


def aggregate_sigma(std_errors) -> float:
    """Sum of per-class standard errors, the MC scale used for total-variation checks."""
    return float(np.sum(std_errors))
