"""Distributions over mutation counts and their functionals.

A :class:`TypeDistribution` is a probability vector ``x_k`` over the number
``k = 0..k_max`` of deleterious mutations carried by an individual. The
infinite tail is not represented; mass that was cut off is reported in
``overflow_mass``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DimensionMismatch, NormalizationDrift, OverflowRisk, ParameterError

DEFAULT_K_MAX = 256

# relative mass error silently absorbed by renormalization
RENORM_TOL = 1e-12
# beyond this the vector is considered corrupt, not rounded
DRIFT_TOL = 1e-6
# exp(709) is the largest finite double exponential
EXP_LIMIT = 700.0


@dataclass(frozen=True)
class ModelParams:
    """Rates of selection, mutation and compensation.

    Parameters
    ----------
    alpha : float
        Selection coefficient per mutation. Negative values are allowed only
        when ``gamma > |alpha|`` and only the deterministic system accepts them.
    lam : float
        Mutation rate.
    gamma : float
        Compensatory mutation rate, per existing mutation.
    population_size : float
        Effective population size ``N``. Ignored by the deterministic system.
    """

    alpha: float
    lam: float
    gamma: float
    population_size: float = math.inf

    def __post_init__(self):
        for name in ("alpha", "lam", "gamma", "population_size"):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) or math.isnan(value):
                raise ParameterError(f"{name} must be a real number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.lam < 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        if not self.population_size > 0:
            raise ParameterError(f"population_size must be > 0, got {self.population_size}")
        if self.alpha < 0 and not self.gamma > -self.alpha:
            raise ParameterError(
                f"alpha < 0 requires gamma > |alpha| (alpha={self.alpha}, gamma={self.gamma})"
            )

    @property
    def equilibrium_mean(self) -> float:
        """Poisson parameter ``lam / (alpha + gamma)`` of the N = infinity equilibrium."""
        rate = self.alpha + self.gamma
        return math.inf if rate <= 0 else self.lam / rate

    def require_stochastic(self):
        """Raise unless the parameters are admissible for a finite-N model."""
        if self.alpha < 0:
            raise ParameterError("stochastic models require alpha >= 0")
        if not math.isfinite(self.population_size):
            raise ParameterError("stochastic models require a finite population_size")
        return self


def _as_weights(weights) -> np.ndarray:
    w = np.array(weights, dtype=np.float64, copy=True)
    if w.ndim != 1 or w.size == 0:
        raise ParameterError("weights must be a non-empty 1-d array")
    if not np.all(np.isfinite(w)):
        raise ParameterError("weights must be finite")
    return w


@dataclass(frozen=True, eq=False)
class TypeDistribution:
    """Probability vector over mutation counts ``0..k_max``.

    The weights are validated and renormalized on construction. A total mass
    off by more than ``DRIFT_TOL`` raises :class:`NormalizationDrift`.
    ``overflow_mass`` is diagnostic: the mass that was dropped above
    ``k_max`` before renormalizing.
    """

    weights: np.ndarray
    overflow_mass: float = 0.0
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        w = _as_weights(self.weights)
        if np.any(w < 0):
            if w.min() < -RENORM_TOL:
                raise ParameterError(f"negative weight {w.min():.3e}")
            w = np.clip(w, 0.0, None)
        total = w.sum()
        if not self._checked and abs(total - 1.0) > DRIFT_TOL:
            raise NormalizationDrift(f"total mass {total!r} deviates from 1 by more than {DRIFT_TOL}")
        if total <= 0:
            raise NormalizationDrift("distribution has no mass")
        if total != 1.0:
            w /= total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "overflow_mass", float(self.overflow_mass))
        object.__setattr__(self, "_checked", True)

    @classmethod
    def from_unnormalized(cls, weights, overflow_mass: float = 0.0) -> TypeDistribution:
        """Build from nonnegative weights of arbitrary positive total."""
        return cls(_as_weights(weights), overflow_mass, _checked=True)

    @classmethod
    def delta(cls, k: int, k_max: int = DEFAULT_K_MAX) -> TypeDistribution:
        if not 0 <= k <= k_max:
            raise ParameterError(f"point mass at {k} outside 0..{k_max}")
        w = np.zeros(k_max + 1)
        w[k] = 1.0
        return cls(w)

    @property
    def k_max(self) -> int:
        return self.weights.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights)

    def __len__(self):
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, TypeDistribution):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and self.overflow_mass == other.overflow_mass

    __hash__ = None

    def with_k_max(self, k_max: int) -> TypeDistribution:
        """Pad with zeros or cut the tail (the cut mass is added to overflow_mass)."""
        if k_max == self.k_max:
            return self
        if k_max > self.k_max:
            w = np.zeros(k_max + 1)
            w[: self.weights.size] = self.weights
            return TypeDistribution(w, self.overflow_mass)
        cut = float(self.weights[k_max + 1:].sum())
        return TypeDistribution.from_unnormalized(self.weights[: k_max + 1], self.overflow_mass + cut)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "k_max": self.k_max,
            "overflow_mass": self.overflow_mass,
        }

    @classmethod
    def from_dict(cls, data: dict) -> TypeDistribution:
        w = np.asarray(data["weights"], dtype=np.float64)
        if "k_max" in data and int(data["k_max"]) != w.size - 1:
            raise DimensionMismatch(f"k_max {data['k_max']} does not match {w.size} weights")
        return cls(w, data.get("overflow_mass", 0.0))


@dataclass(frozen=True)
class SummaryStats:
    kappa1: float
    kappa2: float
    h_xi: float
    xi: float
    time: float


def _weights(d) -> np.ndarray:
    return d.weights if isinstance(d, TypeDistribution) else np.asarray(d, dtype=np.float64)


def kappa1(d) -> float:
    """Mean number of mutations."""
    w = _weights(d)
    return float(np.dot(np.arange(w.size), w))


def kappa2(d) -> float:
    """Variance of the number of mutations."""
    w = _weights(d)
    k = np.arange(w.size)
    m = np.dot(k, w)
    return float(np.dot((k - m) ** 2, w))


def _check_xi(xi: float, k_max: int):
    if xi < 0:
        raise ParameterError(f"xi must be >= 0, got {xi}")
    if xi * k_max > EXP_LIMIT:
        raise OverflowRisk(f"xi * k_max = {xi * k_max:.1f} exceeds {EXP_LIMIT}")


def exp_moment(d, xi: float) -> float:
    """Exponential moment ``sum_k x_k exp(xi k)``."""
    w = _weights(d)
    _check_xi(xi, w.size - 1)
    if xi == 0:
        return float(w.sum())
    return float(np.dot(w, np.exp(xi * np.arange(w.size))))


def log_exp_moment(w: np.ndarray, zeta: float) -> float:
    """``log sum_k w_k exp(zeta k)`` for any real ``zeta``, computed stably."""
    w = np.asarray(w, dtype=np.float64)
    k = np.flatnonzero(w)
    if k.size == 0:
        return -math.inf
    a = np.log(w[k]) + zeta * k
    top = a.max()
    return float(top + math.log(np.exp(a - top).sum()))


def distribution_metric(a, b, xi: float) -> float:
    """Exponentially weighted l1 distance ``sum_k exp(xi k) |a_k - b_k|``."""
    wa, wb = _weights(a), _weights(b)
    if wa.size != wb.size:
        raise DimensionMismatch(f"k_max differs: {wa.size - 1} vs {wb.size - 1}")
    _check_xi(abs(xi), wa.size - 1)
    return float(np.dot(np.exp(xi * np.arange(wa.size)), np.abs(wa - wb)))


def total_variation(a, b) -> float:
    """Half the l1 distance; lies in [0, 1]."""
    return 0.5 * distribution_metric(a, b, 0.0)


def poisson_profile(theta: float, k_max: int = DEFAULT_K_MAX) -> TypeDistribution:
    """Poisson(theta) weights truncated at ``k_max`` and renormalized."""
    if theta < 0:
        raise ParameterError(f"theta must be >= 0, got {theta}")
    k = np.arange(k_max + 1)
    w = stats.poisson.pmf(k, theta) if theta > 0 else (k == 0).astype(float)
    tail = float(stats.poisson.sf(k_max, theta)) if theta > 0 else 0.0
    return TypeDistribution.from_unnormalized(w, tail)


def summarize(d, xi: float = 0.0, time: float = 0.0) -> SummaryStats:
    return SummaryStats(kappa1(d), kappa2(d), exp_moment(d, xi), xi, time)
