"""Discrete-generation Wright-Fisher chain with selection, compensation and mutation.

Each generation builds a gamete pool in three stages and resamples ``n``
offspring from it:

1. selection, an individual with ``k`` mutations contributes in proportion
   to ``(1 - alpha)^k``;
2. compensation, each mutation is removed independently with probability
   ``gamma``;
3. mutation, a Poisson(``lam``) number of new mutations is added.

Time is measured in generations; ``n`` generations correspond to one unit
of the diffusion time scale.
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .core import DEFAULT_K_MAX, ModelParams, TypeDistribution, _check_xi
from .errors import EmptyPopulation, ParameterError
from .rng import as_rng, make_rng
from .trajectory import ClickEvent, TrajectoryRecord

# Poisson kernel entries below this are dropped; they cannot change a
# multinomial draw at any feasible population size and run length.
POISSON_FLOOR = 1e-30


@dataclass(frozen=True, eq=False)
class PopulationState:
    counts: np.ndarray
    generation: int = 0

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64)
        if c.ndim != 1 or c.size == 0:
            raise ParameterError("counts must be a non-empty 1-d array")
        if np.any(c < 0):
            raise ParameterError("counts must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def monomorphic(cls, n: int, k: int = 0, k_max: int = DEFAULT_K_MAX) -> PopulationState:
        """All ``n`` individuals carry ``k`` mutations."""
        c = np.zeros(k_max + 1, dtype=np.int64)
        c[k] = n
        return cls(c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def k_max(self) -> int:
        return self.counts.size - 1

    @property
    def best_class(self) -> int:
        """Smallest occupied mutation class."""
        occ = np.flatnonzero(self.counts)
        if occ.size == 0:
            raise EmptyPopulation("population is empty")
        return int(occ[0])

    def frequencies(self) -> TypeDistribution:
        n = self.n
        if n == 0:
            raise EmptyPopulation("population is empty")
        return TypeDistribution(self.counts / n)

    def __eq__(self, other):
        if not isinstance(other, PopulationState):
            return NotImplemented
        return self.generation == other.generation and np.array_equal(self.counts, other.counts)

    __hash__ = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    generations: int
    record_every: int = 1
    k_max: int = DEFAULT_K_MAX
    state_every: int | None = None
    xi: float = 0.0

    def __post_init__(self):
        if self.generations < 0:
            raise ParameterError(f"generations must be >= 0, got {self.generations}")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")
        if self.state_every is not None and self.state_every < 1:
            raise ParameterError("state_every must be >= 1")


# -- the three sampling stages on plain arrays ---------------------------------


def _select(y: np.ndarray, alpha: float, lo: int = 0) -> np.ndarray:
    # (1 - alpha)^(k - lo) keeps the best occupied class at weight 1
    w = y * np.exp((np.arange(y.size) - lo) * math.log1p(-alpha)) if alpha else y.astype(np.float64)
    return w / w.sum()


@functools.lru_cache(maxsize=32)
def _thinning_kernel(gamma: float, k_max: int) -> np.ndarray:
    """``B[j, m] = P(Binomial(m, 1 - gamma) = j)``; column ``m`` maps class m to its thinned law."""
    m = np.arange(k_max + 1)
    B = stats.binom.pmf(m[:, None], m[None, :], 1.0 - gamma)
    B.setflags(write=False)
    return B


def _compensate(p: np.ndarray, gamma: float, hi: int) -> np.ndarray:
    if gamma == 0:
        return p
    if gamma == 1:
        out = np.zeros_like(p)
        out[0] = 1.0
        return out
    B = _thinning_kernel(gamma, p.size - 1)
    out = np.zeros_like(p)
    out[: hi + 1] = B[: hi + 1, : hi + 1] @ p[: hi + 1]
    return out


@functools.lru_cache(maxsize=32)
def _poisson_kernel(lam: float, k_max: int) -> np.ndarray:
    # not renormalized: the cut-off tail is accounted for as overflow
    pmf = stats.poisson.pmf(np.arange(k_max + 1), lam)
    keep = np.flatnonzero(pmf >= POISSON_FLOOR)
    pmf = pmf[: keep[-1] + 1].copy()
    pmf.setflags(write=False)
    return pmf


def _mutate(p: np.ndarray, lam: float, hi: int) -> tuple[np.ndarray, float]:
    """Poisson convolution truncated at ``k_max``; returns (weights, mass above k_max)."""
    if lam == 0:
        return p, 0.0
    k_max = p.size - 1
    conv = np.convolve(p[: hi + 1], _poisson_kernel(lam, k_max))
    out = np.zeros_like(p)
    m = min(conv.size, k_max + 1)
    out[:m] = conv[:m]
    return out, max(float(p[: hi + 1].sum() - out.sum()), 0.0)


# -- public weight functions -----------------------------------------------------


def selection_weights(state: PopulationState, alpha: float) -> TypeDistribution:
    """Fitness-tilted frequencies ``(1-alpha)^j Y_j / sum_k (1-alpha)^k Y_k``."""
    if not 0 <= alpha < 1:
        raise ParameterError(f"selection needs 0 <= alpha < 1, got {alpha}")
    if state.n == 0:
        raise EmptyPopulation("population is empty")
    return TypeDistribution(_select(state.counts, alpha, state.best_class))


def compensation_weights(p_tilde: TypeDistribution, gamma: float) -> TypeDistribution:
    """Remove each mutation independently with probability ``gamma``."""
    if not 0 <= gamma <= 1:
        raise ParameterError(f"compensation needs 0 <= gamma <= 1, got {gamma}")
    p = np.array(p_tilde.weights)
    hi = int(p_tilde.support[-1])
    return TypeDistribution(_compensate(p, gamma, hi), p_tilde.overflow_mass)


def mutation_weights(p_hat: TypeDistribution, lam: float) -> TypeDistribution:
    """Add Poisson(``lam``) new mutations; mass pushed past ``k_max`` goes to overflow_mass."""
    if lam < 0:
        raise ParameterError(f"lam must be >= 0, got {lam}")
    p = np.array(p_hat.weights)
    out, over = _mutate(p, lam, int(p_hat.support[-1]))
    return TypeDistribution.from_unnormalized(out, p_hat.overflow_mass + over)


def sampling_weights(state: PopulationState, params: ModelParams) -> TypeDistribution:
    """Composition of selection, compensation and mutation for the next generation."""
    p = selection_weights(state, params.alpha)
    p = compensation_weights(p, params.gamma)
    return mutation_weights(p, params.lam)


# -- the chain -----------------------------------------------------------------


def _offspring(counts: np.ndarray, params: ModelParams, rng: np.random.Generator):
    """Next generation's counts and the number of offspring clamped into ``k_max``."""
    occ = np.flatnonzero(counts)
    if occ.size == 0:
        raise EmptyPopulation("population is empty")
    lo, hi = int(occ[0]), int(occ[-1])
    n = int(counts.sum())
    p = _select(counts, params.alpha, lo)
    p = _compensate(p, params.gamma, hi)
    p, over = _mutate(p, params.lam, hi)
    start = 0 if params.gamma else lo
    stop = p.size if params.lam else hi + 1
    window = p[start:stop]
    if over > 0:
        window = np.append(window, over)
    window = window / window.sum()
    draw = rng.multinomial(n, window)
    out = np.zeros_like(counts)
    clamped = 0
    if over > 0:
        clamped = int(draw[-1])
        draw = draw[:-1]
    out[start:stop] = draw
    out[-1] += clamped
    return out, clamped


def _check_chain(params: ModelParams):
    params.require_stochastic()
    if not params.alpha < 1:
        raise ParameterError(f"selection needs alpha < 1, got {params.alpha}")
    if not params.gamma <= 1:
        raise ParameterError(f"compensation needs gamma <= 1, got {params.gamma}")


def step(state: PopulationState, params: ModelParams, rng) -> PopulationState:
    """One generation: compose the sampling weights and draw ``Multinomial(n, p)``.

    Offspring that would carry more than ``k_max`` mutations are placed in
    class ``k_max``.
    """
    _check_chain(params)
    counts, _ = _offspring(state.counts, params, as_rng(rng))
    return PopulationState(counts, state.generation + 1)


def run(initial: PopulationState, params: ModelParams, cfg: RunConfig, rng=None) -> TrajectoryRecord:
    """Iterate :func:`step` for ``cfg.generations`` generations.

    Summary statistics are stored every ``cfg.record_every`` generations and
    full frequency vectors every ``cfg.state_every`` (default: same). A
    click is a strict increase of the best occupied class between
    consecutive generations; decreases are logged as recoveries.
    """
    _check_chain(params)
    rng = make_rng(cfg.seed, 0) if rng is None else as_rng(rng)
    counts = np.zeros(cfg.k_max + 1, dtype=np.int64)
    m = min(initial.counts.size, counts.size)
    counts[:m] = initial.counts[:m]
    counts[-1] += initial.counts[m:].sum()
    n = int(counts.sum())
    if n == 0:
        raise EmptyPopulation("population is empty")
    _check_xi(cfg.xi, cfg.k_max)
    state_every = cfg.state_every or cfg.record_every
    G = cfg.generations
    stat_gens = list(range(0, G + 1, cfg.record_every))
    if stat_gens[-1] != G:
        stat_gens.append(G)
    state_gens = list(range(0, G + 1, state_every))
    if state_gens[-1] != G:
        state_gens.append(G)

    k = np.arange(cfg.k_max + 1, dtype=np.float64)
    ek = np.exp(cfg.xi * k)
    k1 = np.empty(len(stat_gens))
    k2 = np.empty(len(stat_gens))
    h = np.empty(len(stat_gens))
    states = np.empty((len(state_gens), cfg.k_max + 1))
    si = ti = 0
    clicks, recoveries = [], []
    clamped = 0
    best = int(np.flatnonzero(counts)[0])

    def record(g, c):
        nonlocal si, ti
        if si < len(stat_gens) and stat_gens[si] == g:
            f = c / n
            m1 = f @ k
            k1[si] = m1
            k2[si] = max(f @ (k * k) - m1 * m1, 0.0)
            h[si] = f @ ek
            si += 1
        if ti < len(state_gens) and state_gens[ti] == g:
            states[ti] = c / n
            ti += 1

    record(0, counts)
    for g in range(1, G + 1):
        counts, c = _offspring(counts, params, rng)
        clamped += c
        new_best = int(np.flatnonzero(counts)[0])
        if new_best > best:
            clicks.append(ClickEvent(g, best, new_best))
        elif new_best < best:
            recoveries.append(ClickEvent(g, best, new_best))
        best = new_best
        record(g, counts)

    return TrajectoryRecord(
        times=np.asarray(stat_gens, dtype=np.float64),
        kappa1=k1,
        kappa2=k2,
        h_xi=h,
        xi=cfg.xi,
        state_times=np.asarray(state_gens, dtype=np.float64),
        states=states,
        clicks=clicks,
        recoveries=recoveries,
        diagnostics={"clamped_individuals": clamped, "top_class_count": int(counts[-1])},
        metadata={
            "model": "wf",
            "population_size": n,
            "generations": G,
            "time_unit": "generation",
            "seed": cfg.seed,
        },
    )


def click_rate(record: TrajectoryRecord) -> float:
    """Clicks per ``N`` generations."""
    G = record.metadata["generations"]
    if G == 0:
        return 0.0
    return len(record.clicks) / (G / record.metadata["population_size"])


def window_mask(times: np.ndarray, window: tuple[float, float]) -> np.ndarray:
    """Recorded times within the fractional window ``[w0, w1]`` of the run."""
    t_end = times[-1]
    lo, hi = window
    return (times >= lo * t_end) & (times <= hi * t_end)


def time_average(record: TrajectoryRecord, window=(0.5, 1.0)) -> tuple[float, float]:
    """Time-averaged ``(kappa1, kappa2)`` over the window (fractions of the run)."""
    mask = window_mask(record.times, window)
    return float(record.kappa1[mask].mean()), float(record.kappa2[mask].mean())


@dataclass
class EnsembleSummary:
    replicates: int
    window: tuple
    kappa1_mean: float
    kappa1_se: float
    kappa2_mean: float
    kappa2_se: float
    kappa1_q10: float
    kappa1_q90: float
    click_rate: float
    click_rate_se: float
    per_replicate: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _se(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def summarize_ensemble(records, window=(0.5, 1.0), metadata=None) -> EnsembleSummary:
    """Aggregate replicate records in index order."""
    per = []
    pooled = []
    for i, rec in enumerate(records):
        m1, m2 = time_average(rec, window)
        per.append({
            "replicate": i,
            "kappa1": m1,
            "kappa2": m2,
            "clicks": len(rec.clicks),
            "recoveries": len(rec.recoveries),
            "click_rate": click_rate(rec),
        })
        pooled.append(rec.kappa1[window_mask(rec.times, window)])
    pooled = np.concatenate(pooled)
    k1 = [r["kappa1"] for r in per]
    k2 = [r["kappa2"] for r in per]
    cr = [r["click_rate"] for r in per]
    return EnsembleSummary(
        replicates=len(per),
        window=tuple(window),
        kappa1_mean=float(np.mean(k1)),
        kappa1_se=_se(k1),
        kappa2_mean=float(np.mean(k2)),
        kappa2_se=_se(k2),
        kappa1_q10=float(np.quantile(pooled, 0.1)),
        kappa1_q90=float(np.quantile(pooled, 0.9)),
        click_rate=float(np.mean(cr)),
        click_rate_se=_se(cr),
        per_replicate=per,
        metadata=dict(metadata or {}),
    )


def ensemble_run(
    initial: PopulationState,
    params: ModelParams,
    cfg: RunConfig,
    replicates: int,
    window=(0.5, 1.0),
    keep_records: bool = False,
):
    """Run independent replicates; replicate ``r`` uses ``make_rng(cfg.seed, r)``.

    Returns the :class:`EnsembleSummary`, or ``(summary, records)`` when
    ``keep_records`` is set. The averaging window is given as fractions of
    the run length and is echoed in the summary metadata.
    """
    if replicates < 1:
        raise ParameterError(f"replicates must be >= 1, got {replicates}")
    records = [run(initial, params, cfg, make_rng(cfg.seed, r)) for r in range(replicates)]
    meta = {
        "seed": cfg.seed,
        "generations": cfg.generations,
        "population_size": initial.n,
        "window_generations": [window[0] * cfg.generations, window[1] * cfg.generations],
    }
    summary = summarize_ensemble(records, window, meta)
    return (summary, records) if keep_records else summary
