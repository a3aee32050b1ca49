"""Experiment specification, execution and persistence.

An experiment is described by a plain ``key = value`` document, one setting
per line, ``#`` starting a comment::

    model = wf
    alpha = 0.03
    lambda = 0.1
    gamma = 1e-4
    N = 1000
    generations = 10000
    replicates = 4
    seed = 1

:func:`parse_spec` turns such a document (plus optional overrides, e.g. from
command-line flags) into a validated :class:`ExperimentSpec`.
:func:`run_experiment` executes it and writes tidy CSV/JSON outputs and a
``manifest.json`` listing every file with its SHA-256 hash. Ensemble
models put per-replicate files under ``r0000/``, ``r0001/`` and so on. Each file is
written to a temporary name first and then renamed into place.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import DEFAULT_K_MAX, ModelParams, TypeDistribution, kappa1, kappa2, poisson_profile, total_variation
from .deterministic import OdeSolverConfig, closed_form, integrate
from .errors import ParseError, RatchetError, ValidationError
from .girsanov import check_exp_moment_bound, reweighted_expectation
from .particles import aggregate_sigma, conditioned_distribution
from .sde import SdeConfig, run_sde_ensemble
from .trajectory import load_archive, save_archive
from .wright_fisher import PopulationState, RunConfig, ensemble_run

MODELS = ("wf", "sde", "ode", "closed-form", "particle", "reweight", "compare")
STOCHASTIC = ("wf", "sde", "particle", "reweight")
OUTPUT_ENV = "MULLER_RATCHET_OUTPUT"
# ensembles keep only the first and last full distribution unless asked
ENDPOINTS_ONLY = sys.maxsize

# sup-norm tolerance between the two deterministic solvers in `compare`
COMPARE_ODE_TOL = 1e-6
# particle estimates must lie within this many aggregate standard errors
COMPARE_MC_SIGMAS = 3.0


def _float(s):
    return float(s)


def _int(s):
    v = float(s)
    if not v.is_integer():
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _window(s):
    parts = [float(p) for p in s.replace(",", " ").split()]
    if len(parts) != 2:
        raise ValueError("expected two numbers")
    return tuple(parts)


# key -> (attribute, converter, default)
KEYS = {
    "model": ("model", str, None),
    "alpha": ("alpha", _float, None),
    "lambda": ("lam", _float, None),
    "gamma": ("gamma", _float, None),
    "N": ("population_size", _float, math.inf),
    "initial": ("initial", str, "delta:0"),
    "t": ("t_end", _float, None),
    "generations": ("generations", _int, None),
    "replicates": ("replicates", _int, 1),
    "seed": ("seed", _int, None),
    "output": ("output", str, None),
    "record_every": ("record_every", _int, None),
    "state_every": ("state_every", _int, None),
    "k_max": ("k_max", _int, None),
    "dt": ("dt", _float, 1e-3),
    "xi": ("xi", _float, 0.0),
    "noise": ("noise", str, "factored"),
    "n_paths": ("n_paths", _int, 100_000),
    "points": ("points", _int, 1),
    "window": ("window", _window, (0.5, 1.0)),
    "archive": ("archive", str, None),
    "alpha_to": ("alpha_to", _float, None),
    "statistic": ("statistic", str, "kappa1_at_end"),
}
ALIASES = {"lam": "lambda", "population_size": "N", "n": "N"}

REQUIRED = {
    "wf": ("alpha", "lambda", "gamma", "N", "generations"),
    "sde": ("alpha", "lambda", "gamma", "N", "t"),
    "ode": ("alpha", "lambda", "gamma", "t"),
    "closed-form": ("alpha", "lambda", "gamma", "t"),
    "particle": ("alpha", "lambda", "gamma", "t"),
    "reweight": ("archive", "alpha_to"),
    "compare": ("alpha", "lambda", "gamma", "t"),
}


@dataclass(frozen=True)
class ExperimentSpec:
    model: str
    params: ModelParams | None
    seed: int
    initial: str = "delta:0"
    t_end: float | None = None
    generations: int | None = None
    replicates: int = 1
    output: str | None = None
    record_every: int = 1
    state_every: int | None = None
    k_max: int = DEFAULT_K_MAX
    dt: float = 1e-3
    xi: float = 0.0
    noise: str = "factored"
    n_paths: int = 100_000
    points: int = 1
    window: tuple = (0.5, 1.0)
    archive: str | None = None
    alpha_to: float | None = None
    statistic: str = "kappa1_at_end"
    source: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        if self.params is not None:
            d["params"] = asdict(self.params)
            if math.isinf(self.params.population_size):
                d["params"]["population_size"] = "inf"
        d["window"] = list(self.window)
        return d

    def output_dir(self) -> Path:
        root = Path(os.environ.get(OUTPUT_ENV, "."))
        name = self.output or f"{self.model}-seed{self.seed}"
        p = Path(name)
        return p if p.is_absolute() else root / p


def _read_lines(source: str) -> dict:
    """``key -> (raw value, line number)``; duplicates and malformed lines are errors."""
    out = {}
    for no, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError("expected 'key = value'", line=no)
        key, value = key.strip(), value.strip()
        key = ALIASES.get(key, key)
        if key not in KEYS:
            raise ParseError(f"unknown key; allowed keys are {', '.join(KEYS)}", line=no, field=key)
        if key in out:
            raise ParseError(f"duplicate key (first set on line {out[key][1]})", line=no, field=key)
        if not value:
            raise ParseError("empty value", line=no, field=key)
        out[key] = (value, no)
    return out


def parse_initial(text: str, k_max: int) -> TypeDistribution:
    """``delta:k``, ``poisson:theta`` or a path to a ``k,weight`` CSV file."""
    kind, sep, arg = text.partition(":")
    if sep and kind == "delta":
        return TypeDistribution.delta(int(arg), k_max)
    if sep and kind == "poisson":
        return poisson_profile(float(arg), k_max)
    path = Path(text)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not {"k", "weight"} <= set(rows[0]):
        raise ValidationError(f"{path}: expected a CSV with columns k,weight")
    w = np.zeros(k_max + 1)
    over = 0.0
    for r in rows:
        k = int(r["k"])
        if k < 0:
            raise ValidationError(f"{path}: negative class {k}")
        if k > k_max:
            over += float(r["weight"])
        else:
            w[k] += float(r["weight"])
    total = w.sum() + over
    if total <= 0:
        raise ValidationError(f"{path}: no positive weight within k_max={k_max}")
    return TypeDistribution.from_unnormalized(w, over / total)


def parse_spec(source: str = "", overrides: dict | None = None) -> ExperimentSpec:
    """Parse and validate an experiment document.

    ``overrides`` maps keys to raw string values and takes precedence over
    the document (command-line flags use this).
    """
    raw = _read_lines(source)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        key = ALIASES.get(key, key)
        if key not in KEYS:
            raise ParseError("unknown key", field=key)
        raw[key] = (str(value), None)

    vals = {}
    for key, (attr, conv, default) in KEYS.items():
        if key in raw:
            text, no = raw[key]
            try:
                vals[attr] = conv(text)
            except ValueError as exc:
                raise ParseError(f"cannot parse {text!r}: {exc}", line=no, field=key) from None
        else:
            vals[attr] = default

    model = vals.pop("model")
    if model is None:
        raise ValidationError("model is required")
    if model not in MODELS:
        raise ValidationError(f"model must be one of {', '.join(MODELS)}, got {model!r}")
    if vals["seed"] is None:
        raise ValidationError("seed is required; there is no clock-based default")
    missing = [k for k in REQUIRED[model] if k not in raw]
    if missing:
        raise ValidationError(f"model {model} requires {', '.join(missing)}")

    params = None
    if model != "reweight":
        try:
            params = ModelParams(vals.pop("alpha"), vals.pop("lam"), vals.pop("gamma"), vals.pop("population_size"))
        except RatchetError as exc:
            raise ValidationError(str(exc)) from None
        if model in STOCHASTIC:
            if params.alpha < 0:
                raise ValidationError(f"model {model} requires alpha >= 0 (got {params.alpha})")
            if model in ("wf", "sde") and not math.isfinite(params.population_size):
                raise ValidationError(f"model {model} requires a finite N")
    else:
        for k in ("alpha", "lam", "gamma", "population_size"):
            vals.pop(k)

    if vals["k_max"] is None:
        vals["k_max"] = DEFAULT_K_MAX
    if vals["k_max"] < 1:
        raise ValidationError("k_max must be >= 1")
    if vals["record_every"] is None:
        vals["record_every"] = 10 if model in ("sde", "ode") else 1
    for key in ("replicates", "record_every", "n_paths", "points"):
        if vals[key] < 1:
            raise ValidationError(f"{key} must be >= 1")
    if vals["state_every"] is not None and vals["state_every"] < 1:
        raise ValidationError("state_every must be >= 1")
    if vals["t_end"] is not None and vals["t_end"] < 0:
        raise ValidationError("t must be >= 0")
    if vals["generations"] is not None and vals["generations"] < 0:
        raise ValidationError("generations must be >= 0")
    if not vals["dt"] > 0:
        raise ValidationError("dt must be > 0")
    lo, hi = vals["window"]
    if not 0 <= lo < hi <= 1:
        raise ValidationError("window must satisfy 0 <= start < end <= 1")

    # referenced files must exist now, not halfway through a run
    if model == "reweight" and not Path(vals["archive"]).is_file():
        raise ValidationError(f"archive {vals['archive']!r} does not exist")
    kind = vals["initial"].partition(":")[0]
    if kind not in ("delta", "poisson") and not Path(vals["initial"]).is_file():
        raise ValidationError(f"initial distribution file {vals['initial']!r} does not exist")
    try:
        parse_initial(vals["initial"], vals["k_max"])
    except (ValueError, OSError) as exc:
        raise ValidationError(f"bad initial distribution {vals['initial']!r}: {exc}") from None

    source_echo = {k: v for k, (v, _) in raw.items()}
    return ExperimentSpec(model=model, params=params, source=source_echo, **vals)


@dataclass
class ExitReport:
    exit_code: int
    message: str
    output_dir: str | None = None
    outputs: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def ok(self) -> bool:
        return self.exit_code == 0


class _Writer:
    """Collects outputs and writes each one atomically."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.directory.mkdir(parents=True, exist_ok=True)
        self.hashes = {}

    def write_bytes(self, name: str, data: bytes):
        target = self.directory / name
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.hashes[name] = hashlib.sha256(data).hexdigest()

    def write_text(self, name: str, text: str):
        self.write_bytes(name, text.encode())

    def write_json(self, name: str, obj):
        self.write_text(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _distribution_rows(t: float, d: TypeDistribution, se=None) -> list:
    rows = []
    for k in np.flatnonzero(d.weights):
        row = [repr(float(t)), int(k), repr(float(d.weights[k]))]
        if se is not None:
            row.append(repr(float(se[k])))
        rows.append(row)
    return rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _population(x0: TypeDistribution, n: int) -> PopulationState:
    """Integer counts summing to ``n`` by largest remainders."""
    target = x0.weights * n
    counts = np.floor(target).astype(np.int64)
    short = n - int(counts.sum())
    if short > 0:
        order = np.argsort(-(target - counts), kind="stable")
        counts[order[:short]] += 1
    return PopulationState(counts)


def _run_wf(spec, x0, out):
    N = spec.params.population_size
    if not float(N).is_integer():
        raise ValidationError(f"wf needs an integer N, got {N}")
    cfg = RunConfig(spec.seed, spec.generations, spec.record_every, spec.k_max,
                    spec.state_every or ENDPOINTS_ONLY, spec.xi)
    summary, records = ensemble_run(_population(x0, int(N)), spec.params, cfg, spec.replicates, spec.window, True)
    for r, rec in enumerate(records):
        out.write_text(f"r{r:04d}/stats.csv", rec.stats_csv())
        out.write_text(f"r{r:04d}/distribution.csv", rec.distribution_csv())
        out.write_text(f"r{r:04d}/clicks.csv", rec.clicks_csv())
    out.write_json("summary.json", summary.to_dict())
    over = max(float(r.states[:, -1].max()) for r in records)
    return {"top_class_mass": over, "clicks": sum(len(r.clicks) for r in records)}


def _run_sde(spec, x0, out):
    cfg = SdeConfig(spec.dt, spec.seed, record_every=spec.record_every,
                    state_every=spec.state_every or ENDPOINTS_ONLY,
                    xi=spec.xi, noise=spec.noise)
    records = run_sde_ensemble(x0, spec.params, spec.t_end, cfg, spec.replicates)
    for r, rec in enumerate(records):
        out.write_text(f"r{r:04d}/stats.csv", rec.stats_csv())
        out.write_text(f"r{r:04d}/distribution.csv", rec.distribution_csv())
    buf = io.BytesIO()
    save_archive(buf, records, spec.params)
    out.write_bytes("trajectories.npz", buf.getvalue())
    k1 = np.array([r.kappa1[-1] for r in records])
    summary = {
        "replicates": len(records),
        "kappa1_at_end_mean": float(k1.mean()),
        "kappa1_at_end_se": float(k1.std(ddof=1) / math.sqrt(k1.size)) if k1.size > 1 else 0.0,
    }
    out.write_json("summary.json", summary)
    clipped = [r.diagnostics["clipped_mass"] for r in records]
    return {
        "clipped_mass_max": float(max(clipped)),
        "clipped_mass_per_time_max": float(max(r.diagnostics["clipped_mass_per_time"] for r in records)),
        "max_raw_mass_drift": float(records[0].diagnostics["max_raw_mass_drift"]),
        "top_class_mass": float(max(r.states[:, -1].max() for r in records)),
    }


def _run_ode(spec, x0, out):
    rec = integrate(spec.params, x0, spec.t_end, OdeSolverConfig(spec.dt, record_every=spec.record_every, xi=spec.xi))
    out.write_text("stats.csv", rec.stats_csv())
    out.write_text("distribution.csv", rec.distribution_csv())
    out.write_text("trajectory.json", rec.to_json())
    return dict(rec.diagnostics, overflow_mass=x0.overflow_mass)


def _run_closed_form(spec, x0, out):
    times = np.linspace(0.0, spec.t_end, spec.points + 1) if spec.points > 1 else np.array([0.0, spec.t_end])
    stats, rows = [], []
    for t in times:
        d = closed_form(spec.params, x0, float(t))
        stats.append([repr(float(t)), repr(kappa1(d)), repr(kappa2(d)),
                      repr(float(np.dot(d.weights, np.exp(spec.xi * np.arange(d.k_max + 1)))))])
        rows += _distribution_rows(t, d)
    out.write_text("stats.csv", _csv(["t", "kappa1", "kappa2", "h_xi"], stats))
    out.write_text("distribution.csv", _csv(["t", "k", "weight"], rows))
    return {"top_class_mass": float(d.weights[-1]), "overflow_mass": x0.overflow_mass}


def _run_particle(spec, x0, out):
    est = conditioned_distribution(x0, spec.params, spec.t_end, spec.n_paths, spec.seed)
    d = est.distribution
    out.write_text("distribution.csv", _csv(["t", "k", "weight", "std_error"],
                                            _distribution_rows(spec.t_end, d, est.std_errors)))
    out.write_json("summary.json", {
        "survival_rate": est.survival_rate,
        "n_paths": est.n_paths,
        "n_survivors": est.n_survivors,
        "aggregate_sigma": aggregate_sigma(est.std_errors),
        "kappa1": kappa1(d),
        "kappa2": kappa2(d),
    })
    return {"overflow_mass": d.overflow_mass, "survival_rate": est.survival_rate}


def _run_reweight(spec, x0, out):
    records, ptuple = load_archive(spec.archive)
    if ptuple is None:
        raise ValidationError(f"archive {spec.archive} carries no model parameters")
    params = ModelParams(*ptuple)
    res = reweighted_expectation(records, params, spec.alpha_to, spec.statistic)
    bound = check_exp_moment_bound(records, records[0].xi, params.lam)
    report = {
        "alpha_from": params.alpha,
        "alpha_to": spec.alpha_to,
        "statistic": spec.statistic,
        "estimate": res.estimate,
        "std_error": res.std_error,
        "effective_sample_size": res.effective_sample_size,
        "n": res.n,
        "bound_report": bound.to_dict(),
    }
    out.write_json("report.json", report)
    return {"effective_sample_size": res.effective_sample_size, "bound_passed": bound.passed}


def _run_compare(spec, x0, out):
    ode = integrate(spec.params, x0, spec.t_end, OdeSolverConfig(spec.dt, record_every=10**9)).final
    cf = closed_form(spec.params, x0, spec.t_end)
    est = conditioned_distribution(x0, spec.params, spec.t_end, spec.n_paths, spec.seed)
    sigma = aggregate_sigma(est.std_errors)
    mc_tol = COMPARE_MC_SIGMAS * sigma
    sup = float(np.max(np.abs(ode.weights - cf.weights)))
    pairs = {
        "ode_vs_closed_form": {"sup_norm": sup, "total_variation": total_variation(ode, cf),
                               "tolerance": COMPARE_ODE_TOL, "metric": "sup_norm", "passed": sup <= COMPARE_ODE_TOL},
    }
    for name, ref in (("particle_vs_closed_form", cf), ("particle_vs_ode", ode)):
        tv = total_variation(est.distribution, ref)
        pairs[name] = {"total_variation": tv, "tolerance": mc_tol, "metric": "total_variation", "passed": tv <= mc_tol}
    report = {
        "t": spec.t_end,
        "pairs": pairs,
        "aggregate_sigma": sigma,
        "survival_rate": est.survival_rate,
        "passed": all(p["passed"] for p in pairs.values()),
    }
    out.write_json("report.json", report)
    out.write_text("distribution.csv", _csv(["t", "k", "weight", "source"], [
        row + [src] for src, d in (("ode", ode), ("closed-form", cf), ("particle", est.distribution))
        for row in _distribution_rows(spec.t_end, d)
    ]))
    return {"passed": report["passed"], "overflow_mass": est.distribution.overflow_mass}


RUNNERS = {
    "wf": _run_wf,
    "sde": _run_sde,
    "ode": _run_ode,
    "closed-form": _run_closed_form,
    "particle": _run_particle,
    "reweight": _run_reweight,
    "compare": _run_compare,
}


def run_experiment(spec: ExperimentSpec) -> ExitReport:
    """Execute ``spec``; library errors become a nonzero :class:`ExitReport`.

    Output files depend only on the spec, so reruns reproduce them bit for
    bit. The manifest additionally records wall-clock runtime and is the one
    file that differs between reruns.
    """
    start = time.perf_counter()
    out_dir = spec.output_dir()
    try:
        x0 = parse_initial(spec.initial, spec.k_max)
        out = _Writer(out_dir)
        diagnostics = RUNNERS[spec.model](spec, x0, out)
    except RatchetError as exc:
        return ExitReport(exc.exit_code, f"{type(exc).__name__}: {exc}", str(out_dir),
                          runtime=time.perf_counter() - start)
    runtime = time.perf_counter() - start
    manifest = {
        "spec": spec.to_dict(),
        "seed": spec.seed,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "runtime_seconds": runtime,
        "diagnostics": diagnostics,
        "files": dict(sorted(out.hashes.items())),
    }
    if spec.model == "wf":
        lo, hi = spec.window
        manifest["averaging_window_generations"] = [lo * spec.generations, hi * spec.generations]
        manifest["note"] = ("time averages use the stated window within this run, "
                            "not a long-run window of order 1e3 N generations")
    out.write_json("manifest.json", manifest)
    outputs = dict(out.hashes)
    return ExitReport(0, f"{spec.model}: wrote {len(outputs)} files to {out_dir}", str(out_dir), outputs, runtime)
