"""Time series of distributions and their summary statistics, with file export."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .core import TypeDistribution


@dataclass(frozen=True)
class ClickEvent:
    generation: int
    old_best: int
    new_best: int


@dataclass
class TrajectoryRecord:
    """Recorded path of a model.

    ``times``/``kappa1``/``kappa2``/``h_xi`` live on the statistics grid.
    Full distributions are kept on the (possibly coarser) ``state_times``
    grid; the first and last recorded times always carry a state.
    """

    times: np.ndarray
    kappa1: np.ndarray
    kappa2: np.ndarray
    h_xi: np.ndarray
    xi: float
    state_times: np.ndarray
    states: np.ndarray
    clicks: list = field(default_factory=list)
    recoveries: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def k_max(self) -> int:
        return self.states.shape[1] - 1

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def initial(self) -> TypeDistribution:
        return TypeDistribution(self.states[0])

    @property
    def final(self) -> TypeDistribution:
        return TypeDistribution(self.states[-1])

    def distribution(self, i: int) -> TypeDistribution:
        return TypeDistribution(self.states[i])

    def __len__(self):
        return self.times.size

    def stats_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "kappa1", "kappa2", "h_xi"])
        for row in zip(self.times, self.kappa1, self.kappa2, self.h_xi):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def distribution_csv(self) -> str:
        """Tidy ``t,k,weight`` rows; exact zeros are omitted."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "k", "weight"])
        for t, row in zip(self.state_times, self.states):
            for k in np.flatnonzero(row):
                w.writerow([repr(float(t)), int(k), repr(float(row[k]))])
        return buf.getvalue()

    def clicks_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["generation", "old_best", "new_best"])
        for c in self.clicks:
            w.writerow([c.generation, c.old_best, c.new_best])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "times": self.times.tolist(),
            "kappa1": self.kappa1.tolist(),
            "kappa2": self.kappa2.tolist(),
            "h_xi": self.h_xi.tolist(),
            "xi": self.xi,
            "state_times": self.state_times.tolist(),
            "states": self.states.tolist(),
            "clicks": [[c.generation, c.old_best, c.new_best] for c in self.clicks],
            "recoveries": [[c.generation, c.old_best, c.new_best] for c in self.recoveries],
            "diagnostics": self.diagnostics,
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> TrajectoryRecord:
        arr = lambda key: np.asarray(data[key], dtype=np.float64)  # noqa: E731
        return cls(
            times=arr("times"),
            kappa1=arr("kappa1"),
            kappa2=arr("kappa2"),
            h_xi=arr("h_xi"),
            xi=float(data["xi"]),
            state_times=arr("state_times"),
            states=np.asarray(data["states"], dtype=np.float64).reshape(len(data["state_times"]), -1),
            clicks=[ClickEvent(*map(int, c)) for c in data.get("clicks", [])],
            recoveries=[ClickEvent(*map(int, c)) for c in data.get("recoveries", [])],
            diagnostics=dict(data.get("diagnostics", {})),
            metadata=dict(data.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> TrajectoryRecord:
        return cls.from_dict(json.loads(text))


def save_archive(path, records, params=None):
    """Write an ensemble of trajectories sharing one time grid to an ``.npz`` file or binary stream."""
    records = list(records)
    if not records:
        raise ValueError("empty ensemble")
    payload = {
        "times": records[0].times,
        "xi": np.float64(records[0].xi),
        "kappa1": np.stack([r.kappa1 for r in records]),
        "kappa2": np.stack([r.kappa2 for r in records]),
        "h_xi": np.stack([r.h_xi for r in records]),
        "state_times": records[0].state_times,
        "states": np.stack([r.states for r in records]),
    }
    if params is not None:
        payload["params"] = np.array(
            [params.alpha, params.lam, params.gamma, params.population_size]
        )
    if hasattr(path, "write"):
        np.savez_compressed(path, **payload)
        return
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **payload)


def load_archive(path):
    """Inverse of :func:`save_archive`; returns ``(records, params_tuple_or_None)``."""
    with np.load(path) as z:
        times = z["times"]
        xi = float(z["xi"])
        state_times = z["state_times"]
        params = tuple(float(v) for v in z["params"]) if "params" in z.files else None
        records = [
            TrajectoryRecord(times, k1, k2, h, xi, state_times, s)
            for k1, k2, h, s in zip(z["kappa1"], z["kappa2"], z["h_xi"], z["states"])
        ]
    return records, params
