"""Report assembly and serialization (JSON for aggregates, CSV for per-sample rows)."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import __version__
from .observables import Estimate, weighted_covariance, weighted_histogram, weighted_mean, weighted_variance


def _clean(obj):
    """Plain JSON types; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, Estimate):
        return _clean(obj.as_dict())
    return obj


@dataclass
class Report:
    command: str
    params: dict
    seed: int | None = None
    observables: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    tool_version: str = __version__

    def add(self, est: Estimate) -> None:
        self.observables.append(est)

    def to_dict(self) -> dict:
        diag = {"ess": None, "residuals": None, "runtime_seconds": None}
        diag.update(self.diagnostics)
        out = {
            "tool_version": self.tool_version,
            "command": self.command,
            "seed": self.seed,
            "params": self.params,
            "observables": [o.as_dict() for o in self.observables],
            "diagnostics": diag,
        }
        for k, v in self.results.items():
            if k in out:
                raise KeyError(f"result key {k!r} collides with a report field")
            out[k] = v
        return _clean(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def report_schema() -> dict:
    text = resources.files("asepkpz").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def write_csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def observables(samples, specs, log_weights=None, grid=None) -> Report:
    """Evaluate moment/histogram specs over a sample set.

    ``samples`` is a WeightedEnsemble (its own weights and grid are used) or
    an array of shape ``(N,)`` or ``(N, K)`` with optional ``log_weights`` and
    ``grid``. Specs: ``("mean", x)``, ``("var", x)``, ``("cov", x, y)`` and
    ``("hist", x, bins, lo, hi)``, with ``x`` a grid coordinate (or column
    index when no grid is given).
    """
    if hasattr(samples, "fields"):
        data = samples.values
        log_weights = samples.log_weights
        grid = samples.grid
    else:
        data = np.asarray(samples, dtype=float)
    if data.size == 0:
        raise ValueError("empty sample set")
    if data.ndim == 1:
        data = data[:, None]

    def col(x):
        if grid is None:
            return data[:, int(x)]
        k = int(np.argmin(np.abs(np.asarray(grid) - x)))
        return data[:, k]

    rep = Report(command="observables", params={})
    for spec in specs:
        kind = spec[0]
        if kind == "mean":
            rep.add(weighted_mean(col(spec[1]), log_weights, name=f"mean@{spec[1]:g}"))
        elif kind == "var":
            rep.add(weighted_variance(col(spec[1]), log_weights, name=f"var@{spec[1]:g}"))
        elif kind == "cov":
            rep.add(weighted_covariance(col(spec[1]), col(spec[2]), log_weights,
                                        name=f"cov@{spec[1]:g},{spec[2]:g}"))
        elif kind == "hist":
            bins, lo, hi = int(spec[2]), spec[3], spec[4]
            edges, mass, se = weighted_histogram(col(spec[1]), bins, (lo, hi), log_weights)
            n_eff = weighted_mean(col(spec[1]), log_weights).n_effective
            for b in range(bins):
                rep.add(Estimate(f"hist@{spec[1]:g}[{edges[b]:g},{edges[b + 1]:g})", float(mass[b]),
                                 float(se[b]), n_eff))
        else:
            raise ValueError(f"unknown observable kind {kind!r}")
    if log_weights is not None:
        rep.diagnostics["ess"] = rep.observables[0].n_effective if rep.observables else None
    return rep
