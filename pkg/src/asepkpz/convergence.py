"""Discrete-to-continuum comparison: weakly asymmetric walks against the continuum sampler."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import continuum, mpa, walks
from .observables import Estimate, linear_extrapolation, weighted_mean, weighted_variance
from .params import ParameterError, weak_asymmetry
from .rng import as_stream, map_chunks

FIELDS = ("H", "U", "V", "X")
STATS = {"mean": weighted_mean, "var": weighted_variance}
WALK_CHUNK = 8192


@dataclass(frozen=True)
class ObservableSpec:
    stat: str
    field: str
    x: float

    @property
    def name(self) -> str:
        return f"{self.stat}:{self.field}@{self.x:g}"


def parse_observable(text: str, L: float) -> ObservableSpec:
    """``"var:H@1.0"`` -> variance of H at x = 1.0; ``@x`` defaults to ``L``."""
    try:
        stat, rest = text.split(":", 1)
    except ValueError:
        raise ParameterError(f"bad observable {text!r}; expected stat:field[@x]") from None
    fld, _, xs = rest.partition("@")
    x = float(xs) if xs else float(L)
    if stat not in STATS or fld not in FIELDS:
        raise ParameterError(f"bad observable {text!r}; stat in {sorted(STATS)}, field in {FIELDS}")
    if not 0.0 <= x <= L:
        raise ParameterError(f"observable point {x} outside [0, {L}]")
    return ObservableSpec(stat, fld, x)


DEFAULT_OBSERVABLES = ("mean:H", "var:H", "var:V")


@dataclass
class ConvergenceTable:
    u: float
    v: float
    L: float
    epsilons: list
    observables: list
    discrete: dict = field(default_factory=dict)       # (name, eps) -> Estimate
    extrapolated: dict = field(default_factory=dict)   # name -> Estimate
    continuum: dict = field(default_factory=dict)      # name -> Estimate
    diagnostics: dict = field(default_factory=dict)

    def z_score(self, name: str) -> float | None:
        if name not in self.extrapolated or name not in self.continuum:
            return None
        a, b = self.extrapolated[name], self.continuum[name]
        return (a.estimate - b.estimate) / math.hypot(a.stderr, b.stderr)

    def rows(self) -> list[dict]:
        out = []
        for spec in self.observables:
            name = spec.name
            for eps in self.epsilons:
                e = self.discrete[(name, eps)]
                out.append({"observable": name, "kind": "discrete", "epsilon": eps,
                            "estimate": e.estimate, "stderr": e.stderr, "n_effective": e.n_effective})
            if name in self.extrapolated:
                e = self.extrapolated[name]
                out.append({"observable": name, "kind": "extrapolated", "epsilon": 0.0,
                            "estimate": e.estimate, "stderr": e.stderr, "n_effective": e.n_effective})
            if name in self.continuum:
                e = self.continuum[name]
                out.append({"observable": name, "kind": "continuum", "epsilon": None,
                            "estimate": e.estimate, "stderr": e.stderr, "n_effective": e.n_effective})
        return out


def _discrete_fields(tab, eps, L, points, rng_gen, size):
    n, m = walks.sample_joint_batch(tab, rng_gen, size)
    U, V, H = walks.rescale_batch(n, m, eps, L, points)
    return {"H": H, "U": U, "V": V, "X": H - V}


def convergence_study(u: float, v: float, L: float, epsilons, observables=DEFAULT_OBSERVABLES,
                      N: int = 100_000, M: int = 1024, rng=0, rel_tol: float = 1e-12) -> ConvergenceTable:
    """Estimate observables of the rescaled walks for each epsilon and of the continuum field.

    With two or more epsilons each observable is extrapolated linearly in
    epsilon to 0 (weighted least squares) for comparison with the continuum.
    """
    stream = as_stream(rng)
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ParameterError("need at least one epsilon")
    specs = [parse_observable(o, L) if isinstance(o, str) else o for o in observables]
    points = sorted({s.x for s in specs})
    table = ConvergenceTable(u, v, L, epsilons, specs)

    for k, eps in enumerate(epsilons):
        sp, mp = weak_asymmetry(eps, L, u, v)
        n_max = mpa.adapt_truncation(mp, mp.ell, rel_tol)
        tab = walks.build_partition_table(mp, n_max)
        parts = map_chunks(lambda g, size: _discrete_fields(tab, eps, L, points, g, size),
                           stream.substream(k), N, WALK_CHUNK)
        cols = {f: np.concatenate([p[f] for p in parts]) for f in FIELDS}
        for spec in specs:
            vals = cols[spec.field][:, points.index(spec.x)]
            est = STATS[spec.stat](vals, None, name=f"{spec.name}|eps={eps:g}")
            table.discrete[(spec.name, eps)] = est
        table.diagnostics[f"eps={eps:g}"] = {"ell": mp.ell, "q": mp.q, "rho_a": mp.rho_a,
                                             "rho_b": mp.rho_b, "n_max": n_max}

    if len(epsilons) >= 2:
        for spec in specs:
            ests = [table.discrete[(spec.name, e)] for e in epsilons]
            a, se_a, _, _ = linear_extrapolation(epsilons, [e.estimate for e in ests], [e.stderr for e in ests])
            table.extrapolated[spec.name] = Estimate(f"{spec.name}|extrapolated", a, se_a, None)

    keep = sorted({s.x for s in specs} | {0.0})
    keep = [round(x / (L / M)) * (L / M) for x in keep]
    ens = continuum.sample_U_ensemble(u, v, L, M, N, stream.substream(len(epsilons)), keep=keep)
    for spec in specs:
        vals = ens.column(spec.field, spec.x)
        table.continuum[spec.name] = STATS[spec.stat](vals, ens.log_weights, name=f"{spec.name}|continuum")
    table.diagnostics["continuum"] = {"ess": ens.ess, "M": M, "N": N}
    return table
