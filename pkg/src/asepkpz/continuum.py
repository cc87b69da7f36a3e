"""Samplers for the KPZ stationary measure on [0, L] as reweighted Brownian paths.

``X`` is a Brownian motion with variance growth 1/2 per unit length,
started at 0, reweighted by ``S1**(-u) * S2**(-v)`` where
``S1 = int exp(-2X)`` and ``S2 = int exp(2X(L) - 2X)``. The stationary
height is ``H = W / sqrt(2) + X`` with ``W`` an independent standard
Brownian motion. For ``u + v > 0`` the shifted path ``U = U(0) + X``, with
``exp(-2 U(0)) S1`` drawn from Gamma(u+v, 1) given the shape ``X``, follows
the Liouville path measure with both endpoints free.

Diffusion coefficient convention: ``sigma2`` is the variance per unit
length, ``Var B(x) = sigma2 * x``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .params import ParameterError
from .rng import as_generator, as_stream, map_chunks

log = logging.getLogger(__name__)

CHUNK = 2048
ESS_WARN_FRACTION = 0.01


@dataclass(frozen=True)
class PathSample:
    grid: np.ndarray
    values: np.ndarray
    log_weight: float = 0.0

    def __post_init__(self):
        if len(self.grid) != len(self.values):
            raise ValueError("grid and values differ in length")
        if len(self.grid) < 2 or not np.all(np.diff(self.grid) > 0):
            raise ValueError("grid must be increasing with at least two points")

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])


@dataclass
class WeightedEnsemble:
    """Importance-weighted path ensemble.

    ``fields`` maps a path name (``X``, ``W``, ``V = W/sqrt(2)``, ``H``, ``U``) to an array of
    shape ``(N, len(grid))``; ``scalars`` holds per-sample numbers such as
    ``log_S1`` and ``G``. Only the grid points requested at sampling time
    are kept.
    """

    grid: np.ndarray
    fields: dict
    log_weights: np.ndarray
    primary: str = "X"
    scalars: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.log_weights)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    @property
    def ess(self) -> float:
        lw = self.log_weights
        return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))

    @property
    def ess_warning(self) -> bool:
        return self.ess < ESS_WARN_FRACTION * self.count

    @property
    def values(self) -> np.ndarray:
        return self.fields[self.primary]

    def column(self, name: str, x: float) -> np.ndarray:
        """Samples of path ``name`` at the kept grid point nearest ``x``."""
        k = int(np.argmin(np.abs(self.grid - x)))
        if abs(self.grid[k] - x) > 1e-9 * max(1.0, abs(x)):
            raise KeyError(f"grid point {x} was not kept (nearest {self.grid[k]})")
        return self.fields[name][:, k]

    def samples(self, name: str | None = None) -> list[PathSample]:
        name = name or self.primary
        return [PathSample(self.grid, row, float(lw)) for row, lw in zip(self.fields[name], self.log_weights)]


def _check_uv(u, v, allow_trivial=True):
    if allow_trivial and u == 0.0 and v == 0.0:
        return
    if not u + v > 0.0:
        raise ParameterError("u+v must be positive")


def uniform_grid(M: int, L: float) -> np.ndarray:
    if M < 1 or not L > 0:
        raise ParameterError("need M >= 1 and L > 0")
    return np.linspace(0.0, L, M + 1)


def brownian_paths(gen, size: int, M: int, L: float, sigma2: float) -> np.ndarray:
    """``size`` discretized Brownian paths from 0, shape ``(size, M + 1)``."""
    dx = L / M
    out = np.zeros((size, M + 1))
    inc = gen.standard_normal((size, M))
    inc *= math.sqrt(sigma2 * dx)
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


def sample_brownian(M: int, L: float, diffusion_coefficient: float, rng) -> PathSample:
    gen = as_generator(rng)
    return PathSample(uniform_grid(M, L), brownian_paths(gen, 1, M, L, diffusion_coefficient)[0], 0.0)


def _trapezoid_log_weights(M: int, L: float) -> np.ndarray:
    lw = np.full(M + 1, math.log(L / M))
    lw[0] = lw[-1] = math.log(0.5 * L / M)
    return lw


def log_exp_integral(values, L: float, sign: float = -2.0) -> np.ndarray:
    """``log int_0^L exp(sign * f(x)) dx`` by the trapezoid rule, along the last axis."""
    values = np.asarray(values, dtype=float)
    M = values.shape[-1] - 1
    return logsumexp(sign * values + _trapezoid_log_weights(M, L), axis=-1)


def rn_log_weight_X(path: PathSample, u: float, v: float) -> float:
    """``-u log S1 - v log S2`` for one path, both integrals in log space."""
    x = np.asarray(path.values, dtype=float)
    if abs(x[0]) > 0.0:
        raise ParameterError("X paths must start at 0")
    L = float(path.grid[-1] - path.grid[0])
    log_s1 = float(log_exp_integral(x, L))
    log_s2 = float(log_exp_integral(x - x[-1], L))
    return -u * log_s1 - v * log_s2


def _batch_log_weight(x, L, u, v):
    log_s1 = log_exp_integral(x, L)
    # S2 = exp(2 X(L)) * S1 exactly, also under the trapezoid rule
    log_s2 = 2.0 * x[:, -1] + log_s1
    return -u * log_s1 - v * log_s2 + 0.0, log_s1  # + 0.0 clears -0.0


def _keep_indices(M, L, keep):
    grid = uniform_grid(M, L)
    if keep is None:
        return np.arange(M + 1), grid
    keep = np.atleast_1d(np.asarray(keep, dtype=float))
    idx = np.rint(keep / (L / M)).astype(np.int64)
    if np.any(idx < 0) or np.any(idx > M) or np.any(np.abs(grid[idx] - keep) > 1e-9 * max(1.0, L)):
        raise ParameterError("kept points must be grid points of the uniform grid")
    return idx, grid[idx]


def _ensemble(u, v, L, M, N, rng, keep, with_W, with_U, primary, chunk=CHUNK):
    if N < 1:
        raise ParameterError("N must be >= 1")
    stream = as_stream(rng)
    idx, kept = _keep_indices(M, L, keep)
    shape = u + v

    def work(gen, size):
        x = brownian_paths(gen, size, M, L, 0.5)
        lw, log_s1 = _batch_log_weight(x, L, u, v)
        out = {"X": x[:, idx], "log_weight": lw, "log_S1": log_s1}
        if with_W:
            out["W"] = brownian_paths(gen, size, M, L, 1.0)[:, idx]
        if with_U:
            g = gen.gamma(shape, 1.0, size)
            u0 = 0.5 * (log_s1 - np.log(g))
            out["G"] = g
            out["U0"] = u0
        return out

    parts = map_chunks(work, stream, N, chunk)
    cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    fields = {"X": cat["X"]}
    scalars = {"log_S1": cat["log_S1"]}
    if with_W:
        fields["W"] = cat["W"]
        fields["V"] = cat["W"] / math.sqrt(2.0)
        fields["H"] = fields["V"] + cat["X"]
    if with_U:
        fields["U"] = cat["U0"][:, None] + cat["X"]
        scalars["G"] = cat["G"]
        scalars["U0"] = cat["U0"]
    ens = WeightedEnsemble(kept, fields, cat["log_weight"], primary, scalars,
                           {"u": u, "v": v, "L": L, "M": M, "N": N})
    if ens.ess_warning:
        log.warning("effective sample size %.1f is below %.0f%% of %d samples",
                    ens.ess, 100 * ESS_WARN_FRACTION, N)
    return ens


def sample_X_ensemble(u: float, v: float, L: float, M: int, N: int, rng, keep=None) -> WeightedEnsemble:
    """``N`` Brownian proposals (variance 1/2 per length) weighted towards the law of X."""
    _check_uv(u, v)
    return _ensemble(u, v, L, M, N, rng, keep, with_W=False, with_U=False, primary="X")


def sample_H_ensemble(u: float, v: float, L: float, M: int, N: int, rng, keep=None) -> WeightedEnsemble:
    """``H = W / sqrt(2) + X``; the weight involves ``X`` only."""
    _check_uv(u, v)
    return _ensemble(u, v, L, M, N, rng, keep, with_W=True, with_U=False, primary="H")


def sample_U_ensemble(u: float, v: float, L: float, M: int, N: int, rng, keep=None) -> WeightedEnsemble:
    """Liouville paths ``U = U(0) + X`` with the zero mode drawn per sample (needs u+v > 0)."""
    _check_uv(u, v, allow_trivial=False)
    return _ensemble(u, v, L, M, N, rng, keep, with_W=True, with_U=True, primary="U")


def resample_zero_mode(x_path: PathSample, u: float, v: float, rng) -> PathSample:
    """Attach a zero mode to an X path: ``U(0) = log(S1 / G) / 2`` with G ~ Gamma(u+v, 1).

    Given the shape X, the density of ``a = U(0)`` is proportional to
    ``exp(-2(u+v)a - exp(-2a) S1)``; ``t = exp(-2a) S1`` is then Gamma(u+v, 1).
    """
    _check_uv(u, v, allow_trivial=False)
    gen = as_generator(rng)
    L = float(x_path.grid[-1] - x_path.grid[0])
    log_s1 = float(log_exp_integral(x_path.values, L))
    g = gen.gamma(u + v, 1.0)
    u0 = 0.5 * (log_s1 - math.log(g))
    return PathSample(x_path.grid, u0 + np.asarray(x_path.values), x_path.log_weight)
