"""Exact sampling of the reweighted walks behind the ASEP steady state.

A walk ``n = (n_0, ..., n_ell)`` on the positive integers moves by -1, 0
or +1 per step and carries weight

    Omega(n) = w_a**n_0 * w_b**n_ell * prod_i v(n_{i-1}, n_i) * prod_i [n_i]_q

with ``w_a = (1-rho_a)/rho_a``, ``w_b = rho_b/(1-rho_b)``, ``v = 2`` for a
flat step and 1 otherwise. Summing Omega over walks gives ``Z_ell``.
Samples are drawn forward from a backward log-space partition table, so
the law is exactly Omega normalized over walks with ``n_i <= n_max``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import mpa as _mpa
from .params import ModelParams, ParameterError, ScalingParams, log_q_int
from .rng import as_generator

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class Walk:
    n: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.n, dtype=np.int64)
        if n.ndim != 1 or len(n) < 1:
            raise ValueError("a walk needs at least one height")
        if np.any(n < 1):
            raise ValueError("walk heights must be strictly positive")
        if np.any(np.abs(np.diff(n)) > 1):
            raise ValueError("walk steps must lie in {-1, 0, +1}")
        object.__setattr__(self, "n", n)

    @property
    def ell(self) -> int:
        return len(self.n) - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.n)


@dataclass(frozen=True)
class JointWalk:
    """Walk ``n`` with companion ``m``: ``m`` moves (by +-1) exactly when ``n`` is flat."""

    n: np.ndarray
    m: np.ndarray

    def __post_init__(self):
        n = Walk(self.n).n
        m = np.asarray(self.m, dtype=np.int64)
        if m.shape != n.shape or m[0] != 0:
            raise ValueError("m must match n in length and start at 0")
        dn, dm = np.diff(n), np.diff(m)
        if np.any(np.abs(dm) > 1) or np.any((np.abs(dm) == 1) != (dn == 0)):
            raise ValueError("(n, m) steps must lie in {(+-1, 0), (0, +-1)}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "m", m)

    @property
    def sigma(self) -> np.ndarray:
        return np.diff(self.m)

    @property
    def tau(self) -> np.ndarray:
        """Occupations from ``2 tau_i - 1 = (n_i - n_{i-1}) + sigma_i``."""
        return ((np.diff(self.n) + self.sigma + 1) // 2).astype(np.int8)

    def height_increments(self) -> np.ndarray:
        """``h(i) - h(0) = n_i - n_0 + m_i``, i = 0..ell."""
        return self.n - self.n[0] + self.m


def walk_log_weights(params: ModelParams, walks) -> np.ndarray:
    """``log Omega`` for each row of ``walks``; forbidden walks get ``-inf``."""
    walks = np.atleast_2d(np.asarray(walks, dtype=np.int64))
    steps = np.diff(walks, axis=1)
    bad = np.any(walks <= 0, axis=1) | np.any(np.abs(steps) > 1, axis=1)
    safe = np.where(walks >= 1, walks, 1)
    log_wa = math.log((1.0 - params.rho_a) / params.rho_a) if params.rho_a < 1.0 else -math.inf
    log_wb = math.log(params.rho_b / (1.0 - params.rho_b)) if params.rho_b > 0.0 else -math.inf
    out = walks[:, 0] * log_wa + walks[:, -1] * log_wb
    out = out + LOG2 * np.sum(steps == 0, axis=1) + np.sum(log_q_int(safe, params.q), axis=1)
    out = np.asarray(out, dtype=float)
    out[bad] = -np.inf
    return out


def walk_weight(params: ModelParams, walk) -> float:
    """``log Omega(walk)``; ``-inf`` when a height is <= 0 or a step exceeds 1."""
    n = walk.n if isinstance(walk, (Walk, JointWalk)) else walk
    return float(walk_log_weights(params, np.asarray(n)[None, :])[0])


@dataclass(frozen=True)
class PartitionTable:
    """Backward partition sums ``log_R[i, n-1]`` over continuations from height n at step i.

    ``log_R[ell, n-1] = log([n]_q w_b**n)`` and
    ``log_R[i, n-1] = log [n]_q + logsumexp_{n'} (log v(n, n') + log_R[i+1, n'-1])``:
    the site factor ``[n_i]_q`` rides with the step leaving ``n_i``.
    """

    ell: int
    n_max: int
    log_R: np.ndarray
    log_start: np.ndarray
    log_z: float
    cum_down: np.ndarray
    cum_stay: np.ndarray
    start_cdf: np.ndarray


def build_partition_table(params: ModelParams, n_max: int, ell: int | None = None,
                          check_tol: float = 1e-10) -> PartitionTable:
    """Log-space transfer-matrix DP; cross-checked against the matrix product ``Z_ell``."""
    ell = params.ell if ell is None else int(ell)
    params.require_mpa()
    if params.rho_a >= 1.0 or params.rho_b <= 0.0:
        raise ParameterError("boundary densities rho_a = 1 or rho_b = 0 are degenerate for the walk measure")
    if n_max < 1:
        raise ParameterError("n_max must be >= 1")
    heights = np.arange(1, n_max + 1)
    lq = log_q_int(heights, params.q)
    log_wa = math.log((1.0 - params.rho_a) / params.rho_a)
    log_wb = math.log(params.rho_b / (1.0 - params.rho_b))

    log_R = np.empty((ell + 1, n_max))
    log_R[ell] = lq + heights * log_wb
    # transition log-probabilities for steps i = 1..ell from height n at i-1
    cum_down = np.empty((ell, n_max))
    cum_stay = np.empty((ell, n_max))
    for i in range(ell - 1, -1, -1):
        nxt = log_R[i + 1]
        down = np.concatenate([[-np.inf], nxt[:-1]])
        stay = nxt + LOG2
        up = np.concatenate([nxt[1:], [-np.inf]])
        cand = np.stack([down, stay, up])
        tot = logsumexp(cand, axis=0)
        log_R[i] = lq + tot
        with np.errstate(under="ignore"):
            p = np.exp(cand - tot)
        cum_down[i] = np.where(p[1] + p[2] == 0.0, 1.0, p[0])
        cum_stay[i] = np.where(p[2] == 0.0, 1.0, p[0] + p[1])
    log_start = heights * log_wa + log_R[0]
    log_z = float(logsumexp(log_start))
    start_cdf = np.cumsum(np.exp(log_start - log_z))
    start_cdf /= start_cdf[-1]

    if check_tol is not None and params.liggett:
        rep = _mpa.build_representation(params, max(n_max, 2))
        ref = _mpa.log_normalization(rep, ell)
        if n_max >= 2 and abs(math.expm1(log_z - ref)) > check_tol:
            raise ParameterError(f"partition table disagrees with matrix product Z (log {log_z} vs {ref})")
    return PartitionTable(ell, n_max, log_R, log_start, log_z, cum_down, cum_stay, start_cdf)


def sample_walks(table: PartitionTable, rng, size: int) -> np.ndarray:
    """``size`` independent walks, shape ``(size, ell + 1)``."""
    gen = as_generator(rng)
    out = np.empty((size, table.ell + 1), dtype=np.int64)
    u0 = gen.random(size)
    idx = np.minimum(np.searchsorted(table.start_cdf, u0, side="right"), table.n_max - 1)
    n = idx  # zero-based height
    out[:, 0] = n + 1
    steps_u = gen.random((table.ell, size))
    for i in range(table.ell):
        u = steps_u[i]
        cd = table.cum_down[i, n]
        cs = table.cum_stay[i, n]
        n = n + np.where(u < cd, -1, np.where(u < cs, 0, 1))
        out[:, i + 1] = n + 1
    return out


def walk_log_probability(table: PartitionTable, walks) -> np.ndarray:
    """Log-probability of each walk under the sampler's own start and step rules."""
    walks = np.atleast_2d(np.asarray(walks, dtype=np.int64))
    n = walks[:, 0] - 1
    with np.errstate(divide="ignore"):
        out = table.log_start[n] - table.log_z
        for i in range(table.ell):
            step = walks[:, i + 1] - walks[:, i]
            cd = table.cum_down[i, n]
            cs = table.cum_stay[i, n]
            p = np.where(step < 0, cd, np.where(step == 0, cs - cd, 1.0 - cs))
            out = out + np.log(np.maximum(p, 0.0))
            n = walks[:, i + 1] - 1
    return out


def sample_walk(table: PartitionTable, params: ModelParams | None = None, rng=0) -> Walk:
    """One walk; with ``params`` its sampling probability is checked against ``Omega / Z``."""
    walk = Walk(sample_walks(table, rng, 1)[0])
    if params is not None:
        direct = walk_weight(params, walk) - table.log_z
        got = float(walk_log_probability(table, walk.n)[0])
        if not abs(got - direct) <= 1e-9 * max(1.0, abs(direct)):
            raise AssertionError(f"sampled walk probability {got} disagrees with its weight {direct}")
    return walk


def _coins(gen, steps):
    flat = steps == 0
    sign = np.where(gen.random(steps.shape) < 0.5, -1, 1)
    return np.where(flat, sign, 0)


def sample_tau_given_walk(walk, rng) -> np.ndarray:
    """Forced occupation on up/down steps, fair coin on flat steps."""
    gen = as_generator(rng)
    steps = np.diff(walk.n if isinstance(walk, Walk) else np.asarray(walk))
    sigma = _coins(gen, steps)
    return ((steps + sigma + 1) // 2).astype(np.int8)


def sample_joint_batch(table: PartitionTable, rng, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(n, m)`` of shape ``(size, ell + 1)`` for ``size`` joint walks."""
    gen = as_generator(rng)
    n = sample_walks(table, gen, size)
    sigma = _coins(gen, np.diff(n, axis=1))
    m = np.zeros_like(n)
    np.cumsum(sigma, axis=1, out=m[:, 1:])
    return n, m


def sample_joint(table: PartitionTable, params: ModelParams | None = None, rng=0) -> JointWalk:
    n, m = sample_joint_batch(table, rng, 1)
    return JointWalk(n[0], m[0])


def lattice_positions(grid, scaling: ScalingParams, ell: int) -> np.ndarray:
    """Fractional lattice index ``4 x / epsilon**2`` for each grid point, clipped to ``[0, ell]``."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(grid > scaling.L * (1 + 1e-12)):
        raise ParameterError("grid points must lie in [0, L]")
    return np.clip(grid / scaling.lattice_spacing, 0.0, ell)


def interpolate_paths(paths: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Linear interpolation of lattice paths (rows) at fractional indices."""
    paths = np.atleast_2d(paths)
    lo = np.floor(positions).astype(np.int64)
    lo = np.minimum(lo, paths.shape[1] - 1)
    hi = np.minimum(lo + 1, paths.shape[1] - 1)
    frac = positions - lo
    return paths[:, lo] * (1.0 - frac) + paths[:, hi] * frac


def _check_scaling(ell: int, epsilon: float, L: float) -> ScalingParams:
    sp = ScalingParams(epsilon, L, 1.0, 1.0)  # u, v do not enter the geometry
    if sp.ell != ell:
        raise ParameterError(f"walk length {ell} does not match round(4L/eps^2) = {sp.ell}")
    return sp


def rescale_batch(n: np.ndarray, m: np.ndarray, epsilon: float, L: float, grid):
    """``(U_eps, V_eps, H_eps)`` on ``grid`` for batches of joint walks.

    ``U_eps = (eps/2)(n + log(eps^2/4)/eps)``, ``V_eps = (eps/2) m`` and
    ``H_eps = (eps/2)(n - n_0 + m)``, interpolated linearly between lattice
    points ``x = i eps^2/4``.
    """
    n = np.atleast_2d(n)
    m = np.atleast_2d(m)
    sp = _check_scaling(n.shape[1] - 1, epsilon, L)
    pos = lattice_positions(grid, sp, n.shape[1] - 1)
    half = epsilon / 2.0
    n_x = interpolate_paths(n.astype(float), pos)
    m_x = interpolate_paths(m.astype(float), pos)
    U = half * (n_x + math.log(epsilon**2 / 4.0) / epsilon)
    V = half * m_x
    H = half * (n_x - n[:, :1] + m_x)
    return U, V, H


def rescale(jw: JointWalk, epsilon: float, L: float, grid=None):
    """Continuum paths ``(U_eps, V_eps)`` of one joint walk on ``grid`` (default: lattice points)."""
    if grid is None:
        grid = np.arange(jw.n.shape[0]) * epsilon**2 / 4.0
        grid = np.minimum(grid, L)
    U, V, _ = rescale_batch(jw.n[None, :], jw.m[None, :], epsilon, L, grid)
    return U[0], V[0]
