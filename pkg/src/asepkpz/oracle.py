"""Brute-force ground truth for small systems.

Configuration ``x`` in ``range(2**ell)`` encodes ``tau_i`` as bit ``i - 1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve
from scipy.special import logsumexp

from .params import ModelParams, ParameterError
from .walks import walk_log_weights

MAX_GENERATOR_ELL = 14
MAX_WALK_ELL = 10
MAX_WALK_NMAX = 40


@dataclass(frozen=True)
class GeneratorMatrix:
    """Rate matrix ``Q[x, y]`` (x -> y) with ``Q[x, x] = -sum_y Q[x, y]``.

    Distributions evolve by ``d pi/dt = Q^T pi``; every column of ``Q^T``
    sums to zero.
    """

    ell: int
    Q: sp.csr_matrix

    @property
    def evolution(self) -> sp.csr_matrix:
        return self.Q.T.tocsr()


def _transitions(params: ModelParams, ell: int):
    """Yield ``(x, y, rate)`` for every positive-rate event out of each state."""
    p, q = 1.0, params.q
    for x in range(2**ell):
        for i in range(ell - 1):
            a = (x >> i) & 1
            b = (x >> (i + 1)) & 1
            flip = x ^ (0b11 << i)
            if a == 1 and b == 0 and p > 0:
                yield x, flip, p
            elif a == 0 and b == 1 and q > 0:
                yield x, flip, q
        first = x & 1
        if first == 0 and params.alpha > 0:
            yield x, x | 1, params.alpha
        if first == 1 and params.gamma > 0:
            yield x, x & ~1, params.gamma
        last_bit = 1 << (ell - 1)
        if x & last_bit:
            if params.beta > 0:
                yield x, x & ~last_bit, params.beta
        elif params.delta > 0:
            yield x, x | last_bit, params.delta


def build_generator(params: ModelParams, ell: int | None = None) -> GeneratorMatrix:
    ell = params.ell if ell is None else int(ell)
    if ell < 1:
        raise ParameterError("ell must be >= 1")
    if ell > MAX_GENERATOR_ELL:
        raise ParameterError(f"ell={ell} exceeds the oracle guard {MAX_GENERATOR_ELL}")
    n = 2**ell
    trans = list(_transitions(params, ell))
    if trans:
        rows, cols, rates = (np.array(c) for c in zip(*trans))
    else:
        rows = cols = np.zeros(0, dtype=int)
        rates = np.zeros(0)
    off = sp.coo_matrix((rates, (rows, cols)), shape=(n, n)).tocsr()
    out = np.asarray(off.sum(axis=1)).ravel()
    Q = (off - sp.diags(out)).tocsr()
    return GeneratorMatrix(ell, Q)


def stationary_solve(gen: GeneratorMatrix) -> np.ndarray:
    """Unique stationary distribution of the chain.

    The chain need not be irreducible, but it must have exactly one closed
    communicating class; otherwise the stationary law is not unique.
    """
    n = gen.Q.shape[0]
    adj = gen.Q.copy()
    adj.setdiag(0)
    adj.eliminate_zeros()
    n_comp, labels = connected_components(adj, directed=True, connection="strong")
    if n_comp > 1:
        # a class is closed when no edge leaves it
        coo = adj.tocoo()
        leaving = labels[coo.row] != labels[coo.col]
        open_classes = set(labels[coo.row[leaving]].tolist())
        closed = [c for c in range(n_comp) if c not in open_classes]
        if len(closed) != 1:
            raise ParameterError(f"reducible chain with {len(closed)} closed classes; no unique stationary law")
    A = gen.evolution.tolil()
    A[0, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[0] = 1.0
    pi = spsolve(A.tocsc(), rhs)
    pi = np.where(np.abs(pi) < 1e-15, 0.0, pi)
    resid = np.max(np.abs(gen.evolution @ pi)) if n > 1 else 0.0
    if resid > 1e-12 or np.any(pi < -1e-12):
        raise ParameterError(f"stationary solve failed (residual {resid:.3e})")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def oracle_distribution(params: ModelParams, ell: int | None = None) -> np.ndarray:
    return stationary_solve(build_generator(params, ell))


@dataclass(frozen=True)
class WalkMeasure:
    """Exact law of the weighted walks and the induced law of ``tau``.

    ``walks[k]`` is ``(n_0, ..., n_ell)``; ``log_omega[k]`` its log weight and
    ``nu[k]`` its probability. ``tau_marginal`` is indexed like the oracle.
    """

    walks: np.ndarray
    log_omega: np.ndarray
    nu: np.ndarray
    log_z: float
    tau_marginal: np.ndarray

    def correlation(self, sites) -> float:
        """``<tau_{i1} ... tau_{ik}>`` from the walk formula (1-based sites)."""
        steps = np.diff(self.walks, axis=1)
        factor = np.ones(len(self.nu))
        for i in sites:
            factor = factor * (1 + steps[:, i - 1]) / 2.0
        return float(self.nu @ factor)


def conditional_tau_probability(walk, tau) -> float:
    """``P(tau | n) = prod_i (1 + (n_i - n_{i-1})(2 tau_i - 1)) / 2``."""
    steps = np.diff(np.asarray(walk))
    signs = 2 * np.asarray(tau) - 1
    return float(np.prod((1 + steps * signs) / 2.0))


def enumerate_walk_measure(params: ModelParams, n_max: int, ell: int | None = None) -> WalkMeasure:
    """Enumerate every walk with ``1 <= n_i <= n_max`` and its weight.

    Enumeration is vectorized over step patterns; weights stay in log space
    so nothing underflows.
    """
    ell = params.ell if ell is None else int(ell)
    if ell > MAX_WALK_ELL or n_max > MAX_WALK_NMAX:
        raise ParameterError(f"walk enumeration guard: ell <= {MAX_WALK_ELL}, n_max <= {MAX_WALK_NMAX}")
    params.require_mpa()
    if params.rho_a >= 1.0:
        raise ParameterError("rho_a = 1 gives every walk zero weight")
    patterns = np.array(list(itertools.product((-1, 0, 1), repeat=ell)), dtype=np.int64).reshape(-1, ell)
    starts = np.arange(1, n_max + 1)
    heights = np.concatenate(
        [np.repeat(starts, len(patterns))[:, None],
         np.repeat(starts, len(patterns))[:, None] + np.cumsum(np.tile(patterns, (n_max, 1)), axis=1)],
        axis=1,
    )
    ok = np.all((heights >= 1) & (heights <= n_max), axis=1)
    walks = heights[ok]
    log_omega = walk_log_weights(params, walks)
    log_z = float(logsumexp(log_omega))
    nu = np.exp(log_omega - log_z)

    # tau law: contract the step-pattern tensor with F[step, tau]
    pattern_index = np.zeros(len(walks), dtype=np.int64)
    steps = np.diff(walks, axis=1)
    for i in range(ell):
        pattern_index = pattern_index * 3 + (steps[:, i] + 1)
    tensor = np.bincount(pattern_index, weights=nu, minlength=3**ell).reshape((3,) * ell)
    F = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])  # rows: step -1, 0, +1; cols: tau 0, 1
    for axis in range(ell):
        tensor = np.moveaxis(np.tensordot(tensor, F, axes=([axis], [0])), -1, axis)
    # tensor axis i is tau_{i+1}; flatten so that bit i of the index is tau_{i+1}
    marginal = tensor.transpose(tuple(reversed(range(ell)))).reshape(-1)
    return WalkMeasure(walks, log_omega, nu, log_z, marginal)
