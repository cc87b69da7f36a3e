"""Gillespie simulation of the open ASEP on the extended state (tau, N).

``N`` counts particles that entered at site 1 from the left reservoir minus
those that left through it. Event table layout for ``ell`` sites:

* ``0 .. ell-2``        right hop across bond ``b`` (site b -> b+1), rate ``tau_b (1 - tau_{b+1})``
* ``ell-1 .. 2ell-3``   left hop across bond ``b``, rate ``q tau_{b+1} (1 - tau_b)``
* ``2ell-2 .. 2ell+1``  left create (alpha), left annihilate (gamma),
  right create (delta), right annihilate (beta)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .params import ModelParams
from .rng import as_generator

UNIFORM_BLOCK = 1 << 16
EVENT_NAMES = ("left_create", "left_annihilate", "right_create", "right_annihilate")


class AbsorbingStateError(RuntimeError):
    """Every event rate vanished; the chain cannot move."""


@dataclass
class Configuration:
    tau: np.ndarray
    N: int = 0
    t: float = 0.0

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=np.int8).copy()
        if self.tau.ndim != 1 or len(self.tau) < 1:
            raise ValueError("tau must be a nonempty 1-d vector")
        if np.any((self.tau != 0) & (self.tau != 1)):
            raise ValueError("tau entries must be 0 or 1")
        self.N = int(self.N)
        self.t = float(self.t)

    @property
    def ell(self) -> int:
        return len(self.tau)

    def copy(self) -> "Configuration":
        return Configuration(self.tau, self.N, self.t)


@dataclass(frozen=True)
class EventTable:
    """Rates of every event out of one configuration (see module docstring for layout)."""

    rates: np.ndarray

    @property
    def total(self) -> float:
        return float(self.rates.sum())

    def describe(self, ell: int) -> dict:
        """Map of human-readable event names to positive rates."""
        out = {}
        for k, r in enumerate(self.rates):
            if r <= 0:
                continue
            if k < ell - 1:
                out[f"hop_right_{k + 1}"] = float(r)
            elif k < 2 * ell - 2:
                out[f"hop_left_{k - ell + 2}"] = float(r)
            else:
                out[EVENT_NAMES[k - (2 * ell - 2)]] = float(r)
        return out


def _rate_vector(params: ModelParams) -> np.ndarray:
    return np.array([params.q, params.alpha, params.gamma, params.delta, params.beta])


def event_table(config: Configuration, params: ModelParams) -> EventTable:
    tau = config.tau.astype(float)
    ell = len(tau)
    rates = np.zeros(2 * ell + 2)
    rates[: ell - 1] = tau[:-1] * (1 - tau[1:])
    rates[ell - 1 : 2 * ell - 2] = params.q * tau[1:] * (1 - tau[:-1])
    base = 2 * ell - 2
    rates[base] = params.alpha * (1 - tau[0])
    rates[base + 1] = params.gamma * tau[0]
    rates[base + 2] = params.delta * (1 - tau[-1])
    rates[base + 3] = params.beta * tau[-1]
    return EventTable(rates)


def _apply(tau, k, ell):
    """Apply event ``k`` in place; return the change in N."""
    base = 2 * ell - 2
    if k < ell - 1:
        tau[k], tau[k + 1] = 0, 1
    elif k < base:
        b = k - (ell - 1)
        tau[b], tau[b + 1] = 1, 0
    elif k == base:
        tau[0] = 1
        return 1
    elif k == base + 1:
        tau[0] = 0
        return -1
    elif k == base + 2:
        tau[-1] = 1
    else:
        tau[-1] = 0
    return 0


def step(config: Configuration, params: ModelParams, rng) -> Configuration:
    """One Gillespie event: exponential holding time, then a rate-weighted event."""
    gen = as_generator(rng)
    table = event_table(config, params)
    total = table.total
    if not total > 0.0:
        raise AbsorbingStateError("all event rates are zero")
    dt = gen.exponential(1.0 / total)
    k = int(np.searchsorted(np.cumsum(table.rates), gen.random() * total, side="right"))
    k = min(k, len(table.rates) - 1)
    new = config.copy()
    new.N += _apply(new.tau, k, config.ell)
    new.t += dt
    return new


def height_profile(config: Configuration) -> np.ndarray:
    """``h(0) = -2N``, ``h(i) - h(i-1) = 2 tau_i - 1``."""
    inc = 2 * config.tau.astype(np.int64) - 1
    return np.concatenate([[-2 * config.N], -2 * config.N + np.cumsum(inc)])


@numba.njit(cache=True)
def _site_rates(tau, rates, ell, s, rv):
    # refresh every rate that depends on site s; returns the change in total
    q, alpha, gamma, delta, beta = rv[0], rv[1], rv[2], rv[3], rv[4]
    delta_total = 0.0
    for b in (s - 1, s):
        if 0 <= b < ell - 1:
            new_r = 1.0 if (tau[b] == 1 and tau[b + 1] == 0) else 0.0
            delta_total += new_r - rates[b]
            rates[b] = new_r
            new_l = q if (tau[b + 1] == 1 and tau[b] == 0) else 0.0
            delta_total += new_l - rates[ell - 1 + b]
            rates[ell - 1 + b] = new_l
    base = 2 * ell - 2
    if s == 0:
        vals = (alpha * (1 - tau[0]), gamma * tau[0])
        for j in range(2):
            delta_total += vals[j] - rates[base + j]
            rates[base + j] = vals[j]
    if s == ell - 1:
        vals = (delta * (1 - tau[ell - 1]), beta * tau[ell - 1])
        for j in range(2):
            delta_total += vals[j] - rates[base + 2 + j]
            rates[base + 2 + j] = vals[j]
    return delta_total


@numba.njit(cache=True)
def _run_block(tau, state, rates, rv, u_time, u_pick, snap_times, snap_tau, snap_N, snap_ptr, t_end):
    """Advance until uniforms run out, ``t_end`` is passed, or an absorbing state.

    ``state`` = [N, t, total, events, right_net] (float64). Returns the number
    of uniforms consumed, or -1 on an absorbing state.
    """
    ell = tau.shape[0]
    n_ev = rates.shape[0]
    base = 2 * ell - 2
    N = state[0]
    t = state[1]
    total = state[2]
    events = state[3]
    right_net = state[4]
    used = 0
    status = 0
    while used < u_time.shape[0]:
        if total <= 1e-300:
            status = -1
            break
        dt = -np.log(1.0 - u_time[used]) / total
        t_next = t + dt
        # record snapshots that fall inside the holding interval
        while snap_ptr[0] < snap_times.shape[0] and snap_times[snap_ptr[0]] < t_next:
            k = snap_ptr[0]
            for i in range(ell):
                snap_tau[k, i] = tau[i]
            snap_N[k] = N
            snap_ptr[0] += 1
        if t_next >= t_end:
            t = t_end
            used += 1
            break
        target = u_pick[used] * total
        acc = 0.0
        k = n_ev - 1
        for j in range(n_ev):
            acc += rates[j]
            if acc > target:
                k = j
                break
        while rates[k] <= 0.0:  # rounding fallback
            k -= 1
        if k < ell - 1:
            tau[k] = 0
            tau[k + 1] = 1
            total += _site_rates(tau, rates, ell, k, rv)
            total += _site_rates(tau, rates, ell, k + 1, rv)
        elif k < base:
            b = k - (ell - 1)
            tau[b] = 1
            tau[b + 1] = 0
            total += _site_rates(tau, rates, ell, b, rv)
            total += _site_rates(tau, rates, ell, b + 1, rv)
        elif k == base:
            tau[0] = 1
            N += 1
            total += _site_rates(tau, rates, ell, 0, rv)
        elif k == base + 1:
            tau[0] = 0
            N -= 1
            total += _site_rates(tau, rates, ell, 0, rv)
        elif k == base + 2:
            tau[ell - 1] = 1
            right_net += 1
            total += _site_rates(tau, rates, ell, ell - 1, rv)
        else:
            tau[ell - 1] = 0
            right_net -= 1
            total += _site_rates(tau, rates, ell, ell - 1, rv)
        t = t_next
        events += 1
        used += 1
        if (events % 4096) == 0:
            total = 0.0
            for j in range(n_ev):
                total += rates[j]
    state[0] = N
    state[1] = t
    state[2] = total
    state[3] = events
    state[4] = right_net
    if status < 0:
        return -1
    return used


@dataclass
class DynamicsRun:
    """Snapshots and bookkeeping of one trajectory."""

    snapshot_times: np.ndarray
    snapshot_tau: np.ndarray
    snapshot_N: np.ndarray
    final: Configuration
    events: int
    left_net: int
    right_net: int
    initial_particles: int = 0
    extra: dict = field(default_factory=dict)

    def configurations(self) -> list[Configuration]:
        return [Configuration(tau, n, t) for tau, n, t in
                zip(self.snapshot_tau, self.snapshot_N, self.snapshot_times)]


def simulate(params: ModelParams, initial: Configuration, t_end: float, snapshot_times, rng) -> DynamicsRun:
    """Run one trajectory from ``initial`` up to time ``t_end``.

    ``snapshot_times`` (absolute, nondecreasing) are sampled as the state in
    force at that instant, i.e. in continuous time, not per event.
    """
    gen = as_generator(rng)
    tau = initial.tau.astype(np.int8).copy()
    ell = len(tau)
    rv = _rate_vector(params)
    rates = event_table(initial, params).rates.copy()
    snaps = np.asarray(snapshot_times, dtype=float)
    if np.any(np.diff(snaps) < 0):
        raise ValueError("snapshot times must be nondecreasing")
    snap_tau = np.zeros((len(snaps), ell), dtype=np.int8)
    snap_N = np.zeros(len(snaps), dtype=np.int64)
    ptr = np.zeros(1, dtype=np.int64)
    state = np.array([initial.N, initial.t, rates.sum(), 0.0, 0.0])
    n0 = int(tau.sum())
    while state[1] < t_end:
        u = gen.random((2, UNIFORM_BLOCK))
        used = _run_block(tau, state, rates, rv, u[0], u[1], snaps, snap_tau, snap_N, ptr, float(t_end))
        if used < 0:
            raise AbsorbingStateError(f"absorbing state reached at t={state[1]:.6g}")
    # snapshots exactly at t_end
    while ptr[0] < len(snaps) and snaps[ptr[0]] <= t_end:
        snap_tau[ptr[0]] = tau
        snap_N[ptr[0]] = int(state[0])
        ptr[0] += 1
    final = Configuration(tau, int(state[0]), float(state[1]))
    return DynamicsRun(
        snapshot_times=snaps[: ptr[0]],
        snapshot_tau=snap_tau[: ptr[0]],
        snapshot_N=snap_N[: ptr[0]],
        final=final,
        events=int(state[3]),
        left_net=int(state[0]) - initial.N,
        right_net=int(state[4]),
        initial_particles=n0,
    )


def sample_stationary_dynamics(params: ModelParams, burn_in_time: float, n_samples: int,
                               thin_time: float | None = None, rng=0,
                               initial: Configuration | None = None) -> list[Configuration]:
    """Snapshots every ``thin_time`` after ``burn_in_time``.

    ``thin_time`` defaults to ``ell``, a heuristic relaxation scale; the
    default start is the empty lattice.
    """
    if n_samples <= 0:
        return []
    run = run_stationary_dynamics(params, burn_in_time, n_samples, thin_time, rng, initial)
    return run.configurations()


def run_stationary_dynamics(params, burn_in_time, n_samples, thin_time=None, rng=0, initial=None) -> DynamicsRun:
    ell = params.ell if initial is None else initial.ell
    if initial is None:
        initial = Configuration(np.zeros(ell, dtype=np.int8))
    thin = float(ell if thin_time is None else thin_time)
    if thin <= 0 or burn_in_time < 0:
        raise ValueError("thin_time must be positive and burn_in_time nonnegative")
    times = initial.t + burn_in_time + thin * np.arange(1, n_samples + 1)
    return simulate(params, initial, float(times[-1]) if n_samples else initial.t + burn_in_time, times, rng)


def empirical_distribution(snapshot_tau: np.ndarray) -> np.ndarray:
    """Histogram over {0,1}^ell with bit ``i`` of the index equal to ``tau_{i+1}``."""
    snapshot_tau = np.asarray(snapshot_tau)
    ell = snapshot_tau.shape[1]
    idx = snapshot_tau.astype(np.int64) @ (1 << np.arange(ell, dtype=np.int64))
    return np.bincount(idx, minlength=2**ell) / len(snapshot_tau)
