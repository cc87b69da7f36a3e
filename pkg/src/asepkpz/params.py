"""Model parameters, density/rate dictionaries and q-calculus helpers.

The bulk right-hopping rate p is fixed to 1 throughout; q is the left
hopping rate and must lie in [0, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

RATE_TOL = 1e-12

CONFIG_KEYS = {
    "q": float,
    "alpha": float,
    "beta": float,
    "gamma": float,
    "delta": float,
    "rho_a": float,
    "rho_b": float,
    "ell": int,
    "epsilon": float,
    "L": float,
    "u": float,
    "v": float,
}


class ParameterError(ValueError):
    """Invalid or inconsistent model parameters."""


def q_int(n, q):
    """q-deformed integer ``[n]_q = (1 - q**n) / (1 - q)``.

    Works elementwise on arrays of ``n``. At ``q = 0`` every ``[n]_q`` is 1.
    """
    if not 0.0 <= q < 1.0:
        raise ParameterError(f"q must lie in [0, 1), got {q}")
    n = np.asarray(n)
    if np.any(n < 1):
        raise ParameterError("q_int needs n >= 1")
    if q == 0.0:
        out = np.ones(n.shape)
    else:
        out = -np.expm1(n * math.log(q)) / (1.0 - q)
    return float(out) if out.ndim == 0 else out


def log_q_int(n, q):
    """``log [n]_q``, accurate for large ``n`` and for q close to 1."""
    n = np.asarray(n, dtype=float)
    if q == 0.0:
        return np.zeros(n.shape)
    return np.log(-np.expm1(n * math.log(q))) - math.log1p(-q)


def q_pochhammer(a: float, q: float, k: int) -> float:
    """Finite q-Pochhammer symbol ``(a; q)_k = prod_{j<k} (1 - a q**j)``."""
    if k < 0:
        raise ParameterError("q_pochhammer needs k >= 0")
    out = 1.0
    qj = 1.0
    for _ in range(k):
        out *= 1.0 - a * qj
        qj *= q
    return out


def _check_q(q: float) -> None:
    if not (0.0 <= q < 1.0) or math.isnan(q):
        raise ParameterError(f"q must lie in [0, 1), got {q}")


def _check_density(name: str, rho: float) -> None:
    if not (0.0 <= rho <= 1.0) or math.isnan(rho):
        raise ParameterError(f"{name} must lie in [0, 1], got {rho}")


def _left_balance(alpha, gamma, rho, q):
    # alpha(1 - rho) - gamma rho - (1 - q) rho (1 - rho); the ratio form is
    # singular at rho in {0, 1}, this form is not.
    return alpha * (1.0 - rho) - gamma * rho - (1.0 - q) * rho * (1.0 - rho)


def _solve_boundary_density(inflow: float, outflow: float, q: float) -> float:
    """Root in [0, 1] of ``inflow/rho - outflow/(1 - rho) = 1 - q``.

    The right boundary maps onto this with ``rho -> 1 - rho_b``.
    """
    if inflow == 0.0 and outflow == 0.0:
        raise ParameterError("degenerate boundary: no injection and no ejection")
    if inflow == 0.0:
        # 0/rho is 0 for rho in (0, 1], leaving -outflow/(1-rho) = 1-q < 0.
        raise ParameterError("no density in [0, 1] is consistent with a zero injection rate")
    if outflow == 0.0:
        # inflow/rho = 1-q directly; the quadratic would add a spurious root at rho = 1
        r = inflow / (1.0 - q)
        if r > 1.0 + RATE_TOL:
            raise ParameterError(
                f"rates (in={inflow}, out=0, q={q}) admit no boundary density in [0, 1]")
        return min(r, 1.0)
    a = 1.0 - q
    b = -(1.0 - q + inflow + outflow)
    c = inflow
    if a == 0.0:  # pragma: no cover - q < 1 is enforced
        raise ParameterError("q = 1 is excluded")
    disc = b * b - 4.0 * a * c
    sq = math.sqrt(max(disc, 0.0))
    # numerically stable pair of roots
    t = -0.5 * (b - sq) if b < 0 else -0.5 * (b + sq)
    roots = {t / a, c / t if t != 0.0 else float("inf")}
    admissible = []
    for r in roots:
        if -RATE_TOL <= r <= 1.0 + RATE_TOL:
            r = min(max(r, 0.0), 1.0)
            if r >= 1.0 - RATE_TOL:
                # ratio form at rho = 1 needs outflow = 0 and inflow = 1 - q
                if outflow > RATE_TOL or abs(inflow - (1.0 - q)) > RATE_TOL * max(1.0, inflow):
                    continue
                r = 1.0
            admissible.append(r)
    if not admissible:
        raise ParameterError(
            f"rates (in={inflow}, out={outflow}, q={q}) admit no boundary density in [0, 1]"
        )
    if len(admissible) > 1 and abs(admissible[0] - admissible[1]) > RATE_TOL:
        raise ParameterError(f"ambiguous boundary density: roots {sorted(admissible)}")
    return admissible[0]


def _is_liggett(alpha, beta, gamma, delta, rho_a, rho_b, q) -> bool:
    # alpha + gamma/q = 1 multiplied through by q, so q -> 0 needs no special case
    return (
        abs(gamma - q * (1.0 - alpha)) <= RATE_TOL
        and abs(delta - q * (1.0 - beta)) <= RATE_TOL
        and alpha <= 1.0
        and beta <= 1.0
    )


@dataclass(frozen=True)
class ModelParams:
    """Open ASEP rates with p = 1 and the matching boundary densities.

    Construct through :func:`from_densities` or :func:`from_rates`; the
    constructor re-checks the density/rate relations and the Liggett flag.
    """

    q: float
    alpha: float
    beta: float
    gamma: float
    delta: float
    rho_a: float
    rho_b: float
    liggett: bool
    ell: int = 1

    def __post_init__(self):
        _check_q(self.q)
        for name in ("alpha", "beta", "gamma", "delta"):
            val = getattr(self, name)
            if not (val >= 0.0) or math.isinf(val):
                raise ParameterError(f"{name} must be a finite nonnegative rate, got {val}")
        _check_density("rho_a", self.rho_a)
        _check_density("rho_b", self.rho_b)
        if int(self.ell) != self.ell or self.ell < 1:
            raise ParameterError(f"ell must be a positive integer, got {self.ell}")
        scale = max(1.0, self.alpha, self.gamma)
        if abs(_left_balance(self.alpha, self.gamma, self.rho_a, self.q)) > RATE_TOL * scale:
            raise ParameterError("rho_a is inconsistent with (alpha, gamma, q)")
        scale = max(1.0, self.beta, self.delta)
        if abs(_left_balance(self.beta, self.delta, 1.0 - self.rho_b, self.q)) > RATE_TOL * scale:
            raise ParameterError("rho_b is inconsistent with (beta, delta, q)")
        if self.liggett:
            expected = (self.rho_a, 1.0 - self.rho_b, self.q * (1.0 - self.rho_a), self.q * self.rho_b)
            got = (self.alpha, self.beta, self.gamma, self.delta)
            if any(abs(x - y) > RATE_TOL for x, y in zip(got, expected)):
                raise ParameterError("liggett flag set but rates do not satisfy Liggett's condition")

    @property
    def p(self) -> float:
        return 1.0

    def with_ell(self, ell: int) -> "ModelParams":
        return ModelParams(
            self.q, self.alpha, self.beta, self.gamma, self.delta,
            self.rho_a, self.rho_b, self.liggett, int(ell),
        )

    def require_mpa(self) -> None:
        """Raise unless the matrix-product normalization is finite (rho_b < rho_a)."""
        if not self.rho_b < self.rho_a:
            raise ParameterError(
                f"matrix product normalization is infinite unless rho_b < rho_a "
                f"(got rho_a={self.rho_a}, rho_b={self.rho_b})"
            )

    def as_dict(self) -> dict:
        return {
            "p": 1.0,
            "q": self.q,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "delta": self.delta,
            "rho_a": self.rho_a,
            "rho_b": self.rho_b,
            "liggett": self.liggett,
            "ell": self.ell,
        }


def from_densities(rho_a: float, rho_b: float, q: float, ell: int = 1, *, for_mpa: bool = False) -> ModelParams:
    """Liggett-condition rates for reservoir densities ``rho_a``, ``rho_b``.

    ``alpha = rho_a``, ``gamma = q (1 - rho_a)``, ``delta = q rho_b`` and
    ``beta = 1 - rho_b``. With ``for_mpa=True`` parameter sets whose
    matrix-product normalization diverges are rejected.
    """
    _check_q(q)
    _check_density("rho_a", rho_a)
    _check_density("rho_b", rho_b)
    params = ModelParams(
        q=float(q),
        alpha=float(rho_a),
        beta=float(1.0 - rho_b),
        gamma=float(q * (1.0 - rho_a)),
        delta=float(q * rho_b),
        rho_a=float(rho_a),
        rho_b=float(rho_b),
        liggett=True,
        ell=ell,
    )
    if for_mpa:
        params.require_mpa()
    return params


def from_rates(alpha: float, beta: float, gamma: float, delta: float, q: float,
               ell: int = 1, *, for_mpa: bool = False) -> ModelParams:
    """Boundary densities for arbitrary nonnegative rates.

    Solves ``alpha/rho_a - gamma/(1-rho_a) = 1-q`` and
    ``beta/(1-rho_b) - delta/rho_b = 1-q`` for the root in [0, 1].
    """
    _check_q(q)
    for name, val in (("alpha", alpha), ("beta", beta), ("gamma", gamma), ("delta", delta)):
        if not val >= 0.0:
            raise ParameterError(f"{name} must be nonnegative, got {val}")
    rho_a = _solve_boundary_density(alpha, gamma, q)
    rho_b = 1.0 - _solve_boundary_density(beta, delta, q)
    liggett = _is_liggett(alpha, beta, gamma, delta, rho_a, rho_b, q)
    if liggett:
        # snap to the exact Liggett densities; the roots agree to rounding
        rho_a, rho_b = float(alpha), float(1.0 - beta)
    params = ModelParams(float(q), float(alpha), float(beta), float(gamma), float(delta),
                         rho_a, rho_b, liggett, ell)
    if for_mpa:
        params.require_mpa()
    return params


@dataclass(frozen=True)
class ScalingParams:
    """Weak-asymmetry scaling: ``q = exp(-epsilon)``, ``ell = round(4 L / epsilon**2)``."""

    epsilon: float
    L: float
    u: float
    v: float

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not self.L > 0.0:
            raise ParameterError(f"L must be positive, got {self.L}")
        if not self.u + self.v > 0.0:
            raise ParameterError("u+v must be positive")
        for name, rho in (("rho_a", self.rho_a), ("rho_b", self.rho_b)):
            if not 0.0 < rho < 1.0:
                raise ParameterError(
                    f"epsilon={self.epsilon} too large for (u={self.u}, v={self.v}): {name}={rho} not in (0, 1)"
                )

    @property
    def q(self) -> float:
        return math.exp(-self.epsilon)

    @property
    def ell(self) -> int:
        # round half up; Python's round() would use banker's rounding
        return max(1, int(math.floor(4.0 * self.L / self.epsilon**2 + 0.5)))

    @property
    def rho_a(self) -> float:
        return 0.5 + self.u * self.epsilon / 4.0

    @property
    def rho_b(self) -> float:
        return 0.5 - self.v * self.epsilon / 4.0

    @property
    def lattice_spacing(self) -> float:
        """Continuum length of one lattice step, ``epsilon**2 / 4``."""
        return self.epsilon**2 / 4.0

    def as_dict(self) -> dict:
        return {"epsilon": self.epsilon, "L": self.L, "u": self.u, "v": self.v,
                "q": self.q, "ell": self.ell, "rho_a": self.rho_a, "rho_b": self.rho_b}


def weak_asymmetry(epsilon: float, L: float, u: float, v: float) -> tuple[ScalingParams, ModelParams]:
    """Discrete ASEP parameters approximating KPZ on [0, L] with boundary parameters (u, v)."""
    sp = ScalingParams(float(epsilon), float(L), float(u), float(v))
    mp = from_densities(sp.rho_a, sp.rho_b, sp.q, ell=sp.ell, for_mpa=True)
    return sp, mp


def read_config(path: str | Path) -> dict:
    """Parse a plain-text ``key=value`` parameter file.

    Blank lines and ``#`` comments are ignored; unknown keys are an error.
    """
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ParameterError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key](val)
        except ValueError as exc:
            raise ParameterError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return values
