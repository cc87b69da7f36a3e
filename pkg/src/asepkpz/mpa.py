"""Bidiagonal matrix product representation of the open ASEP steady state.

``D`` is upper bidiagonal and ``E`` lower bidiagonal on the basis
``|1>, |2>, ...``; both are stored as coefficient arrays truncated at
``n_max`` (array index ``k`` holds basis state ``n = k + 1``). All products
are row-vector (or column-vector) times bidiagonal, O(n_max) each, with a
running log scale so that ``Z_ell`` never overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .params import ModelParams, ParameterError, q_int, q_pochhammer


@dataclass(frozen=True)
class TruncatedMPA:
    """Coefficients of D, E, <W| and |V> up to the cutoff ``n_max``.

    ``D[n][n] = diag_D[n]``, ``D[n][n+1] = off_D[n]``,
    ``E[n][n] = diag_E[n]``, ``E[n+1][n] = off_E[n]``. The last entries of
    ``off_D`` and ``off_E`` couple to ``n_max + 1`` and are dropped by the
    truncation.
    """

    n_max: int
    q: float
    d: float
    e: float
    diag_D: np.ndarray
    off_D: np.ndarray
    diag_E: np.ndarray
    off_E: np.ndarray
    w: np.ndarray
    v: np.ndarray
    liggett: bool = False

    def __post_init__(self):
        for name in ("diag_D", "off_D", "diag_E", "off_E", "w", "v"):
            arr = getattr(self, name)
            if arr.shape != (self.n_max,):
                raise ValueError(f"{name} must have length n_max={self.n_max}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)

    # --- bidiagonal products -------------------------------------------------
    def row_D(self, r):
        out = r * self.diag_D
        out[1:] += r[:-1] * self.off_D[:-1]
        return out

    def row_E(self, r):
        out = r * self.diag_E
        out[:-1] += r[1:] * self.off_E[:-1]
        return out

    def row_C(self, r):
        """Row vector times ``D + E``."""
        return self.row_D(r) + self.row_E(r)

    def D_col(self, c):
        out = self.diag_D * c
        out[:-1] += self.off_D[:-1] * c[1:]
        return out

    def E_col(self, c):
        out = self.diag_E * c
        out[1:] += self.off_E[:-1] * c[:-1]
        return out

    def C_col(self, c):
        return self.D_col(c) + self.E_col(c)

    def sparse(self):
        """Truncated ``(D, E)`` as scipy CSR matrices."""
        n = self.n_max
        D = sp.diags([self.diag_D, self.off_D[:-1]], [0, 1], shape=(n, n), format="csr")
        E = sp.diags([self.diag_E, self.off_E[:-1]], [0, -1], shape=(n, n), format="csr")
        return D, E


@dataclass(frozen=True)
class AlgebraResidual:
    max_bulk: float
    max_V: float
    max_W: float
    verified_rows: tuple[int, int]

    @property
    def max(self) -> float:
        return max(self.max_bulk, self.max_V, self.max_W)

    def as_dict(self) -> dict:
        return {"max_bulk": self.max_bulk, "max_V": self.max_V, "max_W": self.max_W,
                "verified_rows": list(self.verified_rows)}


def _check_nmax(n_max):
    if int(n_max) != n_max or n_max < 2:
        raise ParameterError(f"n_max must be an integer >= 2, got {n_max}")
    return int(n_max)


def build_representation(params: ModelParams, n_max: int) -> TruncatedMPA:
    """Representation under Liggett's condition (``d = e = q``).

    All nonzero entries of row ``n`` of D, and of column ``n`` of E, equal
    ``[n]_q``; ``w_n = ((1-rho_a)/rho_a)**n`` and
    ``v_n = (rho_b/(1-rho_b))**n [n]_q``.
    """
    if not params.liggett:
        raise ParameterError("rates violate Liggett's condition; use build_general_representation")
    params.require_mpa()
    n_max = _check_nmax(n_max)
    q = params.q
    n = np.arange(1, n_max + 1)
    qn = q_int(n, q)
    qn1 = q_int(n + 1, q)
    w = _geometric(params.rho_a, left=True, n=n)
    v = _geometric(params.rho_b, left=False, n=n) * qn
    return TruncatedMPA(n_max, q, q, q, qn.copy(), qn.copy(), qn.copy(), qn1, w, v, liggett=True)


def _geometric(rho, left, n):
    if left:
        if rho == 0.0:
            raise ParameterError("rho_a = 0 leaves <W| undefined")
        ratio = (1.0 - rho) / rho
    else:
        if rho == 1.0:
            raise ParameterError("rho_b = 1 leaves |V> undefined")
        ratio = rho / (1.0 - rho)
    if ratio == 0.0:
        return np.zeros(n.shape)
    with np.errstate(under="ignore"):
        return np.exp(n * math.log(ratio))


def defining_parameters(params: ModelParams) -> tuple[float, float]:
    """``(d, e)`` for which the geometric w_n and q-Pochhammer v_n solve the boundary equations."""
    if params.alpha <= 0.0 or params.beta <= 0.0:
        raise ParameterError("alpha and beta must be positive to define d and e")
    if params.rho_a >= 1.0 or params.rho_b <= 0.0:
        raise ParameterError("need rho_a < 1 and rho_b > 0 to define d and e")
    e = params.gamma / params.alpha * params.rho_a / (1.0 - params.rho_a)
    d = params.delta * (1.0 - params.rho_b) / (params.beta * params.rho_b)
    return d, e


def alternative_parameters(params: ModelParams) -> tuple[float, float]:
    """The second ``(d, e)`` pair: ``d = rho_a/(rho_a-1)``, ``e = (rho_b-1)/rho_b``."""
    if params.rho_a >= 1.0 or params.rho_b <= 0.0:
        raise ParameterError("need rho_a < 1 and rho_b > 0")
    return params.rho_a / (params.rho_a - 1.0), (params.rho_b - 1.0) / params.rho_b


def build_general_representation(params: ModelParams, d: float | None = None,
                                 e: float | None = None, n_max: int = 64) -> TruncatedMPA:
    """General bidiagonal representation with free parameters ``d`` and ``e``.

    Omitted ``d``/``e`` default to :func:`defining_parameters`. The diagonal
    of D is ``(1 - d q^{n-1})/(1-q)``, of E ``(1 - e q^{n-1})/(1-q)``; the
    off-diagonals split ``u_n = (1-q^n)(1 - ed q^{n-1})`` as
    ``do_n = 1 - q^n`` (D) and ``eo_n = 1 - de q^{n-1}`` (E).
    """
    if params.alpha <= 0.0 or params.beta <= 0.0:
        raise ParameterError("alpha and beta must be positive")
    params.require_mpa()
    n_max = _check_nmax(n_max)
    if d is None or e is None:
        d0, e0 = defining_parameters(params)
        d = d0 if d is None else d
        e = e0 if e is None else e
    q = params.q
    n = np.arange(1, n_max + 1)
    qpow = q ** (n - 1.0)  # 0**0 == 1 as required at q = 0
    scale = 1.0 / (1.0 - q)
    diag_D = (1.0 - d * qpow) * scale
    diag_E = (1.0 - e * qpow) * scale
    off_D = (1.0 - q * qpow) * scale
    off_E = (1.0 - d * e * qpow) * scale
    w = _geometric(params.rho_a, left=True, n=n)
    ratio = np.empty(n_max)
    ratio[0] = 1.0
    for k in range(1, n_max):
        # (ed; q)_k / (q; q)_k built incrementally
        ratio[k] = ratio[k - 1] * (1.0 - d * e * q ** (k - 1)) / (1.0 - q**k)
    v = _geometric(params.rho_b, left=False, n=n) * ratio
    liggett = params.liggett and d == q and e == q
    return TruncatedMPA(n_max, q, float(d), float(e), diag_D, off_D, diag_E, off_E, w, v, liggett=liggett)


# --- log-scaled products ----------------------------------------------------

def _renorm(vec, logscale):
    s = np.max(np.abs(vec))
    if s == 0.0 or not np.isfinite(s):
        raise FloatingPointError("matrix product vanished or overflowed")
    return vec / s, logscale + math.log(s)


def _left_vectors(mpa: TruncatedMPA, ell: int):
    """``<W|(D+E)^i`` for i = 0..ell as (normalized rows, log scales)."""
    rows = np.empty((ell + 1, mpa.n_max))
    logs = np.empty(ell + 1)
    r, ls = _renorm(mpa.w.astype(float), 0.0)
    rows[0], logs[0] = r, ls
    for i in range(1, ell + 1):
        r, ls = _renorm(mpa.row_C(r), ls)
        rows[i], logs[i] = r, ls
    return rows, logs


def _right_vectors(mpa: TruncatedMPA, ell: int):
    """``(D+E)^j|V>`` for j = 0..ell."""
    cols = np.empty((ell + 1, mpa.n_max))
    logs = np.empty(ell + 1)
    c, ls = _renorm(mpa.v.astype(float), 0.0)
    cols[0], logs[0] = c, ls
    for j in range(1, ell + 1):
        c, ls = _renorm(mpa.C_col(c), ls)
        cols[j], logs[j] = c, ls
    return cols, logs


def log_normalization(mpa: TruncatedMPA, ell: int) -> float:
    """``log Z_ell = log <W|(D+E)^ell|V>``."""
    if ell < 0:
        raise ParameterError("ell must be >= 0")
    r, ls = _renorm(mpa.w.astype(float), 0.0)
    for _ in range(ell):
        r, ls = _renorm(mpa.row_C(r), ls)
    z = float(r @ mpa.v)
    if not z > 0.0:
        raise FloatingPointError(f"non-positive normalization {z}")
    return ls + math.log(z)


def normalization(mpa: TruncatedMPA, ell: int) -> float:
    """``Z_ell``; may be ``inf`` for long systems, see :func:`log_normalization`."""
    with np.errstate(over="ignore"):
        return float(np.exp(log_normalization(mpa, ell)))


def current(mpa: TruncatedMPA, ell: int) -> float:
    """Stationary current ``Z_{ell-1} / Z_ell``."""
    if ell < 1:
        raise ParameterError("current needs ell >= 1")
    return math.exp(log_normalization(mpa, ell - 1) - log_normalization(mpa, ell))


def log_weight(mpa: TruncatedMPA, tau) -> float:
    """``log <W| prod_i (D tau_i + E (1 - tau_i)) |V>``."""
    r, ls = _renorm(mpa.w.astype(float), 0.0)
    for t in tau:
        r, ls = _renorm(mpa.row_D(r) if t else mpa.row_E(r), ls)
    z = float(r @ mpa.v)
    if z < 0.0:
        raise FloatingPointError("negative configuration weight")
    return ls + math.log(z) if z > 0.0 else -math.inf


def stationary_probability(mpa: TruncatedMPA, tau, log_z: float | None = None) -> float:
    """Stationary probability of the occupation vector ``tau``.

    Pass a precomputed ``log_z`` when evaluating many configurations of the
    same length.
    """
    tau = np.asarray(tau, dtype=int)
    if tau.ndim != 1 or np.any((tau != 0) & (tau != 1)):
        raise ParameterError("tau must be a 0/1 vector")
    if log_z is None:
        log_z = log_normalization(mpa, len(tau))
    return math.exp(log_weight(mpa, tau) - log_z)


def all_probabilities(mpa: TruncatedMPA, ell: int) -> np.ndarray:
    """P(tau) for every tau in {0,1}^ell; entry ``x`` has ``tau_i`` = bit ``i-1`` of ``x``."""
    log_z = log_normalization(mpa, ell)
    out = np.empty(2**ell)
    for x in range(2**ell):
        tau = [(x >> i) & 1 for i in range(ell)]
        out[x] = math.exp(log_weight(mpa, tau) - log_z)
    return out


def density_profile(mpa: TruncatedMPA, ell: int) -> np.ndarray:
    """Mean occupations ``<tau_i>``, i = 1..ell."""
    if ell < 1:
        raise ParameterError("ell must be >= 1")
    lefts, llog = _left_vectors(mpa, ell - 1)
    rights, rlog = _right_vectors(mpa, ell - 1)
    log_z = log_normalization(mpa, ell)
    prof = np.empty(ell)
    for i in range(1, ell + 1):
        num = float(mpa.row_D(lefts[i - 1]) @ rights[ell - i])
        prof[i - 1] = num * math.exp(llog[i - 1] + rlog[ell - i] - log_z)
    return prof


def verify_algebra(mpa: TruncatedMPA, params: ModelParams) -> AlgebraResidual:
    """Residuals of ``DE - qED = D + E``, ``(beta D - delta E)|V> = |V>`` and
    ``<W|(alpha E - gamma D) = <W|`` on rows and columns 1..n_max-2.
    """
    if mpa.n_max < 3:
        raise ParameterError("verify_algebra needs n_max >= 3")
    D, E = mpa.sparse()
    k = mpa.n_max - 2
    bulk = (D @ E - mpa.q * (E @ D) - D - E).toarray()[:k, :k]
    V = mpa.v
    W = mpa.w
    res_V = params.beta * (D @ V) - params.delta * (E @ V) - V
    res_W = params.alpha * (W @ E) - params.gamma * (W @ D) - W
    return AlgebraResidual(
        max_bulk=float(np.max(np.abs(bulk))),
        max_V=float(np.max(np.abs(res_V[:k]))),
        max_W=float(np.max(np.abs(res_W[:k]))),
        verified_rows=(1, k),
    )


@dataclass
class RecursionReport:
    """Relative residuals (|lhs - rhs| over the largest term) of the coefficient equations."""

    q: float
    d: float
    e: float
    n_terms: int
    residuals: dict = field(default_factory=dict)

    @property
    def max(self) -> float:
        vals = [r for r in self.residuals.values() if r is not None]
        return max(vals) if vals else 0.0

    def as_dict(self) -> dict:
        return {"q": self.q, "d": self.d, "e": self.e, "n_terms": self.n_terms,
                "residuals": dict(self.residuals), "max": self.max}


def _rel(lhs_terms, rhs_terms):
    lhs = sum(lhs_terms)
    rhs = sum(rhs_terms)
    scale = max([abs(t) for t in lhs_terms] + [abs(t) for t in rhs_terms] + [1e-300])
    return abs(lhs - rhs) / scale


def verify_appendix_recursions(q: float, d: float, e: float, n_terms: int,
                               params: ModelParams | None = None) -> RecursionReport:
    """Check the bidiagonal coefficient equations for n = 1..n_terms.

    Covers the diagonal recursions, the ``u_n`` recursion against its closed
    form, the full bulk coefficient system with the ``do_n``/``eo_n`` split,
    and, when ``params`` is given, the boundary recursions for ``w_n`` and
    ``v_n`` with their closed forms.
    """
    if n_terms < 2:
        raise ParameterError("n_terms must be >= 2")

    def dn(n):
        return 1.0 - d * q ** (n - 1)

    def en(n):
        return 1.0 - e * q ** (n - 1)

    def don(n):
        return 0.0 if n == 0 else 1.0 - q**n

    def eon(n):
        return 0.0 if n == 0 else 1.0 - d * e * q ** (n - 1)

    def un(n):
        return 0.0 if n == 0 else (1.0 - q**n) * (1.0 - e * d * q ** (n - 1))

    res = {"e_rec": 0.0, "d_rec": 0.0, "u_rec": 0.0, "u_split": 0.0, "bulk_system": 0.0,
           "off_D_system": 0.0, "off_E_system": 0.0, "w_rec": None, "v_rec": None}
    u_prev = 0.0
    for n in range(1, n_terms + 1):
        res["e_rec"] = max(res["e_rec"], _rel([en(n + 1)], [q * en(n), 1.0 - q]))
        res["d_rec"] = max(res["d_rec"], _rel([dn(n + 1)], [q * dn(n), 1.0 - q]))
        u_rec = q * u_prev + (1.0 - q) * (1.0 - e * d * q ** (2 * n - 2))
        res["u_rec"] = max(res["u_rec"], _rel([un(n)], [q * u_prev, (1.0 - q) * (1.0 - e * d * q ** (2 * n - 2))]))
        u_prev = u_rec
        res["u_split"] = max(res["u_split"], _rel([don(n) * eon(n)], [un(n)]))
        res["bulk_system"] = max(res["bulk_system"], _rel(
            [(1.0 - q) * dn(n), (1.0 - q) * en(n)],
            [dn(n) * en(n), don(n) * eon(n), -q * dn(n) * en(n), -q * eon(n - 1) * don(n - 1)]))
        res["off_D_system"] = max(res["off_D_system"], _rel(
            [(1.0 - q) * don(n)], [don(n) * en(n + 1), -q * en(n) * don(n)]))
        res["off_E_system"] = max(res["off_E_system"], _rel(
            [(1.0 - q) * eon(n)], [dn(n + 1) * eon(n), -q * eon(n) * dn(n)]))

    if params is not None:
        a, b, g, dl = params.alpha, params.beta, params.gamma, params.delta
        ra, rb = params.rho_a, params.rho_b
        wr = (1.0 - ra) / ra
        vr = rb / (1.0 - rb)

        def wn(n):
            return wr**n

        def vn(n):
            if n == 0:
                return 0.0
            return vr**n * q_pochhammer(e * d, q, n - 1) / q_pochhammer(q, q, n - 1)

        lam_w = a / ra - g / (1.0 - ra)
        lam_v = b / (1.0 - rb) - dl / rb
        w_res = v_res = 0.0
        for n in range(1, n_terms + 1):
            w_res = max(w_res, _rel(
                [a * wn(n) * en(n), a * wn(n + 1) * eon(n), -g * wn(n) * dn(n), -g * wn(n - 1) * don(n - 1)],
                [lam_w * wn(n)]))
            v_res = max(v_res, _rel(
                [b * dn(n) * vn(n), b * don(n) * vn(n + 1), -dl * en(n) * vn(n), -dl * eon(n - 1) * vn(n - 1)],
                [lam_v * vn(n)]))
        res["w_rec"] = w_res
        res["v_rec"] = v_res
    return RecursionReport(q, d, e, n_terms, res)


def adapt_truncation(params: ModelParams, ell: int, rel_tol: float = 1e-12,
                     n_start: int = 16, max_doublings: int = 20, n_cap: int = 1 << 17) -> int:
    """Smallest cutoff on the doubling schedule whose ``Z_ell`` is stable to ``rel_tol``.

    Raises :class:`ParameterError` after ``max_doublings`` or once the cutoff
    would exceed ``n_cap``; this is what happens as ``rho_a - rho_b -> 0``.
    """
    params.require_mpa()
    if not rel_tol > 0.0:
        raise ParameterError("rel_tol must be positive")
    n = max(2, int(n_start))
    prev = log_normalization(_build_any(params, n), ell)
    for _ in range(max_doublings):
        if 2 * n > n_cap:
            break
        cur = log_normalization(_build_any(params, 2 * n), ell)
        if abs(math.expm1(cur - prev)) < rel_tol:
            return n
        n, prev = 2 * n, cur
    raise ParameterError(
        f"truncation did not converge (last n_max={n}, rho_a={params.rho_a}, rho_b={params.rho_b})"
    )


def _build_any(params, n_max):
    if params.liggett:
        return build_representation(params, n_max)
    return build_general_representation(params, n_max=n_max)
