"""Analytic first-order sensitivities of the authority distribution.

Two perturbation families are covered:

* trade war: country ``i`` changes ``P[j, i]`` (its imports from ``j``) and
  ``j`` answers by changing ``P[i, j]`` by ``lambda_ji`` times as much, with
  the diagonals absorbing the row-sum changes;
* globalization: country ``i`` changes its self-exposure ``P[i, i]`` and the
  whole matrix responds proportionally, ``dP = dP_ii * M``.

Both reduce to the same bordered linear system. Dropping country ``i``,
with ``Z`` the transpose of ``P`` without row/column ``i`` and ``alpha`` row
``i`` of ``P`` without entry ``i``, the derivative for a right-hand side
``b`` (the ``pi dP`` vector with entry ``i`` removed) is::

    dpi_i   = -1'(I - Z)^-1 b / (1 + 1'(I - Z)^-1 alpha)
    dpi_-i  = (I - Z)^-1 (b + dpi_i * alpha)

``(I - Z)`` is factorized once per (matrix, country) and reused.

Negotiation coefficients follow a single convention: ``lambda_ab`` converts
a change ``dP_ab`` into the counterpart's reaction ``dP_ba = lambda_ab dP_ab``.
The GDP rule gives ``lambda_ab = gdp_a / gdp_b`` (balanced dollar trade), the
authority rule ``pi_a / pi_b`` (status quo).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .authority import AuthorityVector, authority_distribution
from .errors import (
    DegenerateDenominator,
    SameCountry,
    SingularReducedSystem,
    ZeroBaseEntry,
)
from .trade_matrix import TradeMatrix

DENOMINATOR_TOL = 1e-9

_KIND_ALIASES = {
    "gdp": "gdp-ratio",
    "gdp-ratio": "gdp-ratio",
    "g": "gdp-ratio",
    "authority": "authority-ratio",
    "authority-ratio": "authority-ratio",
    "pi": "authority-ratio",
    "status-quo": "authority-ratio",
    "midpoint": "midpoint",
    "mid": "midpoint",
    "explicit": "explicit",
}


@dataclass(frozen=True)
class ReactionRule:
    """How the negotiation coefficient ``lambda`` is determined."""

    kind: str
    value: float | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown reaction rule {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "explicit":
            if self.value is None or not math.isfinite(self.value) or self.value < 0:
                raise ValueError("an explicit lambda must be a finite value >= 0")
            object.__setattr__(self, "value", float(self.value))
        elif self.value is not None:
            raise ValueError(f"rule {kind} takes no value")

    @classmethod
    def parse(cls, text) -> "ReactionRule":
        if isinstance(text, ReactionRule):
            return text
        if isinstance(text, (int, float)):
            return cls("explicit", float(text))
        key = str(text).strip().lower()
        if key in _KIND_ALIASES and _KIND_ALIASES[key] != "explicit":
            return cls(key)
        try:
            return cls("explicit", float(key))
        except ValueError:
            raise ValueError(
                f"lambda must be gdp, authority, midpoint or a number, got {text!r}"
            ) from None

    @classmethod
    def gdp(cls):
        return cls("gdp-ratio")

    @classmethod
    def authority(cls):
        return cls("authority-ratio")

    @classmethod
    def midpoint(cls):
        return cls("midpoint")

    @classmethod
    def explicit(cls, value):
        return cls("explicit", value)

    @property
    def label(self) -> str:
        return f"{self.value:g}" if self.kind == "explicit" else self.kind.split("-")[0]

    @property
    def needs_gdp(self) -> bool:
        return self.kind in ("gdp-ratio", "midpoint")

    def coefficient(self, a: int, b: int, pi, gdp) -> float:
        """``lambda_ab``: reaction ``dP_ba`` per unit ``dP_ab``."""
        if self.kind == "explicit":
            return self.value
        if self.kind == "authority-ratio":
            return float(pi[a] / pi[b])
        if gdp is None:
            raise ValueError(f"rule {self.kind} needs GDP values")
        if self.kind == "gdp-ratio":
            return float(gdp[a] / gdp[b])
        return 0.5 * (float(pi[a] / pi[b]) + float(gdp[a] / gdp[b]))

    def reaction_factor(self, i: int, j: int, pi, gdp) -> float:
        """``lambda_ji * pi_i - pi_j``, the sign-determining trade-war factor.

        Evaluated per rule so that the status-quo rule gives an exact zero and
        the midpoint rule gives exactly half of the GDP-rule factor.
        """
        if self.kind == "authority-ratio":
            return 0.0
        if self.kind == "explicit":
            return self.value * pi[i] - pi[j]
        base = float(gdp[j] / gdp[i]) * pi[i] - pi[j]
        return base if self.kind == "gdp-ratio" else 0.5 * base


@dataclass(frozen=True)
class ReducedBlocks:
    Z: np.ndarray
    alpha: np.ndarray
    dropped: int


@dataclass(frozen=True)
class SensitivityResult:
    """Derivative of every ``pi_k`` with respect to one perturbed entry.

    ``theta`` is the base value of the perturbed entry (``P[j, i]`` for a
    trade war, ``P[i, i]`` for globalization). ``lambda_used`` is the scalar
    ``lambda_ji`` for a trade war and the row of ``lambda_is`` (``nan`` at
    ``i``) for globalization.
    """

    kind: str
    actor: int
    target: int | None
    d_pi: np.ndarray
    lambda_used: float | np.ndarray
    theta: float
    log_elasticities: np.ndarray | None
    rule: ReactionRule
    reaction_factor: float | None = None

    @property
    def self_derivative(self) -> float:
        return float(self.d_pi[self.actor])

    @property
    def self_elasticity(self) -> float | None:
        if self.log_elasticities is None:
            return None
        return float(self.log_elasticities[self.actor])


class _ReducedSystem:
    """LU factorization of ``I - Z_i`` plus the reusable row ``1'(I - Z_i)^-1``."""

    def __init__(self, blocks: ReducedBlocks):
        m = blocks.alpha.shape[0]
        A = np.eye(m) - blocks.Z
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        diag = np.abs(np.diag(lu))
        if diag.min() <= m * np.finfo(float).eps * max(diag.max(), 1.0):
            raise SingularReducedSystem(
                f"I - Z is singular after dropping country {blocks.dropped}; "
                "P is probably not strongly connected"
            )
        self.blocks = blocks
        self.factor = (lu, piv)
        self.ones_row = scipy.linalg.lu_solve(self.factor, np.ones(m), trans=1,
                                              check_finite=False)
        self.denominator = 1.0 + float(self.ones_row @ blocks.alpha)
        if not np.isfinite(self.denominator) or self.denominator <= 0:
            raise SingularReducedSystem(
                f"degenerate bordered system for country {blocks.dropped}"
            )

    def solve(self, rhs):
        return scipy.linalg.lu_solve(self.factor, rhs, check_finite=False)

    def derivative(self, b: np.ndarray) -> np.ndarray:
        i = self.blocks.dropped
        d_self = -float(self.ones_row @ b) / self.denominator
        d_rest = self.solve(b + d_self * self.blocks.alpha)
        return np.insert(d_rest, i, d_self)


def _as_trade_matrix(P) -> TradeMatrix:
    return P if isinstance(P, TradeMatrix) else TradeMatrix.from_array(P)


def _as_pi(pi, P: TradeMatrix) -> np.ndarray:
    if pi is None:
        return authority_distribution(P).pi
    return np.asarray(pi.pi if isinstance(pi, AuthorityVector) else pi, dtype=float)


def _gdp(P: TradeMatrix, gdp):
    return P.gdp if gdp is None else np.asarray(gdp, dtype=float)


def reduced_blocks(P, i) -> ReducedBlocks:
    """``Z_i`` (transpose of ``P`` without row/column ``i``) and ``alpha_i``
    (row ``i`` of ``P`` without entry ``i``)."""
    tm = _as_trade_matrix(P)
    if tm.n < 2:
        raise ValueError("reduced blocks need at least two countries")
    k = tm.position(i)
    A = tm.P
    keep = np.arange(tm.n) != k
    Z = A.T[np.ix_(keep, keep)].copy()
    alpha = A[k, keep].copy()
    return ReducedBlocks(Z, alpha, k)


def _reduced_system(tm: TradeMatrix, i: int) -> _ReducedSystem:
    return tm.cached(("reduced", i), lambda: _ReducedSystem(reduced_blocks(tm, i)))


def _elasticities(theta, d_pi, pi):
    if theta <= 0 or np.any(pi <= 0):
        return None
    return theta * d_pi / pi


def tradewar_derivative(P, pi, i, j, rule, *, gdp=None) -> SensitivityResult:
    """Derivative of ``pi`` with respect to ``P[j, i]`` under the four-entry
    trade-war perturbation (``P_ji += t``, ``P_jj -= t``, ``P_ij += lambda t``,
    ``P_ii -= lambda t``)."""
    tm = _as_trade_matrix(P)
    a, b = tm.position(i), tm.position(j)
    if a == b:
        raise SameCountry(f"actor and target are both {tm.codes[a]}")
    rule = ReactionRule.parse(rule)
    pi = _as_pi(pi, tm)
    g = _gdp(tm, gdp)
    lam = rule.coefficient(b, a, pi, g)
    factor = rule.reaction_factor(a, b, pi, g)

    system = _reduced_system(tm, a)
    rhs = np.zeros(tm.n - 1)
    rhs[b if b < a else b - 1] = factor
    d_pi = system.derivative(rhs)
    theta = float(tm.P[b, a])
    return SensitivityResult("trade-war", a, b, d_pi, lam, theta,
                             _elasticities(theta, d_pi, pi), rule, factor)


def globalization_M(P, i, rule, pi=None, gdp=None, *, tol: float = DENOMINATOR_TOL) -> np.ndarray:
    """Proportional-response matrix ``M = dP / dP_ii``.

    Row ``i`` is ``-P[i, t] / (1 - P_ii)`` with 1 on the diagonal; every other
    row ``s`` carries ``w_s = lambda_is P_is / (1 - P_ii)``: ``-w_s`` in column
    ``i`` and ``w_s P_st / (1 - P_si)`` elsewhere. All rows sum to zero.
    """
    tm = _as_trade_matrix(P)
    k = tm.position(i)
    rule = ReactionRule.parse(rule)
    A = tm.P
    n = tm.n
    if rule.kind in ("authority-ratio", "midpoint"):
        pi = _as_pi(pi, tm)
    g = _gdp(tm, gdp)

    # For a row-stochastic P, 1 - P_ss equals the off-diagonal row sum; the
    # latter makes the row sums of M vanish to rounding.
    def outflow(row):
        return math.fsum(np.delete(A[row], k))

    d0 = outflow(k)
    if d0 <= tol:
        raise DegenerateDenominator(tm.codes[k], d0)
    M = np.zeros((n, n))
    M[k] = -A[k] / d0
    M[k, k] = 1.0
    for s in range(n):
        if s == k:
            continue
        w = rule.coefficient(k, s, pi, g) * A[k, s] / d0
        if w == 0:
            continue
        ds = outflow(s)
        if ds <= tol:
            raise DegenerateDenominator(tm.codes[s], ds)
        M[s] = (w / ds) * A[s]
        M[s, k] = -w
    return M


def globalization_lambdas(P, i, rule, pi=None, gdp=None) -> np.ndarray:
    """Row of ``lambda_is`` used by the globalization response (``nan`` at ``i``)."""
    tm = _as_trade_matrix(P)
    k = tm.position(i)
    rule = ReactionRule.parse(rule)
    if rule.kind in ("authority-ratio", "midpoint"):
        pi = _as_pi(pi, tm)
    g = _gdp(tm, gdp)
    lam = np.array([np.nan if s == k else rule.coefficient(k, s, pi, g) for s in range(tm.n)])
    return lam


def globalization_derivative(P, pi, i, rule, *, gdp=None) -> SensitivityResult:
    """Derivative of ``pi`` with respect to the self-exposure ``P[i, i]``."""
    tm = _as_trade_matrix(P)
    k = tm.position(i)
    rule = ReactionRule.parse(rule)
    pi = _as_pi(pi, tm)
    g = _gdp(tm, gdp)
    M = globalization_M(tm, k, rule, pi, g)
    system = _reduced_system(tm, k)
    rhs = np.delete(pi @ M, k)
    d_pi = system.derivative(rhs)
    theta = float(tm.P[k, k])
    return SensitivityResult("globalization", k, None, d_pi,
                             globalization_lambdas(tm, k, rule, pi, g), theta,
                             _elasticities(theta, d_pi, pi), rule)


def log_elasticity(result: SensitivityResult, P, pi) -> np.ndarray:
    """``(theta / pi_k) * dpi_k / dtheta`` for every country ``k``."""
    tm = _as_trade_matrix(P)
    pi = _as_pi(pi, tm)
    if result.kind == "trade-war":
        theta = float(tm.P[result.target, result.actor])
    else:
        theta = float(tm.P[result.actor, result.actor])
    if theta == 0:
        raise ZeroBaseEntry("perturbed entry is zero; the log-elasticity is undefined")
    if np.any(pi <= 0):
        raise ZeroBaseEntry("an authority weight is zero; the log-elasticity is undefined")
    return theta * result.d_pi / pi
