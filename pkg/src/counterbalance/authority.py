"""Counterbalance equilibrium: the authority distribution ``pi = pi P``."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NoConvergence, SameCountry, SingularSystem
from .trade_matrix import TradeMatrix, check_connectivity

DIRECT_TOL = 1e-12
POWER_TOL = 1e-14
POWER_MAX_ITER = 100_000
NEGATIVE_CLAMP = -1e-13


@dataclass(frozen=True)
class AuthorityVector:
    pi: np.ndarray
    residual: float
    method: str = "direct"
    iterations: int | None = None

    def __post_init__(self):
        pi = np.array(self.pi, dtype=float)
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    def __len__(self):
        return len(self.pi)

    def __getitem__(self, k):
        return self.pi[k]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.pi, dtype=dtype)


@dataclass(frozen=True)
class RatioPair:
    authority_ratio: float  # pi_j / pi_i
    gdp_ratio: float  # gdp_j / gdp_i


def _matrix(P) -> np.ndarray:
    return P.P if isinstance(P, TradeMatrix) else np.asarray(P, dtype=float)


def _residual(pi, P):
    return float(np.abs(pi @ P - pi).max())


def _solve_direct(P, tol):
    n = P.shape[0]
    A = (np.eye(n) - P).T
    # Replace the last balance equation with the normalization sum(pi) = 1.
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        with warnings.catch_warnings():
            # exact zero pivots are reported as SingularSystem below
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(f"equilibrium system is singular: {exc}") from None
    diag = np.abs(np.diag(lu))
    if diag.min() <= n * np.finfo(float).eps * max(diag.max(), 1.0):
        raise SingularSystem("equilibrium system is singular; P is probably reducible")
    pi = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    if not np.all(np.isfinite(pi)) or pi.min() < NEGATIVE_CLAMP:
        raise SingularSystem(
            f"direct solve produced a negative weight ({pi.min():.3e}); P is probably reducible"
        )
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    res = _residual(pi, P)
    if res > tol:
        raise SingularSystem(f"direct solve residual {res:.3e} exceeds tolerance {tol:.1e}")
    return pi, res


def _solve_power(P, tol, max_iter):
    n = P.shape[0]
    x = np.full(n, 1.0 / n)
    change = np.inf
    for it in range(1, max_iter + 1):
        y = x @ P
        y /= y.sum()
        change = np.abs(y - x).max()
        x = y
        if change <= tol:
            return x, it
    raise NoConvergence(max_iter, change)


def authority_distribution(P, method: str = "direct", tol: float | None = None, *,
                           force: bool = False,
                           max_iter: int = POWER_MAX_ITER) -> AuthorityVector:
    """Solve ``pi = pi P`` with ``sum(pi) = 1`` and ``pi >= 0``.

    Parameters
    ----------
    P : TradeMatrix or (n, n) array
        Row-stochastic exposure matrix.
    method : {"direct", "power"}
        ``direct`` solves the transposed fixed-point system with the last
        equation replaced by the normalization; ``power`` iterates
        ``x <- xP`` with renormalization.
    tol : float, optional
        Residual bound for ``direct`` (default 1e-12) or successive-change
        bound for ``power`` (default 1e-14).
    force : bool
        Skip the strong-connectivity precondition.

    Raises
    ------
    SingularSystem
        ``P`` is reducible (or numerically so) under the direct method.
    NoConvergence
        Power iteration hit ``max_iter``.
    """
    A = _matrix(P)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise ValueError(f"P must be a non-empty square matrix, got shape {A.shape}")
    if not force and A.shape[0] > 1:
        report = check_connectivity(P)
        if not report.strongly_connected:
            raise SingularSystem(
                f"P is not strongly connected ({report.n_components} components); "
                "the equilibrium is not unique"
            )
    if method == "direct":
        pi, res = _solve_direct(A, DIRECT_TOL if tol is None else tol)
        return AuthorityVector(pi, res, "direct")
    if method in ("power", "power-iteration"):
        pi, iters = _solve_power(A, POWER_TOL if tol is None else tol, max_iter)
        return AuthorityVector(pi, _residual(pi, A), "power", iters)
    raise ValueError(f"unknown method {method!r}")


def ratios(pi, gdp, i: int, j: int) -> RatioPair:
    """Return ``(pi_j / pi_i, gdp_j / gdp_i)``."""
    if i == j:
        raise SameCountry(f"ratios need two distinct countries, got {i} twice")
    pi = np.asarray(pi, dtype=float)
    gdp = np.asarray(gdp, dtype=float)
    return RatioPair(float(pi[j] / pi[i]), float(gdp[j] / gdp[i]))
