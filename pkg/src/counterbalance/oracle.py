"""Finite-difference verification of the analytic sensitivities.

The oracle never touches the reduced-block formulas: it perturbs ``P`` along
an explicit direction matrix ``D`` (rows summing to zero), re-solves the full
equilibrium at ``P + hD`` and ``P - hD``, and takes a central difference.

By default the two equilibria are solved in extended precision (``mpmath``,
40 significant digits). In double precision the difference quotient carries
roughly ``1e-16 / h`` of rounding noise, about ``1e-9`` at ``h = 1e-7``,
which is too coarse to certify derivatives that are exactly zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import mpmath
import numpy as np

from .authority import authority_distribution
from .errors import CounterbalanceError, StepTooLarge
from .sensitivity import (
    ReactionRule,
    globalization_M,
    globalization_derivative,
    tradewar_derivative,
)
from .trade_matrix import TradeMatrix, check_connectivity

logger = logging.getLogger(__name__)

DEFAULT_H = 1e-7
DEFAULT_DPS = 40
REL_TOL = 1e-6
ABS_TOL = 1e-12
REL_FLOOR = 1e-9

DEFAULT_RULES = (
    ReactionRule.explicit(0.0),
    ReactionRule.gdp(),
    ReactionRule.authority(),
    ReactionRule.explicit(2.5),
)


@dataclass(frozen=True)
class Perturbation:
    kind: str
    direction: np.ndarray
    description: str

    def __post_init__(self):
        D = np.array(self.direction, dtype=float)
        D.setflags(write=False)
        object.__setattr__(self, "direction", D)


@dataclass
class OracleReport:
    label: str
    analytic: np.ndarray | None = None
    numeric: np.ndarray | None = None
    h_used: float | None = None
    max_rel_err: float = 0.0
    max_abs_err: float = 0.0
    passed: bool = True
    skipped: str | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "label": self.label,
            "status": "skipped" if self.skipped else ("pass" if self.passed else "fail"),
            "h_used": self.h_used,
            "max_rel_err": self.max_rel_err,
            "max_abs_err": self.max_abs_err,
        }
        if self.skipped:
            out["reason"] = self.skipped
        return out


def _tm(P) -> TradeMatrix:
    return P if isinstance(P, TradeMatrix) else TradeMatrix.from_array(P)


def tradewar_perturbation(P, i, j, lam: float) -> Perturbation:
    tm = _tm(P)
    a, b = tm.position(i), tm.position(j)
    D = np.zeros((tm.n, tm.n))
    D[b, a] += 1.0
    D[b, b] -= 1.0
    D[a, b] += lam
    D[a, a] -= lam
    return Perturbation("trade-war", D,
                        f"trade-war {tm.codes[a]} vs {tm.codes[b]}, lambda={lam:.6g}")


def globalization_perturbation(P, i, rule, pi=None, gdp=None) -> Perturbation:
    tm = _tm(P)
    a = tm.position(i)
    rule = ReactionRule.parse(rule)
    return Perturbation("globalization", globalization_M(tm, a, rule, pi, gdp),
                        f"globalization {tm.codes[a]}, rule={rule.label}")


def max_step(P, D) -> float:
    """Largest ``h`` keeping every entry of ``P +/- hD`` inside [0, 1]."""
    A = P.P if isinstance(P, TradeMatrix) else np.asarray(P, dtype=float)
    moving = D != 0
    if not moving.any():
        return np.inf
    with np.errstate(over="ignore"):
        room = np.minimum(A[moving], 1.0 - A[moving]) / np.abs(D[moving])
    return float(room.min())


def _shift(P, D, h) -> np.ndarray:
    A = P.P if isinstance(P, TradeMatrix) else np.asarray(P, dtype=float)
    out = A + h * D
    if out.min() < 0 or out.max() > 1:
        raise StepTooLarge(f"step h={h:g} moves an entry of P outside [0, 1]")
    return out


def perturb_tradewar(P, i, j, lam: float, h: float) -> TradeMatrix:
    """``P_ji += h``, ``P_jj -= h``, ``P_ij += lam h``, ``P_ii -= lam h``."""
    tm = _tm(P)
    D = tradewar_perturbation(tm, i, j, lam).direction
    return TradeMatrix(tm.index, _shift(tm, D, h), tm.gdp)


def perturb_globalization(P, i, rule, h: float, pi=None, gdp=None) -> TradeMatrix:
    tm = _tm(P)
    D = globalization_perturbation(tm, i, rule, pi, gdp).direction
    return TradeMatrix(tm.index, _shift(tm, D, h), tm.gdp)


def _mp_equilibrium(rows):
    n = len(rows)
    A = mpmath.matrix(n, n)
    for r in range(n):
        for c in range(n):
            A[c, r] = (1 if r == c else 0) - rows[r][c]
    for c in range(n):
        A[n - 1, c] = 1
    b = mpmath.matrix(n, 1)
    b[n - 1] = 1
    return mpmath.lu_solve(A, b)


def fd_derivative(P, perturbation: Perturbation, h: float = DEFAULT_H, *,
                  dps: int | None = DEFAULT_DPS) -> np.ndarray:
    """Central difference ``(pi(P + hD) - pi(P - hD)) / 2h``.

    ``dps=None`` solves both equilibria in double precision; otherwise in
    ``mpmath`` with ``dps`` significant digits.
    """
    tm = _tm(P)
    D = perturbation.direction
    if not np.any(D):
        return np.zeros(tm.n)
    if h <= 0 or h > max_step(tm, D):
        raise StepTooLarge(f"step h={h:g} moves an entry of P outside [0, 1]")
    if dps is None:
        up = authority_distribution(_shift(tm, D, h), force=True).pi
        down = authority_distribution(_shift(tm, D, -h), force=True).pi
        return (up - down) / (2 * h)
    A = tm.P
    with mpmath.workdps(dps):
        hm = mpmath.mpf(h)
        base = [[mpmath.mpf(float(A[r, c])) for c in range(tm.n)] for r in range(tm.n)]
        dirs = [[mpmath.mpf(float(D[r, c])) for c in range(tm.n)] for r in range(tm.n)]
        plus = [[base[r][c] + hm * dirs[r][c] for c in range(tm.n)] for r in range(tm.n)]
        minus = [[base[r][c] - hm * dirs[r][c] for c in range(tm.n)] for r in range(tm.n)]
        up = _mp_equilibrium(plus)
        down = _mp_equilibrium(minus)
        return np.array([float((up[k] - down[k]) / (2 * hm)) for k in range(tm.n)])


def choose_step(P, D, h: float = DEFAULT_H) -> float:
    """Scale ``h`` down when a moving entry sits within ``10h`` of 0 or 1."""
    room = max_step(P, D)
    if room == 0:
        raise StepTooLarge("a perturbed entry sits on the [0, 1] boundary")
    return min(h, room / 10)


def compare(analytic, numeric, *, rel_tol=REL_TOL, abs_tol=ABS_TOL,
            floor=REL_FLOOR) -> tuple[float, float, bool]:
    """Hybrid error: relative where ``|analytic| > floor``, absolute elsewhere.

    Returns ``(max_rel_err, max_abs_err, passed)``.
    """
    a = np.asarray(analytic, dtype=float)
    x = np.asarray(numeric, dtype=float)
    err = np.abs(a - x)
    big = np.abs(a) > floor
    max_rel = float((err[big] / np.abs(a[big])).max()) if big.any() else 0.0
    max_abs = float(err.max()) if err.size else 0.0
    small_abs = float(err[~big].max()) if (~big).any() else 0.0
    passed = bool(max_rel <= rel_tol and small_abs <= abs_tol)
    return max_rel, max_abs, passed


AnalyticHook = Callable[[np.ndarray], np.ndarray]


def _run_case(label, analytic_fn, perturbation_fn, tm, h, dps, hook):
    try:
        analytic = analytic_fn()
        pert = perturbation_fn()
        step = choose_step(tm, pert.direction, h)
        numeric = fd_derivative(tm, pert, step, dps=dps)
    except CounterbalanceError as exc:
        return OracleReport(label, skipped=f"{type(exc).__name__}: {exc}")
    if hook is not None:
        analytic = hook(analytic)
    rel, ab, ok = compare(analytic, numeric)
    return OracleReport(label, analytic, numeric, step, rel, ab, ok,
                        extra={"zero_sum": float(abs(analytic.sum()))})


def check_tradewar(P, pi, i, j, rule, *, h=DEFAULT_H, dps=DEFAULT_DPS,
                   hook: AnalyticHook | None = None, label=None) -> OracleReport:
    tm = _tm(P)
    rule = ReactionRule.parse(rule)
    a, b = tm.position(i), tm.position(j)
    label = label or f"tradewar {tm.codes[a]}<-{tm.codes[b]} lambda={rule.label}"
    result = {}

    def analytic():
        result["r"] = tradewar_derivative(tm, pi, a, b, rule)
        return result["r"].d_pi

    def pert():
        return tradewar_perturbation(tm, a, b, result["r"].lambda_used)

    return _run_case(label, analytic, pert, tm, h, dps, hook)


def check_globalization(P, pi, i, rule, *, h=DEFAULT_H, dps=DEFAULT_DPS,
                        hook: AnalyticHook | None = None, label=None) -> OracleReport:
    tm = _tm(P)
    rule = ReactionRule.parse(rule)
    a = tm.position(i)
    label = label or f"globalization {tm.codes[a]} lambda={rule.label}"
    return _run_case(
        label,
        lambda: globalization_derivative(tm, pi, a, rule).d_pi,
        lambda: globalization_perturbation(tm, a, rule, pi),
        tm, h, dps, hook,
    )


def random_trade_matrix(n: int, rng: np.random.Generator, *, density: float = 1.0,
                        export_share=(0.05, 0.5)) -> TradeMatrix:
    """Random strongly connected exposure matrix with a GDP vector.

    Off-diagonal weights are uniform on a random support of the given density
    plus a random cycle through all countries; each row's total export share
    is uniform on ``export_share``.
    """
    W = rng.random((n, n)) * (rng.random((n, n)) < density)
    order = rng.permutation(n)
    for k in range(n):
        a, b = order[k], order[(k + 1) % n]
        W[a, b] = max(W[a, b], 0.05 + rng.random())
    np.fill_diagonal(W, 0.0)
    share = rng.uniform(*export_share, size=n)
    P = W / W.sum(axis=1, keepdims=True) * share[:, None]
    np.fill_diagonal(P, 0.0)
    P[np.diag_indices(n)] = 1.0 - P.sum(axis=1)
    gdp = rng.lognormal(mean=0.0, sigma=1.0, size=n)
    return TradeMatrix.from_array(P, gdp)


def verify_matrix(P, pi=None, rules: Sequence = DEFAULT_RULES, *,
                  pairs: Iterable[tuple[int, int]] | None = None,
                  countries: Iterable[int] | None = None,
                  h=DEFAULT_H, dps=DEFAULT_DPS, hook=None, prefix="") -> list[OracleReport]:
    """Check trade-war and globalization derivatives on one matrix for the given pairs and countries
    (all of them by default)."""
    tm = _tm(P)
    report = check_connectivity(tm)
    if not report.strongly_connected:
        return [OracleReport(f"{prefix}matrix", skipped=(
            f"P is reducible ({report.n_components} strongly connected components)"))]
    pi = authority_distribution(tm).pi if pi is None else np.asarray(pi, dtype=float)
    rules = [ReactionRule.parse(r) for r in rules]
    if pairs is None:
        pairs = [(a, b) for a in range(tm.n) for b in range(tm.n) if a != b]
    if countries is None:
        countries = range(tm.n)
    out = []
    for rule in rules:
        if rule.needs_gdp and tm.gdp is None:
            out.append(OracleReport(f"{prefix}lambda={rule.label}", skipped="no GDP vector"))
            continue
        for a, b in pairs:
            out.append(check_tradewar(tm, pi, a, b, rule, h=h, dps=dps, hook=hook, label=(
                f"{prefix}tradewar {tm.codes[a]}<-{tm.codes[b]} lambda={rule.label}")))
        for a in countries:
            out.append(check_globalization(tm, pi, a, rule, h=h, dps=dps, hook=hook, label=(
                f"{prefix}globalization {tm.codes[a]} lambda={rule.label}")))
    return out


def verify_all(P=None, pi=None, rules: Sequence = DEFAULT_RULES,
               seeds: Iterable[int] = range(100), *, sizes: Sequence[int] = (3, 5, 10),
               h=DEFAULT_H, dps=DEFAULT_DPS, hook: AnalyticHook | None = None,
               ) -> list[OracleReport]:
    """Sweep the supplied matrix (every pair and country) and one random
    matrix per seed (one random pair and one random country each).

    Failures are recorded in the reports, never raised.
    """
    reports = []
    if P is not None:
        reports.extend(verify_matrix(P, pi, rules, h=h, dps=dps, hook=hook))
    for seed in seeds:
        rng = np.random.default_rng(seed)
        n = sizes[seed % len(sizes)]
        tm = random_trade_matrix(n, rng)
        a, b = rng.choice(n, size=2, replace=False)
        reports.extend(verify_matrix(tm, None, rules, pairs=[(int(a), int(b))],
                                     countries=[int(a)], h=h, dps=dps, hook=hook,
                                     prefix=f"seed={seed} n={n} "))
    return reports


def summarize(reports: Sequence[OracleReport]) -> dict:
    ran = [r for r in reports if not r.skipped]
    return {
        "cases": len(reports),
        "checked": len(ran),
        "skipped": len(reports) - len(ran),
        "failed": sum(not r.passed for r in ran),
        "max_rel_err": max((r.max_rel_err for r in ran), default=0.0),
        "max_abs_err": max((r.max_abs_err for r in ran), default=0.0),
    }
