"""Decision outputs built on the sensitivities: partner stances, target
rankings, midpoint settlements, globalization stances and side-effect reports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .authority import ratios
from .errors import SameCountry, ZeroBaseEntry
from .sensitivity import (
    ReactionRule,
    SensitivityResult,
    _as_pi,
    _as_trade_matrix,
    globalization_derivative,
    tradewar_derivative,
)

DEFAULT_THRESHOLD = 0.05
# Globalization stances are sign-based by default; see ``globalization_stance``.
GLOBALIZATION_THRESHOLD = 0.0

CONFLICT, COOPERATE, NEUTRAL = "conflict", "cooperate", "neutral"
GLOBALIZE, PROTECT, INDETERMINATE = "globalize", "protect", "indeterminate"


def partner_stance(elasticity: float, threshold: float = DEFAULT_THRESHOLD) -> str:
    if elasticity < -threshold:
        return CONFLICT
    if elasticity > threshold:
        return COOPERATE
    return NEUTRAL


@dataclass(frozen=True)
class PartnerClassification:
    actor: str
    partner: str
    stance: str
    elasticity: float
    threshold: float
    lambda_: float
    derivative: float
    status_quo: bool = False


@dataclass(frozen=True)
class MidpointResolution:
    actor: str
    partner: str
    authority_ratio: float
    gdp_ratio: float
    midpoint: float
    dollar_for_dollar: float


@dataclass(frozen=True)
class GlobalizationStance:
    country: str
    stance: str
    elasticity_at_authority_rule: float
    elasticity_at_gdp_rule: float
    threshold: float
    effects: dict  # rule label -> per-country elasticity vector


@dataclass(frozen=True)
class SideEffectReport:
    actor: str
    target: str
    rule: ReactionRule
    lambda_: float
    codes: tuple[str, ...]
    derivatives: np.ndarray
    elasticities: np.ndarray

    def rows(self):
        """``(code, derivative, elasticity, sign)`` per country, index order."""
        for code, d, e in zip(self.codes, self.derivatives, self.elasticities):
            sign = "+" if e > 0 else ("-" if e < 0 else "0")
            yield code, float(d), float(e), sign


def _classification(tm, result: SensitivityResult, threshold) -> PartnerClassification:
    elasticity = result.self_elasticity
    if elasticity is None:
        # P_ji == 0: theta * d/pi vanishes in the limit.
        elasticity = 0.0
    return PartnerClassification(
        actor=tm.codes[result.actor],
        partner=tm.codes[result.target],
        stance=partner_stance(elasticity, threshold),
        elasticity=float(elasticity),
        threshold=threshold,
        lambda_=float(result.lambda_used),
        derivative=result.self_derivative,
        status_quo=bool(result.reaction_factor == 0),
    )


def classify_partner(P, pi, i, j, rule=ReactionRule.gdp(), threshold=DEFAULT_THRESHOLD, *,
                     gdp=None) -> PartnerClassification:
    """Stance of ``i`` toward ``j`` from the elasticity of ``pi_i`` w.r.t. ``P_ji``."""
    tm = _as_trade_matrix(P)
    result = tradewar_derivative(tm, pi, i, j, rule, gdp=gdp)
    return _classification(tm, result, threshold)


def rank_targets(P, pi, i, rule=ReactionRule.gdp(), threshold=DEFAULT_THRESHOLD, *,
                 gdp=None) -> list[PartnerClassification]:
    """All partners of ``i``, most negative elasticity (top conflict target)
    first; ties broken by code."""
    tm = _as_trade_matrix(P)
    pi = _as_pi(pi, tm)
    a = tm.position(i)
    out = [
        _classification(tm, tradewar_derivative(tm, pi, a, b, rule, gdp=gdp), threshold)
        for b in range(tm.n) if b != a
    ]
    out.sort(key=lambda c: (c.elasticity, c.partner))
    return out


def midpoint_from_ratios(authority_ratio: float, gdp_ratio: float) -> tuple[float, float]:
    """Midpoint ``lambda`` and the partner's dollar reaction per dollar of
    reduced imports, ``midpoint * gdp_i / gdp_j``."""
    midpoint = (authority_ratio + gdp_ratio) / 2
    return midpoint, midpoint / gdp_ratio


def midpoint_resolution(pi, gdp, i: int, j: int, codes=None) -> MidpointResolution:
    if i == j:
        raise SameCountry("a settlement needs two distinct countries")
    pair = ratios(pi, gdp, i, j)
    midpoint, per_dollar = midpoint_from_ratios(pair.authority_ratio, pair.gdp_ratio)
    label = (lambda k: codes[k]) if codes is not None else str
    return MidpointResolution(label(i), label(j), pair.authority_ratio, pair.gdp_ratio,
                              midpoint, per_dollar)


def side_effects(P, pi, i, j, rule=ReactionRule.gdp(), *, gdp=None) -> SideEffectReport:
    """Elasticity of every ``pi_k`` with respect to ``P_ji`` (actor and target included)."""
    tm = _as_trade_matrix(P)
    pi = _as_pi(pi, tm)
    result = tradewar_derivative(tm, pi, i, j, rule, gdp=gdp)
    el = result.log_elasticities
    if el is None:
        el = np.zeros(tm.n)
    return SideEffectReport(tm.codes[result.actor], tm.codes[result.target], result.rule,
                            float(result.lambda_used), tm.codes, result.d_pi, el)


def globalization_stance(P, pi, i, threshold=GLOBALIZATION_THRESHOLD, *, gdp=None,
                         extra_rules=()) -> GlobalizationStance:
    """Globalize when the self-elasticity w.r.t. ``P_ii`` is below ``-threshold``
    under both the authority and the GDP rule, protect when above ``+threshold``
    under both, otherwise indeterminate.

    The default threshold is 0, so the stance follows the signs of the two
    elasticities. Self-elasticities of mid-sized economies under the authority
    rule are typically a few percent, and a 5% bar would leave most of them
    indeterminate even when both rules agree on the direction. Pass
    ``threshold=DEFAULT_THRESHOLD`` for the trade-war bar.

    ``extra_rules`` (e.g. midpoint) are evaluated and reported but do not
    enter the classification.
    """
    tm = _as_trade_matrix(P)
    pi = _as_pi(pi, tm)
    k = tm.position(i)
    effects = {}
    for rule in (ReactionRule.authority(), ReactionRule.gdp(), *map(ReactionRule.parse, extra_rules)):
        res = globalization_derivative(tm, pi, k, rule, gdp=gdp)
        effects[rule.label] = res.log_elasticities
    if effects["authority"] is None:
        raise ZeroBaseEntry(f"{tm.codes[k]} has P_ii = 0; the elasticity is undefined")
    e_auth = float(effects["authority"][k])
    e_gdp = float(effects["gdp"][k])
    if e_auth < -threshold and e_gdp < -threshold:
        stance = GLOBALIZE
    elif e_auth > threshold and e_gdp > threshold:
        stance = PROTECT
    else:
        stance = INDETERMINATE
    return GlobalizationStance(tm.codes[k], stance, e_auth, e_gdp, threshold, effects)
