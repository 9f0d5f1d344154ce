import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from counterbalance.authority import authority_distribution
from counterbalance.errors import DegenerateDenominator, SameCountry, ZeroBaseEntry
from counterbalance.sensitivity import (
    ReactionRule,
    SensitivityResult,
    globalization_M,
    globalization_derivative,
    log_elasticity,
    reduced_blocks,
    tradewar_derivative,
)
from counterbalance.trade_matrix import TradeMatrix

from conftest import make_matrix, trade_matrices

RULES = [ReactionRule.gdp(), ReactionRule.authority(), ReactionRule.midpoint(),
         ReactionRule.explicit(0.0), ReactionRule.explicit(0.7), ReactionRule.explicit(2.5)]


def fundamental_derivative(P, pi, D):
    """``d pi / dt`` for ``P + tD`` via the fundamental matrix ``(I - P + 1 pi)^-1``."""
    n = P.shape[0]
    Zf = np.linalg.inv(np.eye(n) - P + np.outer(np.ones(n), pi))
    return pi @ D @ Zf


def literal_M(P, i, lam):
    """Globalization response matrix written entry by entry from its definition."""
    n = P.shape[0]
    M = np.zeros((n, n))
    for s in range(n):
        for t in range(n):
            if s == i:
                M[s, t] = 1.0 if t == i else -P[i, t] / (1 - P[i, i])
            elif t == i:
                M[s, t] = -lam[s] * P[i, s] / (1 - P[i, i])
            else:
                M[s, t] = lam[s] * P[i, s] * P[s, t] / ((1 - P[i, i]) * (1 - P[s, i]))
    return M


# -- reaction rules -------------------------------------------------------


def test_rule_parsing():
    assert ReactionRule.parse("gdp").kind == "gdp-ratio"
    assert ReactionRule.parse("authority").kind == "authority-ratio"
    assert ReactionRule.parse("midpoint").kind == "midpoint"
    assert ReactionRule.parse("2.5") == ReactionRule.explicit(2.5)
    assert ReactionRule.parse(1) == ReactionRule.explicit(1.0)
    with pytest.raises(ValueError):
        ReactionRule.parse("-1")
    with pytest.raises(ValueError):
        ReactionRule.parse("bargaining")


def test_rule_coefficients():
    pi = np.array([0.6, 0.4])
    gdp = np.array([3.0, 1.0])
    # lambda_ab: reaction of b per unit change of P_ab
    assert ReactionRule.gdp().coefficient(0, 1, pi, gdp) == 3.0
    assert ReactionRule.authority().coefficient(1, 0, pi, gdp) == pytest.approx(0.4 / 0.6)
    assert ReactionRule.midpoint().coefficient(1, 0, pi, gdp) == pytest.approx(
        (0.4 / 0.6 + 1 / 3) / 2)
    assert ReactionRule.explicit(0.3).coefficient(0, 1, pi, gdp) == 0.3


# -- reduced blocks ---------------------------------------------------------


def test_reduced_blocks_two_by_two(two_by_two):
    b = reduced_blocks(two_by_two, 0)
    assert b.Z.tolist() == [[0.6]] and b.alpha.tolist() == [0.2] and b.dropped == 0


def test_reduced_blocks_three_by_three():
    P = np.array([[0.5, 0.3, 0.2], [0.1, 0.7, 0.2], [0.25, 0.25, 0.5]])
    b = reduced_blocks(TradeMatrix.from_array(P), 1)
    assert b.Z.tolist() == [[0.5, 0.25], [0.2, 0.5]]
    assert b.alpha.tolist() == [0.1, 0.2]


def test_reduced_blocks_needs_two():
    with pytest.raises(ValueError):
        reduced_blocks(TradeMatrix.from_array([[1.0]]), 0)


@settings(max_examples=30, deadline=None)
@given(trade_matrices(), st.data())
def test_reduced_blocks_reassemble(tm, data):
    i = data.draw(st.integers(0, tm.n - 1))
    b = reduced_blocks(tm, i)
    keep = [k for k in range(tm.n) if k != i]
    rebuilt = tm.P.T.copy()
    rebuilt[np.ix_(keep, keep)] = b.Z
    assert np.array_equal(rebuilt, tm.P.T)
    assert np.array_equal(b.alpha, tm.P[i, keep])


# -- trade war ------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(trade_matrices(), st.data())
def test_tradewar_matches_fundamental_matrix(tm, data):
    i, j = data.draw(st.lists(st.integers(0, tm.n - 1), min_size=2, max_size=2, unique=True))
    rule = data.draw(st.sampled_from(RULES))
    pi = authority_distribution(tm).pi
    res = tradewar_derivative(tm, pi, i, j, rule)
    D = np.zeros((tm.n, tm.n))
    lam = res.lambda_used
    D[j, i], D[j, j], D[i, j], D[i, i] = 1, -1, lam, -lam
    expected = fundamental_derivative(tm.P, pi, D)
    np.testing.assert_allclose(res.d_pi, expected, rtol=1e-8, atol=1e-12)
    assert abs(res.d_pi.sum()) <= 1e-10


def test_status_quo_exact_zero():
    tm = make_matrix(5, 3)
    pi = authority_distribution(tm).pi
    res = tradewar_derivative(tm, pi, 1, 3, ReactionRule.authority())
    assert res.self_derivative == 0.0
    assert np.all(res.d_pi == 0.0)
    assert res.reaction_factor == 0.0


@settings(max_examples=40, deadline=None)
@given(trade_matrices(), st.data(), st.floats(0, 3), st.floats(0, 3))
def test_linear_in_lambda(tm, data, a, b):
    i, j = data.draw(st.lists(st.integers(0, tm.n - 1), min_size=2, max_size=2, unique=True))
    pi = authority_distribution(tm).pi

    def d(lam):
        return tradewar_derivative(tm, pi, i, j, ReactionRule.explicit(lam)).self_derivative

    assert abs(d((a + b) / 2) - (d(a) + d(b)) / 2) <= 1e-12
    root = pi[j] / pi[i]
    assert abs(d(root)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(trade_matrices(), st.data(), st.floats(0, 5))
def test_sign_rule(tm, data, lam):
    i, j = data.draw(st.lists(st.integers(0, tm.n - 1), min_size=2, max_size=2, unique=True))
    pi = authority_distribution(tm).pi
    res = tradewar_derivative(tm, pi, i, j, ReactionRule.explicit(lam))
    factor = lam * pi[i] - pi[j]
    if abs(factor) > 1e-9:
        assert np.sign(res.self_derivative) == -np.sign(factor)


def test_same_country():
    tm = make_matrix(3, 0)
    with pytest.raises(SameCountry):
        tradewar_derivative(tm, None, 1, 1, ReactionRule.gdp())


def test_rule_is_required_gdp():
    tm = TradeMatrix.from_array(make_matrix(3, 0).P)  # no GDP vector
    with pytest.raises(ValueError):
        tradewar_derivative(tm, None, 0, 1, ReactionRule.gdp())


# -- globalization ----------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(trade_matrices(), st.data())
def test_M_structure(tm, data):
    i = data.draw(st.integers(0, tm.n - 1))
    rule = data.draw(st.sampled_from(RULES))
    pi = authority_distribution(tm).pi
    M = globalization_M(tm, i, rule, pi)
    assert np.abs(M.sum(axis=1)).max() <= 1e-14
    assert M[i, i] == 1.0
    lam = [0 if s == i else rule.coefficient(i, s, pi, tm.gdp) for s in range(tm.n)]
    np.testing.assert_allclose(M, literal_M(tm.P, i, lam), rtol=1e-12, atol=1e-15)


def test_M_without_reaction():
    tm = make_matrix(4, 7)
    M = globalization_M(tm, 2, ReactionRule.explicit(0))
    others = np.delete(M, 2, axis=0)
    assert not others.any()


def test_M_degenerate_denominator():
    P = np.array([[1.0, 0.0, 0.0], [0.2, 0.3, 0.5], [0.1, 0.4, 0.5]])
    with pytest.raises(DegenerateDenominator):
        globalization_M(TradeMatrix.from_array(P), 0, ReactionRule.explicit(1))
    P = np.array([[0.5, 0.5, 0.0], [1.0, 0.0, 0.0], [0.1, 0.4, 0.5]])
    with pytest.raises(DegenerateDenominator) as exc:
        globalization_M(TradeMatrix.from_array(P), 0, ReactionRule.explicit(1))
    assert exc.value.country == "AAB"


@settings(max_examples=40, deadline=None)
@given(trade_matrices(), st.data())
def test_globalization_matches_fundamental_matrix(tm, data):
    i = data.draw(st.integers(0, tm.n - 1))
    rule = data.draw(st.sampled_from(RULES))
    pi = authority_distribution(tm).pi
    res = globalization_derivative(tm, pi, i, rule)
    lam = [0 if s == i else rule.coefficient(i, s, pi, tm.gdp) for s in range(tm.n)]
    expected = fundamental_derivative(tm.P, pi, literal_M(tm.P, i, lam))
    np.testing.assert_allclose(res.d_pi, expected, rtol=1e-8, atol=1e-12)
    assert abs(res.d_pi.sum()) <= 1e-10


def test_two_country_closed_form():
    tm = TradeMatrix.from_array([[0.5, 0.5], [0.5, 0.5]])
    pi = authority_distribution(tm).pi
    # Symmetric reaction keeps pi at (1/2, 1/2).
    res = globalization_derivative(tm, pi, 0, ReactionRule.explicit(1))
    np.testing.assert_allclose(res.d_pi, [0.0, 0.0], atol=1e-15)
    # With lambda = 2: P_10 = 1/2 - 2t, P_01 = 1/2 - t, pi_0 = P_10 / (P_01 + P_10),
    # so d pi_0 / dt at t = 0 is (-2 * 1 + 0.5 * 3) / 1 = -1/2.
    res = globalization_derivative(tm, pi, 0, ReactionRule.explicit(2))
    np.testing.assert_allclose(res.d_pi, [-0.5, 0.5], rtol=1e-14)


# -- elasticities ---------------------------------------------------------


def _fake_result(d_pi, actor=0, target=1):
    return SensitivityResult("trade-war", actor, target, np.asarray(d_pi), 0.0, 0.0, None,
                             ReactionRule.explicit(0))


def test_log_elasticity_arithmetic():
    P = np.array([[0.9, 0.1], [0.02, 0.98]])
    tm = TradeMatrix.from_array(P)
    el = log_elasticity(_fake_result([0.5, -0.5]), tm, [0.1, 0.9])
    assert el[0] == pytest.approx(0.1, rel=1e-15)
    assert log_elasticity(_fake_result([0.0, 0.0]), tm, [0.1, 0.9])[0] == 0.0


def test_log_elasticity_zero_base():
    P = np.array([[0.9, 0.1, 0.0], [0.0, 0.5, 0.5], [0.3, 0.2, 0.5]])
    tm = TradeMatrix.from_array(P)
    with pytest.raises(ZeroBaseEntry):
        log_elasticity(_fake_result([0.1, 0.0, -0.1]), tm, [0.3, 0.3, 0.4])
    res = tradewar_derivative(tm, None, 0, 1, ReactionRule.explicit(1.0))
    assert res.log_elasticities is None


def test_result_elasticities_consistent():
    tm = make_matrix(6, 11)
    pi = authority_distribution(tm).pi
    res = tradewar_derivative(tm, pi, 2, 4, ReactionRule.gdp())
    np.testing.assert_allclose(res.log_elasticities, log_elasticity(res, tm, pi), rtol=1e-15)
    res = globalization_derivative(tm, pi, 2, ReactionRule.midpoint())
    np.testing.assert_allclose(res.log_elasticities, log_elasticity(res, tm, pi), rtol=1e-15)


def test_factorization_is_cached():
    tm = make_matrix(5, 2)
    pi = authority_distribution(tm).pi
    tradewar_derivative(tm, pi, 0, 1, ReactionRule.gdp())
    first = tm.cached(("reduced", 0), lambda: None)
    globalization_derivative(tm, pi, 0, ReactionRule.gdp())
    assert tm.cached(("reduced", 0), lambda: None) is first
