import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

from counterbalance.authority import authority_distribution, ratios
from counterbalance.errors import NoConvergence, SameCountry, SingularSystem
from counterbalance.trade_matrix import TradeMatrix

from conftest import make_matrix, trade_matrices


def test_uniform_two_by_two():
    pi = authority_distribution(TradeMatrix.from_array([[0.5, 0.5], [0.5, 0.5]])).pi
    np.testing.assert_allclose(pi, [0.5, 0.5], rtol=0, atol=1e-15)


def test_two_by_two_hand_and_brute_force(two_by_two):
    # Balance: pi_0 * 0.2 = pi_1 * 0.4, so pi = (2/3, 1/3) in exact arithmetic.
    P = [[Fraction(4, 5), Fraction(1, 5)], [Fraction(2, 5), Fraction(3, 5)]]
    ratio = P[1][0] / P[0][1]
    exact = [ratio / (1 + ratio), 1 / (1 + ratio)]
    assert exact == [Fraction(2, 3), Fraction(1, 3)]
    brute = np.linalg.matrix_power(np.array(two_by_two.P), 200)[0]
    pi = authority_distribution(two_by_two).pi
    np.testing.assert_allclose(pi, [2 / 3, 1 / 3], rtol=0, atol=1e-15)
    np.testing.assert_allclose(pi, brute, rtol=0, atol=1e-14)


def test_identity_is_singular():
    with pytest.raises(SingularSystem):
        authority_distribution(TradeMatrix.from_array(np.eye(3)))
    with pytest.raises(SingularSystem):
        authority_distribution(TradeMatrix.from_array(np.eye(3)), force=True)


def test_power_iteration_cap():
    tm = make_matrix(5, 1, export_share=(0.001, 0.002))
    with pytest.raises(NoConvergence) as exc:
        authority_distribution(tm, "power", max_iter=3)
    assert exc.value.iterations == 3


def test_unknown_method(two_by_two):
    with pytest.raises(ValueError):
        authority_distribution(two_by_two, "eigen")


def test_ratios_published_example():
    pi = np.array([0.3287, 0.0930])
    gdp = np.array([20.58, 12.79])
    r = ratios(pi, gdp, 0, 1)
    assert round(r.authority_ratio, 4) == 0.2829
    assert round(r.gdp_ratio, 4) == 0.6215
    with pytest.raises(SameCountry):
        ratios(pi, gdp, 1, 1)


@settings(max_examples=60, deadline=None)
@given(trade_matrices())
def test_fixed_point_and_inflow_identity(tm):
    av = authority_distribution(tm)
    pi = av.pi
    assert pi.min() >= 0
    assert abs(pi.sum() - 1) <= 1e-12
    assert av.residual <= 1e-12
    inflow = np.array([sum(pi[j] * tm.P[j, i] for j in range(tm.n)) for i in range(tm.n)])
    assert np.abs(inflow - pi).max() <= 1e-12


@settings(max_examples=40, deadline=None)
@given(trade_matrices())
def test_methods_agree(tm):
    direct = authority_distribution(tm).pi
    power = authority_distribution(tm, "power")
    assert np.abs(direct - power.pi).max() <= 1e-10
    assert power.iterations >= 1


@settings(max_examples=40, deadline=None)
@given(trade_matrices())
def test_permutation_equivariance(tm):
    rng = np.random.default_rng(tm.n)
    perm = rng.permutation(tm.n)
    permuted = TradeMatrix.from_array(tm.P[np.ix_(perm, perm)])
    np.testing.assert_allclose(authority_distribution(permuted).pi,
                               authority_distribution(tm).pi[perm], rtol=0, atol=1e-13)


@pytest.mark.parametrize("n", [50, 200, 500])
def test_residual_large(n):
    tm = make_matrix(n, n, dense=False)
    av = authority_distribution(tm)
    assert av.residual <= 1e-12
    assert abs(av.pi.sum() - 1) <= 1e-12


def test_vector_is_read_only(two_by_two):
    av = authority_distribution(two_by_two)
    with pytest.raises(ValueError):
        av.pi[0] = 1.0
    assert len(av) == 2 and np.asarray(av).shape == (2,)
