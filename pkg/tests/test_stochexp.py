import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from numeraire.stochexp import (AdmissibilityError, IncrementPath, PriceIncrements,
                                boundedness_stats, exp_bound_violations, gap_terms,
                                ratio_transform_check, reciprocal_log, stoch_exp, stoch_log,
                                strategy_path)


def mixed_path(rng, n=1000, M=6, J=3) -> IncrementPath:
    qv = rng.uniform(0, 0.05, M)
    return IncrementPath(rng.standard_normal((n, M)) * np.sqrt(qv), qv,
                         rng.uniform(-0.05, 0.05, M), rng.uniform(-0.6, 0.8, (n, M, J)),
                         rng.poisson(0.7, (n, M, J)))


def mixed_prices(rng, n=1000, M=5, d=2, J=3) -> PriceIncrements:
    L = rng.standard_normal((M, d, d)) * 0.1
    cov = L @ np.transpose(L, (0, 2, 1))
    gauss = np.einsum("mde,nme->nmd", L, rng.standard_normal((n, M, d)))
    return PriceIncrements(gauss, rng.uniform(-0.02, 0.02, (M, d)), cov,
                           np.broadcast_to(rng.uniform(-0.3, 0.3, (M, J, d)), (n, M, J, d)),
                           rng.poisson(0.5, (n, M, J)))


def test_zero_path_is_one():
    np.testing.assert_array_equal(stoch_exp(IncrementPath.zeros(4, 2)), np.ones(5))


def test_single_jump_factor():
    w = stoch_exp(IncrementPath.pure_jump([0.5, -0.2]))
    np.testing.assert_allclose(w, [1.0, 1.5, 1.2], rtol=0, atol=1e-15)


def test_exp_log_roundtrip(rng):
    path = mixed_path(rng)
    w = stoch_exp(path)
    back = stoch_exp(stoch_log(w))
    assert np.max(np.abs(back / w - 1)) <= 1e-12
    jumps = IncrementPath.pure_jump(rng.uniform(-0.9, 2.0, (50, 8)))
    relog = stoch_log(stoch_exp(jumps))
    np.testing.assert_allclose(relog.jumps, jumps.jumps, rtol=0, atol=1e-12)


def test_reciprocal_identity(rng):
    path = mixed_path(rng)
    prod = stoch_exp(path) * stoch_exp(reciprocal_log(path))
    assert np.max(np.abs(prod - 1)) <= 1e-12


def test_exp_bound(rng):
    assert exp_bound_violations(mixed_path(rng)) == 0


def test_ratio_identity(rng):
    inc = mixed_prices(rng)
    f = rng.uniform(-1, 1, (5, 2))
    g = rng.uniform(-1, 1, (5, 2))
    chk = ratio_transform_check(f, g, inc)
    assert chk.passed and chk.max_rel_error <= 1e-10 and not chk.pure_jump


def test_admissibility_errors():
    with pytest.raises(AdmissibilityError):
        stoch_exp(IncrementPath.pure_jump([-1.0]))
    with pytest.raises(AdmissibilityError):
        stoch_log(np.array([1.0, 0.0]))
    # a switched-off slot may hold any value
    p = IncrementPath(np.zeros(1), np.zeros(1), np.zeros(1), np.array([[-3.0]]), np.array([[0]]))
    assert stoch_exp(p)[-1] == 1.0


def test_gap_terms_nonnegative(rng):
    g1, g2 = gap_terms(mixed_path(rng))
    assert np.all(g1 >= -1e-15) and np.all(g2 >= -1e-15)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-0.95, 5.0), min_size=1, max_size=12),
       st.lists(st.floats(-1, 1), min_size=1, max_size=12))
def test_identities_hold_for_arbitrary_jumps(jumps, gauss):
    M = min(len(jumps), len(gauss))
    j = np.array(jumps[:M])
    path = IncrementPath(np.array(gauss[:M]) * 0.3, np.full(M, 0.09), np.zeros(M), j[:, None])
    w = stoch_exp(path)
    assert np.all(w > 0)
    assert np.max(np.abs(w * stoch_exp(reciprocal_log(path)) - 1)) <= 1e-12
    assert exp_bound_violations(path) == 0


def test_boundedness_family(rng):
    def member(scale):
        return IncrementPath.pure_jump(scale * rng.uniform(-0.5, 0.5, (2000, 10)))
    bounded = boundedness_stats([member(1.0) for _ in range(4)])
    assert all(bounded["bounded"].values()) and bounded["consistent"]
    # jumps towards -1 make E(R) collapse and Z = L(1/E(R)) explode
    growing = [IncrementPath(np.zeros((2000, 10)), np.zeros(10), np.zeros(10),
                             (1 - 10.0**-n) * -rng.uniform(0.5, 1, (2000, 10, 1)))
               for n in range(1, 6)]
    rep = boundedness_stats(growing)
    assert not rep["bounded"]["sup_abs_recip_log"]
    # the reciprocal log runs upward here, so its running minimum stays put
    assert rep["bounded"]["neg_inf_recip_log"] and rep["bounded"]["sup_wealth"]


def test_strategy_path_shapes(rng):
    inc = mixed_prices(rng, n=10)
    p = strategy_path(np.ones((5, 2)), inc)
    assert p.cont_gauss.shape == (10, 5) and p.jumps.shape == (10, 5, 3)
    np.testing.assert_allclose(p.values()[:, -1], inc.total().sum(axis=(1, 2)), atol=1e-12)
