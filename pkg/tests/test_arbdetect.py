import numpy as np
import pytest

from numeraire.arbdetect import (ARBITRAGE, CLEAN, detect_immediate_arbitrage,
                                 is_immediate_arbitrage, null_complement, null_investments,
                                 scan_model)
from numeraire.model import LocalTriplet, make_model
from oracles import arbitrage_member, brute_force_arbitrage, random_clean_triplet


def test_designed_arbitrage_instance():
    tr = LocalTriplet.from_values([1.0], [[0.0]], [([1.0], 0.5)])
    res = detect_immediate_arbitrage(tr)
    assert res.verdict == ARBITRAGE
    assert arbitrage_member(tr, res.certificate, tol=1e-9)
    np.testing.assert_allclose(res.certificate, [1.0], atol=1e-12)
    assert res.slack == pytest.approx(0.5, abs=1e-9)


def test_two_sided_atoms_are_clean():
    tr = LocalTriplet.from_values([0.3], [[0.0]], [([0.5], 1.0), ([-0.5], 1.0)])
    assert detect_immediate_arbitrage(tr).verdict == CLEAN


def test_drift_without_risk_is_arbitrage():
    tr = LocalTriplet.from_values([0.1, 0.02], np.diag([0.04, 0.0]))
    res = detect_immediate_arbitrage(tr)
    assert res.verdict == ARBITRAGE
    assert abs(res.certificate[0]) < 1e-12 and res.certificate[1] > 0


def test_null_investments_of_redundant_assets():
    # second asset duplicates the first: direction (1, -1) is a null investment
    tr = LocalTriplet.from_values([0.05, 0.05], [[0.04, 0.04], [0.04, 0.04]],
                                  [([0.1, 0.1], 0.5)])
    N = null_investments(tr)
    assert N.shape == (2, 1)
    np.testing.assert_allclose(np.abs(N[:, 0]), [2**-0.5, 2**-0.5], atol=1e-12)
    assert null_complement(tr).shape == (2, 1)
    assert detect_immediate_arbitrage(tr).verdict == CLEAN


def test_zero_triplet_is_degenerate_clean():
    tr = LocalTriplet.from_values([0.0, 0.0], np.zeros((2, 2)))
    res = detect_immediate_arbitrage(tr)
    assert res.verdict == CLEAN and null_investments(tr).shape == (2, 2)


def test_random_clean_instances_have_no_certificate():
    rng = np.random.default_rng(3)
    for i in range(50):
        tr = random_clean_triplet(rng)
        assert detect_immediate_arbitrage(tr).verdict == CLEAN
        assert brute_force_arbitrage(tr, 200, seed=i) == []


def test_random_arbitrage_instances_certified():
    rng = np.random.default_rng(4)
    for _ in range(30):
        d = int(rng.integers(1, 4))
        # all atoms in a half-space {v.x >= 0} with drift above the jump mean
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        xs = []
        for _ in range(int(rng.integers(1, 5))):
            x = rng.standard_normal(d)
            xs.append(x if x @ v > 0.05 else x - (x @ v - 0.1) * v)
        ks = rng.uniform(0.1, 1.0, len(xs))
        b = (ks @ np.array(xs)) + 0.2 * v
        tr = LocalTriplet.from_values(b, np.zeros((d, d)), list(zip(xs, ks)))
        res = detect_immediate_arbitrage(tr)
        assert res.verdict == ARBITRAGE
        assert arbitrage_member(tr, res.certificate)
        assert is_immediate_arbitrage(tr, res.certificate)


def test_scan_model_lists_steps():
    good = LocalTriplet.from_values([0.05], [[0.04]])
    bad = LocalTriplet.from_values([1.0], [[0.0]], [([1.0], 0.5)])
    rep = scan_model(make_model([good, bad], [0.5, 0.5]))
    assert rep.verdict == ARBITRAGE and rep.arbitrage_steps == [1]
    assert rep.to_dict()["steps"][1]["certificate"] == [1.0]
