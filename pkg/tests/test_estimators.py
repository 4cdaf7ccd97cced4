import json

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from numeraire.estimators import (ArbitrageDetector, GrowthOptimalPortfolio,
                                  SigmaMartingaleMeasure, check_epsilon, check_model,
                                  check_portfolio)
from numeraire.model import ModelValidationError, Portfolio, load_model


def test_check_model_inputs(models_dir):
    path = models_dir / "merton.json"
    text = path.read_text()
    for obj in (path, str(path), text, json.loads(text), load_model(path)):
        assert check_model(obj).n_steps == 1
    with pytest.raises(TypeError):
        check_model(3.0)


def test_check_portfolio_and_epsilon(models_dir):
    m = check_model(models_dir / "jump.json")
    assert isinstance(check_portfolio(0.3, m), Portfolio)
    with pytest.raises(ModelValidationError):
        check_portfolio([2.0], m)
    with pytest.raises(ValueError):
        check_epsilon(0.0)


def test_growth_optimal_estimator(models_dir):
    est = GrowthOptimalPortfolio()
    with pytest.raises(NotFittedError):
        est.predict()
    est.fit(models_dir / "merton.json")
    assert est.predict()[0, 0] == pytest.approx(1.25, abs=1e-12)
    assert est.score(models_dir / "merton.json") == pytest.approx(0.03125, abs=1e-15)
    tm = est.transform(models_dir / "merton.json")
    assert abs(tm.triplets[0].drift[0]) <= 1e-15
    with pytest.raises(ValueError, match="shape"):
        est.transform(models_dir / "jump_diffusion_2d.json")
    params = est.get_params()
    assert params["grad_tol"] == 1e-8
    assert clone(est).set_params(max_iter=5).max_iter == 5


def test_fit_transform(models_dir):
    tm = GrowthOptimalPortfolio().fit_transform(models_dir / "jump_diffusion_2d.json")
    assert all(np.max(np.abs(tr.drift)) <= 1e-8 for tr in tm.triplets)


def test_arbitrage_detector(models_dir):
    det = ArbitrageDetector().fit(models_dir / "arbitrage.json")
    assert det.verdict_ == "immediate_arbitrage"
    assert det.predict().tolist() == [True]
    assert det.certificates()[0].tolist() == [1.0]
    assert det.predict(models_dir / "merton.json").tolist() == [False]


def test_sigma_martingale_measure(models_dir):
    sm = SigmaMartingaleMeasure(epsilon=0.5).fit(models_dir / "two_atom.json", portfolio=[0.0])
    np.testing.assert_allclose(sm.densities_[0], [0.8, 1.0], atol=1e-10)
    rw = sm.transform(models_dir / "two_atom.json")
    assert abs(rw.triplets[0].drift[0]) <= 1e-12
    opt = SigmaMartingaleMeasure(epsilon=0.1).fit(models_dir / "jump.json")
    assert opt.status_ == "feasible" and np.all(opt.densities_[0] == 1.0)
    tight = SigmaMartingaleMeasure(epsilon=0.1).fit(models_dir / "two_atom.json", portfolio=[0.0])
    with pytest.raises(ValueError, match="infeasible_within_budget"):
        tight.transform(models_dir / "two_atom.json")
