"""Numeraire portfolios for semimartingales with finitely many jump atoms,
with arbitrage certificates and jump-reweighting measure changes."""

from .arbdetect import ArbitrageReport, StepArbitrage, detect_immediate_arbitrage, null_investments, scan_model
from .estimators import (ArbitrageDetector, GrowthOptimalPortfolio, SigmaMartingaleMeasure,
                         check_model, check_portfolio)
from .growthopt import (SolverDivergence, SolverOptions, foc_residual, integrability_profile,
                        log_growth, numeraire_transform, ratio_drift, solve_growth_optimal,
                        solve_model, transform_model)
from .measure import DensitySolution, sigma_change, sigma_density_step, verify_sigma_change
from .mc import deflator_test, simulate
from .model import (ClockGrid, LevyAtomMeasure, LocalTriplet, MarketModel, ModelValidationError,
                    Portfolio, load_model, make_model, parse_model, truncation_convert)

__version__ = "0.1.0"
