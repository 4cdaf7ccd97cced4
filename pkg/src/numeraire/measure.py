"""Equivalent sigma-martingale measures by reweighting jump intensities.

Under the new measure atom ``i`` keeps its location and has intensity
``k_i Y_i``. The untruncated drift becomes ``b + sum_i k_i (Y_i - 1) x_i`` and
must vanish. Each step solves the L1 problem

    minimize   sum_i k_i |Y_i - 1|
    subject to b + sum_i k_i (Y_i - 1) x_i = 0,   Y_i >= min_weight,
               sum_i k_i (Y_i - 1) = 0             (predictable-jump steps)

and the step is feasible when the cost fits the per-step budget ``epsilon / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .growthopt import numeraire_transform
from .mc import deflator_test, default_strategies, PathBundle
from .model import PREDICTABLE_JUMP, LevyAtomMeasure, LocalTriplet, MarketModel, Portfolio

FEASIBLE = "feasible"
OVER_BUDGET = "infeasible_within_budget"
STRUCTURAL = "structurally_infeasible"
INDETERMINATE = "indeterminate"

MIN_WEIGHT = 1e-6
DRIFT_TOL = 1e-9
BUDGET_RTOL = 1e-12


@dataclass
class DensitySolution:
    step: int
    weights: np.ndarray
    tv_cost: float
    status: str
    residual_drift: np.ndarray
    budget: float
    unspanned: np.ndarray | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "weights": self.weights.tolist(),
            "tv_cost": self.tv_cost,
            "status": self.status,
            "residual_drift": self.residual_drift.tolist(),
            "budget": self.budget,
            "unspanned": None if self.unspanned is None else self.unspanned.tolist(),
            "message": self.message,
        }


def _unspanned(b: np.ndarray, x: np.ndarray) -> np.ndarray:
    if x.shape[0] == 0:
        return b.copy()
    coef, *_ = np.linalg.lstsq(x.T, b, rcond=None)
    return b - x.T @ coef


def _polish(u, A, rhs, min_weight, tol=1e-12):
    """Re-solve the equalities on the atoms that moved off ``Y = 1`` and ``Y = min_weight``."""
    lb = min_weight - 1.0
    zero = np.abs(u) <= tol
    low = (~zero) & (u <= lb + tol)
    free = ~(zero | low)
    if not free.any():
        return u
    fixed = np.where(low, lb, 0.0)
    sol, *_ = np.linalg.lstsq(A[:, free], rhs - A[:, ~free] @ fixed[~free], rcond=None)
    cand = fixed.copy()
    cand[free] = sol
    if (np.all(np.sign(cand[free]) == np.sign(u[free])) and np.all(cand >= lb)
            and np.linalg.norm(A @ cand - rhs) <= np.linalg.norm(A @ u - rhs)):
        return cand
    return u


def sigma_density_step(triplet: LocalTriplet, step_kind: str, epsilon: float,
                       min_weight: float = MIN_WEIGHT, step: int = 0) -> DensitySolution:
    """Cheapest jump reweighting that removes the drift of ``triplet``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    b = triplet.drift
    x, k = triplet.jumps.locations, triplet.jumps.intensities
    n = triplet.jumps.n_atoms
    budget = 0.5 * epsilon
    ones = np.ones(n)
    if np.max(np.abs(b), initial=0.0) <= DRIFT_TOL:
        return DensitySolution(step, ones, 0.0, FEASIBLE, b.copy(), budget)
    if n == 0:
        return DensitySolution(step, ones, 0.0, STRUCTURAL, b.copy(), budget, b.copy(),
                               "no atoms to carry the drift (diffusion drift cannot be removed)")

    A = (x * k[:, None]).T
    rhs = -b
    if step_kind == PREDICTABLE_JUMP:
        A = np.vstack([A, k])
        rhs = np.concatenate([rhs, [0.0]])
    res = linprog(np.concatenate([k, k]), A_eq=np.hstack([A, -A]), b_eq=rhs,
                  bounds=[(0, None)] * n + [(0, 1.0 - min_weight)] * n, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status == 2:
        return DensitySolution(step, ones, np.inf, STRUCTURAL, b.copy(), budget,
                               _unspanned(b, x), "drift is outside the reachable cone")
    if res.status != 0:
        return DensitySolution(step, ones, np.nan, INDETERMINATE, b.copy(), budget,
                               message=f"LP solver failure: {res.message}")

    u = _polish(res.x[:n] - res.x[n:], A, rhs, min_weight)
    Y = 1.0 + u
    cost = float(k @ np.abs(u))
    residual = b + A[: b.shape[0]] @ u
    status = FEASIBLE if cost <= budget * (1.0 + BUDGET_RTOL) else OVER_BUDGET
    return DensitySolution(step, Y, cost, status, residual, budget)


@dataclass
class SigmaChangeReport:
    steps: list[DensitySolution]
    epsilon: float
    delta_a: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(0))

    @property
    def status(self) -> str:
        statuses = {s.status for s in self.steps}
        for st in (STRUCTURAL, INDETERMINATE, OVER_BUDGET):
            if st in statuses:
                return st
        return FEASIBLE

    @property
    def failing_steps(self) -> list[int]:
        return [s.step for s in self.steps if s.status != FEASIBLE]

    @property
    def max_step_cost(self) -> float:
        return max((s.tv_cost for s in self.steps), default=0.0)

    @property
    def clock_weighted_cost(self) -> float:
        """Per-step costs weighted by the clock increments."""
        return float(sum(dA * s.tv_cost for dA, s in zip(self.delta_a, self.steps)))

    @property
    def tv_bound(self) -> float:
        """Bound on ``|P~ - P|_TV`` (twice the clock-weighted cost)."""
        return 2.0 * self.clock_weighted_cost

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "epsilon": self.epsilon,
            "failing_steps": self.failing_steps,
            "max_step_cost": self.max_step_cost,
            "clock_weighted_cost": self.clock_weighted_cost,
            "tv_bound": self.tv_bound,
            "steps": [s.to_dict() for s in self.steps],
        }


def sigma_change(model: MarketModel, g: Portfolio, epsilon: float,
                 min_weight: float = MIN_WEIGHT) -> SigmaChangeReport:
    """Densities that turn ``S^g`` (prices in units of ``E(g.S)``) into a sigma-martingale."""
    g.validate(model)
    steps = [sigma_density_step(numeraire_transform(tr, g[m]), kind, epsilon, min_weight, m)
             for m, _, kind, tr in model.steps()]
    return SigmaChangeReport(steps, epsilon, np.asarray(model.delta_a))


def reweight_model(model: MarketModel, densities) -> MarketModel:
    """Characteristics of ``S`` under the reweighted measure."""
    steps = densities.steps if isinstance(densities, SigmaChangeReport) else list(densities)
    triplets = []
    for (m, _, _, tr), sol in zip(model.steps(), steps):
        if tr.jumps.n_atoms == 0:
            triplets.append(tr)
            continue
        x, k = tr.jumps.locations, tr.jumps.intensities
        Y = np.asarray(sol.weights, dtype=float)
        b = tr.drift + ((Y - 1.0) * k) @ x
        triplets.append(LocalTriplet(b, tr.diffusion, LevyAtomMeasure(x, k * Y)))
    return model.with_triplets(triplets)


def quadratic_tilt_weights(bundle: PathBundle, n: float, normalize: bool = True) -> np.ndarray:
    """Per-path density ``c_n / (1 + |x|^2 * mu_T / n)``.

    ``c_n`` is the empirical constant giving sample mean 1; with
    ``normalize=False`` the raw factor ``1 / (1 + ...)`` is returned.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    raw = 1.0 / (1.0 + bundle.jump_square_sums() / n)
    return raw / np.mean(raw) if normalize else raw


def verify_sigma_change(model: MarketModel, g: Portfolio, densities, n_paths: int = 100_000,
                        seed: int = 0, f_list=None, labels=None, z: float = 4.0):
    """Monte Carlo check that wealth ratios are martingales under the reweighted measure."""
    steps = densities.steps if isinstance(densities, SigmaChangeReport) else list(densities)
    bad = [s.step for s in steps if s.status != FEASIBLE]
    if bad:
        raise ValueError(f"densities are not feasible at steps {bad}; refusing to simulate")
    tilted = reweight_model(model, steps)
    for m, _, _, tr in tilted.steps():
        drift = numeraire_transform(tr, g[m]).drift
        if np.max(np.abs(drift), initial=0.0) > DRIFT_TOL:
            raise ValueError(f"step {m}: reweighted drift {drift.tolist()} is not killed")
    if f_list is None:
        f_list, labels = default_strategies(tilted, g)
    return deflator_test(tilted, g, f_list, n_paths, seed, z=z, labels=labels)
