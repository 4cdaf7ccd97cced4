"""Null investments and immediate-arbitrage directions per step.

A direction ``v`` is an immediate arbitrage at a step when it has no downside
jumps (``v.x_i >= 0``), no diffusion exposure (``c v = 0``), a nonnegative net
drift (``v.drift >= sum_i k_i v.x_i``) and is not a null investment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .model import LocalTriplet, MarketModel

CLEAN = "clean"
ARBITRAGE = "immediate_arbitrage"
INDETERMINATE = "indeterminate"

RANK_TOL = 1e-10
SLACK_TOL = 1e-9
MEMBERSHIP_TOL = 1e-9

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def constraint_stack(triplet: LocalTriplet) -> np.ndarray:
    """Rows whose common kernel is the null-investment subspace."""
    d = triplet.dimension
    return np.vstack([triplet.jumps.locations.reshape(-1, d), triplet.diffusion, triplet.drift.reshape(1, d)])


def _kernel_split(A: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    if A.shape[0] == 0:
        return np.eye(d), np.zeros((d, 0))
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    cutoff = RANK_TOL * max(1.0, s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return Vt[rank:].T.copy(), Vt[:rank].T.copy()


def null_investments(triplet: LocalTriplet) -> np.ndarray:
    """Orthonormal basis (columns) of ``N = {v: v.x_i = 0, c v = 0, v.drift = 0}``."""
    return _kernel_split(constraint_stack(triplet), triplet.dimension)[0]


def null_complement(triplet: LocalTriplet) -> np.ndarray:
    """Orthonormal basis (columns) of the orthogonal complement of ``N``."""
    return _kernel_split(constraint_stack(triplet), triplet.dimension)[1]


def diffusion_range(c: np.ndarray) -> np.ndarray:
    """Eigenvectors of ``c`` with eigenvalue above the cutoff."""
    if c.size == 0:
        return np.zeros((c.shape[0], 0))
    w, V = np.linalg.eigh(0.5 * (c + c.T))
    return V[:, w > RANK_TOL]


def is_immediate_arbitrage(triplet: LocalTriplet, v, tol: float = MEMBERSHIP_TOL) -> bool:
    """Direct evaluation of the membership predicates of the set ``I``."""
    v = np.asarray(v, dtype=float)
    x, k = triplet.jumps.locations, triplet.jumps.intensities
    jumps = x @ v if triplet.jumps.n_atoms else np.zeros(0)
    if np.any(jumps < -tol):
        return False
    if np.linalg.norm(triplet.diffusion @ v) > tol:
        return False
    drift = float(v @ triplet.drift)
    jump_mean = float(k @ jumps) if jumps.size else 0.0
    if drift < jump_mean - tol:
        return False
    return drift - jump_mean > tol or bool(np.any(jumps > tol))


@dataclass
class StepArbitrage:
    step: int
    null_basis: np.ndarray
    verdict: str
    certificate: np.ndarray | None = None
    slack: float = 0.0
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "verdict": self.verdict,
            "null_basis": self.null_basis.T.tolist(),
            "certificate": None if self.certificate is None else self.certificate.tolist(),
            "slack": self.slack,
            "message": self.message,
        }


@dataclass
class ArbitrageReport:
    steps: list[StepArbitrage] = field(default_factory=list)

    @property
    def verdict(self) -> str:
        verdicts = {s.verdict for s in self.steps}
        if ARBITRAGE in verdicts:
            return ARBITRAGE
        if INDETERMINATE in verdicts:
            return INDETERMINATE
        return CLEAN

    @property
    def arbitrage_steps(self) -> list[int]:
        return [s.step for s in self.steps if s.verdict == ARBITRAGE]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "arbitrage_steps": self.arbitrage_steps,
            "steps": [s.to_dict() for s in self.steps],
        }


def _solve_cone_lp(objective, triplet, U):
    d = triplet.dimension
    x, k = triplet.jumps.locations, triplet.jumps.intensities
    jump_mean = k @ x if triplet.jumps.n_atoms else np.zeros(d)
    A_ub = np.vstack([-x.reshape(-1, d), -(triplet.drift - jump_mean).reshape(1, d)])
    b_ub = np.zeros(A_ub.shape[0])
    kwargs = {}
    if U.shape[1]:
        kwargs = {"A_eq": U.T, "b_eq": np.zeros(U.shape[1])}
    return linprog(-np.asarray(objective), A_ub=A_ub, b_ub=b_ub, bounds=[(-1.0, 1.0)] * d,
                   method="highs", options=_HIGHS_OPTIONS, **kwargs)


def detect_immediate_arbitrage(triplet: LocalTriplet, step: int = 0) -> StepArbitrage:
    """Search the box ``|v|_inf <= 1`` for a direction in ``I``.

    Two LPs share the cone constraints: one maximizes the net drift
    ``v.drift - sum k_i v.x_i``, the other the jump mean ``sum k_i v.x_i``. ``I`` is
    nonempty iff either optimum exceeds ``SLACK_TOL``.
    """
    d = triplet.dimension
    basis = null_investments(triplet)
    x, k = triplet.jumps.locations, triplet.jumps.intensities
    if not triplet.jumps.n_atoms and not np.any(triplet.drift) and not np.any(triplet.diffusion):
        return StepArbitrage(step, basis, CLEAN, message="degenerate step")

    U = diffusion_range(triplet.diffusion)
    jump_mean = k @ x if triplet.jumps.n_atoms else np.zeros(d)
    best_val, best_v = -np.inf, None
    for objective in (triplet.drift - jump_mean, jump_mean):
        if not np.any(objective):
            continue
        res = _solve_cone_lp(objective, triplet, U)
        if res.status != 0:
            return StepArbitrage(step, basis, INDETERMINATE,
                                 message=f"LP solver failure: {res.message}")
        if -res.fun > best_val:
            best_val, best_v = -res.fun, np.asarray(res.x, dtype=float)

    if best_v is None or best_val <= SLACK_TOL:
        return StepArbitrage(step, basis, CLEAN, slack=max(best_val, 0.0) if best_v is not None else 0.0)

    # remove solver round-off in the equality directions
    v = best_v - U @ (U.T @ best_v) if U.shape[1] else best_v
    if not is_immediate_arbitrage(triplet, v):
        return StepArbitrage(step, basis, INDETERMINATE, slack=float(best_val),
                             message="LP optimum failed the membership re-check")
    return StepArbitrage(step, basis, ARBITRAGE, certificate=v, slack=float(best_val))


def scan_model(model: MarketModel) -> ArbitrageReport:
    """Run the null-investment and arbitrage checks on every step."""
    return ArbitrageReport([detect_immediate_arbitrage(tr, m) for m, _, _, tr in model.steps()])
