"""Stochastic exponential and logarithm on discrete paths.

Every step of a scalar path ``R`` is split into a continuous-martingale
increment, its quadratic variation, a drift increment and a list of jumps.
The exponential multiplies per step by

    exp(gauss + drift - qv / 2) * prod_j (1 + jump_j)

which keeps all pure-jump identities exact. Arrays carry arbitrary leading
(path) dimensions; the step axis comes next, then the jump axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AdmissibilityError(ValueError):
    """A jump ``<= -1`` (or a nonpositive wealth) makes the exponential undefined."""


@dataclass(frozen=True)
class IncrementPath:
    """Scalar increments per step: ``cont_gauss``, ``cont_qv``, ``drift`` of shape ``(..., M)``
    and ``jumps`` of shape ``(..., M, J)``.

    ``jump_counts`` (same shape as ``jumps``, defaults to ones) repeats each jump
    value; a count of zero switches the slot off. Zero-valued jumps are neutral too.
    """

    cont_gauss: np.ndarray
    cont_qv: np.ndarray
    drift: np.ndarray
    jumps: np.ndarray
    jump_counts: np.ndarray | None = None

    @classmethod
    def zeros(cls, shape, n_jumps: int = 0) -> IncrementPath:
        shape = tuple(np.atleast_1d(shape))
        z = np.zeros(shape)
        return cls(z, z.copy(), z.copy(), np.zeros(shape + (n_jumps,)))

    @classmethod
    def pure_jump(cls, jumps) -> IncrementPath:
        """One jump per step; ``jumps`` has shape ``(..., M)``."""
        j = np.asarray(jumps, dtype=float)
        z = np.zeros(j.shape)
        return cls(z, z.copy(), z.copy(), j[..., None])

    @property
    def n_steps(self) -> int:
        return np.shape(self.cont_gauss)[-1]

    def counts(self) -> np.ndarray:
        if self.jump_counts is None:
            return np.ones(np.shape(self.jumps))
        return np.asarray(self.jump_counts, dtype=float)

    def check(self) -> None:
        if np.any(np.asarray(self.cont_qv) < 0):
            raise AdmissibilityError("quadratic variation increments must be >= 0")
        if np.any((np.asarray(self.jumps) <= -1) & (self.counts() > 0)):
            raise AdmissibilityError("jump <= -1: stochastic exponential is not positive")

    def step_jump_sum(self) -> np.ndarray:
        return np.sum(self.counts() * self.jumps, axis=-1)

    def values(self) -> np.ndarray:
        """Running values ``R_0 = 0, R_1, ..., R_M``."""
        inc = self.cont_gauss + self.drift + self.step_jump_sum()
        inc = np.broadcast_to(inc, np.broadcast_shapes(np.shape(inc), np.shape(self.cont_gauss)))
        return _prepend(np.cumsum(inc, axis=-1), 0.0)


def _prepend(a: np.ndarray, value: float) -> np.ndarray:
    pad = np.full(a.shape[:-1] + (1,), value)
    return np.concatenate([pad, a], axis=-1)


def step_factors(path: IncrementPath) -> np.ndarray:
    path.check()
    cont = np.exp(path.cont_gauss + path.drift - 0.5 * path.cont_qv)
    jumps = np.prod(np.power(1.0 + np.asarray(path.jumps, dtype=float), path.counts()), axis=-1)
    return cont * jumps


def stoch_exp(path: IncrementPath) -> np.ndarray:
    """Running stochastic exponential ``E(R)``, starting at 1."""
    return _prepend(np.cumprod(step_factors(path), axis=-1), 1.0)


def stoch_log(wealth) -> IncrementPath:
    """Discrete stochastic logarithm: one jump ``W_m / W_{m-1} - 1`` per step."""
    w = np.asarray(wealth, dtype=float)
    if np.any(w <= 0):
        raise AdmissibilityError("wealth must be strictly positive")
    if not np.allclose(w[..., 0], 1.0, rtol=0, atol=1e-15):
        raise AdmissibilityError("wealth path must start at 1")
    return IncrementPath.pure_jump(w[..., 1:] / w[..., :-1] - 1.0)


def reciprocal_log(path: IncrementPath) -> IncrementPath:
    """``Z = L(1 / E(R))``: ``-R + <R^c> + sum dR^2 / (1 + dR)`` in increment form."""
    path.check()
    j = np.asarray(path.jumps, dtype=float)
    return IncrementPath(
        -np.asarray(path.cont_gauss, dtype=float),
        np.asarray(path.cont_qv, dtype=float),
        np.asarray(path.cont_qv, dtype=float) - np.asarray(path.drift, dtype=float),
        -j / (1.0 + j),
        path.jump_counts,
    )


def exp_bound_violations(path: IncrementPath, rtol: float = 1e-12) -> int:
    """Number of paths where ``E(R)_T > exp(R_T)`` beyond round-off."""
    e_T = stoch_exp(path)[..., -1]
    bound = np.exp(path.values()[..., -1])
    return int(np.sum(e_T > bound * (1.0 + rtol)))


def gap_terms(path: IncrementPath) -> tuple[np.ndarray, np.ndarray]:
    """Per-path gap terms

    ``<R^c>/2 + sum(log(1+dR) - dR/(1+dR))`` and ``<R^c> + sum dR^2/(1+dR)``.
    """
    path.check()
    j = np.asarray(path.jumps, dtype=float)
    n = path.counts()
    qv = np.sum(np.broadcast_to(path.cont_qv, np.shape(path.cont_gauss)), axis=-1)
    g1 = 0.5 * qv + np.sum(n * (np.log1p(j) - j / (1.0 + j)), axis=(-2, -1))
    g2 = qv + np.sum(n * j * j / (1.0 + j), axis=(-2, -1))
    return g1, g2


# --- vector price increments and strategies ----------------------------------------

@dataclass(frozen=True)
class PriceIncrements:
    """Realized increments of a d-dimensional price split like ``IncrementPath``.

    gauss: ``(..., M, d)`` continuous-martingale part; drift: ``(..., M, d)``;
    cov: ``(M, d, d)`` quadratic variation of the continuous part per step;
    jump_sizes: ``(..., M, J, d)``; jump_counts: ``(..., M, J)``.
    """

    gauss: np.ndarray
    drift: np.ndarray
    cov: np.ndarray
    jump_sizes: np.ndarray
    jump_counts: np.ndarray

    def total(self) -> np.ndarray:
        """Realized ``Delta S`` per step, shape ``(..., M, d)``."""
        jumps = np.sum(self.jump_counts[..., None] * self.jump_sizes, axis=-2)
        return self.gauss + self.drift + jumps

    def shifted(self, g) -> PriceIncrements:
        """Increments of ``S^g``: drift ``- c g dA``, jumps ``x / (1 + g.x)``."""
        g = np.asarray(g, dtype=float)
        gx = np.einsum("...mjd,md->...mj", self.jump_sizes, g)
        if np.any((1.0 + gx <= 0) & (self.jump_counts > 0)):
            raise AdmissibilityError("strategy g is not admissible on this path (1 + g.dS <= 0)")
        sizes = self.jump_sizes / np.where(1.0 + gx > 0, 1.0 + gx, 1.0)[..., None]
        drift = self.drift - np.einsum("mde,me->md", self.cov, g)
        return PriceIncrements(self.gauss, drift, self.cov, sizes, self.jump_counts)


def strategy_path(f, inc: PriceIncrements) -> IncrementPath:
    """Increments of ``f . S`` for a deterministic per-step weight ``f`` of shape ``(M, d)``."""
    f = np.asarray(f, dtype=float)
    return IncrementPath(
        np.einsum("...md,md->...m", inc.gauss, f),
        np.einsum("md,mde,me->m", f, inc.cov, f),
        np.einsum("...md,md->...m", inc.drift, f),
        np.einsum("...mjd,md->...mj", inc.jump_sizes, f),
        inc.jump_counts,
    )


@dataclass
class RatioCheck:
    max_rel_error: float
    reciprocal_max_rel_error: float
    pure_jump: bool
    tolerance: float

    @property
    def passed(self) -> bool:
        return (self.max_rel_error <= self.tolerance
                and self.reciprocal_max_rel_error <= self.tolerance)

    def to_dict(self) -> dict:
        return {"max_rel_error": self.max_rel_error,
                "reciprocal_max_rel_error": self.reciprocal_max_rel_error,
                "pure_jump": self.pure_jump, "tolerance": self.tolerance,
                "passed": self.passed}


def ratio_transform_check(f, g, inc: PriceIncrements, tol: float = 1e-10) -> RatioCheck:
    """Compare ``E(f.S)/E(g.S)`` with ``E((f-g).S^g)`` and ``E(-g.S^g)`` with ``1/E(g.S)``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    ef = stoch_exp(strategy_path(f, inc))
    eg = stoch_exp(strategy_path(g, inc))
    shifted = inc.shifted(g)
    rhs = stoch_exp(strategy_path(f - g, shifted))
    inv = stoch_exp(strategy_path(-g, shifted))
    err = np.max(np.abs(ef / eg - rhs) / np.abs(rhs), initial=0.0)
    err_inv = np.max(np.abs(inv * eg - 1.0), initial=0.0)
    pure = not np.any(inc.gauss) and not np.any(inc.drift) and not np.any(inc.cov)
    return RatioCheck(float(err), float(err_inv), pure, tol)


# --- boundedness diagnostics --------------------------------------------------------

QUANTILES = (0.99, 0.999)

# statistic key -> what it measures per path
_STATS = {
    "sup_abs_log": "running max of |R|",
    "sup_log": "running max of R",
    "abs_terminal_log": "|R| at the horizon",
    "terminal_wealth": "E(R) at the horizon",
    "sup_wealth": "running max of E(R)",
    "sup_abs_recip_log": "running max of |L(1/E(R))|",
    "neg_inf_recip_log": "minus the running min of L(1/E(R))",
    "exp_gap": "first gap term",
    "recip_gap": "second gap term",
}

# flags in this group must agree
_CHAIN = ("sup_abs_log", "sup_log", "abs_terminal_log", "terminal_wealth", "sup_wealth")


def _path_statistics(path: IncrementPath) -> dict[str, np.ndarray]:
    R = path.values()
    E = stoch_exp(path)
    Z = reciprocal_log(path).values()
    g1, g2 = gap_terms(path)
    return {
        "sup_abs_log": np.max(np.abs(R), axis=-1),
        "sup_log": np.max(R, axis=-1),
        "abs_terminal_log": np.abs(R[..., -1]),
        "terminal_wealth": E[..., -1],
        "sup_wealth": np.max(E, axis=-1),
        "sup_abs_recip_log": np.max(np.abs(Z), axis=-1),
        "neg_inf_recip_log": -np.min(Z, axis=-1),
        "exp_gap": np.broadcast_to(g1, R.shape[:-1]),
        "recip_gap": np.broadcast_to(g2, R.shape[:-1]),
    }


def boundedness_stats(family, explode_factor: float = 10.0) -> dict:
    """Tail quantiles of ``R``, ``E(R)`` and ``L(1/E(R))`` along an indexed family.

    ``family`` is a sequence of ``IncrementPath`` sampled over many paths (one per
    index ``n``). A statistic is flagged unbounded when its 99.9% quantile grows
    by more than ``explode_factor`` from the first to the last member.
    ``consistent`` requires the ``_CHAIN`` flags to agree, a bounded
    ``sup_wealth`` to come with a bounded ``sup_abs_recip_log``, the two
    reciprocal-log flags to agree and the two gap flags to agree.
    """
    family = list(family)
    if not family:
        raise ValueError("family must be nonempty")
    per_member = []
    for path in family:
        stats = _path_statistics(path)
        per_member.append({
            key: [float(np.quantile(vals, q)) for q in QUANTILES] for key, vals in stats.items()
        })
    bounded = {}
    for key in _STATS:
        first = abs(per_member[0][key][-1])
        last = abs(per_member[-1][key][-1])
        bounded[key] = bool(last <= explode_factor * max(first, 1.0))
    consistent = (len({bounded[k] for k in _CHAIN}) == 1
                  and (not bounded["sup_wealth"] or bounded["sup_abs_recip_log"])
                  and bounded["sup_abs_recip_log"] == bounded["neg_inf_recip_log"]
                  and bounded["exp_gap"] == bounded["recip_gap"])
    return {
        "quantile_levels": list(QUANTILES),
        "labels": dict(_STATS),
        "members": per_member,
        "bounded": bounded,
        "consistent": bool(consistent),
    }
