"""Per-step growth-optimal portfolio.

At each step the log-growth rate

    growth(v) = b.v - v'cv/2 - sum_i k_i (v.x_i - log(1 + v.x_i))

is maximized over ``D = {v: 1 + v.x_i > 0}`` restricted to the orthogonal
complement of the null investments. The maximizer ``v0`` is the numeraire
weight; its first-order certificate is ``ratio_drift(v, v0) <= 0`` for all ``v`` in ``D``
(``= 0`` when ``v0`` is interior, which is always the case for finite atoms).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .arbdetect import null_complement
from .model import LevyAtomMeasure, LocalTriplet, MarketModel, Portfolio


class DomainError(ValueError):
    """A weight vector is outside ``D`` (``1 + v.x_i <= 0`` for some atom)."""


class SolverDivergence(RuntimeError):
    """Iterates escaped to infinity with growth still increasing.

    ``direction`` is the normalized escape direction, a candidate element of
    the immediate-arbitrage set.
    """

    def __init__(self, message: str, direction: np.ndarray, step: int | None = None):
        super().__init__(message)
        self.direction = direction
        self.step = step


class SolverError(RuntimeError):
    """The solver stopped without meeting its tolerances."""


class ModelSolveError(RuntimeError):
    """One or more steps of a model could not be solved; ``failures`` maps step -> error."""

    def __init__(self, failures: dict[int, Exception]):
        self.failures = failures
        detail = "; ".join(f"step {m}: {e}" for m, e in sorted(failures.items()))
        super().__init__(f"growth-optimal solve failed at {len(failures)} step(s): {detail}")


@dataclass
class SolverOptions:
    max_iter: int = 200
    grad_tol: float = 1e-8
    foc_tol: float = 1e-8
    divergence_radius: float = 1e6
    fraction_to_boundary: float = 0.99
    min_margin: float = 1e-12
    hessian_cond_max: float = 1e14
    foc_samples: int = 1000
    foc_seed: int = 0
    x0: np.ndarray | None = None


@dataclass
class SolveDiagnostics:
    growth_rate: float
    grad_norm: float
    foc_residual: float
    iterations: int
    restricted_dim: int
    min_margin: float = np.inf
    boundary: bool = False
    converged: bool = True

    def to_dict(self) -> dict:
        out = asdict(self)
        out["min_margin"] = None if not np.isfinite(self.min_margin) else self.min_margin
        return out


def _margins(triplet: LocalTriplet, v: np.ndarray) -> np.ndarray:
    if triplet.jumps.n_atoms == 0:
        return np.zeros(0)
    return 1.0 + triplet.jumps.locations @ v


def in_domain(triplet: LocalTriplet, v) -> bool:
    return bool(np.all(_margins(triplet, np.asarray(v, dtype=float)) > 0))


def _check_domain(triplet: LocalTriplet, v: np.ndarray) -> np.ndarray:
    margin = _margins(triplet, v)
    if np.any(margin <= 0):
        raise DomainError(f"weight {v.tolist()} is outside D (min 1 + v.x = {margin.min():.3e})")
    return margin


def log_growth(triplet: LocalTriplet, v) -> float:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    margin = _check_domain(triplet, v)
    value = triplet.drift @ v - 0.5 * v @ triplet.diffusion @ v
    if margin.size:
        y = margin - 1.0
        value -= triplet.jumps.intensities @ (y - np.log1p(y))
    return float(value)


def log_growth_gradient(triplet: LocalTriplet, v) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    margin = _check_domain(triplet, v)
    grad = triplet.drift - triplet.diffusion @ v
    if margin.size:
        w = triplet.jumps.intensities * (margin - 1.0) / margin
        grad = grad - w @ triplet.jumps.locations
    return grad


def log_growth_hessian(triplet: LocalTriplet, v) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    margin = _check_domain(triplet, v)
    H = -np.array(triplet.diffusion, dtype=float)
    if margin.size:
        x = triplet.jumps.locations
        H -= (x * (triplet.jumps.intensities / margin**2)[:, None]).T @ x
    return H


def ratio_drift(triplet: LocalTriplet, v, v0) -> float:
    """Drift of the wealth ratio ``E(v.S)/E(v0.S)`` per unit of clock."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    v0 = np.atleast_1d(np.asarray(v0, dtype=float))
    _check_domain(triplet, v)
    margin0 = _check_domain(triplet, v0)
    dv = v - v0
    value = dv @ (triplet.drift - triplet.diffusion @ v0)
    if margin0.size:
        x = triplet.jumps.locations
        value -= triplet.jumps.intensities @ ((x @ dv) * (margin0 - 1.0) / margin0)
    return float(value)


def sample_domain(triplet: LocalTriplet, center, n: int, rng: np.random.Generator,
                  scale: float | None = None) -> np.ndarray:
    """Random points of ``D`` around ``center`` (which must lie in ``D``)."""
    center = np.asarray(center, dtype=float)
    d = center.shape[0]
    scale = scale if scale is not None else 1.0 + np.linalg.norm(center)
    pts = center + scale * rng.standard_normal((n, d))
    if triplet.jumps.n_atoms:
        x = triplet.jumps.locations
        for _ in range(64):
            bad = np.any(1.0 + pts @ x.T <= 0, axis=1)
            if not bad.any():
                break
            pts[bad] = center + 0.5 * (pts[bad] - center)
        pts = pts[np.all(1.0 + pts @ x.T > 0, axis=1)]
    return pts


def foc_residual(triplet: LocalTriplet, v0, n: int = 1000, seed: int = 0) -> float:
    """Largest ``ratio_drift(v, v0)`` over sampled ``v`` in ``D`` (0 is always included)."""
    v0 = np.asarray(v0, dtype=float)
    pts = sample_domain(triplet, v0, n, np.random.default_rng(seed))
    vals = [ratio_drift(triplet, np.zeros_like(v0), v0)]
    vals += [ratio_drift(triplet, v, v0) for v in pts]
    return float(max(vals))


def _max_step(triplet: LocalTriplet, v: np.ndarray, p: np.ndarray) -> float:
    if triplet.jumps.n_atoms == 0:
        return np.inf
    s = triplet.jumps.locations @ p
    neg = s < 0
    if not neg.any():
        return np.inf
    return float(np.min((1.0 + triplet.jumps.locations[neg] @ v) / -s[neg]))


def solve_growth_optimal(triplet: LocalTriplet, opts: SolverOptions | None = None,
                         step: int | None = None) -> tuple[np.ndarray, SolveDiagnostics]:
    """Damped Newton ascent of ``growth`` on ``D`` intersected with ``N``-perp.

    Falls back to expanding gradient steps when the reduced Hessian is
    near-singular. Raises ``SolverDivergence`` when the iterates pass
    ``divergence_radius`` while ``growth`` keeps increasing.
    """
    opts = opts or SolverOptions()
    d = triplet.dimension
    Q = null_complement(triplet)
    r = Q.shape[1]
    if r == 0:
        v = np.zeros(d)
        return v, SolveDiagnostics(0.0, 0.0, 0.0, 0, 0, _min_margin(triplet, v))

    v = np.zeros(d) if opts.x0 is None else Q @ (Q.T @ np.asarray(opts.x0, dtype=float))
    if not in_domain(triplet, v):
        raise DomainError("initial point is outside D after projection onto N-perp")
    growth = log_growth(triplet, v)
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        gz = Q.T @ log_growth_gradient(triplet, v)
        gnorm = np.linalg.norm(gz)
        if gnorm == 0.0:
            break
        Hz = Q.T @ log_growth_hessian(triplet, v) @ Q
        w = np.linalg.eigvalsh(-Hz)
        newton = w.min() > 0 and w.max() / w.min() < opts.hessian_cond_max
        if newton:
            pz = np.linalg.solve(-Hz, gz)
            alpha = 1.0
        else:
            pz = gz / gnorm
            alpha = max(1.0, np.linalg.norm(v))
        p = Q @ pz
        amax = _max_step(triplet, v, p)
        if np.isfinite(amax):
            alpha = min(alpha, opts.fraction_to_boundary * amax)
        slope = float(gz @ pz)

        if not newton:
            # expand while growth keeps increasing (linear or nearly flat directions)
            best = (growth, None)
            a = alpha
            for _ in range(80):
                cand = v + a * p
                if not in_domain(triplet, cand) or _min_margin(triplet, cand) < opts.min_margin:
                    break
                val = log_growth(triplet, cand)
                if val <= best[0]:
                    break
                best = (val, cand)
                if np.isfinite(amax) and a >= opts.fraction_to_boundary * amax:
                    break
                a *= 2.0
            if best[1] is None:
                a = alpha
                for _ in range(80):
                    a *= 0.5
                    cand = v + a * p
                    if in_domain(triplet, cand) and log_growth(triplet, cand) > growth:
                        best = (log_growth(triplet, cand), cand)
                        break
            if best[1] is None:
                break
            v_new, growth_new = best[1], best[0]
        elif slope <= 1e-14 * (1.0 + abs(growth)) and alpha == 1.0:
            # round-off regime: growth is flat to machine precision, accept the pure
            # Newton step while the projected gradient keeps shrinking
            cand = v + p
            if not in_domain(triplet, cand):
                break
            if np.linalg.norm(Q.T @ log_growth_gradient(triplet, cand)) >= gnorm:
                break
            v_new, growth_new = cand, log_growth(triplet, cand)
        else:
            v_new, growth_new = None, None
            for _ in range(80):
                cand = v + alpha * p
                if in_domain(triplet, cand) and _min_margin(triplet, cand) >= opts.min_margin:
                    val = log_growth(triplet, cand)
                    if val >= growth + 1e-4 * alpha * slope:
                        v_new, growth_new = cand, val
                        break
                alpha *= 0.5
            if v_new is None:
                break

        moved = np.linalg.norm(v_new - v)
        improved = growth_new > growth
        v, growth = v_new, growth_new
        if np.linalg.norm(v) > opts.divergence_radius and improved:
            direction = v / np.linalg.norm(v)
            raise SolverDivergence(
                f"iterates diverge along {np.round(direction, 12).tolist()} with growth increasing; "
                "the step admits an immediate arbitrage", direction, step)
        if moved <= 1e-16 * (1.0 + np.linalg.norm(v)):
            break

    grad = Q.T @ log_growth_gradient(triplet, v)
    gnorm = float(np.linalg.norm(grad))
    margin = _min_margin(triplet, v)
    foc = foc_residual(triplet, v, opts.foc_samples, opts.foc_seed)
    boundary = margin < 1e-8
    diag = SolveDiagnostics(growth, gnorm, foc, iterations, r, margin, boundary,
                            converged=gnorm <= opts.grad_tol or (boundary and foc <= opts.foc_tol))
    if not diag.converged:
        raise SolverError(
            f"no convergence after {iterations} iterations (projected gradient {gnorm:.3e})")
    return v, diag


def _min_margin(triplet: LocalTriplet, v: np.ndarray) -> float:
    m = _margins(triplet, v)
    return float(m.min()) if m.size else np.inf


def solve_model(model: MarketModel, opts: SolverOptions | None = None
                ) -> tuple[Portfolio, list[SolveDiagnostics]]:
    """Solve every step; raises ``ModelSolveError`` naming the failing steps."""
    weights, diags, failures = [], [], {}
    for m, _, _, tr in model.steps():
        try:
            v, diag = solve_growth_optimal(tr, opts, step=m)
        except (SolverDivergence, SolverError, DomainError) as exc:
            failures[m] = exc
            continue
        weights.append(v)
        diags.append(diag)
    if failures:
        raise ModelSolveError(failures)
    return Portfolio(np.array(weights).reshape(model.n_steps, model.dimension)), diags


def numeraire_transform(triplet: LocalTriplet, g) -> LocalTriplet:
    """Characteristics of ``S^g``, the price process in units of the wealth ``E(g.S)``.

    Jumps map as ``x -> x / (1 + g.x)``, the diffusion is unchanged and the drift
    becomes ``b - c g - sum_i k_i (g.x_i) x_i / (1 + g.x_i)``.
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))
    margin = _check_domain(triplet, g)
    b = triplet.drift - triplet.diffusion @ g
    if margin.size:
        x, k = triplet.jumps.locations, triplet.jumps.intensities
        b = b - (k * (margin - 1.0) / margin) @ x
        K = LevyAtomMeasure(x / margin[:, None], k)
    else:
        K = triplet.jumps
    return LocalTriplet(b, triplet.diffusion, K)


def transform_model(model: MarketModel, g: Portfolio) -> MarketModel:
    g.validate(model)
    return model.with_triplets([numeraire_transform(tr, g[m]) for m, _, _, tr in model.steps()])


@dataclass
class IntegrabilityProfile:
    diffusion: np.ndarray
    jumps: np.ndarray
    drift: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def per_step(self) -> np.ndarray:
        return self.diffusion + self.jumps + self.drift

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.per_step)

    @property
    def total(self) -> float:
        return float(self.per_step.sum())

    def to_dict(self) -> dict:
        return {
            "diffusion": self.diffusion.tolist(),
            "jumps": self.jumps.tolist(),
            "drift": self.drift.tolist(),
            "per_step": self.per_step.tolist(),
            "cumulative": self.cumulative.tolist(),
            "total": self.total,
        }


def integrability_profile(model: MarketModel, g: Portfolio) -> IntegrabilityProfile:
    """Clock-weighted terms of the stochastic-integrability criterion for ``g``.

    Per step: ``|c^{1/2} g|^2``, ``K(|g.x|^2 ^ 1)`` and
    ``|g.drift^h - K(g.x 1{|x|<=1, |g.x|>1})|``, each multiplied by ``delta_A``.
    """
    g.validate(model)
    n = model.n_steps
    diff, jump, drift = np.zeros(n), np.zeros(n), np.zeros(n)
    for m, dA, _, tr in model.steps():
        v = g[m]
        diff[m] = dA * float(v @ tr.diffusion @ v)
        bh = tr.truncated_drift()
        corr = 0.0
        if tr.jumps.n_atoms:
            gx = tr.jumps.locations @ v
            jump[m] = dA * tr.jumps.integrate(np.minimum(gx * gx, 1.0))
            small = np.linalg.norm(tr.jumps.locations, axis=1) <= 1.0
            sel = small & (np.abs(gx) > 1.0)
            corr = tr.jumps.integrate(np.where(sel, gx, 0.0))
        drift[m] = dA * abs(float(v @ bh) - corr)
    return IntegrabilityProfile(diff, jump, drift)
