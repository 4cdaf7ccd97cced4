"""Independent reference computations used by the tests.

Nothing here calls the solvers under test; only the data types are shared.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy import stats

from numeraire.model import LocalTriplet


def psi_scalar(b, c, atoms, v) -> float:
    """Log-growth rate with plain loops and ``math.log1p``."""
    v = [float(t) for t in np.atleast_1d(v)]
    d = len(v)
    b = np.atleast_1d(b)
    c = np.atleast_2d(c)
    lin = sum(b[i] * v[i] for i in range(d))
    quad = sum(v[i] * c[i][j] * v[j] for i in range(d) for j in range(d))
    jump = 0.0
    for x, k in atoms:
        vx = sum(v[i] * float(np.atleast_1d(x)[i]) for i in range(d))
        if 1.0 + vx <= 0:
            return -math.inf
        jump += k * (vx - math.log1p(vx))
    return lin - 0.5 * quad - jump


def psi_increment_1d(b, c, atoms, v, center) -> float:
    """Log-growth difference between ``v`` and ``center`` in 1-D, written so that nearby points do not cancel."""
    h = v - center
    b, c = float(np.atleast_1d(b)[0]), float(np.atleast_2d(c)[0, 0])
    out = b * h - 0.5 * c * h * (v + center)
    for x, k in atoms:
        x = float(np.atleast_1d(x)[0])
        out -= k * (h * x - math.log1p(h * x / (1.0 + center * x)))
    return out


def grid_search_1d(b, c, atoms, levels: int = 60, points: int = 201) -> float:
    """Maximizer of the 1-D log-growth rate by repeated grid zooming over ``D``."""
    xs = [float(np.atleast_1d(x)[0]) for x, _ in atoms]
    lo = max([-1.0 / x for x in xs if x > 0], default=-1e3)
    hi = min([-1.0 / x for x in xs if x < 0], default=1e3)
    lo, hi = lo + 1e-12 * max(1.0, abs(lo)), hi - 1e-12 * max(1.0, abs(hi))
    for _ in range(levels):
        grid = np.linspace(lo, hi, points)
        center = grid[points // 2]
        vals = [psi_increment_1d(b, c, atoms, g, center) for g in grid]
        i = int(np.argmax(vals))
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    return 0.5 * (lo + hi)


def density_lp_vertices(b, atoms, predictable: bool = False, min_weight: float = 1e-6):
    """Minimum of ``sum k|Y-1|`` over the drift-kill polytope by vertex enumeration.

    1-D only. Each ``u_i = Y_i - 1`` sits at a breakpoint (``0`` or ``min_weight - 1``)
    or is free; with ``r`` equality rows at most ``r`` are free. Returns
    ``(cost, Y)`` or ``(inf, None)`` when no vertex is feasible.
    """
    x = np.array([float(np.atleast_1d(a)[0]) for a, _ in atoms])
    k = np.array([float(kk) for _, kk in atoms])
    n = len(x)
    rows = [k * x]
    rhs = [-float(np.atleast_1d(b)[0])]
    if predictable:
        rows.append(k.copy())
        rhs.append(0.0)
    A, r = np.array(rows), np.array(rhs)
    lb = min_weight - 1.0
    best, best_u = math.inf, None
    for labels in itertools.product(("zero", "low", "free"), repeat=n):
        free = [i for i, s in enumerate(labels) if s == "free"]
        if len(free) > A.shape[0]:
            continue
        u = np.array([lb if s == "low" else 0.0 for s in labels])
        if free:
            sol, *_ = np.linalg.lstsq(A[:, free], r - A @ u, rcond=None)
            u[free] = sol
        if np.max(np.abs(A @ u - r)) > 1e-12 or np.any(u < lb - 1e-15):
            continue
        cost = float(k @ np.abs(u))
        if cost < best:
            best, best_u = cost, u
    return best, (None if best_u is None else 1.0 + best_u)


def arbitrage_member(triplet: LocalTriplet, v, tol: float = 1e-9) -> bool:
    """Direct check of the immediate-arbitrage conditions for one direction."""
    v = np.asarray(v, dtype=float)
    x, k = triplet.jumps.locations, triplet.jumps.intensities
    vx = x @ v if len(k) else np.zeros(0)
    if np.any(vx < -tol):
        return False
    if np.linalg.norm(triplet.diffusion @ v) > tol:
        return False
    if float(v @ triplet.drift) - float(k @ vx) < -tol:
        return False
    # nonzero exposure to at least one of jumps, diffusion, drift
    return bool(np.any(np.abs(vx) > tol) or abs(float(v @ triplet.drift)) > tol)


def brute_force_arbitrage(triplet: LocalTriplet, n: int = 1000, seed: int = 0) -> list:
    """Random unit directions that satisfy ``arbitrage_member``."""
    rng = np.random.default_rng(seed)
    d = triplet.dimension
    hits = []
    for _ in range(n):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        if arbitrage_member(triplet, v):
            hits.append(v)
    return hits


def poisson_ratio_tail(mean: float, normalizer: float, delta: float) -> float:
    """Exact ``P(|N / R - 1| > delta)`` for ``N ~ Poisson(mean)`` by summing the pmf."""
    top = int(mean + 40.0 * math.sqrt(mean + 1.0) + 50)
    n = np.arange(top + 1)
    pmf = stats.poisson.pmf(n, mean)
    return float(pmf[np.abs(n / normalizer - 1.0) > delta].sum())


def random_clean_triplet(rng: np.random.Generator, d: int | None = None,
                         n_atoms: int | None = None) -> LocalTriplet:
    """Random triplet with no immediate arbitrage.

    Either the diffusion matrix is positive definite, or the atoms positively
    span ``R^d`` (the last atom is minus a positive combination of ``d``
    independent ones), possibly with a rank-deficient diffusion on top.
    """
    d = d or int(rng.integers(1, 4))
    mode = rng.integers(0, 3)
    if mode == 0:
        G = rng.standard_normal((d, d)) * 0.3
        c = G @ G.T + 0.01 * np.eye(d)
        n = n_atoms if n_atoms is not None else int(rng.integers(0, 6))
        xs = [rng.uniform(-0.6, 0.6, d) for _ in range(n)]
    else:
        c = np.zeros((d, d))
        if mode == 2 and d > 1:
            u = rng.standard_normal(d)
            c = 0.05 * np.outer(u, u)
        base = [rng.uniform(-0.6, 0.6, d) for _ in range(d)]
        while abs(np.linalg.det(np.array(base))) < 1e-2:
            base = [rng.uniform(-0.6, 0.6, d) for _ in range(d)]
        w = rng.uniform(0.3, 1.0, d)
        xs = base + [-(w @ np.array(base)) / d]
        extra = min(5, (n_atoms if n_atoms is not None else int(rng.integers(d + 1, 6)))) - len(xs)
        xs += [rng.uniform(-0.6, 0.6, d) for _ in range(max(extra, 0))]
    ks = rng.uniform(0.2, 2.0, len(xs))
    b = rng.uniform(-0.2, 0.2, d)
    return LocalTriplet.from_values(b, c, list(zip(xs, ks)))
