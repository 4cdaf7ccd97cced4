"""Path simulation and Monte Carlo verification.

Continuous steps draw ``dS = (b - sum_i k_i x_i) dA + L xi sqrt(dA) + sum_i N_i x_i``
with ``N_i ~ Poisson(k_i dA)`` and ``L L' = c``, so the increment mean is exactly
``b dA``. Predictable-jump steps replace the Poisson counts by at most one jump,
atom ``i`` with probability ``k_i dA``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .model import PREDICTABLE_JUMP, LocalTriplet, MarketModel, Portfolio
from .stochexp import PriceIncrements, stoch_exp, strategy_path

MARTINGALE = "martingale-consistent"
SUPERMARTINGALE = "supermartingale-consistent"
VIOLATION = "violation"

BOUNDED = "bounded"
UNBOUNDED = "unbounded-suspect"

DEFAULT_Z = 4.0
MEMORY_BUDGET = 2 * 1024**3


def psd_factor(c: np.ndarray) -> np.ndarray:
    """``L`` with ``L L' = c`` for positive semidefinite ``c``."""
    w, V = np.linalg.eigh(0.5 * (c + c.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class PathBundle:
    """Simulated increments for ``n_paths`` paths over all model steps.

    ``gauss`` ``(n, M, d)`` is the diffusion part, ``counts`` ``(n, M, J)`` the jump
    count per atom slot (atoms padded to the largest step), ``atom_sizes`` ``(M, J, d)``,
    ``drift`` ``(M, d)`` and ``cov`` ``(M, d, d) = c dA``.
    """

    model: MarketModel
    n_paths: int
    seed: int
    gauss: np.ndarray
    counts: np.ndarray
    atom_sizes: np.ndarray
    drift: np.ndarray
    cov: np.ndarray
    generator: str = rngmod.GENERATOR_ID

    @property
    def n_steps(self) -> int:
        return self.model.n_steps

    def increments(self) -> PriceIncrements:
        return PriceIncrements(self.gauss, self.drift, self.cov, self.atom_sizes, self.counts)

    def delta_s(self) -> np.ndarray:
        return self.increments().total()

    def jump_square_sums(self) -> np.ndarray:
        """Per path ``sum over realized jumps of |x|^2``."""
        sq = np.sum(self.atom_sizes**2, axis=-1)
        return np.einsum("nmj,mj->n", self.counts, sq)

    def metadata(self) -> dict:
        return {"n_paths": self.n_paths, "seed": self.seed, "generator": self.generator,
                "block_size": rngmod.BLOCK_SIZE}


def simulate(model: MarketModel, n_paths: int, seed: int,
             memory_budget: int = MEMORY_BUDGET) -> PathBundle:
    """Simulate ``n_paths`` paths; bit-identical for fixed ``(model, n_paths, seed)``."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    M, d = model.n_steps, model.dimension
    J = max((tr.jumps.n_atoms for tr in model.triplets), default=0)
    need = n_paths * M * (d + J) * 8
    if need > memory_budget:
        raise MemoryError(f"{n_paths} paths need {need} bytes, budget is {memory_budget}")

    atom_sizes = np.zeros((M, J, d))
    drift = np.zeros((M, d))
    cov = np.zeros((M, d, d))
    factors = []
    for m, dA, _, tr in model.steps():
        n_at = tr.jumps.n_atoms
        atom_sizes[m, :n_at] = tr.jumps.locations
        mean_jump = tr.jumps.intensities @ tr.jumps.locations if n_at else np.zeros(d)
        drift[m] = (tr.drift - mean_jump) * dA
        cov[m] = tr.diffusion * dA
        factors.append(psd_factor(tr.diffusion) * np.sqrt(dA))

    def run_block(block, start, stop):
        B = stop - start
        g = np.zeros((B, M, d))
        n = np.zeros((B, M, J), dtype=np.int64)
        for m, dA, kind, tr in model.steps():
            gen = rngmod.stream(seed, rngmod.STREAM_SIMULATE, m, block)
            g[:, m] = gen.standard_normal((B, d)) @ factors[m].T
            n_at = tr.jumps.n_atoms
            if not n_at:
                continue
            probs = tr.jumps.intensities * dA
            if kind == PREDICTABLE_JUMP:
                idx = np.searchsorted(np.cumsum(probs), gen.random(B), side="right")
                hit = idx < n_at
                n[np.nonzero(hit)[0], m, idx[hit]] = 1
            else:
                n[:, m, :n_at] = gen.poisson(probs, size=(B, n_at))
        return g, n

    parts = rngmod.map_blocks(run_block, n_paths)
    gauss = np.concatenate([p[0] for p in parts], axis=0)
    counts = np.concatenate([p[1] for p in parts], axis=0)
    return PathBundle(model, n_paths, seed, gauss, counts, atom_sizes, drift, cov)


def dump_paths(bundle: PathBundle, path) -> dict:
    """Write realized ``Delta S`` as little-endian float64 columns.

    Column ``(m, j)`` (step ``m``, coordinate ``j``) holds ``n_paths`` contiguous
    values; columns are ordered step-major. Returns the layout description.
    """
    dS = bundle.delta_s()
    cols = np.ascontiguousarray(np.transpose(dS, (1, 2, 0)), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(cols.tobytes(order="C"))
    return {"file": str(path), "dtype": "<f8", "n_paths": bundle.n_paths,
            "n_steps": bundle.n_steps, "dimension": bundle.model.dimension,
            "order": "column (step, coordinate) step-major, each column n_paths values"}


# --- deflator tests ---------------------------------------------------------------

@dataclass
class StrategyVerdict:
    label: str
    weights: np.ndarray
    mean: float
    se: float
    z: float
    verdict: str

    def to_dict(self) -> dict:
        return {"label": self.label, "weights": np.asarray(self.weights).tolist(),
                "mean": self.mean, "se": self.se, "z": self.z, "verdict": self.verdict}


@dataclass
class VerificationReport:
    entries: list[StrategyVerdict] = field(default_factory=list)
    n_paths: int = 0
    seed: int = 0
    z_threshold: float = DEFAULT_Z

    @property
    def verdict(self) -> str:
        verdicts = {e.verdict for e in self.entries}
        if VIOLATION in verdicts:
            return VIOLATION
        if SUPERMARTINGALE in verdicts:
            return SUPERMARTINGALE
        return MARTINGALE

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "n_paths": self.n_paths, "seed": self.seed,
                "z_threshold": self.z_threshold,
                "strategies": [e.to_dict() for e in self.entries]}


def classify(mean: float, se: float, z: float = DEFAULT_Z) -> str:
    if abs(mean - 1.0) <= z * se:
        return MARTINGALE
    if mean <= 1.0 + z * se:
        return SUPERMARTINGALE
    return VIOLATION


def _check_admissible(bundle: PathBundle, w: np.ndarray, label: str) -> None:
    gx = np.einsum("mjd,md->mj", bundle.atom_sizes, w)
    bad_atoms = (1.0 + gx <= 0)
    if not bad_atoms.any():
        return
    hits = bundle.counts * bad_atoms[None]
    if hits.any():
        p, m, _ = np.argwhere(hits)[0]
        raise ValueError(f"strategy {label} is inadmissible on path {p}, step {m} (1 + f.dS <= 0)")


def terminal_wealth(bundle: PathBundle, w) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(bundle.n_steps, bundle.model.dimension)
    _check_admissible(bundle, w, "f")
    return stoch_exp(strategy_path(w, bundle.increments()))[..., -1]


def deflator_test(model: MarketModel, g: Portfolio, f_list, n_paths: int = 100_000,
                  seed: int = 0, z: float = DEFAULT_Z, bundle: PathBundle | None = None,
                  labels=None) -> VerificationReport:
    """Test ``E[E(f.S)_T / E(g.S)_T] = 1`` for every ``f`` in ``f_list``.

    Verdict: martingale-consistent if ``|mean - 1| <= z SE``, supermartingale-consistent
    if ``mean <= 1 + z SE``, violation otherwise.
    """
    bundle = bundle if bundle is not None else simulate(model, n_paths, seed)
    gw = _as_weights(g, model)
    _check_admissible(bundle, gw, "g")
    eg = terminal_wealth(bundle, gw)
    report = VerificationReport(n_paths=bundle.n_paths, seed=bundle.seed, z_threshold=z)
    for i, f in enumerate(f_list):
        fw = _as_weights(f, model)
        label = labels[i] if labels is not None else f"f{i}"
        _check_admissible(bundle, fw, label)
        ratio = terminal_wealth(bundle, fw) / eg
        mean = float(np.mean(ratio))
        se = float(np.std(ratio, ddof=1) / np.sqrt(ratio.size)) if ratio.size > 1 else 0.0
        zscore = (mean - 1.0) / se if se > 0 else (0.0 if mean == 1.0 else np.inf)
        report.entries.append(StrategyVerdict(label, fw, mean, se, float(zscore),
                                              classify(mean, se, z)))
    return report


def _as_weights(w, model: MarketModel) -> np.ndarray:
    if isinstance(w, Portfolio):
        return np.asarray(w.weights)
    arr = np.asarray(w, dtype=float)
    if arr.ndim <= 1 and arr.size == model.dimension:
        return np.tile(arr.reshape(1, -1), (model.n_steps, 1))
    return arr.reshape(model.n_steps, model.dimension)


def default_strategies(model: MarketModel, g: Portfolio) -> tuple[list[np.ndarray], list[str]]:
    """Zero, fractions of ``g`` and small perturbations of ``g`` that stay inside ``D``."""
    gw = np.asarray(g.weights)
    cands = [(np.zeros_like(gw), "zero"), (0.5 * gw, "half_g"), (0.25 * gw, "quarter_g")]
    for j in range(model.dimension):
        e = np.zeros(model.dimension)
        e[j] = 0.1
        cands.append((gw + e, f"g_plus_e{j}"))
        cands.append((gw - e, f"g_minus_e{j}"))
    out, labels = [], []
    for w, label in cands:
        ok = all(tr.jumps.n_atoms == 0 or np.all(1.0 + tr.jumps.locations @ w[m] > 0.05)
                 for m, _, _, tr in model.steps())
        if ok:
            out.append(w)
            labels.append(label)
    return out, labels


def nupbr_probe(model: MarketModel, f_grid, n_paths: int = 100_000, seed: int = 0,
                quantile: float = 0.999, saturation: float = 1.5, tail: int = 3,
                bundle: PathBundle | None = None) -> dict:
    """Tail quantile of terminal wealth along a leverage-doubling grid of strategies.

    Flags ``unbounded-suspect`` when each of the last ``tail`` doublings still
    multiplies the quantile by at least ``saturation``.
    """
    bundle = bundle if bundle is not None else simulate(model, n_paths, seed)
    qs = []
    for f in f_grid:
        wealth = terminal_wealth(bundle, _as_weights(f, model))
        qs.append(float(np.quantile(wealth, quantile)))
    growth = [qs[i + 1] / qs[i] if qs[i] > 0 else np.inf for i in range(len(qs) - 1)]
    recent = growth[-tail:]
    unbounded = len(recent) >= 1 and all(r >= saturation for r in recent)
    return {"quantile_level": quantile, "quantiles": qs, "growth": growth,
            "verdict": UNBOUNDED if unbounded else BOUNDED}


# --- laws of large numbers --------------------------------------------------------

@dataclass
class LLNReport:
    kind: str
    levels: list[int]
    deltas: list[float]
    probabilities: dict
    std_errors: dict
    normalizers: list[float]
    monotone: bool
    stabilized: bool
    vacuous: bool = False
    ratio_samples: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "levels": self.levels, "deltas": self.deltas,
                "probabilities": {str(k): v for k, v in self.probabilities.items()},
                "std_errors": {str(k): v for k, v in self.std_errors.items()},
                "normalizers": self.normalizers, "monotone": self.monotone,
                "stabilized": self.stabilized, "vacuous": self.vacuous}


def doubling_levels(n_levels: int) -> list[int]:
    return [2**i for i in range(n_levels)]


def _tail_report(kind, levels, deltas, ratios, normalizers, vacuous=False, target=0.0):
    n = ratios.shape[1]
    probs, ses = {}, {}
    for delta in deltas:
        p = np.mean(np.abs(ratios - target) > delta, axis=1)
        probs[delta] = p.tolist()
        ses[delta] = np.sqrt(p * (1 - p) / n).tolist()
    monotone = True
    for delta in deltas:
        p, se = np.array(probs[delta]), np.array(ses[delta])
        for i in range(len(levels) - 1):
            if p[i + 1] > p[i] + 2.0 * np.hypot(se[i], se[i + 1]):
                monotone = False
    stabilized = bool(np.all(ratios[-1] == ratios[-2])) if len(levels) > 1 else True
    samples = {lv: ratios[i, :1000].tolist() for i, lv in enumerate(levels)}
    return LLNReport(kind, list(levels), list(deltas), probs, ses, list(normalizers),
                     monotone, stabilized, vacuous, samples)


def lln_truncation_test(H, triplet: LocalTriplet, delta_a, n_levels: int = 7,
                        n_paths: int = 10_000, seed: int = 0, deltas=(0.1, 0.05)) -> LLNReport:
    """Truncated integrals ``M^n = H 1{|H|<=n} . J`` against ``L^n = 1 + <M^n>``.

    ``J`` is the compensated martingale of ``triplet`` (which must have ``b = 0``);
    ``H`` has shape ``(M, d)`` and ``delta_a`` shape ``(M,)``.
    """
    if np.any(triplet.drift != 0):
        raise ValueError("the driving martingale must come from a triplet with b = 0")
    H = np.asarray(H, dtype=float)
    d = triplet.dimension
    H = H.reshape(-1, d)
    dA = np.asarray(delta_a, dtype=float)
    M = H.shape[0]
    x, k = triplet.jumps.locations, triplet.jumps.intensities
    q = triplet.diffusion + ((x * k[:, None]).T @ x if triplet.jumps.n_atoms else 0.0)
    L = psd_factor(triplet.diffusion)
    mean_jump = k @ x if triplet.jumps.n_atoms else np.zeros(d)

    def run_block(block, start, stop):
        B = stop - start
        out = np.zeros((B, M))
        for m in range(M):
            gen = rngmod.stream(seed, rngmod.STREAM_LLN_TRUNCATION, m, block)
            dJ = gen.standard_normal((B, d)) @ L.T * np.sqrt(dA[m])
            if triplet.jumps.n_atoms:
                dJ += gen.poisson(k * dA[m], size=(B, len(k))) @ x - mean_jump * dA[m]
            out[:, m] = dJ @ H[m]
        return out

    incr = np.concatenate(rngmod.map_blocks(run_block, n_paths), axis=0)
    levels = doubling_levels(n_levels)
    norms = np.linalg.norm(H, axis=1)
    qv = np.einsum("md,de,me->m", H, q, H) * dA
    ratios, normalizers = [], []
    for n in levels:
        keep = norms <= n
        Ln = 1.0 + qv[keep].sum()
        ratios.append(incr[:, keep].sum(axis=1) / Ln)
        normalizers.append(float(Ln))
    return _tail_report("truncation", levels, deltas, np.array(ratios), normalizers)


def lln_counting_test(compensator_increments, G, n_levels: int = 7, n_paths: int = 10_000,
                      seed: int = 0, deltas=(0.1, 0.05)) -> LLNReport:
    """Counting processes with compensator ``1{G<=n} . N~`` against ``R^n = 1 + N~^n_T``.

    When the compensator vanishes the ratio is ``0/1 = 0`` and the design is
    reported as vacuous.
    """
    dN = np.asarray(compensator_increments, dtype=float)
    G = np.asarray(G, dtype=float)
    if np.any(dN < 0) or np.any(G < 0):
        raise ValueError("compensator increments and G must be nonnegative")
    M = dN.shape[0]

    def run_block(block, start, stop):
        B = stop - start
        out = np.zeros((B, M))
        for m in range(M):
            gen = rngmod.stream(seed, rngmod.STREAM_LLN_COUNTING, m, block)
            out[:, m] = gen.poisson(dN[m], size=B)
        return out

    counts = np.concatenate(rngmod.map_blocks(run_block, n_paths), axis=0)
    levels = doubling_levels(n_levels)
    ratios, normalizers = [], []
    for n in levels:
        keep = G <= n
        Rn = 1.0 + dN[keep].sum()
        ratios.append(counts[:, keep].sum(axis=1) / Rn)
        normalizers.append(float(Rn))
    vacuous = not np.any(dN > 0)
    return _tail_report("counting", levels, deltas, np.array(ratios), normalizers,
                        vacuous=vacuous, target=0.0 if vacuous else 1.0)


# --- designed constructions used by the CLI and the acceptance suite ---------------

def divergent_truncation_design(n_steps: int = 12, qv_per_step: float = 2.0):
    """``H_m = 2^m`` on a unit clock split evenly; ``<M^n>`` already exceeds 1 at ``n = 1``."""
    dA = np.full(n_steps, 1.0 / n_steps)
    c = qv_per_step / dA[0]
    H = 2.0 ** np.arange(n_steps)
    return H.reshape(-1, 1), LocalTriplet.from_values(0.0, c), dA


def bounded_truncation_design(n_steps: int = 12, qv_per_step: float = 2.0):
    """``|H| <= 1``: truncation is inactive for every ``n >= 1``."""
    dA = np.full(n_steps, 1.0 / n_steps)
    c = qv_per_step / dA[0]
    H = np.cos(np.arange(n_steps))
    return H.reshape(-1, 1), LocalTriplet.from_values(0.0, c), dA


def divergent_counting_design(n_steps: int = 12, base: float = 25.0):
    """``dN~_m = base 2^m`` switched on once ``G_m = 2^m <= n``."""
    m = np.arange(n_steps)
    return base * 2.0**m, 2.0**m


def bounded_counting_design(n_steps: int = 12, base: float = 25.0):
    """``G <= 1`` so the compensator is complete from ``n = 1`` on."""
    return np.full(n_steps, base), np.zeros(n_steps)
