"""Domain types for per-step local characteristics and model-file ingestion.

A market is described on a finite clock grid. Each step carries a triplet
``(b, c, K)`` expressed per unit of clock: an untruncated drift ``b``, a
diffusion matrix ``c`` and a Levy measure ``K`` with finitely many atoms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

SCHEMA_VERSION = "1"

CONTINUOUS = "continuous"
PREDICTABLE_JUMP = "predictable_jump"
STEP_KINDS = (CONTINUOUS, PREDICTABLE_JUMP)

UNTRUNCATED = "untruncated"
TRUNCATED = "truncated"

MAX_ATOMS = 1024
SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
CLOCK_TOL = 1e-12


class ModelValidationError(ValueError):
    """Raised when a model document or a domain object breaks an invariant."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LevyAtomMeasure:
    """Finite jump measure ``K = sum_i k_i delta_{x_i}``.

    ``locations`` has shape ``(n_atoms, d)`` and ``intensities`` shape ``(n_atoms,)``.
    """

    locations: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.locations, dtype=float)
        k = np.asarray(self.intensities, dtype=float).reshape(-1)
        if x.ndim == 1:
            x = x.reshape(len(k), -1) if len(k) else x.reshape(0, 0)
        if x.ndim != 2 or x.shape[0] != k.shape[0]:
            raise ModelValidationError(
                f"atom locations {x.shape} do not match intensities {k.shape}"
            )
        object.__setattr__(self, "locations", _frozen(x))
        object.__setattr__(self, "intensities", _frozen(k))

    @classmethod
    def empty(cls, d: int) -> LevyAtomMeasure:
        return cls(np.zeros((0, d)), np.zeros(0))

    @property
    def n_atoms(self) -> int:
        return self.intensities.shape[0]

    @property
    def dimension(self) -> int:
        return self.locations.shape[1]

    def total_mass(self) -> float:
        return float(self.intensities.sum())

    def integrate(self, values) -> float:
        """``K(phi)`` for ``values = phi(x_i)`` given per atom."""
        return float(np.dot(self.intensities, np.asarray(values, dtype=float)))

    def validate(self, max_atoms: int = MAX_ATOMS, step: int | None = None) -> None:
        x, k = self.locations, self.intensities
        if self.n_atoms > max_atoms:
            raise ModelValidationError(
                f"{self.n_atoms} atoms exceed the configured maximum {max_atoms}", step
            )
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(k))):
            raise ModelValidationError("atom entries must be finite", step)
        if np.any(k <= 0):
            raise ModelValidationError("atom intensities must be > 0", step)
        if self.n_atoms and np.any(np.all(x == 0, axis=1)):
            raise ModelValidationError("zero jump is not an atom (x != 0 required)", step)
        if self.n_atoms > 1 and np.unique(x, axis=0).shape[0] != self.n_atoms:
            raise ModelValidationError("atom locations must be pairwise distinct", step)


@dataclass(frozen=True)
class LocalTriplet:
    """Drift, diffusion matrix and jump atoms per unit of clock at one step.

    ``drift`` is untruncated: the truncated drift plus ``sum k x`` over atoms with ``|x| > 1``.
    """

    drift: np.ndarray
    diffusion: np.ndarray
    jumps: LevyAtomMeasure

    def __post_init__(self):
        b = np.atleast_1d(np.asarray(self.drift, dtype=float))
        d = b.shape[0]
        c = np.asarray(self.diffusion, dtype=float)
        if c.ndim < 2:
            c = c.reshape(d, d)
        object.__setattr__(self, "drift", _frozen(b))
        object.__setattr__(self, "diffusion", _frozen(c))
        if self.jumps is None:
            object.__setattr__(self, "jumps", LevyAtomMeasure.empty(d))

    @classmethod
    def from_values(cls, drift, diffusion, atoms: Iterable[tuple[Any, float]] = ()) -> LocalTriplet:
        """Convenience constructor; ``atoms`` is an iterable of ``(x, k)`` pairs."""
        b = np.atleast_1d(np.asarray(drift, dtype=float))
        d = b.shape[0]
        atoms = list(atoms)
        if atoms:
            x = np.array([np.atleast_1d(np.asarray(a, dtype=float)) for a, _ in atoms])
            k = np.array([float(kk) for _, kk in atoms])
        else:
            x, k = np.zeros((0, d)), np.zeros(0)
        return cls(b, np.asarray(diffusion, dtype=float).reshape(d, d), LevyAtomMeasure(x, k))

    @property
    def dimension(self) -> int:
        return self.drift.shape[0]

    def validate(self, max_atoms: int = MAX_ATOMS, step: int | None = None) -> LocalTriplet:
        """Check invariants; returns a triplet whose diffusion has round-off eigenvalues clipped."""
        d = self.dimension
        if self.diffusion.shape != (d, d):
            raise ModelValidationError(f"diffusion has shape {self.diffusion.shape}, expected {(d, d)}", step)
        if self.jumps.n_atoms and self.jumps.dimension != d:
            raise ModelValidationError(
                f"atoms have dimension {self.jumps.dimension}, expected {d}", step
            )
        if not (np.all(np.isfinite(self.drift)) and np.all(np.isfinite(self.diffusion))):
            raise ModelValidationError("drift and diffusion must be finite", step)
        self.jumps.validate(max_atoms, step)
        c = self.diffusion
        if np.max(np.abs(c - c.T), initial=0.0) > SYMMETRY_TOL:
            raise ModelValidationError("diffusion matrix is not symmetric", step)
        c = 0.5 * (c + c.T)
        if d == 0:
            return self
        w, V = np.linalg.eigh(c)
        if w.min() < -PSD_TOL:
            raise ModelValidationError(
                f"diffusion matrix is not positive semidefinite (min eigenvalue {w.min():.3e})", step
            )
        if w.min() < 0:
            c = (V * np.clip(w, 0.0, None)) @ V.T
            c = 0.5 * (c + c.T)
        if np.array_equal(c, self.diffusion):
            return self
        return LocalTriplet(self.drift, c, self.jumps)

    def truncated_drift(self) -> np.ndarray:
        """Drift with jumps of size ``|x| > 1`` removed (truncation at the unit ball)."""
        return truncation_convert(self.drift, self.jumps, TRUNCATED)


@dataclass(frozen=True)
class ClockGrid:
    """Grid ``0 = t_0 < ... < t_M`` with clock increments and step kinds."""

    times: np.ndarray
    delta_a: np.ndarray
    kinds: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(np.asarray(self.times, dtype=float)))
        object.__setattr__(self, "delta_a", _frozen(np.asarray(self.delta_a, dtype=float)))
        object.__setattr__(self, "kinds", tuple(self.kinds))

    @property
    def n_steps(self) -> int:
        return self.delta_a.shape[0]

    def validate(self) -> None:
        t, dA = self.times, self.delta_a
        if t.shape[0] != dA.shape[0] + 1 or len(self.kinds) != dA.shape[0]:
            raise ModelValidationError("grid arrays have inconsistent lengths")
        if t.shape[0] and t[0] != 0.0:
            raise ModelValidationError("grid must start at t_0 = 0")
        if not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise ModelValidationError("grid times must be finite and strictly increasing")
        for m, (a, kind) in enumerate(zip(dA, self.kinds)):
            if not np.isfinite(a) or a < 0:
                raise ModelValidationError("delta_a must be a finite nonnegative real", m)
            if kind not in STEP_KINDS:
                raise ModelValidationError(f"unknown step kind {kind!r}", m)
        if dA.sum() > 1.0 + CLOCK_TOL:
            raise ModelValidationError(
                f"clock normalization A_T <= 1 violated (sum of delta_a = {dA.sum():.6g})"
            )


@dataclass(frozen=True)
class MarketModel:
    """Validated market: one ``LocalTriplet`` per grid step. Immutable."""

    dimension: int
    grid: ClockGrid
    triplets: tuple[LocalTriplet, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "triplets", tuple(self.triplets))

    @property
    def n_steps(self) -> int:
        return len(self.triplets)

    @property
    def delta_a(self) -> np.ndarray:
        return self.grid.delta_a

    @property
    def kinds(self) -> tuple[str, ...]:
        return self.grid.kinds

    def steps(self):
        """Iterate ``(index, delta_a, kind, triplet)``."""
        for m, tr in enumerate(self.triplets):
            yield m, float(self.grid.delta_a[m]), self.grid.kinds[m], tr

    def with_triplets(self, triplets: Sequence[LocalTriplet]) -> MarketModel:
        return validate_model(MarketModel(self.dimension, self.grid, tuple(triplets)))


@dataclass(frozen=True)
class Portfolio:
    """One weight vector per step; each must lie in ``D = {v: 1 + v.x_i > 0}``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim == 1:
            w = w.reshape(-1, 1)
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def n_steps(self) -> int:
        return self.weights.shape[0]

    def __getitem__(self, m: int) -> np.ndarray:
        return self.weights[m]

    def validate(self, model: MarketModel) -> None:
        if self.weights.shape != (model.n_steps, model.dimension):
            raise ModelValidationError(
                f"portfolio shape {self.weights.shape} does not match model "
                f"({model.n_steps}, {model.dimension})"
            )
        for m, _, _, tr in model.steps():
            if tr.jumps.n_atoms:
                margin = 1.0 + tr.jumps.locations @ self.weights[m]
                if np.any(margin <= 0):
                    raise ModelValidationError(
                        "portfolio leaves the domain D (1 + g.x <= 0 for some atom)", m
                    )


def truncation_convert(drift, jumps: LevyAtomMeasure, direction: str) -> np.ndarray:
    """Convert a drift to ``direction``.

    The two conventions differ by ``sum k x`` over the atoms with ``|x| > 1``.
    """
    drift = np.atleast_1d(np.asarray(drift, dtype=float))
    if jumps.n_atoms == 0:
        return drift.copy()
    big = np.linalg.norm(jumps.locations, axis=1) > 1.0
    shift = jumps.intensities[big] @ jumps.locations[big] if big.any() else np.zeros_like(drift)
    if direction == UNTRUNCATED:
        return drift + shift
    if direction == TRUNCATED:
        return drift - shift
    raise ValueError(f"direction must be {UNTRUNCATED!r} or {TRUNCATED!r}, got {direction!r}")


def sigma_special_check(model: MarketModel) -> np.ndarray:
    """Per-step jump integral of ``min(|x|, |x|^2)``; finite for finite atoms."""
    out = np.zeros(model.n_steps)
    for m, _, _, tr in model.steps():
        if tr.jumps.n_atoms:
            r = np.linalg.norm(tr.jumps.locations, axis=1)
            out[m] = tr.jumps.integrate(np.minimum(r, r * r))
    return out


def predictable_jump_warnings(model: MarketModel, tol: float = 1e-12) -> list[str]:
    """Flag predictable-jump steps whose drift is not the jump mean or with ``c != 0``.

    At a predictable time the increment is a single jump, so a consistent step has
    ``b = sum_i k_i x_i`` and ``c = 0``. Other steps are accepted but the wealth
    ratios built on them are supermartingales rather than martingales.
    """
    out = []
    for m, _, kind, tr in model.steps():
        if kind != PREDICTABLE_JUMP:
            continue
        mean = tr.jumps.intensities @ tr.jumps.locations if tr.jumps.n_atoms else np.zeros(model.dimension)
        if np.max(np.abs(tr.drift - mean)) > tol or np.max(np.abs(tr.diffusion)) > tol:
            out.append(
                f"step {m}: predictable_jump step with b != K(x) or c != 0; "
                "ratios on this step are only supermartingales"
            )
    return out


def validate_model(model: MarketModel, max_atoms: int = MAX_ATOMS) -> MarketModel:
    """Re-check every invariant; returns the model with clipped diffusion matrices."""
    model.grid.validate()
    if len(model.triplets) != model.grid.n_steps:
        raise ModelValidationError(
            f"{len(model.triplets)} triplets for {model.grid.n_steps} grid steps"
        )
    triplets = []
    for m, tr in enumerate(model.triplets):
        if tr.dimension != model.dimension:
            raise ModelValidationError(
                f"dimension mismatch: triplet has {tr.dimension}, model has {model.dimension}", m
            )
        tr = tr.validate(max_atoms, m)
        if model.grid.kinds[m] == PREDICTABLE_JUMP:
            load = model.grid.delta_a[m] * tr.jumps.total_mass()
            if load > 1.0 + CLOCK_TOL:
                raise ModelValidationError(
                    f"predictable jump constraint delta_A * K(R^d) <= 1 violated ({load:.6g})", m
                )
        triplets.append(tr)
    return MarketModel(model.dimension, model.grid, tuple(triplets), model.meta)


def make_model(triplets: Sequence[LocalTriplet], delta_a: Sequence[float],
               kinds: Sequence[str] | None = None, times: Sequence[float] | None = None,
               ) -> MarketModel:
    """Build and validate a model from in-memory pieces."""
    triplets = list(triplets)
    if not triplets:
        raise ModelValidationError("use make_empty_model for a model without steps")
    delta_a = np.asarray(delta_a, dtype=float)
    kinds = tuple(kinds) if kinds is not None else (CONTINUOUS,) * len(triplets)
    if times is None:
        times = np.concatenate([[0.0], np.arange(1, len(triplets) + 1) / len(triplets)])
    d = triplets[0].dimension
    return validate_model(MarketModel(d, ClockGrid(times, delta_a, kinds), tuple(triplets)))


def make_empty_model(d: int) -> MarketModel:
    return MarketModel(d, ClockGrid([0.0], [], ()), ())


# --- model files -----------------------------------------------------------------

def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ModelValidationError(f"schema violation: {where} is missing field {key!r}")
    return obj[key]


def _vector(value, d: int, where: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float)) if _is_numeric(value) else None
    if arr is None or arr.ndim != 1 or arr.shape[0] != d:
        raise ModelValidationError(
            f"schema violation: {where} must be a vector of {d} numbers (dimension mismatch)"
        )
    return arr


def _is_numeric(value) -> bool:
    try:
        arr = np.asarray(value)
    except (ValueError, TypeError):
        return False
    return arr.dtype.kind in "iuf" or (arr.dtype.kind == "O" and arr.size == 0)


def parse_model(document: str | bytes | dict, max_atoms: int = MAX_ATOMS) -> MarketModel:
    """Parse and validate a model document (JSON text or already-decoded dict)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ModelValidationError(f"schema violation: not valid JSON ({exc})") from exc
    if not isinstance(document, dict):
        raise ModelValidationError("schema violation: top level must be an object")
    d = _require(document, "dimension", "model")
    if isinstance(d, bool) or not isinstance(d, int) or d < 1:
        raise ModelValidationError("schema violation: dimension must be a positive integer")
    steps = _require(document, "steps", "model")
    if not isinstance(steps, list):
        raise ModelValidationError("schema violation: steps must be an array")
    if not steps:
        return make_empty_model(d)

    times, delta_a, kinds, triplets = [0.0], [], [], []
    for m, st in enumerate(steps):
        where = f"steps[{m}]"
        if not isinstance(st, dict):
            raise ModelValidationError(f"schema violation: {where} must be an object")
        try:
            times.append(float(_require(st, "t_end", where)))
            delta_a.append(float(_require(st, "delta_a", where)))
        except (TypeError, ValueError) as exc:
            raise ModelValidationError(f"schema violation: {where} t_end/delta_a not numeric") from exc
        kinds.append(st.get("kind", CONTINUOUS))
        convention = st.get("drift_convention", UNTRUNCATED if "b" in st else TRUNCATED)
        if convention not in (UNTRUNCATED, TRUNCATED):
            raise ModelValidationError(f"schema violation: {where} unknown drift_convention {convention!r}")
        key = "b" if convention == UNTRUNCATED else "b_h"
        drift = _vector(_require(st, key, where), d, f"{where}.{key}")
        c_raw = _require(st, "c", where)
        if not _is_numeric(c_raw):
            raise ModelValidationError(f"schema violation: {where}.c must be numeric")
        c = np.asarray(c_raw, dtype=float).reshape(-1)
        if c.shape[0] != d * d:
            raise ModelValidationError(
                f"schema violation: {where}.c must hold {d * d} entries (dimension mismatch)"
            )
        atoms = st.get("atoms", [])
        if not isinstance(atoms, list):
            raise ModelValidationError(f"schema violation: {where}.atoms must be an array")
        xs, ks = [], []
        for i, atom in enumerate(atoms):
            aw = f"{where}.atoms[{i}]"
            if not isinstance(atom, dict):
                raise ModelValidationError(f"schema violation: {aw} must be an object")
            xs.append(_vector(_require(atom, "x", aw), d, f"{aw}.x"))
            k = _require(atom, "k", aw)
            if isinstance(k, bool) or not isinstance(k, (int, float)):
                raise ModelValidationError(f"schema violation: {aw}.k must be a number")
            ks.append(float(k))
        K = LevyAtomMeasure(np.array(xs).reshape(len(xs), d), np.array(ks))
        if K.n_atoms > max_atoms:
            raise ModelValidationError(f"{K.n_atoms} atoms exceed the configured maximum {max_atoms}", m)
        b = truncation_convert(drift, K, UNTRUNCATED) if convention == TRUNCATED else drift
        triplets.append(LocalTriplet(b, c.reshape(d, d), K))
    grid = ClockGrid(np.array(times), np.array(delta_a), tuple(kinds))
    return validate_model(MarketModel(d, grid, tuple(triplets)), max_atoms)


def load_model(path: str | Path, max_atoms: int = MAX_ATOMS) -> MarketModel:
    return parse_model(Path(path).read_text(), max_atoms)


def serialize_model(model: MarketModel) -> dict:
    """Normalized document: untruncated drift, row-major ``c``."""
    steps = []
    for m, dA, kind, tr in model.steps():
        steps.append({
            "t_end": float(model.grid.times[m + 1]),
            "delta_a": dA,
            "kind": kind,
            "drift_convention": UNTRUNCATED,
            "b": tr.drift.tolist(),
            "c": tr.diffusion.reshape(-1).tolist(),
            "atoms": [{"x": x.tolist(), "k": float(k)}
                      for x, k in zip(tr.jumps.locations, tr.jumps.intensities)],
        })
    return {"schema_version": SCHEMA_VERSION, "dimension": model.dimension, "steps": steps}


def dump_model(model: MarketModel) -> str:
    return json.dumps(serialize_model(model), indent=2, sort_keys=True)


def portfolio_to_dict(g: Portfolio) -> dict:
    return {"schema_version": SCHEMA_VERSION, "weights": g.weights.tolist()}


def portfolio_from_dict(doc: dict | str) -> Portfolio:
    if isinstance(doc, str):
        doc = json.loads(doc)
    if "weights" not in doc:
        raise ModelValidationError("schema violation: portfolio is missing field 'weights'")
    return Portfolio(np.asarray(doc["weights"], dtype=float))
