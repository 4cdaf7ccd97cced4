"""Command-line front end.

Exit codes: 0 all verdicts consistent, 1 usage or validation error,
2 violation or arbitrage found, 3 numerically indeterminate.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import arbdetect, mc, plotting, report
from .growthopt import (ModelSolveError, SolverDivergence, SolverOptions, foc_residual,
                        integrability_profile, solve_model)
from .measure import FEASIBLE, INDETERMINATE, sigma_change, verify_sigma_change
from .model import (ModelValidationError, Portfolio, load_model, portfolio_from_dict,
                    portfolio_to_dict, predictable_jump_warnings, sigma_special_check)
from .stochexp import AdmissibilityError, PriceIncrements, ratio_transform_check

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2
EXIT_INDETERMINATE = 3

COMMANDS = ("validate", "detect", "solve", "simulate", "verify", "measure-change", "lln", "full")
NEEDS_MODEL = set(COMMANDS) - {"lln"}

RATIO_CHECK_PATHS = 1000
RATIO_CHECK_TOL = 1e-10
LLN_LEVELS = 7


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    model: str | None = None
    out: str | None = None
    seed: int = 0
    paths: int = 100_000
    lln_paths: int = 10_000
    epsilon: float = 0.5
    tol: float = 1e-8
    z: float = mc.DEFAULT_Z
    plot: bool = False
    portfolio: str | None = None
    portfolio_out: str | None = None
    dump: str | None = None

    def validate(self) -> RunConfig:
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.command in NEEDS_MODEL and not self.model:
            raise UsageError(f"{self.command} requires --model")
        if self.seed < 0 or self.seed >= 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        if self.paths < 1 or self.lln_paths < 1:
            raise UsageError("--paths must be >= 1")
        if not (self.epsilon > 0 and np.isfinite(self.epsilon)):
            raise UsageError("--epsilon must be > 0")
        if not (self.tol > 0 and self.z > 0):
            raise UsageError("--tol and --z must be > 0")
        return self

    def reproducible(self) -> dict:
        """Settings that determine the numbers in a report (file paths excluded)."""
        return {"seed": self.seed, "paths": self.paths, "lln_paths": self.lln_paths,
                "epsilon": self.epsilon, "tol": self.tol, "z": self.z}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="numeraire", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", help="model file (JSON)")
    p.add_argument("--out", help="report file; stdout when omitted")
    p.add_argument("--config", help="JSON file with default values for the flags")
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int, help="Monte Carlo paths")
    p.add_argument("--lln-paths", dest="lln_paths", type=int)
    p.add_argument("--epsilon", type=float, help="total-variation budget of the measure change")
    p.add_argument("--tol", type=float, help="solver gradient and first-order tolerance")
    p.add_argument("--z", type=float, help="z-score threshold of the Monte Carlo verdicts")
    p.add_argument("--plot", action="store_true", default=None, help="write SVG plots next to --out")
    p.add_argument("--portfolio", help="portfolio file (output of solve); solved when omitted")
    p.add_argument("--portfolio-out", dest="portfolio_out", help="solve: write the portfolio here")
    p.add_argument("--dump", help="simulate: binary path dump file")
    return p


def make_config(argv) -> RunConfig:
    ns = build_parser().parse_args(argv)
    values = {}
    if ns.config:
        try:
            values.update(json.loads(Path(ns.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(values) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    values.update({k: v for k, v in vars(ns).items() if v is not None and k != "config"})
    return RunConfig(**values).validate()


# --- building blocks ---------------------------------------------------------------

def _exit_code(codes) -> int:
    codes = set(codes)
    for c in (EXIT_USAGE, EXIT_VIOLATION, EXIT_INDETERMINATE):
        if c in codes:
            return c
    return EXIT_OK


def _load_portfolio(path: str) -> Portfolio:
    doc = json.loads(Path(path).read_text())
    return portfolio_from_dict(doc.get("portfolio", doc))


def _validate(model) -> tuple[dict, int]:
    return {"valid": True, "dimension": model.dimension, "n_steps": model.n_steps,
            "clock_total": float(np.sum(model.delta_a)),
            "sigma_special": sigma_special_check(model),
            "warnings": predictable_jump_warnings(model)}, EXIT_OK


def _detect(model) -> tuple[dict, int]:
    rep = arbdetect.scan_model(model)
    code = {arbdetect.CLEAN: EXIT_OK, arbdetect.ARBITRAGE: EXIT_VIOLATION,
            arbdetect.INDETERMINATE: EXIT_INDETERMINATE}[rep.verdict]
    return rep.to_dict(), code


def _solve(model, cfg: RunConfig) -> tuple[dict, int, Portfolio | None]:
    opts = SolverOptions(grad_tol=cfg.tol, foc_tol=cfg.tol, foc_seed=cfg.seed)
    try:
        g, diags = solve_model(model, opts)
    except ModelSolveError as exc:
        failures = {}
        code = EXIT_INDETERMINATE
        for m, err in sorted(exc.failures.items()):
            entry = {"error": type(err).__name__, "message": str(err)}
            if isinstance(err, SolverDivergence):
                entry["direction"] = err.direction
                code = EXIT_VIOLATION
            failures[str(m)] = entry
        return {"status": "failed", "failures": failures}, code, None
    converged = all(d.converged for d in diags)
    rep = {"status": "converged" if converged else "not_converged",
           "portfolio": portfolio_to_dict(g), "diagnostics": [d.to_dict() for d in diags]}
    return rep, EXIT_OK if converged else EXIT_INDETERMINATE, g


def _portfolio(model, cfg: RunConfig, out: dict) -> tuple[Portfolio | None, int]:
    if cfg.portfolio:
        g = _load_portfolio(cfg.portfolio)
        g.validate(model)
        out["portfolio"] = portfolio_to_dict(g)
        return g, EXIT_OK
    rep, code, g = _solve(model, cfg)
    out["solve"] = rep
    return g, code


def _head(inc: PriceIncrements, n: int) -> PriceIncrements:
    return PriceIncrements(inc.gauss[:n], inc.drift, inc.cov, inc.jump_sizes, inc.jump_counts[:n])


def _plot_path(cfg: RunConfig, suffix: str) -> Path:
    base = Path(cfg.out) if cfg.out else Path("numeraire")
    return base.with_name(f"{base.stem}_{suffix}.svg")


def _verify(model, g: Portfolio, cfg: RunConfig) -> tuple[dict, int]:
    bundle = mc.simulate(model, cfg.paths, cfg.seed)
    f_list, labels = mc.default_strategies(model, g)
    dtest = mc.deflator_test(model, g, f_list, z=cfg.z, bundle=bundle, labels=labels)
    inc = _head(bundle.increments(), RATIO_CHECK_PATHS)
    gw = np.asarray(g.weights)
    checks = {lab: ratio_transform_check(f, gw, inc, RATIO_CHECK_TOL).to_dict()
              for f, lab in zip(f_list, labels)}
    foc = [foc_residual(tr, g[m], seed=cfg.seed) for m, _, _, tr in model.steps()]
    rep = {"deflator_test": dtest.to_dict(), "ratio_identity": checks,
           "foc_residual": foc, "integrability": integrability_profile(model, g).to_dict(),
           "warnings": predictable_jump_warnings(model)}
    codes = [EXIT_VIOLATION if dtest.verdict == mc.VIOLATION else EXIT_OK]
    if not all(c["passed"] for c in checks.values()):
        codes.append(EXIT_INDETERMINATE)
    if cfg.plot:
        ratios = {lab: mc.terminal_wealth(bundle, f) / mc.terminal_wealth(bundle, gw)
                  for f, lab in zip(f_list, labels)}
        rep["plot"] = Path(plotting.plot_ratio_histograms(ratios, _plot_path(cfg, "ratios"))).name
    return rep, _exit_code(codes)


def _measure(model, g: Portfolio, cfg: RunConfig) -> tuple[dict, int]:
    sc = sigma_change(model, g, cfg.epsilon)
    rep = sc.to_dict()
    if sc.status == FEASIBLE:
        vr = verify_sigma_change(model, g, sc, cfg.paths, cfg.seed, z=cfg.z)
        rep["verification"] = vr.to_dict()
        return rep, EXIT_VIOLATION if vr.verdict == mc.VIOLATION else EXIT_OK
    return rep, EXIT_INDETERMINATE if sc.status == INDETERMINATE else EXIT_VIOLATION


def _lln(cfg: RunConfig) -> tuple[dict, int]:
    n, seed = cfg.lln_paths, cfg.seed
    H, tr, dA = mc.divergent_truncation_design()
    Hb, trb, dAb = mc.bounded_truncation_design()
    dN, G = mc.divergent_counting_design()
    dNb, Gb = mc.bounded_counting_design()
    reps = {
        "truncation_divergent": mc.lln_truncation_test(H, tr, dA, LLN_LEVELS, n, seed),
        "truncation_bounded": mc.lln_truncation_test(Hb, trb, dAb, LLN_LEVELS, n, seed),
        "counting_divergent": mc.lln_counting_test(dN, G, LLN_LEVELS, n, seed),
        "counting_bounded": mc.lln_counting_test(dNb, Gb, LLN_LEVELS, n, seed),
    }
    ok = (reps["truncation_divergent"].monotone and reps["counting_divergent"].monotone
          and reps["truncation_bounded"].stabilized and reps["counting_bounded"].stabilized)
    out = {name: r.to_dict() for name, r in reps.items()}
    if cfg.plot:
        out["plot"] = Path(plotting.plot_lln_curves(reps, _plot_path(cfg, "lln"))).name
    return out, EXIT_OK if ok else EXIT_VIOLATION


def _simulate(model, cfg: RunConfig) -> tuple[dict, int]:
    bundle = mc.simulate(model, cfg.paths, cfg.seed)
    dS = bundle.delta_s()
    steps = []
    for m, dA, _, tr in model.steps():
        x, k = tr.jumps.locations, tr.jumps.intensities
        cov = tr.diffusion * dA + ((x * k[:, None]).T @ x * dA if tr.jumps.n_atoms else 0.0)
        steps.append({"mean": dS[:, m].mean(axis=0), "expected_mean": tr.drift * dA,
                      "se": dS[:, m].std(axis=0, ddof=1) / np.sqrt(cfg.paths)
                      if cfg.paths > 1 else np.zeros(model.dimension),
                      "cov": np.atleast_2d(np.cov(dS[:, m], rowvar=False)),
                      "expected_cov": cov,
                      "jumps_per_path": bundle.counts[:, m].sum(axis=-1).mean()})
    rep = {"bundle": bundle.metadata(), "steps": steps}
    if cfg.dump:
        layout = mc.dump_paths(bundle, cfg.dump)
        layout["file"] = Path(layout["file"]).name
        rep["dump"] = layout
    return rep, EXIT_OK


# --- commands ----------------------------------------------------------------------

def execute(cfg: RunConfig) -> tuple[dict, int]:
    """Run one command; returns the report body and the exit code."""
    out: dict = {"command": cfg.command, "config": cfg.reproducible()}
    if cfg.command == "lln":
        out["lln"], code = _lln(cfg)
        return out, code

    model = load_model(cfg.model)
    out["config"]["model_sha256"] = report.model_hash(model)
    if cfg.command == "validate":
        out["validate"], code = _validate(model)
        return out, code
    if cfg.command == "detect":
        out["detect"], code = _detect(model)
        return out, code
    if cfg.command == "simulate":
        out["simulate"], code = _simulate(model, cfg)
        return out, code
    if cfg.command == "solve":
        out["solve"], code, g = _solve(model, cfg)
        if g is not None and cfg.portfolio_out:
            report.write(portfolio_to_dict(g), cfg.portfolio_out)
        return out, code
    if cfg.command in ("verify", "measure-change"):
        g, code = _portfolio(model, cfg, out)
        if g is None:
            return out, code
        key = "verify" if cfg.command == "verify" else "measure_change"
        body, code2 = (_verify if key == "verify" else _measure)(model, g, cfg)
        out[key] = body
        return out, _exit_code([code, code2])

    # full pipeline
    codes = []
    out["validate"], _ = _validate(model)
    out["detect"], code = _detect(model)
    codes.append(code)
    if code == EXIT_OK:
        g, code = _portfolio(model, cfg, out)
        codes.append(code)
        if g is not None:
            out["verify"], code = _verify(model, g, cfg)
            codes.append(code)
            out["measure_change"], code = _measure(model, g, cfg)
            codes.append(code)
    out["lln"], code = _lln(cfg)
    codes.append(code)
    return out, _exit_code(codes)


def run(argv=None) -> int:
    try:
        cfg = make_config(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        body, code = execute(cfg)
    except (ModelValidationError, AdmissibilityError, OSError, ValueError) as exc:
        body = {"command": cfg.command, "config": cfg.reproducible(),
                "error": {"type": type(exc).__name__, "message": str(exc)}}
        code = EXIT_USAGE
    body["exit_code"] = code
    text = report.write(body, cfg.out)
    if cfg.out is None:
        sys.stdout.write(text)
    elif "error" in body:
        print(f"error: {body['error']['message']}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())
