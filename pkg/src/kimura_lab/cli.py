"""Configuration ingestion and experiment orchestration.

A run is described by one strict JSON document: unknown keys are errors
and the physical parameters (horizon_T, dt, n_paths, master_seed, and q
for singular models) must be explicit. The orchestrator executes the
declared experiments in order, writes report.json plus any requested CSV
artifacts, prints a summary table, and exits 0 only when every verdict
is PASS. Identical config + seed reproduce report.json byte for byte;
wall-clock metadata goes to a side file.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import catalog, diagnostics, engine, girsanov, holder
from ._rng import DOMAIN_SECONDARY
from .errors import ConfigError, KimuraLabError
from .geometry import StatePoint
from .model import (
    CoefficientModel,
    boundary_face_samples,
    box_samples,
    bump_function,
    check_drift_boundary,
    check_ellipticity,
    check_singular_bounds,
    estimate_K,
    validate_decomposition,
)
from .report import (
    FAIL,
    PASS,
    DiagnosticReport,
    format_summary_table,
    write_report_json,
)

EXPERIMENTS = (
    "khasminskii",
    "novikov",
    "support",
    "martingale-residual",
    "girsanov-compare",
    "restart",
    "holder-validate",
)

_SIM_KEYS = {
    "horizon_T": float,
    "dt": float,
    "n_paths": int,
    "master_seed": int,
    "clamp_mode": str,
    "epsilon_floor": float,
    "record_stride": int,
    "retain_increments": bool,
}
_SIM_REQUIRED = ("horizon_T", "dt", "n_paths", "master_seed")

_TOLERANCE_KEYS = {
    "support.c_tol",
    "khasminskii.q",
    "khasminskii.lambda",
    "khasminskii.delta",
    "novikov.q",
    "novikov.lambda",
    "residual.c_dt",
    "residual.bump_radius",
    "compare.alpha",
    "restart.alpha",
    "restart.t_split",
    "holder.alpha",
    "holder.levels",
    "holder.flag_factor",
    "holder.radius",
    "validate.box_radius",
    "validate.samples",
}


@dataclass
class RunConfig:
    """Validated run description with the model already built."""

    model_name: str
    model_params: dict
    sim: engine.SimConfig
    experiments: list
    output_dir: Path
    tolerances: dict
    model: CoefficientModel
    z0: StatePoint
    workers: int = 1

    def tol(self, key: str, default):
        return self.tolerances.get(key, default)


def load_config(path) -> RunConfig:
    """Parse and validate a JSON run configuration (strict keys)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be a JSON object")
    allowed = {"model_name", "model_params", "sim", "experiments", "output_dir", "tolerances"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("model_name", "sim"):
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")

    sim_doc = doc["sim"]
    if not isinstance(sim_doc, dict):
        raise ConfigError("'sim' must be an object")
    unknown = set(sim_doc) - set(_SIM_KEYS)
    if unknown:
        raise ConfigError(f"unknown sim keys: {sorted(unknown)}")
    missing = [k for k in _SIM_REQUIRED if k not in sim_doc]
    if missing:
        raise ConfigError(f"sim is missing required physical parameters: {missing}")
    try:
        sim = engine.SimConfig(**{k: _SIM_KEYS[k](v) for k, v in sim_doc.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sim parameters: {exc}") from exc

    experiments = doc.get("experiments", [])
    if not isinstance(experiments, list) or not all(isinstance(e, str) for e in experiments):
        raise ConfigError("'experiments' must be a list of names")
    for e in experiments:
        if e not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {e!r}; known: {', '.join(EXPERIMENTS)}")

    tolerances = doc.get("tolerances", {})
    if not isinstance(tolerances, dict):
        raise ConfigError("'tolerances' must be an object")
    unknown = set(tolerances) - _TOLERANCE_KEYS
    if unknown:
        raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")

    params = doc.get("model_params", {})
    if not isinstance(params, dict):
        raise ConfigError("'model_params' must be an object")
    try:
        model, z0 = catalog.build(doc["model_name"], params)
    except (KimuraLabError, ValueError) as exc:
        # q >= q0 and friends surface here with the constraint spelled out
        raise ConfigError(f"invalid model: {exc}") from exc

    if model.is_singular and model.declared_q is None:
        raise ConfigError("singular models must declare q explicitly (model_params.q)")

    return RunConfig(
        model_name=doc["model_name"],
        model_params=params,
        sim=sim,
        experiments=experiments,
        output_dir=Path(doc.get("output_dir", "out")),
        tolerances=tolerances,
        model=model,
        z0=z0,
    )


# ---------------------------------------------------------------------------
# experiment registry


def _declared_or_estimated_K(cfg: RunConfig) -> float:
    if cfg.model.declared_K is not None:
        return cfg.model.declared_K
    samples = box_samples(cfg.model.n, cfg.model.m, count=128, radius=cfg.tol("validate.box_radius", 10.0))
    return estimate_K(cfg.model, samples)


def _exp_support(cfg: RunConfig) -> list[DiagnosticReport]:
    bundle = engine.simulate_standard(cfg.model, cfg.sim, cfg.z0, workers=cfg.workers)
    c_tol = cfg.tol("support.c_tol", 5.0 * _declared_or_estimated_K(cfg))
    return [diagnostics.support_report(bundle, c_tol=c_tol)]


def _pick_q(cfg: RunConfig, key: str) -> float:
    q = cfg.tol(key, cfg.model.declared_q)
    if q is None:
        if cfg.model.declared_b0 is not None and cfg.model.declared_K is not None:
            return 0.5 * cfg.model.q0()
        raise ConfigError(f"set {key!r} in tolerances: the model declares no q")
    return float(q)


def _exp_khasminskii(cfg: RunConfig) -> list[DiagnosticReport]:
    q = _pick_q(cfg, "khasminskii.q")
    lam = float(cfg.tol("khasminskii.lambda", 1.0))
    delta = float(cfg.tol("khasminskii.delta", 0.5))
    bundle = engine.simulate_standard(cfg.model, cfg.sim, cfg.z0, workers=cfg.workers)
    return [
        diagnostics.khasminskii_estimate(
            bundle, q, lam, epsilon_floor=cfg.sim.epsilon_floor, bound=delta
        )
    ]


def _exp_novikov(cfg: RunConfig) -> list[DiagnosticReport]:
    q = _pick_q(cfg, "novikov.q")
    lam = float(cfg.tol("novikov.lambda", 1.0))
    bundle = engine.simulate_standard(cfg.model, cfg.sim, cfg.z0, workers=cfg.workers)
    return [
        diagnostics.novikov_estimate(bundle, q, lam, epsilon_floor=cfg.sim.epsilon_floor)
    ]


def _exp_residual(cfg: RunConfig) -> list[DiagnosticReport]:
    radius = float(cfg.tol("residual.bump_radius", 1.0))
    c_dt = float(cfg.tol("residual.c_dt", 0.0))
    u = bump_function(cfg.z0, radius)
    return [
        diagnostics.martingale_residual(
            cfg.model, u, cfg.z0, cfg.sim, c_dt=c_dt, workers=cfg.workers
        )
    ]


def _exp_compare(cfg: RunConfig) -> list[DiagnosticReport]:
    model = cfg.model
    if not model.is_singular:
        raise ConfigError("girsanov-compare needs a singular model (f, h present)")
    alpha = float(cfg.tol("compare.alpha", 0.01))
    vals_a, logw, kept = girsanov.reweighted_terminal_sample(
        model, cfg.sim, cfg.z0, workers=cfg.workers
    )
    weights = np.exp(logw[kept])
    direct = []
    for block in engine.iter_simulate(
        model, cfg.sim, cfg.z0, "singular", stream_domain=DOMAIN_SECONDARY, workers=cfg.workers
    ):
        direct.append(block.states[:, -1, 0])
    vals_b = np.concatenate(direct)
    compare = diagnostics.marginal_compare(
        vals_a[kept], vals_b, weights_a=weights, alpha=alpha, name="girsanov-compare"
    )
    compare.metadata.update({"excluded_fraction": 1.0 - float(kept.mean())})
    mean_w = float(weights.mean())
    se_w = float(weights.std(ddof=1) / np.sqrt(weights.size))
    martingale = DiagnosticReport(
        name="weight-martingale",
        estimate=mean_w,
        stderr=se_w,
        bound_or_tolerance=3.0 * se_w,
        verdict=PASS if abs(mean_w - 1.0) <= 3.0 * se_w else FAIL,
        metadata={"n_retained": int(kept.sum()), "n_paths": cfg.sim.n_paths},
    )
    return [martingale, compare]


def _exp_restart(cfg: RunConfig) -> list[DiagnosticReport]:
    T = cfg.sim.horizon_T
    t_split = float(cfg.tol("restart.t_split", T / 2.0))
    alpha = float(cfg.tol("restart.alpha", 0.01))
    kind = "singular" if cfg.model.is_singular else "standard"
    return [
        diagnostics.restart_consistency(
            cfg.model, cfg.z0, t_split, T, cfg.sim, kind=kind, alpha=alpha
        )
    ]


def _exp_holder(cfg: RunConfig) -> list[DiagnosticReport]:
    alpha = float(cfg.tol("holder.alpha", cfg.model.declared_alpha or 0.5))
    spec = holder.HolderGridSpec(
        levels=int(cfg.tol("holder.levels", 3)),
        flag_factor=float(cfg.tol("holder.flag_factor", 2.0)),
        radius=float(cfg.tol("holder.radius", 4.0)),
    )
    rep = holder.validate_coefficient_holder(cfg.model, alpha, spec)
    holder.write_norms_csv(rep, cfg.output_dir / "norms.csv")
    rep.metadata["table"] = f"written to norms.csv ({len(rep.metadata['table'])} rows)"
    return [rep]


_EXPERIMENT_FNS = {
    "support": _exp_support,
    "khasminskii": _exp_khasminskii,
    "novikov": _exp_novikov,
    "martingale-residual": _exp_residual,
    "girsanov-compare": _exp_compare,
    "restart": _exp_restart,
    "holder-validate": _exp_holder,
}


def run_validators(cfg: RunConfig) -> list[DiagnosticReport]:
    """Structural validators: boundary drift, decomposition, ellipticity,
    declared-constant probes, singular bounds."""
    model = cfg.model
    radius = float(cfg.tol("validate.box_radius", 10.0))
    count = int(cfg.tol("validate.samples", 64))
    reports = []
    if model.n:
        boundary = []
        for face in range(model.n):
            boundary.extend(boundary_face_samples(model.n, model.m, face, count=count, radius=radius))
        reports.append(check_drift_boundary(model, boundary, mode="nonneg"))
        if model.declared_b0 is not None:
            reports.append(check_drift_boundary(model, boundary, mode="positive"))
    interior = box_samples(model.n, model.m, count=count, radius=radius, x_min=1e-3)
    if model.decomposition is not None:
        reports.append(validate_decomposition(model, interior))
        reports.append(
            check_ellipticity(model.decomposition, box_samples(model.n, model.m, count=count, radius=radius))
        )
    k_est = estimate_K(model, interior)
    k_bound = model.declared_K if model.declared_K is not None else float("inf")
    reports.append(
        DiagnosticReport(
            name="coefficient-bound-K",
            estimate=k_est,
            stderr=0.0,
            bound_or_tolerance=k_bound,
            verdict=PASS if k_est <= k_bound * (1 + 1e-12) else FAIL,
            metadata={"declared_K": model.declared_K},
        )
    )
    if model.is_singular:
        q0 = model.q0()
        reports.append(
            DiagnosticReport(
                name="q-below-q0",
                estimate=model.declared_q,
                stderr=0.0,
                bound_or_tolerance=q0,
                verdict=PASS if model.declared_q < q0 else FAIL,
                metadata={"q0": q0, "b0": model.declared_b0, "K": model.declared_K},
            )
        )
        reports.append(check_singular_bounds(model, interior, q=model.declared_q))
    return reports


def run(cfg: RunConfig, command: str = "diagnose") -> int:
    """Execute a command against a loaded config; returns the exit status."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    reports: list[DiagnosticReport] = []
    if command == "validate":
        reports = run_validators(cfg)
    elif command == "simulate":
        kind = "singular" if cfg.model.is_singular else "standard"
        bundle = (
            engine.simulate_singular(cfg.model, cfg.sim, cfg.z0, workers=cfg.workers)
            if kind == "singular"
            else engine.simulate_standard(cfg.model, cfg.sim, cfg.z0, workers=cfg.workers)
        )
        engine.write_paths_csv(bundle, cfg.output_dir / "paths.csv")
        if bundle.increments is not None:
            engine.write_increments_csv(bundle, cfg.output_dir / "increments.csv")
        c_tol = cfg.tol("support.c_tol", 5.0 * _declared_or_estimated_K(cfg))
        reports = [diagnostics.support_report(bundle, c_tol=c_tol)]
    elif command == "diagnose":
        if not cfg.experiments:
            raise ConfigError("config declares no experiments")
        for name in cfg.experiments:
            reports.extend(_EXPERIMENT_FNS[name](cfg))
    elif command == "compare":
        reports = _exp_compare(cfg)
    elif command == "holder":
        reports = _exp_holder(cfg)
    else:
        raise ConfigError(f"unknown command {command!r}")

    write_report_json(reports, cfg.output_dir / "report.json")
    meta = {"elapsed_seconds": time.time() - t0, "command": command}
    (cfg.output_dir / "run_info.json").write_text(json.dumps(meta) + "\n", encoding="utf-8")
    print(format_summary_table(reports))
    return 0 if all(r.verdict == PASS for r in reports) else 1


def _report_command(path: Path) -> int:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    reports = [
        DiagnosticReport(
            name=r["name"],
            estimate=r["estimate"],
            stderr=r["stderr"],
            bound_or_tolerance=r["bound"],
            verdict=r["verdict"],
            metadata=r.get("metadata", {}),
        )
        for r in doc
    ]
    print(format_summary_table(reports))
    return 0 if all(r.verdict == PASS for r in reports) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kimura-lab",
        description="Simulation and verification laboratory for degenerate "
        "square-root diffusions on [0,inf)^n x R^m.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("validate", "run structural validators against the model"),
        ("simulate", "simulate paths and write paths.csv"),
        ("diagnose", "run the experiments declared in the config"),
        ("compare", "two-construction uniqueness check (reweighted vs direct)"),
        ("holder", "coefficient Hölder-regularity probe; writes norms.csv"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override sim.master_seed")
        p.add_argument("--workers", type=int, default=1, help="data-parallel worker count")
        p.add_argument("--out", default=None, help="override output_dir")
    p = sub.add_parser("report", help="render an existing report.json")
    p.add_argument("--in", dest="infile", required=True, help="path to report.json")

    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return _report_command(Path(args.infile))
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.sim = replace(cfg.sim, master_seed=args.seed)
        if args.out is not None:
            cfg.output_dir = Path(args.out)
        cfg.workers = max(1, args.workers)
        return run(cfg, args.command)
    except KimuraLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
