"""Experiment configs, deterministic run orchestration, sweeps and verifications.

A config is a JSON-compatible dict.  Validation resolves defaults, rejects
unknown or ill-typed keys (naming the offending key), and the canonical
resolved form is hashed so outputs land in a content-addressed directory:

    out/<hash>/curve-<seed>.csv   per-seed exact risk curve (+ window diagnostics)
    out/<hash>/curve-mean.csv     replicate-aggregated curve with CIs
    out/<hash>/fit.json           growth-exponent fit (or the reason it was skipped)
    out/<hash>/summary.txt        human-readable recap
    out/<hash>/config.json        canonical resolved config
    out/<hash>/run.json           record incl. wall clock (the only non-reproducible field)

Identical (config bytes, seeds, version) reproduce identical CSV/fit/summary
bytes; curve files are flushed at power-of-two steps so partial curves survive
interruption.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, SCHEMA_VERSION
from .distributions import (
    ConceptPath,
    DriftSchedule,
    ThresholdConcept,
    concept_path,
    discrepancy,
    make_drift_schedule,
    tv_distance,
)
from .evaluation import (
    DegenerateCurveError,
    RateFit,
    RegretCurve,
    fit_growth_exponent,
    run_single,
    theoretical_exponent,
    verify_blocking,
    verify_uniform_deviation,
)
from .hypotheses import ThresholdClass
from .learners import (
    AdaptiveWindowLearner,
    BaselineLearner,
    ConstantWindowLearner,
    Learner,
    SubsampledErmLearner,
)
from .processes import (
    MarkovModulatedProcess,
    ProcessModel,
    ProductProcess,
    symmetric_chain,
    verify_mixing_rate,
)

__all__ = [
    "ConfigError",
    "RunRecord",
    "SweepRecord",
    "resolve_config",
    "config_hash",
    "build_model",
    "build_learner",
    "build_checkpoints",
    "run_config",
    "run_sweep",
    "run_verify",
    "refit_rates",
    "VERIFY_KINDS",
]

VERIFY_KINDS = ("blocking", "uniform_deviation", "discrepancy", "mixing_rate")

DRIFT_KINDS = ("power_step", "constant", "triangle_wave")
PROCESS_KINDS = ("product", "markov_modulated")
LEARNER_KINDS = (
    "subsampled_erm",
    "adaptive_window",
    "constant_window",
    "full_history_erm",
    "last_point",
)

DEFAULT_CHECKPOINT_MIN = 256
DEFAULT_CHECKPOINT_MAX = 32768


class ConfigError(ValueError):
    """Validation failure; ``key`` names the offending config key or flag."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(key, message)


def _check_keys(section: dict, allowed: Sequence[str], prefix: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{prefix}.{key}" if prefix else key, "unknown key")


def _as_float(value: Any, key: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), key, "must be a number")
    return float(value)


def _as_int(value: Any, key: str) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), key, "must be an integer")
    return int(value)


def resolve_config(raw: dict) -> dict:
    """Validate a raw config dict and return the canonical resolved form.

    Raises ConfigError (naming the offending key) on any violation, including
    cross-module preconditions: schedule steps must fit the concept range for
    the configured noise, finite classes cannot be driven by the threshold
    stream processes, and constant-window learners need a usable gamma.
    """
    _require(isinstance(raw, dict), "config", "must be a JSON object")
    _check_keys(
        raw,
        ["horizon", "seeds", "out", "checkpoints", "drift", "concept", "process", "function_class", "learner", "sweep"],
        "",
    )

    horizon = _as_int(raw.get("horizon"), "horizon")
    _require(horizon >= 1, "horizon", "must be >= 1")

    seeds_raw = raw.get("seeds")
    _require(isinstance(seeds_raw, list) and len(seeds_raw) > 0, "seeds", "must be a non-empty list")
    seeds = [_as_int(s, "seeds") for s in seeds_raw]
    _require(all(s >= 0 for s in seeds), "seeds", "must be non-negative integers")
    _require(len(set(seeds)) == len(seeds), "seeds", "must be distinct")

    out = raw.get("out", "out")
    _require(isinstance(out, str) and out, "out", "must be a non-empty string")

    drift_raw = raw.get("drift")
    _require(isinstance(drift_raw, dict), "drift", "must be an object")
    _check_keys(drift_raw, ["kind", "alpha", "gamma", "c0", "seed"], "drift")
    drift_kind = drift_raw.get("kind")
    _require(drift_kind in DRIFT_KINDS, "drift.kind", f"must be one of {DRIFT_KINDS}")
    drift = {"kind": drift_kind}
    if drift_kind == "constant":
        gamma = _as_float(drift_raw.get("gamma"), "drift.gamma")
        _require(0.0 < gamma <= 1.0, "drift.gamma", "must lie in (0,1]")
        drift["gamma"] = gamma
        alpha = _as_float(drift_raw.get("alpha", 0.0), "drift.alpha")
    else:
        alpha = _as_float(drift_raw.get("alpha"), "drift.alpha")
        drift["c0"] = _as_float(drift_raw.get("c0", 1.0), "drift.c0")
        _require(drift["c0"] > 0.0, "drift.c0", "must be positive")
    _require(0.0 <= alpha < 1.0, "drift.alpha", "must lie in [0,1)")
    drift["alpha"] = alpha
    drift["seed"] = _as_int(drift_raw.get("seed", 0), "drift.seed")

    concept_raw = raw.get("concept", {})
    _require(isinstance(concept_raw, dict), "concept", "must be an object")
    _check_keys(concept_raw, ["eta", "theta0"], "concept")
    eta = _as_float(concept_raw.get("eta", 0.1), "concept.eta")
    _require(0.0 <= eta < 0.5, "concept.eta", "must lie in [0, 0.5)")
    theta0 = _as_float(concept_raw.get("theta0", 0.5), "concept.theta0")
    _require(0.0 <= theta0 <= 1.0, "concept.theta0", "must lie in [0,1]")
    max_delta = drift.get("gamma", 0.0)
    if drift_kind != "constant":
        max_delta = min(1.0, drift["c0"] * 2.0 ** (alpha - 1.0)) if horizon >= 2 else 0.0
    _require(
        max_delta <= 1.0 - 2.0 * eta,
        "concept.eta",
        f"largest drift step {max_delta:.6g} exceeds the concept range (1-2*eta)={1 - 2 * eta:.6g}",
    )

    process_raw = raw.get("process")
    _require(isinstance(process_raw, dict), "process", "must be an object")
    _check_keys(process_raw, ["kind", "states", "flip"], "process")
    process_kind = process_raw.get("kind")
    _require(process_kind in PROCESS_KINDS, "process.kind", f"must be one of {PROCESS_KINDS}")
    process = {"kind": process_kind}
    if process_kind == "markov_modulated":
        states = _as_int(process_raw.get("states"), "process.states")
        _require(2 <= states <= 16, "process.states", "must lie in [2,16]")
        flip = _as_float(process_raw.get("flip"), "process.flip")
        _require(0.0 < flip < 1.0, "process.flip", "must lie in (0,1)")
        process["states"] = states
        process["flip"] = flip

    fc_raw = raw.get("function_class", {"kind": "threshold"})
    _require(isinstance(fc_raw, dict), "function_class", "must be an object")
    _check_keys(fc_raw, ["kind", "path"], "function_class")
    fc_kind = fc_raw.get("kind", "threshold")
    _require(fc_kind in ("threshold", "finite_explicit"), "function_class.kind", "must be 'threshold' or 'finite_explicit'")
    _require(
        fc_kind == "threshold",
        "function_class.kind",
        "finite_explicit classes cannot be driven by the threshold-concept stream processes",
    )
    function_class = {"kind": "threshold"}

    learner_raw = raw.get("learner")
    _require(isinstance(learner_raw, dict), "learner", "must be an object")
    _check_keys(learner_raw, ["kind", "alpha", "r", "gamma"], "learner")
    learner_kind = learner_raw.get("kind")
    _require(learner_kind in LEARNER_KINDS, "learner.kind", f"must be one of {LEARNER_KINDS}")
    learner = {"kind": learner_kind}
    if learner_kind == "subsampled_erm":
        l_alpha = _as_float(learner_raw.get("alpha", drift["alpha"]), "learner.alpha")
        _require(0.0 <= l_alpha < 1.0, "learner.alpha", "must lie in [0,1)")
        l_r = _as_float(learner_raw.get("r"), "learner.r")
        _require(l_r > 0.0, "learner.r", "must be positive")
        learner["alpha"] = l_alpha
        learner["r"] = l_r
    elif learner_kind == "constant_window":
        l_gamma = learner_raw.get("gamma", drift.get("gamma"))
        _require(l_gamma is not None, "learner.gamma", "required (no constant drift gamma to inherit)")
        l_gamma = _as_float(l_gamma, "learner.gamma")
        _require(0.0 < l_gamma <= 1.0, "learner.gamma", "must lie in (0,1]")
        learner["gamma"] = l_gamma

    checkpoints_raw = raw.get("checkpoints")
    if checkpoints_raw is None:
        checkpoints = _default_checkpoint_list(horizon)
    elif isinstance(checkpoints_raw, list):
        checkpoints = [_as_int(v, "checkpoints") for v in checkpoints_raw]
        _require(len(checkpoints) > 0, "checkpoints", "must be non-empty")
        _require(all(1 <= v <= horizon for v in checkpoints), "checkpoints", "must lie in [1, horizon]")
        _require(
            all(b > a for a, b in zip(checkpoints, checkpoints[1:])),
            "checkpoints",
            "must be strictly increasing",
        )
    elif isinstance(checkpoints_raw, dict):
        _check_keys(checkpoints_raw, ["t_min", "t_max", "ratio"], "checkpoints")
        t_min = _as_int(checkpoints_raw.get("t_min"), "checkpoints.t_min")
        t_max = _as_int(checkpoints_raw.get("t_max", horizon), "checkpoints.t_max")
        ratio = _as_float(checkpoints_raw.get("ratio", math.sqrt(2.0)), "checkpoints.ratio")
        _require(1 <= t_min < t_max <= horizon, "checkpoints.t_min", "need 1 <= t_min < t_max <= horizon")
        _require(ratio > 1.0, "checkpoints.ratio", "must exceed 1")
        from .evaluation import geometric_checkpoints

        checkpoints = list(geometric_checkpoints(t_min, t_max, ratio))
    else:
        raise ConfigError("checkpoints", "must be a list or an object")

    resolved = {
        "horizon": horizon,
        "seeds": seeds,
        "out": out,
        "checkpoints": checkpoints,
        "drift": drift,
        "concept": {"eta": eta, "theta0": theta0},
        "process": process,
        "function_class": function_class,
        "learner": learner,
    }
    if "sweep" in raw:
        sweep_raw = raw["sweep"]
        _require(isinstance(sweep_raw, dict), "sweep", "must be an object")
        _check_keys(sweep_raw, ["grid", "cells"], "sweep")
        sweep: dict[str, Any] = {}
        if "grid" in sweep_raw:
            grid = sweep_raw["grid"]
            _require(isinstance(grid, dict), "sweep.grid", "must be an object")
            for key, values in grid.items():
                _require(isinstance(values, list) and len(values) > 0, f"sweep.grid.{key}", "must be a non-empty list")
                _require(key != "seeds", "sweep.grid.seeds", "seeds are shared across cells and cannot be swept")
            sweep["grid"] = grid
        if "cells" in sweep_raw:
            cells = sweep_raw["cells"]
            _require(isinstance(cells, list), "sweep.cells", "must be a list")
            for cell in cells:
                _require(isinstance(cell, dict), "sweep.cells", "every cell must be an object")
                _require("seeds" not in cell, "sweep.cells", "seeds are shared across cells and cannot be overridden")
            sweep["cells"] = cells
        resolved["sweep"] = sweep
    return resolved


def _default_checkpoint_list(horizon: int) -> list[int]:
    top = min(horizon, DEFAULT_CHECKPOINT_MAX)
    points = []
    value = DEFAULT_CHECKPOINT_MIN
    while value <= top:
        points.append(value)
        value *= 2
    if not points:
        points = [horizon]
    elif points[-1] != top:
        points.append(top)
    return points


def canonical_json(resolved: dict) -> str:
    return json.dumps(resolved, sort_keys=True, separators=(",", ":"))


def config_hash(resolved: dict) -> str:
    payload = {k: v for k, v in resolved.items() if k != "sweep"}
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:12]


def _build_schedule(resolved: dict) -> DriftSchedule:
    drift = resolved["drift"]
    return make_drift_schedule(
        kind=drift["kind"],
        alpha=drift["alpha"],
        horizon=resolved["horizon"],
        gamma=drift.get("gamma"),
        c0=drift.get("c0", 1.0),
        seed=drift.get("seed", 0),
    )


def build_model(resolved: dict) -> tuple[ProcessModel, DriftSchedule]:
    schedule = _build_schedule(resolved)
    concept = resolved["concept"]
    path = concept_path(schedule, eta=concept["eta"], theta0=concept["theta0"])
    process = resolved["process"]
    if process["kind"] == "product":
        return ProductProcess(marginals=path), schedule
    transition = symmetric_chain(process["states"], process["flip"])
    return MarkovModulatedProcess(transition=transition, marginals=path), schedule


def build_learner(resolved: dict, schedule: DriftSchedule) -> Learner:
    spec = resolved["learner"]
    function_class = ThresholdClass()
    kind = spec["kind"]
    if kind == "subsampled_erm":
        return SubsampledErmLearner(alpha=spec["alpha"], r=spec["r"], function_class=function_class)
    if kind == "adaptive_window":
        return AdaptiveWindowLearner(function_class=function_class, schedule=schedule)
    if kind == "constant_window":
        return ConstantWindowLearner(function_class=function_class, gamma=spec["gamma"])
    return BaselineLearner(kind=kind, function_class=function_class)


def build_checkpoints(resolved: dict) -> tuple[int, ...]:
    return tuple(resolved["checkpoints"])


@dataclass
class RunRecord:
    config_hash: str
    out_dir: str
    curve_files: tuple[str, ...]
    fit: RateFit | None
    fit_skip_reason: str | None
    wall_clock_seconds: float
    version: str = __version__


def _run_seed_streaming(
    model: ProcessModel,
    learner: Learner,
    horizon: int,
    seed: int,
    curve_path: str | Path,
    inf_risks: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One replicate with CSV rows flushed at every power-of-two step."""
    with open(curve_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,risk,inf_risk,cum_excess,win_k,win_m\n")
        written = 0
        cum = 0.0

        def flush_rows(upto: int, risks: np.ndarray, gaps: np.ndarray, windows: np.ndarray) -> None:
            nonlocal written, cum
            rows = []
            for t in range(written, upto):
                cum += risks[t] - inf_risks[t]
                rows.append(
                    f"{t + 1},{float(risks[t])!r},{float(inf_risks[t])!r},"
                    f"{float(cum)!r},{int(gaps[t])},{int(windows[t])}\n"
                )
            fh.writelines(rows)
            written = upto

        def checkpoint(t: int, risks: np.ndarray, gaps: np.ndarray, windows: np.ndarray) -> None:
            flush_rows(t, risks, gaps, windows)
            fh.flush()

        risks, gaps, windows = run_single(model, learner, horizon, seed, checkpoint=checkpoint)
        flush_rows(horizon, risks, gaps, windows)
    return risks, gaps, windows


def _run_seed_task(args) -> tuple[int, np.ndarray, np.ndarray, np.ndarray]:
    model, learner, horizon, seed, curve_path, inf_risks = args
    risks, gaps, windows = _run_seed_streaming(model, learner, horizon, seed, curve_path, inf_risks)
    return seed, risks, gaps, windows


def run_config(resolved: dict, out_root: str | Path, jobs: int = 1) -> tuple[RunRecord, RegretCurve]:
    """Execute one experiment config; writes the content-addressed output directory."""
    start = time.monotonic()
    digest = config_hash(resolved)
    out_dir = Path(out_root) / digest
    out_dir.mkdir(parents=True, exist_ok=True)

    model, schedule = build_model(resolved)
    learner = build_learner(resolved, schedule)
    horizon = resolved["horizon"]
    seeds = resolved["seeds"]

    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        payload = {k: v for k, v in resolved.items() if k != "sweep"}
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if isinstance(model.marginals, ConceptPath):
        inf_risks = np.full(horizon, model.marginals.eta)
    else:
        from .evaluation import _inf_risk_path

        inf_risks = _inf_risk_path(learner.function_class, model.marginals, horizon)

    curve_files = []
    results: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    if jobs > 1 and len(seeds) > 1:
        tasks = []
        for seed in seeds:
            curve_path = out_dir / f"curve-{seed}.csv"
            curve_files.append(str(curve_path))
            tasks.append((model, learner, horizon, seed, str(curve_path), inf_risks))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for seed, risks, gaps, windows in pool.map(_run_seed_task, tasks):
                results[seed] = (risks, gaps, windows)
    else:
        for seed in seeds:
            curve_path = out_dir / f"curve-{seed}.csv"
            curve_files.append(str(curve_path))
            risks, gaps, windows = _run_seed_streaming(
                model, learner, horizon, seed, curve_path, inf_risks
            )
            results[seed] = (risks, gaps, windows)

    risks = np.stack([results[s][0] for s in seeds])
    gaps = np.stack([results[s][1] for s in seeds])
    windows = np.stack([results[s][2] for s in seeds])
    curve = RegretCurve(
        risks=risks, inf_risks=inf_risks, seeds=tuple(seeds), gaps=gaps, windows=windows
    )
    curve.to_csv(str(out_dir / "curve-mean.csv"))

    checkpoints = build_checkpoints(resolved)
    theoretical = None
    if resolved["learner"]["kind"] == "subsampled_erm":
        theoretical = theoretical_exponent(resolved["learner"]["alpha"], resolved["learner"]["r"])
    fit: RateFit | None = None
    skip_reason: str | None = None
    try:
        fit = fit_growth_exponent(
            checkpoints, curve.checkpoint_values(checkpoints), theoretical=theoretical
        )
    except (DegenerateCurveError, ValueError) as err:
        skip_reason = str(err)

    fit_payload: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": digest,
        "checkpoints": list(checkpoints),
    }
    if fit is not None:
        fit_payload.update(fit.to_json())
        fit_payload["degenerate"] = False
    else:
        fit_payload["degenerate"] = True
        fit_payload["skipped"] = skip_reason
    with open(out_dir / "fit.json", "w", encoding="utf-8") as fh:
        json.dump(fit_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    _write_summary(out_dir / "summary.txt", resolved, digest, curve, fit, skip_reason)

    wall = time.monotonic() - start
    record = RunRecord(
        config_hash=digest,
        out_dir=str(out_dir),
        curve_files=tuple(curve_files),
        fit=fit,
        fit_skip_reason=skip_reason,
        wall_clock_seconds=wall,
    )
    with open(out_dir / "run.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "schema_version": SCHEMA_VERSION,
                "config_hash": digest,
                "version": __version__,
                "seeds": list(seeds),
                "curve_files": [Path(p).name for p in curve_files],
                "fit": fit_payload,
                "wall_clock_seconds": wall,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return record, curve


def _write_summary(
    path_out: Path,
    resolved: dict,
    digest: str,
    curve: RegretCurve,
    fit: RateFit | None,
    skip_reason: str | None,
) -> None:
    lines = [
        f"driftlab run {digest} (schema {SCHEMA_VERSION}, version {__version__})",
        f"process: {json.dumps(resolved['process'], sort_keys=True)}",
        f"drift: {json.dumps(resolved['drift'], sort_keys=True)}",
        f"concept: {json.dumps(resolved['concept'], sort_keys=True)}",
        f"learner: {json.dumps(resolved['learner'], sort_keys=True)}",
        f"horizon: {resolved['horizon']}  seeds: {len(resolved['seeds'])}",
    ]
    final = float(curve.cum_excess[-1])
    lo, hi = curve.ci_bounds()
    lines.append(
        f"final cumulative excess: {final!r} (ci [{float(lo[-1])!r}, {float(hi[-1])!r}])"
    )
    if fit is not None:
        theo = "" if fit.theoretical is None else f" (theoretical {fit.theoretical!r})"
        lines.append(
            f"fit: exponent {fit.exponent!r} over [{fit.t_min}, {fit.t_max}]"
            f", residual {fit.residual_norm!r}{theo}"
        )
    else:
        lines.append(f"fit: skipped ({skip_reason})")
    with open(path_out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _set_by_dotted_key(config: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


@dataclass
class SweepRecord:
    sweep_hash: str
    table_path: str
    failure_manifest: str | None
    cells: tuple[dict, ...]
    failures: tuple[dict, ...]


def _expand_cells(resolved: dict) -> list[dict]:
    sweep = resolved.get("sweep") or {}
    cells: list[dict] = []
    grid = sweep.get("grid")
    if grid:
        keys = sorted(grid.keys())
        for combo in itertools.product(*(grid[k] for k in keys)):
            cells.append(dict(zip(keys, combo)))
    for cell in sweep.get("cells", []):
        cells.append(dict(cell))
    return cells


def run_sweep(raw: dict, out_root: str | Path, jobs: int = 1) -> SweepRecord:
    """Run every sweep cell; write the combined table and a failure manifest.

    Cells patch the *raw* config before per-cell resolution, so defaults that
    inherit across sections (a constant-window learner's gamma, a subsampled
    learner's alpha) track each cell's swept drift parameters instead of the
    base config's values.
    """
    resolved = resolve_config(raw)
    cells = _expand_cells(resolved)
    if not cells:
        raise ConfigError("sweep", "sweep grid/cells must produce at least one cell")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    sweep_digest = hashlib.sha256(
        (canonical_json(resolved) + canonical_json({"cells": cells})).encode()
    ).hexdigest()[:12]

    swept_keys = sorted({key for cell in cells for key in cell})
    rows: list[dict] = []
    failures: list[dict] = []
    for cell in cells:
        base = copy.deepcopy({k: v for k, v in raw.items() if k != "sweep"})
        for key, value in cell.items():
            _set_by_dotted_key(base, key, value)
        try:
            cell_resolved = resolve_config(base)
            record, curve = run_config(cell_resolved, out_root, jobs=jobs)
        except ConfigError:
            raise
        except Exception as err:  # runtime failure in one cell: keep the rest
            failures.append({"cell": cell, "error": f"{type(err).__name__}: {err}"})
            continue
        warmup = 0
        if cell_resolved["learner"]["kind"] == "constant_window":
            from .learners import constant_window_size

            warmup = constant_window_size(1, cell_resolved["learner"]["gamma"])
        excess = curve.mean_risk - curve.inf_risks
        steady = excess[warmup:] if warmup < curve.horizon else excess
        row = {key: cell.get(key) for key in swept_keys}
        row.update(
            {
                "config_hash": record.config_hash,
                "avg_excess": float(steady.mean()),
                "final_cum_excess": float(curve.cum_excess[-1]),
                "fit_exponent": record.fit.exponent if record.fit else float("nan"),
                "fit_theoretical": (
                    record.fit.theoretical
                    if record.fit and record.fit.theoretical is not None
                    else float("nan")
                ),
            }
        )
        rows.append(row)

    table_path = out_root / f"sweep-{sweep_digest}.csv"
    metric_cols = ["config_hash", "avg_excess", "final_cum_excess", "fit_exponent", "fit_theoretical"]
    with open(table_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(swept_keys + metric_cols) + "\n")
        for row in rows:
            cells_txt = []
            for key in swept_keys + metric_cols:
                value = row.get(key)
                cells_txt.append("" if value is None else (f"{value!r}" if isinstance(value, float) else str(value)))
            fh.write(",".join(cells_txt) + "\n")

    manifest_path: str | None = None
    if failures:
        manifest = out_root / f"sweep-{sweep_digest}.failures.json"
        with open(manifest, "w", encoding="utf-8") as fh:
            json.dump({"failures": failures}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest_path = str(manifest)
    return SweepRecord(
        sweep_hash=sweep_digest,
        table_path=str(table_path),
        failure_manifest=manifest_path,
        cells=tuple(cells),
        failures=tuple(failures),
    )


def _verify_blocking_default(options: dict) -> tuple[dict, bool]:
    states_grid = options.get("states", [2, 3, 4])
    blocks_grid = options.get("blocks", [2, 3, 4])
    gaps_grid = options.get("gaps", list(range(1, 9)))
    ts_grid = options.get("ts", [1, 2, 3, 4, 5])
    flips_grid = options.get("flips", [0.1, 0.3, 0.45])
    reports = []
    min_slack = math.inf
    worst = None
    path = ConceptPath(np.array([0.5]), 0.1)
    for states in states_grid:
        for flip in flips_grid:
            model = MarkovModulatedProcess(transition=symmetric_chain(states, flip), marginals=path)
            for blocks in blocks_grid:
                for gap in gaps_grid:
                    for t in ts_grid:
                        report = verify_blocking(model, t=t, blocks=blocks, gap=gap)
                        entry = report.to_json()
                        entry["flip"] = flip
                        reports.append(entry)
                        if report.slack < min_slack:
                            min_slack = report.slack
                            worst = entry
    ok = min_slack >= -1e-12
    return (
        {
            "kind": "blocking",
            "cases": len(reports),
            "min_slack": min_slack,
            "worst": worst,
            "ok": ok,
        },
        ok,
    )


def _verify_uniform_deviation_default(options: dict) -> tuple[dict, bool]:
    trials = int(options.get("trials", 2000))
    if trials < 2:
        raise ConfigError("trials", f"insufficient trials for a deviation estimate, got {trials}")
    seed = int(options.get("seed", 0))
    m_grid = options.get("m_grid") or [2**j for j in range(4, 15)]
    eta = float(options.get("eta", 0.1))
    horizon = max(m_grid)
    function_class = ThresholdClass()

    identical = ConceptPath(np.full(horizon, 0.35), eta)
    drifting_schedule = make_drift_schedule("constant", alpha=0.0, horizon=horizon, gamma=0.01)
    drifting = concept_path(drifting_schedule, eta=eta, theta0=0.2)

    results = {}
    ok = True
    for name, marginals in (("identical", identical), ("drifting", drifting)):
        report = verify_uniform_deviation(function_class, marginals, m_grid, trials, seed)
        entry = report.to_json()
        entry["slope_ok"] = abs(report.fitted_exponent + 0.5) <= 0.08
        entry["envelope_ok"] = report.envelope_constant <= 3.0
        ok = ok and entry["slope_ok"] and entry["envelope_ok"]
        results[name] = entry
    return ({"kind": "uniform_deviation", "settings": results, "ok": ok}, ok)


def _verify_discrepancy_default(options: dict) -> tuple[dict, bool]:
    pairs = int(options.get("pairs", 10000))
    grid_pairs = int(options.get("grid_pairs", 1000))
    seed = int(options.get("seed", 0))
    rng = np.random.default_rng(seed)
    fclass = ThresholdClass()
    tol = 1e-9

    max_rho_minus_tv = -math.inf
    for _ in range(pairs):
        eta_p = rng.uniform(0.0, 0.49)
        eta_q = eta_p if rng.random() < 0.5 else rng.uniform(0.0, 0.49)
        p = ThresholdConcept(theta=float(rng.random()), eta=float(eta_p))
        q = ThresholdConcept(theta=float(rng.random()), eta=float(eta_q))
        gap = discrepancy(p, q, fclass) - tv_distance(p, q)
        max_rho_minus_tv = max(max_rho_minus_tv, gap)
    bound_ok = max_rho_minus_tv <= tol

    theta_grid = np.arange(0.0, 1.0 + 1e-12, 0.001)
    max_closed_vs_grid = 0.0
    for _ in range(grid_pairs):
        eta = float(rng.uniform(0.0, 0.49))
        p = ThresholdConcept(theta=float(rng.integers(0, 1001)) / 1000.0, eta=eta)
        q = ThresholdConcept(theta=float(rng.integers(0, 1001)) / 1000.0, eta=eta)
        closed = discrepancy(p, q, fclass)
        risk_p = eta + (1.0 - 2.0 * eta) * np.abs(theta_grid - p.theta)
        risk_q = eta + (1.0 - 2.0 * eta) * np.abs(theta_grid - q.theta)
        brute = float(np.max(np.abs(risk_p - risk_q)))
        max_closed_vs_grid = max(max_closed_vs_grid, abs(closed - brute))
    grid_ok = max_closed_vs_grid <= tol

    ok = bound_ok and grid_ok
    return (
        {
            "kind": "discrepancy",
            "pairs": pairs,
            "max_rho_minus_tv": max_rho_minus_tv,
            "grid_pairs": grid_pairs,
            "max_closed_form_vs_grid": max_closed_vs_grid,
            "ok": ok,
        },
        ok,
    )


def _verify_mixing_rate_default(options: dict) -> tuple[dict, bool]:
    cap = float(options.get("cap", 1e6))
    r_grid = options.get("r", [1.0, 2.0])
    path = ConceptPath(np.array([0.5]), 0.1)
    cases = []
    ok = True
    product = ProductProcess(marginals=path)
    for r in r_grid:
        report = verify_mixing_rate(product, r=r, cap=cap)
        entry = report.to_json()
        entry.update({"model": "product"})
        cases.append(entry)
        ok = ok and not report.violation and report.bound_constant == 0.0
    for states in options.get("states", [2, 4, 8]):
        for flip in options.get("flips", [0.1, 0.3]):
            model = MarkovModulatedProcess(
                transition=symmetric_chain(states, flip), marginals=path
            )
            for r in r_grid:
                report = verify_mixing_rate(model, r=r, cap=cap)
                entry = report.to_json()
                entry.update({"model": f"symmetric_chain(states={states}, flip={flip})"})
                cases.append(entry)
                ok = ok and not report.violation
    return ({"kind": "mixing_rate", "cases": cases, "ok": ok}, ok)


def run_verify(kind: str, options: dict | None = None) -> tuple[dict, bool]:
    """Run one verification family; returns (JSON-compatible report, all-pass)."""
    options = options or {}
    if kind == "blocking":
        return _verify_blocking_default(options)
    if kind == "uniform_deviation":
        return _verify_uniform_deviation_default(options)
    if kind == "discrepancy":
        return _verify_discrepancy_default(options)
    if kind == "mixing_rate":
        return _verify_mixing_rate_default(options)
    raise ConfigError("--kind", f"must be one of {VERIFY_KINDS}")


def refit_rates(run_dir: str | Path, checkpoints: Sequence[int] | None = None) -> dict:
    """Recompute the growth-exponent fit from the CSVs of an existing run."""
    run_dir = Path(run_dir)
    config_path = run_dir / "config.json"
    if not config_path.exists():
        raise ConfigError("run_dir", f"no config.json under {run_dir}")
    with open(config_path, "r", encoding="utf-8") as fh:
        resolved = json.load(fh)
    seeds = resolved["seeds"]
    risks = []
    inf_risks = None
    for seed in seeds:
        curve_path = run_dir / f"curve-{seed}.csv"
        if not curve_path.exists():
            raise ConfigError("run_dir", f"missing curve file {curve_path.name}")
        data = np.genfromtxt(curve_path, delimiter=",", skip_header=1)
        risks.append(data[:, 1])
        inf_risks = data[:, 2]
    curve = RegretCurve(
        risks=np.stack(risks), inf_risks=inf_risks, seeds=tuple(seeds)
    )
    cps = tuple(int(v) for v in (checkpoints or resolved["checkpoints"]))
    theoretical = None
    if resolved["learner"]["kind"] == "subsampled_erm":
        theoretical = theoretical_exponent(resolved["learner"]["alpha"], resolved["learner"]["r"])
    fit_payload: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": resolved_hash(resolved),
        "checkpoints": list(cps),
    }
    try:
        fit = fit_growth_exponent(cps, curve.checkpoint_values(cps), theoretical=theoretical)
        fit_payload.update(fit.to_json())
        fit_payload["degenerate"] = False
    except (DegenerateCurveError, ValueError) as err:
        fit_payload["degenerate"] = True
        fit_payload["skipped"] = str(err)
    with open(run_dir / "fit.json", "w", encoding="utf-8") as fh:
        json.dump(fit_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return fit_payload


def resolved_hash(resolved: dict) -> str:
    return config_hash(resolved)
