"""Command-line interface.

Subcommands:
    simulate  run one experiment config end to end
    sweep     expand a config's sweep grid/cells and run every cell
    verify    run an exact verification family and emit a JSON report
    rates     re-fit growth exponents from an existing run directory

Exit codes: 0 success, 1 verification check failed, 2 config/usage error
(message names the offending key or flag), 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from .harness import (
    ConfigError,
    VERIFY_KINDS,
    refit_rates,
    resolve_config,
    run_config,
    run_sweep,
    run_verify,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError("--config", f"file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError("--config", f"invalid JSON in {path}: {err}")


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise ConfigError(flag, f"expected comma-separated integers, got {text!r}")


def _apply_overrides(raw: dict, args: argparse.Namespace) -> dict:
    if getattr(args, "seeds", None):
        raw = dict(raw)
        raw["seeds"] = _parse_int_list(args.seeds, "--seeds")
    if getattr(args, "checkpoints", None):
        raw = dict(raw)
        raw["checkpoints"] = _parse_int_list(args.checkpoints, "--checkpoints")
    return raw


def _cmd_simulate(args: argparse.Namespace) -> int:
    raw = _apply_overrides(_load_config(args.config), args)
    resolved = resolve_config(raw)
    out_root = args.out or resolved["out"]
    record, curve = run_config(resolved, out_root, jobs=args.jobs)
    print(f"run {record.config_hash} -> {record.out_dir}")
    if record.fit is not None:
        print(f"fit exponent {record.fit.exponent!r} over [{record.fit.t_min}, {record.fit.t_max}]")
    else:
        print(f"fit skipped: {record.fit_skip_reason}")
    print(f"final cumulative excess {float(curve.cum_excess[-1])!r}")
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    raw = _apply_overrides(_load_config(args.config), args)
    resolved = resolve_config(raw)
    out_root = args.out or resolved["out"]
    # pass the raw config so per-cell re-resolution re-derives inherited
    # defaults (learner gamma/alpha) from each cell's swept drift values
    record = run_sweep(raw, out_root, jobs=args.jobs)
    print(f"sweep {record.sweep_hash}: {len(record.cells)} cells -> {record.table_path}")
    if record.failures:
        print(f"{len(record.failures)} cell(s) failed; manifest: {record.failure_manifest}")
    return EXIT_OK


def _cmd_verify(args: argparse.Namespace) -> int:
    options: dict = {}
    if args.trials is not None:
        options["trials"] = args.trials
    if args.seed is not None:
        options["seed"] = args.seed
    if args.pairs is not None:
        options["pairs"] = args.pairs
    if args.m_grid:
        options["m_grid"] = _parse_int_list(args.m_grid, "--m-grid")
    report, ok = run_verify(args.kind, options)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"verify {args.kind}: {'ok' if ok else 'FAILED'} -> {args.out}")
    else:
        print(text)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def _cmd_rates(args: argparse.Namespace) -> int:
    checkpoints = _parse_int_list(args.checkpoints, "--checkpoints") if args.checkpoints else None
    payload = refit_rates(args.run_dir, checkpoints)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one experiment config")
    p_sim.add_argument("--config", required=True, help="path to a JSON experiment config")
    p_sim.add_argument("--out", default=None, help="output root (default: config 'out')")
    p_sim.add_argument("--seeds", default=None, help="comma-separated seed override")
    p_sim.add_argument("--checkpoints", default=None, help="comma-separated checkpoint override")
    p_sim.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run every cell of a config's sweep")
    p_sweep.add_argument("--config", required=True, help="path to a JSON experiment config")
    p_sweep.add_argument("--out", default=None, help="output root (default: config 'out')")
    p_sweep.add_argument("--seeds", default=None, help="comma-separated seed override")
    p_sweep.add_argument("--checkpoints", default=None, help="comma-separated checkpoint override")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_ver = sub.add_parser("verify", help="run an exact verification family")
    p_ver.add_argument("--kind", required=True, choices=VERIFY_KINDS)
    p_ver.add_argument("--trials", type=int, default=None, help="Monte Carlo trials per grid point")
    p_ver.add_argument("--pairs", type=int, default=None, help="random concept pairs to test")
    p_ver.add_argument("--seed", type=int, default=None, help="RNG seed")
    p_ver.add_argument("--m-grid", default=None, help="comma-separated sample sizes")
    p_ver.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p_ver.set_defaults(func=_cmd_verify)

    p_rates = sub.add_parser("rates", help="re-fit growth exponents from existing CSVs")
    p_rates.add_argument("run_dir", help="an out/<hash> directory from a previous run")
    p_rates.add_argument("--checkpoints", default=None, help="comma-separated checkpoint override")
    p_rates.set_defaults(func=_cmd_rates)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        # argparse exits 2 on usage errors, which matches the config-error code
        return int(err.code or 0)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
