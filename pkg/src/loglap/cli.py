"""Command-line runner: ``loglap CONFIG [--output-dir DIR] [--seed N] [--threads N]``.

Exit status: 0 all checks pass, 1 a check failed, 2 the config could not be
read or parsed, 3 the config failed validation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import ConfigError, ExperimentResult, list_experiments, run_experiment, validate_config

ENV_OUTPUT_DIR = "LOGLAP_OUTPUT_DIR"
EXIT_OK, EXIT_CHECK, EXIT_PARSE, EXIT_VALIDATION = 0, 1, 2, 3


def format_float(x: float) -> str:
    """17 significant digits; -0.0 is written as 0."""
    x = float(x) + 0.0
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        x = float(v) + 0.0
        # non-finite values are not valid JSON numbers
        return x if math.isfinite(x) else format_float(x)
    return v


def write_reports(result: ExperimentResult, cfg: dict, out_dir: Path) -> list[str]:
    """Write CSV tables, summary.json and the runtime sidecar; returns artifact names."""
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for table in result.tables:
        name = f"{table.name}.csv"
        with open(out_dir / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(table.columns)
            for row in table.rows:
                w.writerow([_cell(v) for v in row])
        artifacts.append(name)
    with open(out_dir / "checks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "invariant", "value", "op", "tolerance", "passed"])
        for c in result.checks:
            w.writerow([c.name, c.invariant, _cell(c.value), c.op, _cell(c.tolerance), _cell(c.passed)])
    artifacts.append("checks.csv")
    summary = {
        "kind": result.kind,
        "passed": result.passed,
        "checks": [c.to_dict() for c in result.checks],
        "info": result.info,
        "config": cfg,
        "artifacts": sorted(artifacts),
    }
    with open(out_dir / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    # wall-clock times vary run to run, so they live apart from the deterministic files
    with open(out_dir / "runtime.json", "w") as fh:
        json.dump({name: dt for name, dt in result.runtimes}, fh, indent=2)
        fh.write("\n")
    return artifacts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loglap", description="Run log-Laplacian experiments from a JSON config.")
    p.add_argument("config", nargs="?", help="experiment config (JSON)")
    p.add_argument("--output-dir", help=f"report directory (default: ${ENV_OUTPUT_DIR} or ./loglap-out)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for independent checks")
    p.add_argument("--tolerance-scale", type=float, default=1.0, help="loosen every tolerance by this factor")
    p.add_argument("--list", action="store_true", help="list experiment kinds and exit")
    return p


def print_catalog(stream=None) -> None:
    stream = stream or sys.stdout
    for kind, desc, anchors in list_experiments():
        print(f"{kind:22s} {desc} [eq: {', '.join(anchors)}]", file=stream)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list:
        print_catalog()
        return EXIT_OK
    if args.config is None:
        parser.print_usage(sys.stderr)
        print("loglap: error: a config path is required", file=sys.stderr)
        return EXIT_PARSE
    if args.threads < 1 or not args.tolerance_scale > 0:
        print("loglap: error: --threads must be >= 1 and --tolerance-scale > 0", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"loglap: cannot parse config: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if args.seed is not None and isinstance(raw, dict):
        raw["seed"] = args.seed
    try:
        cfg = validate_config(raw)
        result = run_experiment(cfg, threads=args.threads, tolerance_scale=args.tolerance_scale)
    except (ConfigError, ValueError) as exc:
        print(f"loglap: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.output_dir or cfg.get("output_dir") or os.environ.get(ENV_OUTPUT_DIR) or "loglap-out")
    write_reports(result, cfg, out_dir)
    for c in result.checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark} {c.name}: {format_float(c.value)} {'<=' if c.op == 'le' else '>='} {format_float(c.tolerance)}")
    if not result.passed:
        failed = sorted({c.invariant for c in result.checks if not c.passed})
        print(f"loglap: failed invariant(s): {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
