"""Command-line runner.

Exit codes: 0 success, 1 validation error, 2 numerical failure,
3 acceptance-gate failure (only with ``--check``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import load_config, load_presets
from .errors import ConfigError, EnsembleFailure, NodeProximity, StepUnderflow
from .runner import parse_sweep, run_experiment, sweep

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_GATE = 3

DEFAULT_OUT = "qtraj-out"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qtraj",
        description="Reduced quantum trajectories for decoherent two-slit interference.",
    )
    p.add_argument("--config", type=Path, help="YAML or JSON configuration file")
    p.add_argument("--preset", help="scenario preset name (see --list-presets)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration value (repeatable)")
    p.add_argument("--sweep", metavar="KEY=V1,V2,...", help="sweep tau_c, eta or n_trajectories")
    p.add_argument("--out", type=Path, help="output directory (default $QTRAJ_OUT_DIR or ./qtraj-out)")
    p.add_argument("--check", action="store_true", help="exit with status 3 if an acceptance gate fails")
    p.add_argument("--seed", type=int, help="random seed (unsigned 64-bit)")
    p.add_argument("--threads", type=int, help="worker threads for the ensemble")
    p.add_argument("--list-presets", action="store_true", help="print available presets and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.list_presets:
        for name, entry in load_presets().items():
            print(f"{name}: {entry.get('description', '')}")
        return EXIT_OK

    out = args.out or Path(os.environ.get("QTRAJ_OUT_DIR", DEFAULT_OUT))
    try:
        if args.seed is not None and not (0 <= args.seed < 2**64):
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        cfg = load_config(args.config, args.preset, args.overrides, seed=args.seed, threads=args.threads)
        sweep_spec = parse_sweep(args.sweep) if args.sweep else None
    except ConfigError as exc:
        print(f"qtraj: configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    print(json.dumps({"resolved_config": cfg.to_dict(derived=True)}, indent=2, sort_keys=True))

    try:
        if sweep_spec:
            parameter, values = sweep_spec
            rows, gates, results = sweep(cfg, parameter, values, out)
            for row in rows:
                print(json.dumps(row, sort_keys=True))
            print(json.dumps({"sweep_gates": gates}, sort_keys=True))
            if not gates.get("all_runs_completed", False):
                return EXIT_NUMERICAL
            passed = all(gates.values()) and all(r is not None and r.passed for r in results)
        else:
            result = run_experiment(cfg, out)
            print(json.dumps({"results": result.report["results"], "gates": result.gates}, indent=2, sort_keys=True))
            passed = result.passed
    except ConfigError as exc:
        print(f"qtraj: configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EnsembleFailure, StepUnderflow, NodeProximity, FloatingPointError) as exc:
        print(f"qtraj: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    if args.check and not passed:
        print("qtraj: acceptance gate failed", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
