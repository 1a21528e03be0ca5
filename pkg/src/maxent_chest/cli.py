"""Command-line entry point: ``maxent-chest {sweep,evidence,estimate-once,selftest}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import harness
from .harness import ExperimentError


def _add_common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _spec(args) -> harness.ExperimentSpec:
    spec = harness.load_spec(args.config)
    upd = {}
    if args.seed is not None:
        upd["seed"] = args.seed
    if args.trials is not None:
        upd["trials"] = args.trials
    if getattr(args, "workers", None):
        upd["workers"] = args.workers
    if upd:
        spec = replace(spec, **upd)
    return spec


def _write(rows, args):
    if args.out:
        harness.emit(rows, args.format, args.out)
    else:
        sys.stdout.write(harness.render(rows, args.format))


def cmd_sweep(args) -> int:
    res = harness.run_mse_sweep(_spec(args))
    _write(res.summary, args)
    if args.records:
        harness.emit(res.records, args.format, args.records)
    return 0


def cmd_evidence(args) -> int:
    res = harness.run_evidence_experiment(_spec(args))
    _write(res.summary, args)
    if args.records:
        harness.emit(res.records, args.format, args.records)
    return 0


def cmd_estimate_once(args) -> int:
    spec = _spec(args)
    spec = replace(spec, trials=1, snr_db=spec.snr_db[:1], lambdas=spec.lambdas[:1])
    res = harness.run_mse_sweep(spec)
    rec = res.records[0]
    out = {k: (float(v) if isinstance(v, (float, np.floating)) else v) for k, v in rec.items()}
    sys.stdout.write(json.dumps(out, indent=1) + "\n")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    ok = run_selftest(seed=args.seed if args.seed is not None else 0, configs=args.trials or 20)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="maxent-chest", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="Monte Carlo MSE sweep")
    _add_common(p)
    p.add_argument("--records", help="also write per-trial records here")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evidence", help="channel-length odds and evidence per SNR")
    _add_common(p)
    p.add_argument("--records", help="also write per-trial records here")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_evidence)

    p = sub.add_parser("estimate-once", help="run every estimator on a single trial")
    _add_common(p)
    p.set_defaults(func=cmd_estimate_once)

    p = sub.add_parser("selftest", help="check estimators against the dense oracles")
    _add_common(p, config_required=False)
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ExperimentError as exc:
        sys.stderr.write(json.dumps({"error": "validation", "message": str(exc)}) + "\n")
        return 2
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "io", "message": str(exc)}) + "\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
