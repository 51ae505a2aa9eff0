"""Command-line front end for :mod:`contactperc.experiments`."""

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, ValidationFailure
from .experiments import MODES, SweepConfig, execute

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION = 0, 2, 3

# argparse dest -> SweepConfig field
_FIELD = {
    "mode": "mode", "dim": "dims", "p": "p", "lam": "lambdas", "gamma": "gammas",
    "xi": "xi", "horizon": "horizon", "initial": "initial", "reps": "reps",
    "seed": "seed", "measure": "measure", "engine": "engine",
    "walk_N_override": "walk_N_override", "walk_k": "walk_k",
    "early_success": "early_success", "max_ever_infected": "max_ever_infected",
    "max_events": "max_events", "level": "level", "scan_iters": "scan_iters",
    "instance": "instances", "workers": "workers", "timing": "timing", "out": "out",
}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="contactperc",
        description="Sweeps, scans, oracle checks and bound reports for the contact "
                    "process on percolation clusters with random recovery rates.")
    ap.add_argument("--config", help="JSON file mirroring the flags; flags win")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--dim", type=int, action="append", help="dimension (repeatable)")
    ap.add_argument("--p", type=float, help="bond-open probability")
    ap.add_argument("--lambda", dest="lam", type=float, action="append",
                    help="infection rate (repeatable)")
    ap.add_argument("--gamma", type=float, action="append",
                    help="infection rate as a multiple of lambda_c (repeatable)")
    ap.add_argument("--xi", help="recovery law: point:a | twopoint:a,b,w | pareto:alpha | "
                                 "shiftedexp:beta")
    ap.add_argument("--horizon", help="fixed:T | clog:c | clog:auto")
    ap.add_argument("--initial", help="origin | logdbox | logdbox:r")
    ap.add_argument("--reps", type=int)
    ap.add_argument("--seed", type=int)
    grp = ap.add_mutually_exclusive_group()
    grp.add_argument("--quenched", dest="measure", action="store_const", const="quenched")
    grp.add_argument("--annealed", dest="measure", action="store_const", const="annealed")
    grp.add_argument("--both-measures", dest="measure", action="store_const", const="both",
                     help="critical_scan only: report quenched and annealed")
    ap.add_argument("--engine", choices=("direct", "graphical"))
    ap.add_argument("--walk-N-override", dest="walk_N_override", type=int)
    ap.add_argument("--walk-k", dest="walk_k", type=int)
    ap.add_argument("--early-success", dest="early_success", type=int,
                    help="count a run as surviving once this many sites were ever infected")
    ap.add_argument("--max-ever-infected", dest="max_ever_infected", type=int)
    ap.add_argument("--max-events", dest="max_events", type=int)
    ap.add_argument("--level", type=float, help="critical_scan crossing level")
    ap.add_argument("--scan-iters", dest="scan_iters", type=int)
    ap.add_argument("--instance", action="append", help="oracle instance file (repeatable)")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--timing", action="store_const", const=True,
                    help="add a wall_time column (output is then not reproducible)")
    ap.add_argument("--out", help="output CSV path (default stdout)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def config_from_args(args):
    doc = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigurationError("config file %s not found" % path)
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError("config file is not valid JSON: %s" % exc) from None
        if not isinstance(doc, dict):
            raise ConfigurationError("config file must hold a JSON object")
    for dest, name in _FIELD.items():
        val = getattr(args, dest)
        if val is not None:
            doc[name] = val
    if args.lam is not None:
        doc.pop("gammas", None)
    elif args.gamma is not None:
        doc.pop("lambdas", None)
    if "mode" not in doc:
        raise ConfigurationError("--mode is required")
    try:
        return SweepConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        text, passed = execute(cfg)
        if cfg.out:
            with open(cfg.out, "w", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if not passed:
            raise ValidationFailure("oracle validation failed (some |z| > 3)")
    except ConfigurationError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except ValidationFailure as exc:
        print("validation failure: %s" % exc, file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
