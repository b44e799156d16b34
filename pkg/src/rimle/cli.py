"""Command-line driver: ``rimle {fit,scan,simulate,breakdown,ari}``.

Exit status is 0 on success, 2 for usage errors and 1 for runtime failures;
runtime failures print a single ``rimle: <stage>: <message>`` line to stderr.
"""

import argparse
import logging
import math
import sys

from .constraints import ConstraintConfig
from .em import (
    DEFAULT_GAMMA,
    DEFAULT_MAX_ITER,
    DEFAULT_MIN_COMPONENT_MASS,
    DEFAULT_N_STARTS,
    DEFAULT_PI_MAX,
    DEFAULT_TOL,
    EmConfig,
    multistart_fit,
)
from .evaluation import (
    DEFAULT_LOG_DELTA_GRID,
    SyntheticSpec,
    adjusted_rand,
    breakdown_experiment,
    delta_scan,
    generate_mixture,
    write_breakdown_csv,
    write_scan_csv,
)
from .io import mad_standardize, read_labels, read_matrix, write_labels, write_matrix, write_result
from .model import IcdValue

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class StageError(Exception):
    def __init__(self, stage, exc):
        self.stage = stage
        self.exc = exc
        super().__init__(f"{stage}: {type(exc).__name__}: {exc}")


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - reported as a one-line diagnostic
        raise StageError(name, exc) from exc


def _float_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def _delimiter(text):
    if text in ("\\t", "tab"):
        return "\t"
    if len(text) != 1:
        raise argparse.ArgumentTypeError("delimiter must be a single character")
    return text


def _add_data_flags(p):
    p.add_argument("--input", required=True, help="CSV data file (rows are observations)")
    p.add_argument("--header", action="store_true", help="skip the first line of --input")
    p.add_argument("--delimiter", type=_delimiter, default=",")
    p.add_argument("--mad-standardize", action="store_true",
                   help="divide each column by its median absolute deviation before fitting")


def _add_em_flags(p, with_delta=True):
    p.add_argument("--g", type=int, required=True, help="number of Gaussian components")
    if with_delta:
        grp = p.add_mutually_exclusive_group(required=True)
        grp.add_argument("--log-delta", type=float, help="natural log of the improper density")
        grp.add_argument("--delta", type=float, help="improper constant density")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA,
                   help="eigenvalue ratio bound (default %(default)s)")
    p.add_argument("--pi-max", type=float, default=DEFAULT_PI_MAX,
                   help="noise proportion cap (default %(default)s)")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL,
                   help="convergence tolerance (default %(default)s)")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--starts", type=int, default=DEFAULT_N_STARTS)
    p.add_argument("--min-component-mass", type=float, default=DEFAULT_MIN_COMPONENT_MASS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="processes used for the starts")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rimle", description="Robust improper maximum likelihood clustering.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the model and write the result")
    _add_data_flags(p)
    _add_em_flags(p)
    p.add_argument("--output", required=True, help="result file")
    p.add_argument("--format", choices=("structured", "labels"), default="structured")
    p.add_argument("--labels-output", help="also write labels here (one per line)")

    p = sub.add_parser("scan", help="fit over a grid of log-delta values")
    _add_data_flags(p)
    _add_em_flags(p, with_delta=False)
    p.add_argument("--grid", type=_float_list,
                   default=list(DEFAULT_LOG_DELTA_GRID),
                   help="comma-separated log-delta values (default: -200,-100,-50,-20..-3)")
    p.add_argument("--reference-labels", help="labels file to compare each fit against")
    p.add_argument("--output", required=True, help="CSV table")

    p = sub.add_parser("simulate", help="draw a synthetic dataset described by a JSON file")
    p.add_argument("spec", help="JSON file describing the mixture")
    p.add_argument("--output", required=True, help="CSV data file")
    p.add_argument("--labels-output", help="true labels file (default: <output>.labels)")
    p.add_argument("--seed", type=int, default=None, help="override the seed given in the JSON file")

    p = sub.add_parser("breakdown", help="probe robustness against added outliers")
    _add_data_flags(p)
    _add_em_flags(p)
    p.add_argument("--r", type=int, required=True, help="number of added points")
    p.add_argument("--magnitudes", type=_float_list, required=True,
                   help="comma-separated outlier offsets along the first axis")
    p.add_argument("--output", required=True, help="CSV table")

    p = sub.add_parser("ari", help="adjusted Rand index of two label files")
    p.add_argument("labels_a")
    p.add_argument("labels_b")
    return parser


def _icd(args):
    if getattr(args, "log_delta", None) is not None:
        return IcdValue.from_log(args.log_delta)
    return IcdValue.from_delta(args.delta)


def _config(args, icd):
    return EmConfig(
        icd=icd,
        n_components=args.g,
        constraints=ConstraintConfig(args.gamma, args.pi_max),
        tol=args.tol,
        max_iter=args.max_iter,
        n_starts=args.starts,
        seed=args.seed,
        min_component_mass=args.min_component_mass,
    )


def _load(args):
    data = _stage("read", read_matrix, args.input, has_header=args.header,
                  delimiter=args.delimiter)
    if args.mad_standardize:
        data = _stage("standardize", mad_standardize, data)
    return data


def _cmd_fit(args):
    cfg = _stage("config", _config, args, _stage("config", _icd, args))
    data = _load(args)
    res = _stage("fit", multistart_fit, data, cfg, n_jobs=args.jobs)
    _stage("write", write_result, res.best, cfg, args.output, format=args.format,
           column_scales=data.column_scales)
    if args.labels_output:
        _stage("write", write_labels, res.best.assignments, args.labels_output)


def _cmd_scan(args):
    cfg = _stage("config", _config, args, IcdValue.from_log(args.grid[0]))
    data = _load(args)
    ref = None
    if args.reference_labels:
        ref = _stage("read", read_labels, args.reference_labels)
    rows = _stage("scan", delta_scan, data, cfg, args.grid, reference_labels=ref,
                  n_jobs=args.jobs)
    _stage("write", write_scan_csv, rows, args.output)


def _cmd_simulate(args):
    spec = _stage("read", SyntheticSpec.load, args.spec)
    rng = spec.seed if args.seed is None else args.seed
    data, labels = _stage("simulate", generate_mixture, spec, rng)
    _stage("write", write_matrix, data, args.output)
    _stage("write", write_labels, labels, args.labels_output or f"{args.output}.labels")


def _cmd_breakdown(args):
    cfg = _stage("config", _config, args, _stage("config", _icd, args))
    data = _load(args)
    reports = _stage("breakdown", breakdown_experiment, data, cfg, args.r, args.magnitudes,
                     n_jobs=args.jobs)
    _stage("write", write_breakdown_csv, reports, args.output)


def _cmd_ari(args):
    a = _stage("read", read_labels, args.labels_a)
    b = _stage("read", read_labels, args.labels_b)
    value = _stage("ari", adjusted_rand, a, b)
    print(repr(float(value)) if math.isfinite(value) else value)


COMMANDS = {
    "fit": _cmd_fit,
    "scan": _cmd_scan,
    "simulate": _cmd_simulate,
    "breakdown": _cmd_breakdown,
    "ari": _cmd_ari,
}


LIST_FLAGS = ("--grid", "--magnitudes")


def _attach_list_values(argv):
    # argparse would read "-8,-5" as an option; bind it to its flag explicitly
    out = []
    it = iter(argv)
    for token in it:
        if token in LIST_FLAGS:
            value = next(it, None)
            out.append(token if value is None else f"{token}={value}")
        else:
            out.append(token)
    return out


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_attach_list_values(argv))
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except StageError as exc:
        print(f"rimle: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
