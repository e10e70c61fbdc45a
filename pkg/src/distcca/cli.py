"""
Command-line front end.

    distcca simulate iterations|gap|machines [options]
    distcca realdata mnist|mediamill|mfeat [options]
    distcca selftest oracle

Options may also come from ``--config FILE`` holding ``key = value`` lines
(``#`` starts a comment; list values are comma separated).  Keys are the
long option names with dashes or underscores.  Explicit flags win over the
file.  Exit status: 0 on success, 2 on invalid input, 3 on solver failure,
4 when a dataset file is missing.
"""
import argparse
import csv
import os
import sys

import numpy as np

from . import harness
from .datasets import DATA_ROOT_ENV, IdxFormatError, DelimitedParseError, load_mediamill, \
    load_mfeat, load_mnist
from .linalg import ConvergenceError

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_MISSING = 0, 2, 3, 4

SIM_DEFAULTS = {"iterations": {}, "gap": {"deltas": (0.05, 0.1, 0.15, 0.2, 0.25)},
                "machines": {"K": harness.MACHINES_DEFAULT}}
REAL_DEFAULTS = {"K": harness.REALDATA_MACHINES, "L": 3, "replications": 1,
                 "center": "global-mean", "ridge": 1e-3, "metric_delta": 0.15}


def _ints(text):
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _floats(text):
    return tuple(float(x) for x in str(text).split(",") if x.strip())


def _strs(text):
    return tuple(x.strip() for x in str(text).split(",") if x.strip())


# option name -> (ExperimentSpec field, parser)
OPTIONS = {
    "dx": ("dx", int), "dy": ("dy", int), "r": ("r", int), "n": ("n", int),
    "K": ("K", _ints), "delta": ("deltas", _floats), "T": ("T", int),
    "T-prime": ("T_prime", int), "L": ("L", int), "replications": ("replications", int),
    "seed": ("seed", int), "checkpoints": ("checkpoints", _ints),
    "metric-delta": ("metric_delta", float), "methods": ("methods", _strs),
    "c0": ("c0", float), "omega": ("omega", float), "workers": ("workers", int),
    "center": ("center", str), "ridge": ("ridge", float),
}


def read_config(path):
    """Parse a ``key = value`` file into spec field values."""
    lookup = {}
    for name, (fieldname, conv) in OPTIONS.items():
        for key in (name, name.replace("-", "_"), fieldname):
            lookup[key] = (fieldname, conv)
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (part.strip() for part in text.split("=", 1))
            if key not in lookup:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            fieldname, conv = lookup[key]
            values[fieldname] = conv(val)
    return values


def _add_spec_options(p):
    for name, (fieldname, conv) in OPTIONS.items():
        p.add_argument(f"--{name}", dest=fieldname, type=conv, default=None)
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--output", "-o", help="CSV path (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(prog="distcca", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="synthetic sweeps")
    sim.add_argument("sweep", choices=("iterations", "gap", "machines"))
    _add_spec_options(sim)

    real = sub.add_parser("realdata", help="benchmark datasets, pooled estimate as reference")
    real.add_argument("dataset", choices=("mnist", "mediamill", "mfeat"))
    _add_spec_options(real)
    real.add_argument("--data-root", help=f"dataset directory (default ${DATA_ROOT_ENV})")
    real.add_argument("--path-x", help="x-view file (mediamill, mfeat) or IDX file (mnist)")
    real.add_argument("--path-y", help="y-view file (mediamill, mfeat)")
    real.add_argument("--delimiter", default=",", help="mediamill field separator")
    real.add_argument("--skip-header", action="store_true")

    test = sub.add_parser("selftest", help="built-in consistency checks")
    test.add_argument("check", choices=("oracle",))
    test.add_argument("--seeds", type=int, default=10)
    test.add_argument("--tol", type=float, default=1e-10)
    return parser


def _spec_from_args(args, kind, defaults):
    values = dict(defaults)
    if args.config:
        values.update(read_config(args.config))
    for _, (fieldname, _) in OPTIONS.items():
        val = getattr(args, fieldname)
        if val is not None:
            values[fieldname] = val
    return harness.ExperimentSpec(kind, output=args.output, **values)


def _load_dataset(args):
    root = args.data_root or os.environ.get(DATA_ROOT_ENV)
    if args.dataset == "mnist":
        return load_mnist(path=args.path_x, root=root)
    if args.dataset == "mfeat":
        return load_mfeat(root=root, path_x=args.path_x, path_y=args.path_y)
    if not (args.path_x and args.path_y):
        if not root:
            raise FileNotFoundError("mediamill needs --path-x/--path-y or a data root")
        args.path_x = args.path_x or os.path.join(root, "mediamill", "labels.csv")
        args.path_y = args.path_y or os.path.join(root, "mediamill", "features.csv")
    return load_mediamill(args.path_x, args.path_y, args.delimiter, args.skip_header)


def _write(rows, spec, extra):
    if spec.output:
        harness.emit_csv(rows, spec.output)
        harness.write_metadata(spec, spec.output + ".meta.json", extra)
    else:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(harness.CSV_HEADER)
        for row in rows:
            writer.writerow(row.as_list())


def _selftest(args):
    from .testing import oracle_selftest
    worst = oracle_selftest(seeds=range(args.seeds))
    ok = max(worst) <= args.tol
    for seed, gap in enumerate(worst):
        print(f"seed {seed}: max deviation {gap:.3e}")
    print(("PASS" if ok else "FAIL") + f" oracle equivalence (tol {args.tol:g})")
    return EXIT_OK if ok else EXIT_SOLVER


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "selftest":
            return _selftest(args)
        if args.command == "simulate":
            spec = _spec_from_args(args, args.sweep, SIM_DEFAULTS[args.sweep])
            rows = harness.run(spec)
            _write(rows, spec, {})
            return EXIT_OK
        spec = _spec_from_args(args, "realdata", REAL_DEFAULTS)
        data = _load_dataset(args)
        spec = harness.replace(spec, dataset=data.name)
        rows = harness.run(spec, data)
        _write(rows, spec, {"N": data.N, "dx": data.dx, "dy": data.dy})
        return EXIT_OK
    except FileNotFoundError as err:
        print(f"distcca: {err}", file=sys.stderr)
        return EXIT_MISSING
    except (np.linalg.LinAlgError, ConvergenceError) as err:
        # LinAlgError derives from ValueError, so it has to be caught first.
        print(f"distcca: solver failed: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, IdxFormatError, DelimitedParseError) as err:
        print(f"distcca: {err}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
