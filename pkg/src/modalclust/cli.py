"""Command-line interface: ``modalclust <command> ...``.

Every command writes its output atomically (to ``--out`` or stdout), writes a
run manifest next to file outputs, and prints the manifest hash on stderr
as ``manifest <hash>``.  Exit codes: 0 success, 2 input error, 3 numerical
failure; errors are reported on stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from . import presets
from .cluster_tree_1d import build_tree, default_grid
from .density_models import KernelModel, NormalMixture, normal_reference_bandwidth, scalar_bandwidth
from .errors import InputError, ModalClustError, NumericalError, UnsupportedOperationError
from .harness import ExperimentConfig, run_consistency
from .io import (
    RunManifest,
    atomic_write,
    data_to_csv,
    load_data,
    load_json,
    load_mixture,
    load_partition,
    parse_grid_spec,
    partition_to_csv,
    write_json,
)
from .metrics import distance_report
from .mode_seek import ShiftConfig, find_modes, grid_carrier, partition_carrier

THREADS_ENV = "MODALCLUST_THREADS"

PRESETS = {
    "trimodal_1d": presets.trimodal_1d,
    "symmetric_bimodal_2d": presets.symmetric_bimodal_2d,
}

EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _report_error("usage", message, EXIT_INPUT)


def _report_error(kind: str, message: str, code: int):
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    raise SystemExit(code)


def _threads(args) -> int:
    if getattr(args, "jobs", None) is not None:
        return args.jobs
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return n if n != 0 else 1


def _emit(args, manifest: RunManifest, text: str) -> None:
    manifest.finish()
    if args.out:
        atomic_write(args.out, text)
        write_json(args.out + ".manifest.json", manifest.to_dict())
    else:
        sys.stdout.write(text)
    sys.stderr.write(f"manifest {manifest.hash}\n")


def _manifest(args, inputs) -> RunManifest:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("out", "func")}
    return RunManifest(args.command, [str(p) for p in inputs], config, args.seed, __version__)


def _json_text(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_modes(args) -> None:
    model = load_mixture(args.model)
    if (args.grid is None) == (args.starts is None):
        raise InputError("give exactly one of --grid or --starts")
    if args.grid is not None:
        axes = parse_grid_spec(args.grid)
        if len(axes) != model.dim:
            raise InputError(f"--grid has {len(axes)} axes, model dimension is {model.dim}")
        mesh = np.meshgrid(*axes, indexing="ij")
        starts = np.stack([g.ravel() for g in mesh], axis=1)
    else:
        starts = load_data(args.starts)
    modes = find_modes(model, starts, ShiftConfig(max_iter=args.max_iter))
    man = _manifest(args, [args.model] + ([args.starts] if args.starts else []))
    doc = {
        "manifest": man.hash,
        "modes": modes.to_list(),
        "other_critical": [c.to_dict() for c in modes.other_critical],
    }
    _emit(args, man, _json_text(doc))


def cmd_partition(args) -> None:
    model = load_mixture(args.model)
    if (args.grid is None) == (args.atoms is None):
        raise InputError("give exactly one of --grid or --atoms")
    if args.grid is not None:
        axes = parse_grid_spec(args.grid)
        if len(axes) != model.dim:
            raise InputError(f"--grid has {len(axes)} axes, model dimension is {model.dim}")
        atoms, weights = grid_carrier(model, axes)
        carrier = "grid"
    else:
        atoms, weights, carrier = load_data(args.atoms), None, "sample"
    part = partition_carrier(model, atoms, weights, ShiftConfig(max_iter=args.max_iter),
                             carrier=carrier, n_jobs=_threads(args))
    man = _manifest(args, [args.model] + ([args.atoms] if args.atoms else []))
    _emit(args, man, partition_to_csv(part, man.hash))


def cmd_distance(args) -> None:
    a = load_partition(args.a)
    b = load_partition(args.b)
    report = distance_report(a, b, args.metric)
    man = _manifest(args, [args.a, args.b])
    report = {"manifest": man.hash, "metric": args.metric, **report}
    _emit(args, man, _json_text(report))


def cmd_tree(args) -> None:
    model = load_mixture(args.model)
    if model.dim != 1:
        raise InputError(f"cluster trees need a 1-D model, got dimension {model.dim}")
    grid = default_grid(model, args.grid_size)
    tree = build_tree(model, grid)
    man = _manifest(args, [args.model])
    doc = {"manifest": man.hash, "split_points": tree.split_points, "tree": tree.to_dict()}
    if args.partition_out:
        atomic_write(args.partition_out, partition_to_csv(tree.partition(), man.hash))
    _emit(args, man, _json_text(doc))


def cmd_cluster(args) -> None:
    X = load_data(args.data)
    d = X.shape[1]
    if args.bandwidth_matrix is not None:
        H = np.atleast_2d(np.asarray(json.loads(args.bandwidth_matrix), dtype=float))
    elif args.h is not None:
        H = scalar_bandwidth(args.h, d)
    else:
        H = normal_reference_bandwidth(X)
    kde = KernelModel(X, H, args.kernel)
    part = partition_carrier(kde, X, None, ShiftConfig(max_iter=args.max_iter),
                             carrier="sample", n_jobs=_threads(args))
    man = _manifest(args, [args.data])
    _emit(args, man, partition_to_csv(part, man.hash))


def _experiment_config(doc: dict, args) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise InputError("experiment config must be a JSON object")
    if "truth" not in doc:
        raise InputError("experiment config lacks field 'truth'")
    truth = doc["truth"]
    if isinstance(truth, str):
        if truth not in PRESETS:
            raise InputError(f"field 'truth': unknown preset {truth!r}; known: {sorted(PRESETS)}")
        truth = PRESETS[truth]()
    else:
        truth = NormalMixture.from_dict(truth)
    known = {"truth", "sizes", "replicates", "bandwidth_rule", "h", "bandwidth", "estimate",
             "seed", "density_grid", "n_jobs", "max_iter"}
    unknown = set(doc) - known
    if unknown:
        raise InputError(f"experiment config has unknown fields {sorted(unknown)}")
    kwargs = {k: doc[k] for k in ("sizes", "replicates", "bandwidth_rule", "h", "density_grid") if k in doc}
    if "bandwidth" in doc:
        kwargs["bandwidth"] = np.asarray(doc["bandwidth"], dtype=float)
    if doc.get("estimate") is not None:
        kwargs["estimate"] = NormalMixture.from_dict(doc["estimate"])
    if "max_iter" in doc:
        kwargs["shift"] = ShiftConfig(max_iter=int(doc["max_iter"]))
    kwargs["seed"] = args.seed if args.seed is not None else int(doc.get("seed", 0))
    kwargs["n_jobs"] = args.jobs if args.jobs is not None else int(doc.get("n_jobs", _threads(args)))
    return ExperimentConfig(truth=truth, **kwargs)


def cmd_experiment(args) -> None:
    config = _experiment_config(load_json(args.config), args)
    result = run_consistency(config)
    man = _manifest(args, [args.config])
    man.config["resolved"] = config.metadata()
    summary = {"manifest": man.hash, **result.summary()}
    csv_text = f"# manifest={man.hash}\n" + result.to_csv()
    if args.out:
        atomic_write(args.out + ".summary.json", _json_text(summary))
    else:
        sys.stderr.write(_json_text(summary))
    _emit(args, man, csv_text)


def cmd_sample(args) -> None:
    model = load_mixture(args.model)
    if args.n < 1:
        raise InputError("--n must be positive")
    X = model.sample(args.n, np.random.default_rng(args.seed))
    man = _manifest(args, [args.model])
    _emit(args, man, data_to_csv(X, man.hash))


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="modalclust", description="Modal clustering of densities and samples.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="random seed (recorded in the manifest)")
        p.add_argument("--out", default=None, help="output file (default: stdout)")

    def ascent(p):
        p.add_argument("--max-iter", type=int, default=10_000, help="iteration cap per ascent")
        p.add_argument("--jobs", type=int, default=None,
                       help=f"worker processes (default: ${THREADS_ENV} or 1; -1 = all cores)")

    p = sub.add_parser("modes", help="find the modes of a mixture")
    p.add_argument("model", help="mixture JSON")
    p.add_argument("--grid", help="starting grid 'lo:hi:steps,...', one axis per dimension")
    p.add_argument("--starts", help="headerless CSV of starting points")
    ascent(p)
    common(p)
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("partition", help="modal partition of a grid or point carrier")
    p.add_argument("model", help="mixture JSON")
    p.add_argument("--grid", help="grid carrier 'lo:hi:steps,...' (density-weighted atoms)")
    p.add_argument("--atoms", help="headerless CSV of atoms (uniform weights)")
    ascent(p)
    common(p)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("distance", help="distance between two partitions on one carrier")
    p.add_argument("a", help="partition CSV")
    p.add_argument("b", help="partition CSV")
    p.add_argument("--metric", default="dP", help="dP, dH, dinf or dp:<p> (default dP)")
    common(p)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("tree", help="cluster tree of a univariate mixture")
    p.add_argument("model", help="1-D mixture JSON")
    p.add_argument("--grid-size", type=int, default=4096)
    p.add_argument("--partition-out", help="also write the leaf partition CSV here")
    common(p)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("cluster", help="cluster data points by mean shift on a Gaussian KDE")
    p.add_argument("data", help="headerless data CSV")
    bw = p.add_mutually_exclusive_group()
    bw.add_argument("--h", type=float, help="scalar bandwidth (H = h^2 I)")
    bw.add_argument("--bandwidth-matrix", help="bandwidth matrix as JSON, e.g. '[[0.4,0],[0,0.4]]'")
    p.add_argument("--kernel", default="gaussian", help="kernel profile (default gaussian)")
    ascent(p)
    common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("experiment", help="seeded consistency experiment")
    p.add_argument("config", help="experiment config JSON")
    p.add_argument("--jobs", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("sample", help="draw a sample from a mixture")
    p.add_argument("model", help="mixture JSON")
    p.add_argument("--n", type=int, required=True)
    common(p)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InputError, UnsupportedOperationError) as exc:
        _report_error(type(exc).__name__, str(exc), EXIT_INPUT)
    except OSError as exc:
        _report_error(type(exc).__name__, str(exc), EXIT_INPUT)
    except NumericalError as exc:
        _report_error(type(exc).__name__, str(exc), EXIT_NUMERICAL)
    except ModalClustError as exc:  # pragma: no cover - every subclass is mapped above
        _report_error(type(exc).__name__, str(exc), EXIT_INPUT)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
