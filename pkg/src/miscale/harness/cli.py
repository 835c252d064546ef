"""Command-line entry point.

Examples
--------
    miscale gmrf curve --family uniform --q -1.27712e-3 --Ls 1-26 --out runs/uniform
    miscale estimate --shape 6x6 --q -0.2 --Ls 1-3 --samples 10000 --trials 2 --out runs/est
    miscale fit-gauss --data train-images-idx3-ubyte,t10k-images-idx3-ubyte --out runs/mnist
    miscale plot curve runs/uniform/curve.csv --svg both.svg --series analytic --overlay
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..dataio import load_idx_images, load_matrix, rescale_unit, save_matrix
from ..exceptions import ConfigError, FormatError, MiScaleError
from ..gmrf import check_diagonal_dominance, fit_gmrf
from ..linalg import log_det
from .config import KINDS, resolve_config
from .plots import plot_covariance_row, plot_curve, render_samples
from .run import build_model, gmrf_samples, run

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_IO = 0, 2, 3, 4

# flag dest -> config key
_FLAG_KEYS = {
    "kind": "kind", "family": "family", "q": "q", "shape": "shape", "Ls": "Ls", "samples": "n_samples",
    "trials": "trials", "readout": "readout", "seed": "seed", "family_seed": "family_seed", "out": "out",
    "threads": "threads", "data": "data", "data_format": "data_format", "source_shape": "source_shape",
    "channels": "channels", "crop": "crop", "max_rows": "max_rows", "ridge": "ridge", "bins": "n_bins",
}
_TRAIN_KEYS = {
    "hidden": "hidden_sizes", "activation": "activation", "lr": "learning_rate", "batch_size": "batch_size",
    "epochs": "max_epochs", "patience": "patience", "validation_fraction": "validation_fraction",
    "dv_pair_budget": "dv_pair_budget",
}


def _int_list(s):
    return [int(v) for v in s.split(",") if v.strip()]


def _add_model_flags(p):
    p.add_argument("--family", choices=("nearest_neighbor", "uniform", "random_sparse"))
    p.add_argument("--q", type=float, help="off-diagonal coupling")
    p.add_argument("--shape", help="grid as HxW, e.g. 28x28")
    p.add_argument("--family-seed", type=int, help="permutation seed of the random_sparse family")


def _add_common_flags(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="run seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="side lengths estimated concurrently")
    p.add_argument("--print-config", action="store_true", help="print the resolved config and exit")


def _add_run_flags(p, kind_flag=False):
    _add_common_flags(p)
    _add_model_flags(p)
    if kind_flag:
        p.add_argument("--kind", choices=KINDS)
    p.add_argument("--Ls", help="side lengths: '1-26', '2,4,6'")
    p.add_argument("--samples", type=int, help="GMRF sample count")
    p.add_argument("--trials", type=int)
    p.add_argument("--readout", choices=("direct", "dv"))
    p.add_argument("--data", help="IDX image file(s), comma-separated, or a MISM/CSV matrix")
    p.add_argument("--data-format", choices=("idx", "matrix"))
    p.add_argument("--source-shape", help="pixel grid of raw matrix rows")
    p.add_argument("--channels", type=int, choices=(1, 3))
    p.add_argument("--crop", help="centre-crop target HxW")
    p.add_argument("--max-rows", type=int, help="random subset of data rows (0 = all)")
    p.add_argument("--ridge", type=float)
    p.add_argument("--bins", type=int)
    p.add_argument("--no-plot", action="store_true", help="skip curve.svg")
    g = p.add_argument_group("training")
    g.add_argument("--hidden", type=_int_list, help="hidden layer widths, e.g. 512,512")
    g.add_argument("--activation", choices=("relu", "tanh"))
    g.add_argument("--lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--validation-fraction", type=float)
    g.add_argument("--dv-pair-budget", type=int)
    g.add_argument("--resample-marginals", action="store_true", default=None)


def _overrides(args):
    out = {key: getattr(args, dest) for dest, key in _FLAG_KEYS.items() if getattr(args, dest, None) is not None}
    train = {key: getattr(args, dest) for dest, key in _TRAIN_KEYS.items() if getattr(args, dest, None) is not None}
    if getattr(args, "resample_marginals", None):
        train["resample_marginals"] = True
    if train:
        out["train"] = train
    if getattr(args, "no_plot", False):
        out["plot"] = False
    return out


def _resolve(args, kind=None):
    overrides = _overrides(args)
    if kind == "estimate":
        probe = resolve_config(args.config, {**overrides, "kind": "gmrf_estimate"})
        overrides["kind"] = "data_estimate" if probe.data else "gmrf_estimate"
    elif kind is not None:
        overrides["kind"] = kind
    return resolve_config(args.config, overrides)


def cmd_run(args, kind=None):
    cfg = _resolve(args, kind)
    if args.print_config:
        sys.stdout.write(cfg.to_json())
        return EXIT_OK
    result = run(cfg)
    for row in result.curve.rows():
        L, mean, std, n, readout, flags = row
        print(f"L={L:3d}  {readout:>12s}  {mean:.6f} +- {std:.6f}  n={n}" + (f"  [{flags}]" if flags else ""))
    print(f"wrote {', '.join(str(p) for p in result.artifacts)}")
    return EXIT_OK


def cmd_gmrf_build(args):
    cfg = _resolve(args, "gmrf_analytic")
    if args.print_config:
        sys.stdout.write(cfg.to_json())
        return EXIT_OK
    model = build_model(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(model.precision, out / "precision.csv", "csv")
    save_matrix(model.covariance, out / "covariance.csv", "csv")
    info = {
        "family": cfg.family, "q": cfg.q, "shape": cfg.shape, "family_seed": cfg.family_seed,
        "n": model.n, "diagonally_dominant": check_diagonal_dominance(model.precision),
        "log_det_covariance": log_det(model.covariance),
    }
    (out / "model.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out / 'precision.csv'}, {out / 'covariance.csv'}, {out / 'model.json'}")
    return EXIT_OK


def cmd_gmrf_sample(args):
    cfg = _resolve(args, "gmrf_analytic")
    if args.print_config:
        sys.stdout.write(cfg.to_json())
        return EXIT_OK
    X = gmrf_samples(cfg)
    path = Path(args.file)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(X, path)
    print(f"wrote {X.shape[0]}x{X.shape[1]} samples to {path}")
    return EXIT_OK


def _load_rows(path, fmt):
    if fmt == "idx":
        return rescale_unit(load_idx_images(path)).images
    return np.asarray(load_matrix(path), dtype=np.float64)


def cmd_plot_curve(args):
    svg = args.svg or str(Path(args.csv).with_suffix(".svg"))
    series = plot_curve(args.csv, svg, band=not args.no_band, series=args.series, overlay=args.overlay)
    print(f"wrote {svg} ({len(series)} series)")
    return EXIT_OK


def cmd_plot_cov(args):
    cfg = _resolve(args, "gmrf_analytic")
    if args.data:
        cov = fit_gmrf(_load_rows(args.data, args.data_format), ridge=cfg.ridge).covariance
    else:
        cov = build_model(cfg).covariance
    grid = cfg.grid
    pivot = args.pivot if args.pivot is not None else (grid.height // 2) * grid.width + grid.width // 2
    plot_covariance_row(cov, grid, pivot, args.file)
    print(f"wrote {args.file}")
    return EXIT_OK


def cmd_plot_samples(args):
    cfg = _resolve(args, "gmrf_analytic")
    if args.data:
        X = _load_rows(args.data, args.data_format)[: args.count]
    else:
        X = gmrf_samples(replace(cfg, n_samples=args.count))
    render_samples(X, cfg.grid, args.file)
    print(f"wrote {args.file}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="miscale", description="Mutual-information scaling experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    gmrf = sub.add_parser("gmrf", help="GMRF construction, sampling and analytic curves")
    gsub = gmrf.add_subparsers(dest="action", required=True)
    p = gsub.add_parser("build", help="write precision and covariance matrices")
    _add_common_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_gmrf_build)
    p = gsub.add_parser("sample", help="draw samples to a MISM (.bin) or CSV file")
    _add_common_flags(p)
    _add_model_flags(p)
    p.add_argument("--samples", type=int)
    p.add_argument("file")
    p.set_defaults(func=cmd_gmrf_sample)
    p = gsub.add_parser("curve", help="analytic MI curve")
    _add_run_flags(p)
    p.set_defaults(func=lambda a: cmd_run(a, "gmrf_analytic"))

    p = sub.add_parser("estimate", help="classifier MI curve on GMRF samples or --data")
    _add_run_flags(p)
    p.set_defaults(func=lambda a: cmd_run(a, "estimate"))
    p = sub.add_parser("curve", help="run any experiment kind from --config/--kind")
    _add_run_flags(p, kind_flag=True)
    p.set_defaults(func=lambda a: cmd_run(a, None))
    p = sub.add_parser("fit-gauss", help="Gaussian-fit MI curve")
    _add_run_flags(p)
    p.set_defaults(func=lambda a: cmd_run(a, "gaussian_fit"))
    p = sub.add_parser("entangle", help="discrete MI and empirical-state entanglement curve")
    _add_run_flags(p)
    p.set_defaults(func=lambda a: cmd_run(a, "entanglement"))

    plot = sub.add_parser("plot", help="figures")
    psub = plot.add_subparsers(dest="action", required=True)
    p = psub.add_parser("curve", help="SVG of a curve CSV")
    p.add_argument("csv")
    p.add_argument("--svg")
    p.add_argument("--series", help="legend name (default: readout tag)")
    p.add_argument("--no-band", action="store_true")
    p.add_argument("--overlay", action="store_true", help="keep series already in the SVG")
    p.set_defaults(func=cmd_plot_curve)
    for name, func, help_ in (("cov", cmd_plot_cov, "covariance row heat map"),
                              ("samples", cmd_plot_samples, "grid of sample tiles")):
        p = psub.add_parser(name, help=help_)
        _add_common_flags(p)
        _add_model_flags(p)
        p.add_argument("--data", help="fit or tile this IDX/matrix file instead of a GMRF")
        p.add_argument("--data-format", choices=("idx", "matrix"), default="matrix")
        p.add_argument("--ridge", type=float)
        p.add_argument("file", help="output .png or .svg")
        if name == "cov":
            p.add_argument("--pivot", type=int, help="flat pivot index (default: grid centre)")
        else:
            p.add_argument("--count", type=int, default=16)
        p.set_defaults(func=func)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MiScaleError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        print(f"compute error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
