"""Command line: ``pfr <command> [--config FILE] [overrides]``.

Exit status is 0 on success, 2 for invalid input (configuration, arguments or
files) and 1 for runtime failures such as a singular system.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import experiments as ex
from .errors import ConfigError, InvalidArgumentError, ParseError
from .funcdata import read_curves
from .plotting import PlotSpec, read_table, render_png, render_svg
from .simulate import make_dataset, read_responses, write_dataset
from .solver import KernelSpectrum, fit_iterated, fit_tikhonov_reduced, save_model

log = logging.getLogger("pfr")

COMMANDS = ("simulate", "fit", "error-curve", "recovery", "diagnostics", "plot")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfr", description="Polynomial functional regression experiments.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--lambda", dest="lam", type=float, help="use a single regularization parameter")
    parser.add_argument("--n-max", type=int, help="largest sample size")
    parser.add_argument("--seed", type=int, help="run a single seed")
    parser.add_argument("--q", type=int, help="iterated Tikhonov steps")
    parser.add_argument("--p", type=int, help="polynomial order")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--timing", action="store_true", default=None, help="record wall-clock times")
    parser.add_argument("--curves", help="fit: curves CSV instead of simulated data")
    parser.add_argument("--responses", help="fit: responses CSV matching --curves")
    parser.add_argument("--table", help="plot: CSV table to draw")
    parser.add_argument("--y", default=None, help="plot: column for the y-axis")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _out(cfg, name):
    os.makedirs(cfg.out_dir, exist_ok=True)
    return os.path.join(cfg.out_dir, name)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _figures(cfg, rows, spec, stem):
    written = []
    if "svg" in cfg.formats:
        written.append(_out(cfg, stem + ".svg"))
        render_svg(rows, spec, written[-1])
    if "png" in cfg.formats:
        written.append(render_png(rows, spec, _out(cfg, stem + ".png")))
    return written


def cmd_simulate(cfg, args):
    ds = make_dataset(cfg.process, cfg.truth, cfg.noise, cfg.n_max, cfg.seeds[0])
    paths = write_dataset(cfg.out_dir, ds)
    return {"N": len(ds), "seed": ds.seed, "files": list(paths)}


def cmd_fit(cfg, args):
    if (args.curves is None) != (args.responses is None):
        raise ConfigError("--curves and --responses must be given together", ["curves", "responses"])
    if args.curves:
        curves = read_curves(args.curves)
        y = read_responses(args.responses)
        seed = None
    else:
        ds = make_dataset(cfg.process, cfg.truth, cfg.noise, cfg.n_max, cfg.seeds[0])
        curves, y, seed = ds.curves, ds.responses, ds.seed
    filt = cfg.filters[0]
    if cfg.path == "spectral":
        report = KernelSpectrum(curves, cfg.p).fit(filt, y)
    elif filt.scheme == "tikhonov":
        report = fit_tikhonov_reduced(curves, y, filt.lam, cfg.p)
    else:
        report = fit_iterated(curves, y, filt.lam, cfg.p, filt.iterations)
    path = _out(cfg, "model.json")
    with open(path, "wb") as fh:
        fh.write(save_model(report.model))
    summary = {"N": len(curves), "p": cfg.p, "filter": filt.to_dict(), "path": report.path,
               "b0": report.model.b0, "residual_norm": report.residual_norm, "model": path}
    if seed is not None:
        summary["seed"] = seed
        summary["l2_error"] = ex.l2_error(report.model, cfg.truth, cfg.error_method)
    return summary


def cmd_error_curve(cfg, args):
    rows = ex.run_error_curve(cfg)
    means = ex.mean_table(rows)
    files = []
    if "csv" in cfg.formats:
        files.append(_out(cfg, "error_curve.csv"))
        ex.write_table(files[-1], rows, ex.ERROR_CURVE_COLUMNS)
        files.append(_out(cfg, "error_curve_mean.csv"))
        ex.write_table(files[-1], means, ex.MEAN_COLUMNS)
    files += _figures(cfg, rows, PlotSpec(y="l2_error", title="L2 error against sample size"), "error_curve")
    final = [m for m in means if m["N"] == cfg.n_max]
    return {"rows": len(rows), "files": files,
            "final": {f"{m['lambda']:g}": m["mean_l2_error"] for m in final}}


def cmd_recovery(cfg, args):
    report = ex.run_recovery_check(cfg)
    path = _out(cfg, "recovery.json")
    _write_json(path, report)
    return {
        "file": path,
        "first_passing_N": {str(s["seed"]): s["first_passing_N"] for s in report["seeds"]},
        "linear_comparison_passed": {str(s["seed"]): s["linear_comparison"]["passed"] for s in report["seeds"]},
    }


def cmd_diagnostics(cfg, args):
    report = ex.run_diagnostics(cfg)
    path = _out(cfg, "diagnostics.json")
    _write_json(path, report)
    return {"file": path,
            "lambda_star": {str(s["seed"]): s["lambda_star"] for s in report["seeds"]}}


def cmd_plot(cfg, args):
    table = args.table or os.path.join(cfg.out_dir, "error_curve.csv")
    if not os.path.exists(table):
        raise ConfigError(f"table {table} not found", ["table"])
    rows = read_table(table)
    y = args.y or ("l2_error" if rows and "l2_error" in rows[0] else "mean_l2_error")
    stem = os.path.splitext(os.path.basename(table))[0]
    return {"files": _figures(cfg, rows, PlotSpec(y=y), stem)}


HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "error-curve": cmd_error_curve,
    "recovery": cmd_recovery,
    "diagnostics": cmd_diagnostics,
    "plot": cmd_plot,
}


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ex.load_config(args.config)
        cfg = ex.apply_overrides(cfg, lam=args.lam, n_max=args.n_max, seed=args.seed, q=args.q,
                                 p=args.p, out=args.out, timing=args.timing)
        summary = HANDLERS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"pfr: configuration error: {exc}", file=sys.stderr)
        return 2
    except (InvalidArgumentError, ParseError) as exc:
        print(f"pfr: invalid input: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"pfr: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"pfr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, default=_jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
