"""Command-line entry point: ``rcvalley <subcommand> [options]``.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_spec, to_config_text
from .errors import PoleError, SingularSystemError, SolverDivergence, SpectralRadiusError
from .esn import ReservoirState, fit, load_checkpoint, one_step_errors, predict, save_model
from .metrics import (detect_valley, read_surface_csv, rmse_per_step, write_heatmap_pgm)
from .sweep import build_model, derive_seeds, generate_truth, run_sweep, write_results
from .targets.series import FieldSeries, read_series_csv, write_series_csv

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3
OUTPUT_ENV = "RCVALLEY_OUTPUT_DIR"
DEFAULT_OUTPUT = "rcvalley-out"
NUMERICAL_ERRORS = (SolverDivergence, SingularSystemError, SpectralRadiusError, PoleError,
                    FloatingPointError, np.linalg.LinAlgError)

log = logging.getLogger("rcvalley")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _outdir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spec(args):
    return load_spec(args.config, args.set or ())


def _truth(args, spec) -> FieldSeries:
    if getattr(args, "series", None):
        return read_series_csv(args.series)
    return generate_truth(spec.system, spec.n_samples)


def _write_rmse(trace, path) -> None:
    lyap = trace.lyapunov_max
    lines = ["step,time,lyapunov_time,rmse"]
    for k, (t, v) in enumerate(zip(trace.times, trace.rmse)):
        lt = f"{t * lyap:.17g}" if lyap else ""
        lines.append(f"{k + 1},{t:.17g},{lt},{v:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    spec = _spec(args)
    steps = spec.n_samples if args.steps is None else args.steps
    if steps < 1:
        raise UsageError("--steps must be at least 1")
    series = generate_truth(spec.system, steps)
    path = _outdir(args) / "truth.csv"
    write_series_csv(series, path)
    print(f"wrote {path}: channels={series.n_channels} steps={series.n_steps} "
          f"dt={series.dt!r} encoding={series.encoding.value} system={series.system_tag}")
    return EXIT_OK


def _rho_index(spec, rho: float) -> int:
    grid = np.asarray(spec.rho_grid)
    hits = np.flatnonzero(np.isclose(grid, rho, rtol=1e-12, atol=0.0))
    return int(hits[0]) if len(hits) else 0


def cmd_train(args) -> int:
    spec = _spec(args)
    truth = _truth(args, spec)
    if truth.n_steps < spec.train_steps + 1:
        raise UsageError(f"series has {truth.n_steps} samples; training needs "
                         f"{spec.train_steps + 1}")
    rho_index = _rho_index(spec, args.rho)
    seeds = derive_seeds(spec.master_seed, rho_index, args.realization)
    model = build_model(spec, args.rho, seeds)
    train = truth.segment(0, spec.train_steps + 1)
    fitted = fit(model, train)
    errors = one_step_errors(fitted.model, train)[spec.esn.transient_steps:]
    e_train = float(np.mean(errors))
    meta = {"train_steps": spec.train_steps, "rho": args.rho, "rho_index": rho_index,
            "realization": args.realization, "seeds": [str(s) for s in seeds],
            "training_error": e_train, "system": truth.system_tag,
            "encoding": truth.encoding.value, "dt": truth.dt,
            "lyapunov_max": spec.system.lyapunov_max}
    path = _outdir(args) / "model.npz"
    save_model(fitted.model, path, fitted.final_state, meta)
    print(f"wrote {path}: n={spec.esn.n} rho={args.rho!r} training_error={e_train:.6g}")
    return EXIT_OK


def cmd_predict(args) -> int:
    spec = _spec(args)
    model, saved_state, meta = load_checkpoint(args.model)
    if not model.trained:
        raise UsageError(f"{args.model} holds an untrained model")
    truth = _truth(args, spec)
    if truth.n_channels != model.hyper.input_dim:
        raise UsageError(f"series has {truth.n_channels} channels, model expects "
                         f"{model.hyper.input_dim}")
    horizon = spec.horizon if args.horizon is None else args.horizon
    if horizon < 0:
        raise UsageError("--horizon must be >= 0")
    mode = args.start or spec.start_mode
    train_steps = int(meta.get("train_steps", spec.train_steps))
    at = train_steps if args.at is None else args.at
    if at + horizon > truth.n_steps:
        raise UsageError(f"series has {truth.n_steps} samples; prediction window needs "
                         f"{at + horizon}")
    out = _outdir(args)

    warmup_rmse = None
    if mode == "warm":
        if saved_state is None:
            raise UsageError("model file has no saved state; use --start cold")
        if at != train_steps:
            raise UsageError(f"warm start continues from sample {train_steps}; "
                             "use --start cold for other offsets")
        pred = predict(model, None, saved_state, horizon, template=truth)
    else:
        w = spec.warmup_steps if args.warmup_steps is None else args.warmup_steps
        if not 0 < w <= at:
            raise UsageError(f"need 0 < warmup steps <= {at}")
        warm = truth.segment(at - w, at)
        pred = predict(model, warm, ReservoirState.zeros(model.hyper.n), horizon,
                       template=truth)
        # warmup output k is the one-step estimate of sample at - w + k + 1
        ref = truth.data[:, at - w + 1:at + 1]
        diff = pred.warmup_outputs[:, :ref.shape[1]] - ref
        warmup_rmse = np.sqrt(np.mean(diff * diff, axis=0))
        np.savetxt(out / "warmup_rmse.csv", warmup_rmse, fmt="%.17g",
                   header="rmse", comments="")

    window = truth.segment(at, at + horizon)
    done = pred.series.n_steps
    scored = window.segment(0, done)
    trace = rmse_per_step(scored, pred.series, spec.system.lyapunov_max)
    write_series_csv(pred.series, out / "prediction.csv")
    write_series_csv(scored, out / "truth_window.csv")
    write_series_csv(scored.with_data(scored.data - pred.series.data), out / "difference.csv")
    _write_rmse(trace, out / "rmse.csv")

    summary = f"predicted {done}/{horizon} steps from sample {at} ({mode} start)"
    if warmup_rmse is not None:
        summary += f"; warmup RMSE mean={np.mean(warmup_rmse):.6g}"
    if done:
        summary += (f"; prediction RMSE first={trace.rmse[0]:.6g} last={trace.rmse[-1]:.6g}"
                    f"; valid steps (RMSE<0.5)={trace.valid_steps(0.5)}")
    print(summary)
    if pred.diverged_at is not None:
        log.warning("closed loop produced non-finite output at step %d", pred.diverged_at)
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _spec(args)
    total = len(spec.rho_grid) * spec.ensemble_size
    done = 0

    def progress(rec):
        nonlocal done
        done += 1
        log.info("[%d/%d] rho=%g j=%d %s", done, total, rec.rho, rec.realization_index,
                 "ok" if rec.ok else rec.failure)

    result = run_sweep(spec, workers=args.workers, progress=progress)
    out = _outdir(args)
    write_results(result, out, to_config_text(spec))
    print(f"wrote {out}: {total} runs, {result.n_failed} failed")
    if result.surface.n_steps:
        v = result.valley()
        span = "empty" if v.empty else f"[{v.rho_lo:.6g}, {v.rho_hi:.6g}]"
        print(f"valley (threshold {v.threshold}): {span}, best rho={v.best_rho:.6g}")
    return EXIT_OK


def _surface_path(args) -> Path:
    return Path(args.surface) if args.surface else _outdir(args) / "surface.csv"


def cmd_valley(args) -> int:
    surface_path = _surface_path(args)
    if not surface_path.is_file():
        raise UsageError(f"surface file not found: {surface_path}")
    surface = read_surface_csv(surface_path)
    threshold, horizon = args.threshold, args.horizon_steps
    if args.config:
        spec = _spec(args)
        threshold = spec.valley_threshold if threshold is None else threshold
        horizon = spec.valley_horizon if horizon is None else horizon
    threshold = 0.5 if threshold is None else threshold
    report = detect_valley(surface, threshold, horizon)
    path = _outdir(args) / "valley.txt"
    path.write_text(report.to_text())
    span = "empty" if report.empty else f"[{report.rho_lo:.6g}, {report.rho_hi:.6g}]"
    print(f"wrote {path}: valley {span}, best rho={report.best_rho:.6g}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    surface_path = _surface_path(args)
    if not surface_path.is_file():
        raise UsageError(f"surface file not found: {surface_path}")
    if args.cutoff <= 0:
        raise UsageError("--cutoff must be positive")
    surface = read_surface_csv(surface_path)
    path = _outdir(args) / "surface.pgm"
    write_heatmap_pgm(surface, path, args.cutoff)
    print(f"wrote {path}: {surface.n_steps}x{len(surface.rho_grid)} pixels, "
          f"cutoff={args.cutoff}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import CHECKS, run_checks

    names = args.check or list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UsageError(f"unknown checks {unknown}; available: {', '.join(CHECKS)}")
    results = run_checks(names, nlse_variant=args.nlse_variant,
                         report=lambda r: print(r.line(), flush=True))
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rcvalley", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True):
        if config:
            p.add_argument("-c", "--config", help="INI experiment file")
            p.add_argument("-s", "--set", action="append", metavar="SECTION.KEY=VALUE",
                           help="override a config value (repeatable)")
        p.add_argument("-o", "--out", help=f"output directory (default ${OUTPUT_ENV} "
                                           f"or ./{DEFAULT_OUTPUT})")

    p = sub.add_parser("gen", help="generate a truth series")
    common(p)
    p.add_argument("--steps", type=int, help="samples to write (default train + horizon)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one reservoir and save it")
    common(p)
    p.add_argument("--series", help="truth CSV (default: generate from the config)")
    p.add_argument("--rho", type=float, required=True, help="spectral radius")
    p.add_argument("--realization", type=int, default=0,
                   help="realization index for seed derivation (default 0)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="closed-loop prediction from a saved model")
    common(p)
    p.add_argument("--model", required=True, help="model.npz written by train")
    p.add_argument("--series", help="truth CSV (default: generate from the config)")
    p.add_argument("--horizon", type=int, help="steps to predict (default sweep.horizon)")
    p.add_argument("--start", choices=("warm", "cold"), help="default sweep.start_mode")
    p.add_argument("--warmup-steps", type=int, help="cold-start spin-up length")
    p.add_argument("--at", type=int, help="index of the first predicted sample "
                                          "(cold start only; default: end of training)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="ensemble sweep over the rho grid")
    common(p)
    p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("valley", help="detect the valley interval in a surface.csv")
    common(p)
    p.add_argument("--surface", help="surface CSV (default: <out>/surface.csv)")
    p.add_argument("--threshold", type=float, help="default: config valley_threshold, else 0.5")
    p.add_argument("--horizon-steps", type=int,
                   help="steps averaged into each rho score (default: config, else all)")
    p.set_defaults(func=cmd_valley)

    p = sub.add_parser("heatmap", help="render a surface.csv as an 8-bit PGM")
    common(p, config=False)
    p.add_argument("--surface", help="surface CSV (default: <out>/surface.csv)")
    p.add_argument("--cutoff", type=float, default=3.0, help="RMSE mapped to white")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("verify", help="run the fast self-check suite")
    p.add_argument("--check", action="append", help="run only this check (repeatable)")
    p.add_argument("--nlse-variant", default="standard",
                   help="breather formula variant to test (fault injection)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "sweep" and args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (UsageError, ConfigError, FileNotFoundError) as exc:
        print(f"rcvalley {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL_ERRORS as exc:
        print(f"rcvalley {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"rcvalley {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
