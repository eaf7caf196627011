"""Ensemble sweeps over the reservoir spectral radius."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .esn import (EsnHyperParams, EsnModel, ReservoirState, fit, make_input_map,
                  one_step_errors, predict)
from .metrics import (ErrorSurface, ErrorTrace, detect_valley, divergence_cap,
                      ensemble_stats, rmse_per_step, write_heatmap_pgm,
                      write_surface_csv)
from .targets.nlse import NlseParams, akhmediev_breather, soliton_collision
from .targets.series import Encoding, FieldSeries
from .targets.spectral import CglParams, KseParams, solve_cgle, solve_kse
from .topology import (TopologySpec, assign_weights, build_reservoir, generate_topology,
                       scale_to_spectral_radius)

log = logging.getLogger(__name__)

SYSTEM_KINDS = ("ab", "km", "collision", "kse", "cgle")
DEFAULT_ENCODING = {"ab": Encoding.MAGNITUDE, "km": Encoding.MAGNITUDE,
                    "collision": Encoding.MAGNITUDE, "kse": Encoding.REAL,
                    "cgle": Encoding.REAL_IMAG}

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class SystemSpec:
    kind: str
    params: NlseParams | KseParams | CglParams
    encoding: Encoding | None = None
    t0: float = 0.0

    def __post_init__(self):
        if self.kind not in SYSTEM_KINDS:
            raise ValueError(f"unknown system {self.kind!r}; choose from {SYSTEM_KINDS}")
        expected = {"kse": KseParams, "cgle": CglParams}.get(self.kind, NlseParams)
        if not isinstance(self.params, expected):
            raise TypeError(f"{self.kind} needs {expected.__name__}")
        enc = DEFAULT_ENCODING[self.kind] if self.encoding is None else Encoding(self.encoding)
        if enc is Encoding.REAL and self.kind != "kse":
            raise ValueError("real encoding only applies to the KSE")
        if enc is not Encoding.REAL and self.kind == "kse":
            raise ValueError("the KSE field is real; use the real encoding")
        object.__setattr__(self, "encoding", enc)

    @property
    def dt(self) -> float:
        if self.kind == "cgle":
            return self.params.sample_dt
        return self.params.dt

    @property
    def lyapunov_max(self) -> float | None:
        return getattr(self.params, "lyapunov_max", None)

    @property
    def n_channels(self) -> int:
        n = self.params.x_points
        return 2 * n if self.encoding is Encoding.REAL_IMAG else n


def generate_truth(system: SystemSpec, n_samples: int) -> FieldSeries:
    if n_samples < 1:
        raise ValueError("need at least one sample")
    p = system.params
    if system.kind in ("ab", "km"):
        sampled = akhmediev_breather(p, n_samples, system.t0)
    elif system.kind == "collision":
        sampled = soliton_collision(p, n_samples, system.t0)
    elif system.kind == "kse":
        sampled = solve_kse(p, n_samples)
    else:
        sampled = solve_cgle(p, n_samples)
    return sampled.encode(system.encoding, dt=system.dt)


@dataclass(frozen=True)
class SweepSpec:
    system: SystemSpec
    esn: EsnHyperParams
    topology: TopologySpec
    rho_grid: tuple
    ensemble_size: int = 100
    train_steps: int = 8010
    horizon: int = 1600
    start_mode: str = "warm"
    warmup_steps: int = 100
    master_seed: int = 0
    valley_threshold: float = 0.5
    valley_horizon: int | None = None
    heatmap_cutoff: float = 3.0

    def __post_init__(self):
        grid = tuple(float(r) for r in self.rho_grid)
        object.__setattr__(self, "rho_grid", grid)
        if not grid:
            raise ValueError("rho_grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("rho_grid must be strictly ascending")
        if grid[0] < 0:
            raise ValueError("rho values must be nonnegative")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.train_steps <= self.esn.transient_steps:
            raise ValueError("train_steps must exceed the transient")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.start_mode not in ("warm", "cold"):
            raise ValueError("start_mode must be 'warm' or 'cold'")
        if self.start_mode == "cold" and not 0 < self.warmup_steps <= self.train_steps:
            raise ValueError("cold start needs 0 < warmup_steps <= train_steps")
        if self.esn.input_dim != self.system.n_channels:
            raise ValueError(f"esn.input_dim={self.esn.input_dim} but the system has "
                             f"{self.system.n_channels} channels")
        if self.topology.n != self.esn.n:
            raise ValueError("topology size differs from reservoir size")

    @property
    def n_samples(self) -> int:
        return self.train_steps + max(self.horizon, 1)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def derive_seeds_array(master_seed, rho_index, realization_index) -> np.ndarray:
    """Vectorized seed derivation; returns an array of shape (..., 4) of uint64.

    The tuple is absorbed one component at a time through splitmix64, then
    four outputs are squeezed with distinct counters.
    """
    m = np.asarray(master_seed, dtype=np.uint64) & np.uint64(_MASK64)
    r = np.asarray(rho_index, dtype=np.uint64)
    j = np.asarray(realization_index, dtype=np.uint64)
    state = _splitmix64(m)
    state = _splitmix64(state ^ r)
    state = _splitmix64(state ^ j)
    counters = [np.uint64((k * 0x632BE59BD9B4E019) & _MASK64) for k in (1, 2, 3, 4)]
    outs = [_splitmix64(state ^ c) for c in counters]
    return np.stack(np.broadcast_arrays(*outs), axis=-1)


def derive_seeds(master_seed: int, rho_index: int, realization_index: int
                 ) -> tuple[int, int, int, int]:
    """(topology_seed, weight_seed, input_seed, init_seed) for one sweep cell.

    ``init_seed`` is reserved for randomized initial states; the default zero
    initial state does not consume it.
    """
    out = derive_seeds_array(master_seed, rho_index, realization_index)
    return tuple(int(v) for v in out)


@dataclass
class RunRecord:
    rho: float
    rho_index: int
    realization_index: int
    seeds: tuple
    trace: ErrorTrace | None
    training_error: float
    wall_time: float
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    def same_result(self, other: "RunRecord") -> bool:
        """Bitwise equality of everything except wall time."""
        if (self.rho, self.rho_index, self.realization_index, self.seeds, self.failure) != (
                other.rho, other.rho_index, other.realization_index, other.seeds,
                other.failure):
            return False
        if (self.trace is None) != (other.trace is None):
            return False
        same_err = (self.training_error == other.training_error
                    or (np.isnan(self.training_error) and np.isnan(other.training_error)))
        if self.trace is None:
            return same_err
        return (same_err and self.trace.diverged_at == other.trace.diverged_at
                and np.array_equal(self.trace.rmse, other.trace.rmse))


def build_model(spec: SweepSpec, rho: float, seeds) -> EsnModel:
    topo_seed, weight_seed, input_seed, _ = seeds
    topo = replace(spec.topology, seed=topo_seed)
    reservoir = build_reservoir(topo, rho, weight_seed)
    w_in = make_input_map(spec.esn.n, spec.esn.input_dim, spec.esn.input_scale, input_seed)
    return EsnModel(spec.esn, w_in, reservoir)


def _train_predict(spec: SweepSpec, model: EsnModel, truth: FieldSeries):
    train = truth.segment(0, spec.train_steps + 1)
    fitted = fit(model, train)
    trained = fitted.model
    e_train = float(np.mean(one_step_errors(trained, train)[spec.esn.transient_steps:]))
    if spec.start_mode == "warm":
        pred = predict(trained, None, fitted.final_state, spec.horizon, template=truth)
    else:
        warm = truth.segment(spec.train_steps - spec.warmup_steps, spec.train_steps)
        pred = predict(trained, warm, ReservoirState.zeros(spec.esn.n), spec.horizon,
                       template=truth)
    return trained, pred, e_train


def _prediction_window(spec: SweepSpec, truth: FieldSeries) -> FieldSeries:
    return truth.segment(spec.train_steps, spec.train_steps + spec.horizon)


def run_single(spec: SweepSpec, rho_index: int, realization_index: int,
               truth: FieldSeries | None = None) -> RunRecord:
    """One (rho, realization) cell: build, train, predict, score.

    Failures are captured in the record rather than raised.
    """
    rho = spec.rho_grid[rho_index]
    seeds = derive_seeds(spec.master_seed, rho_index, realization_index)
    started = time.perf_counter()
    try:
        if truth is None:
            truth = generate_truth(spec.system, spec.n_samples)
        model = build_model(spec, rho, seeds)
        _, pred, e_train = _train_predict(spec, model, truth)
        window = _prediction_window(spec, truth)
        done = pred.series.n_steps
        trace = rmse_per_step(window.segment(0, done), pred.series, spec.system.lyapunov_max)
        trace.diverged_at = pred.diverged_at
        failure = None
    except Exception as exc:  # recorded, excluded from statistics
        log.warning("run rho=%g j=%d failed: %s", rho, realization_index, exc)
        trace, e_train, failure = None, float("nan"), f"{type(exc).__name__}: {exc}"
    return RunRecord(rho, rho_index, realization_index, seeds, trace, e_train,
                     time.perf_counter() - started, failure)


_WORKER_STATE = {}


def _worker_init(spec, truth):
    _WORKER_STATE["spec"] = spec
    _WORKER_STATE["truth"] = truth


def _worker_run(key):
    return run_single(_WORKER_STATE["spec"], key[0], key[1], _WORKER_STATE["truth"])


@dataclass
class SweepResult:
    spec: SweepSpec
    surface: ErrorSurface
    records: list
    truth: FieldSeries = field(repr=False)

    @property
    def n_failed(self) -> int:
        return sum(not r.ok for r in self.records)

    def valley(self, threshold: float | None = None, horizon_steps: int | None = None):
        threshold = self.spec.valley_threshold if threshold is None else threshold
        horizon = horizon_steps or self.spec.valley_horizon or self.surface.n_steps
        return detect_valley(self.surface, threshold, min(horizon, self.surface.n_steps))

    def records_at(self, rho_index: int) -> list:
        return [r for r in self.records if r.rho_index == rho_index]


def aggregate(spec: SweepSpec, records, truth: FieldSeries) -> ErrorSurface:
    window = _prediction_window(spec, truth)
    cap = divergence_cap(window) if window.n_steps else 0.0
    n_rho = len(spec.rho_grid)
    mean = np.zeros((n_rho, spec.horizon))
    std = np.zeros((n_rho, spec.horizon))
    counts = np.zeros(n_rho, dtype=int)
    failed = np.zeros(n_rho, dtype=int)
    for i in range(n_rho):
        ok = [r.trace for r in records if r.rho_index == i and r.ok]
        failed[i] = sum(1 for r in records if r.rho_index == i and not r.ok)
        counts[i] = len(ok)
        if ok and spec.horizon:
            mean[i], std[i] = ensemble_stats(ok, cap, spec.horizon)
        elif not ok:
            mean[i] = np.nan
            std[i] = np.nan
    return ErrorSurface(np.array(spec.rho_grid), mean, std, counts, spec.system.dt,
                        spec.system.lyapunov_max, failed)


def run_sweep(spec: SweepSpec, workers: int = 1, truth: FieldSeries | None = None,
              progress=None) -> SweepResult:
    """Every (rho, realization) cell, aggregated into an error surface.

    The truth series is generated once and shared. Records are merged in
    (rho_index, realization) order, so results do not depend on ``workers``.
    """
    if truth is None:
        truth = generate_truth(spec.system, spec.n_samples)
    keys = [(i, j) for i in range(len(spec.rho_grid)) for j in range(spec.ensemble_size)]
    records = []
    if workers <= 1:
        for key in keys:
            records.append(run_single(spec, key[0], key[1], truth))
            if progress:
                progress(records[-1])
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(spec, truth)) as pool:
            for rec in pool.map(_worker_run, keys, chunksize=max(1, len(keys) // (4 * workers))):
                records.append(rec)
                if progress:
                    progress(rec)
    records.sort(key=lambda r: (r.rho_index, r.realization_index))
    return SweepResult(spec, aggregate(spec, records, truth), records, truth)


def training_error_curve(spec: SweepSpec, rho_values, realization_index: int = 0,
                         truth: FieldSeries | None = None) -> np.ndarray:
    """Time-averaged one-step training error for one fixed network rescaled to each rho.

    Topology, edge weights and input map are drawn once (seeds of cell
    (0, realization_index)); only the overall weight scale changes.
    """
    if truth is None:
        truth = generate_truth(spec.system, spec.n_samples)
    topo_seed, weight_seed, input_seed, _ = derive_seeds(spec.master_seed, 0,
                                                         realization_index)
    topo = replace(spec.topology, seed=topo_seed)
    base = assign_weights(generate_topology(topo), weight_seed)
    w_in = make_input_map(spec.esn.n, spec.esn.input_dim, spec.esn.input_scale, input_seed)
    train = truth.segment(0, spec.train_steps + 1)
    errors = []
    for rho in rho_values:
        model = EsnModel(spec.esn, w_in, scale_to_spectral_radius(base, rho, topo))
        trained = fit(model, train).model
        errs = one_step_errors(trained, train)[spec.esn.transient_steps:]
        errors.append(float(np.mean(errs)))
    return np.array(errors)


def write_results(result: SweepResult, outdir, config_text: str = "") -> None:
    """surface.csv, valley.txt, surface.pgm, runs/<rho>/<j>.csv and manifest.txt."""
    from pathlib import Path

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_surface_csv(result.surface, out / "surface.csv")
    if result.surface.n_steps:
        (out / "valley.txt").write_text(result.valley().to_text())
        write_heatmap_pgm(result.surface, out / "surface.pgm", result.spec.heatmap_cutoff)
    for rec in result.records:
        run_dir = out / "runs" / f"{rec.rho:.6g}"
        run_dir.mkdir(parents=True, exist_ok=True)
        lines = [f"# rho={rec.rho!r}", f"# realization={rec.realization_index}",
                 "# seeds=" + ",".join(str(s) for s in rec.seeds),
                 f"# training_error={rec.training_error!r}",
                 f"# wall_time={rec.wall_time:.6f}"]
        if rec.failure:
            lines.append(f"# failure={rec.failure}")
        else:
            if rec.trace.diverged_at is not None:
                lines.append(f"# diverged_at={rec.trace.diverged_at}")
            lines.append("step,time,rmse")
            lines += [f"{k + 1},{t:.17g},{v:.17g}"
                      for k, (t, v) in enumerate(zip(rec.trace.times, rec.trace.rmse))]
        (run_dir / f"{rec.realization_index}.csv").write_text("\n".join(lines) + "\n")
    failures = [r for r in result.records if not r.ok]
    # INI throughout so the manifest can be passed back as --config
    manifest = [
        "[manifest]",
        f"rcvalley_version = {__version__}",
        f"runs = {len(result.records)}",
        f"failed_runs = {len(failures)}",
        f"total_wall_time = {sum(r.wall_time for r in result.records):.3f}",
    ]
    manifest += [f"failure_{k} = rho={r.rho!r} j={r.realization_index}: {r.failure}"
                 for k, r in enumerate(failures)]
    manifest += ["", config_text]
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
