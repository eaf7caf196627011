"""Prediction-error traces, ensemble statistics and valley detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .esn import EsnModel
from .targets.series import FieldSeries

DIVERGENCE_CAP_FACTOR = 10.0


@dataclass
class ErrorTrace:
    rmse: np.ndarray
    dt: float
    lyapunov_max: float | None = None
    diverged_at: int | None = None

    def __post_init__(self):
        self.rmse = np.asarray(self.rmse, dtype=float)
        if np.any(self.rmse < 0):
            raise ValueError("rmse entries must be nonnegative")

    def __len__(self):
        return len(self.rmse)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, len(self.rmse) + 1)

    def valid_steps(self, threshold: float = 0.5) -> int:
        """Number of leading steps whose error stays below ``threshold``."""
        above = np.flatnonzero(~(self.rmse < threshold))
        return int(above[0]) if len(above) else len(self.rmse)

    def valid_time(self, threshold: float = 0.5, lyapunov: bool = True) -> float:
        t = self.valid_steps(threshold) * self.dt
        if lyapunov and self.lyapunov_max:
            t *= self.lyapunov_max
        return t


def rmse_per_step(truth: FieldSeries, pred: FieldSeries,
                  lyapunov_max: float | None = None) -> ErrorTrace:
    """``rmse[t] = sqrt(mean_i (truth[i, t] - pred[i, t])**2)``."""
    if truth.data.shape != pred.data.shape:
        raise ValueError(f"shape mismatch: {truth.data.shape} vs {pred.data.shape}")
    if truth.encoding != pred.encoding:
        raise ValueError("truth and prediction use different encodings")
    if not math.isclose(truth.dt, pred.dt, rel_tol=1e-12):
        raise ValueError(f"dt mismatch: {truth.dt} vs {pred.dt}")
    diff = truth.data - pred.data
    return ErrorTrace(np.sqrt(np.mean(diff * diff, axis=0)), truth.dt, lyapunov_max)


def divergence_cap(truth: FieldSeries) -> float:
    """Sentinel error used after divergence: 10x the RMS amplitude of the truth."""
    return DIVERGENCE_CAP_FACTOR * float(np.sqrt(np.mean(truth.data ** 2)))


def ensemble_stats(traces, cap: float | None = None,
                   length: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise mean and population standard deviation across realizations.

    Traces shorter than ``length`` (default: the longest trace) are padded
    with ``cap``, and entries from ``diverged_at`` on are replaced by ``cap``.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to aggregate")
    length = max(len(t) for t in traces) if length is None else length
    rows = np.empty((len(traces), length))
    for i, tr in enumerate(traces):
        if len(tr) < length or tr.diverged_at is not None:
            if cap is None:
                raise ValueError("diverged or short traces need a divergence cap")
            row = np.full(length, cap)
            stop = len(tr) if tr.diverged_at is None else min(len(tr), tr.diverged_at)
            row[:stop] = tr.rmse[:stop]
            rows[i] = row
        else:
            rows[i] = tr.rmse
    return rows.mean(axis=0), rows.std(axis=0)


def training_error(model: EsnModel, states: np.ndarray, targets: np.ndarray) -> float:
    """Time average of the per-step RMSE of ``W_RO r'(t) - v(t)``."""
    if not model.trained:
        raise ValueError("model has no readout")
    diff = model.readout @ states - targets
    return float(np.mean(np.sqrt(np.mean(diff * diff, axis=0))))


@dataclass
class ErrorSurface:
    rho_grid: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    ensemble_size: np.ndarray
    dt: float
    lyapunov_max: float | None = None
    n_failed: np.ndarray | None = None

    def __post_init__(self):
        self.rho_grid = np.asarray(self.rho_grid, dtype=float)
        self.mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        self.std = np.atleast_2d(np.asarray(self.std, dtype=float))
        self.ensemble_size = np.broadcast_to(
            np.asarray(self.ensemble_size, dtype=int), self.rho_grid.shape).copy()
        if self.n_failed is None:
            self.n_failed = np.zeros(len(self.rho_grid), dtype=int)
        if self.mean.shape != self.std.shape or self.mean.shape[0] != len(self.rho_grid):
            raise ValueError("mean/std rows must align with rho_grid")
        if np.any(np.diff(self.rho_grid) <= 0):
            raise ValueError("rho_grid must be strictly ascending")

    @property
    def n_steps(self) -> int:
        return self.mean.shape[1]


@dataclass
class ValleyReport:
    rho_lo: float | None
    rho_hi: float | None
    threshold: float
    horizon_steps: int
    best_rho: float
    scores: np.ndarray = field(repr=False)
    rho_grid: np.ndarray = field(repr=False)

    @property
    def empty(self) -> bool:
        return self.rho_lo is None

    @property
    def width(self) -> float:
        return 0.0 if self.empty else self.rho_hi - self.rho_lo

    def to_text(self) -> str:
        def fmt(v):
            return "none" if v is None else f"{v!r}"
        lines = [
            f"rho_lo={fmt(self.rho_lo)}",
            f"rho_hi={fmt(self.rho_hi)}",
            f"best_rho={self.best_rho!r}",
            f"threshold={self.threshold!r}",
            f"horizon_steps={self.horizon_steps}",
            "rho_grid=" + ",".join(f"{r:.17g}" for r in self.rho_grid),
            "scores=" + ",".join(f"{s:.17g}" for s in self.scores),
        ]
        return "\n".join(lines) + "\n"


def detect_valley(surface: ErrorSurface, threshold: float = 0.5,
                  horizon_steps: int | None = None) -> ValleyReport:
    """Maximal contiguous rho range around the best rho whose score stays under ``threshold``.

    The score of a rho row is its mean error over the first ``horizon_steps``.
    """
    horizon = surface.n_steps if horizon_steps is None else int(horizon_steps)
    if not 1 <= horizon <= surface.n_steps:
        raise ValueError(f"horizon_steps must be in [1, {surface.n_steps}]")
    scores = surface.mean[:, :horizon].mean(axis=1)
    # rows where every run failed are NaN and never join the valley
    ranked = np.where(np.isnan(scores), np.inf, scores)
    best = int(np.argmin(ranked))
    rho = surface.rho_grid
    if not ranked[best] <= threshold:
        return ValleyReport(None, None, threshold, horizon, float(rho[best]), scores, rho)
    lo = best
    while lo > 0 and ranked[lo - 1] <= threshold:
        lo -= 1
    hi = best
    while hi < len(scores) - 1 and ranked[hi + 1] <= threshold:
        hi += 1
    return ValleyReport(float(rho[lo]), float(rho[hi]), threshold, horizon,
                        float(rho[best]), scores, rho)


# ---------------------------------------------------------------------------
# file formats

def write_surface_csv(surface: ErrorSurface, path) -> None:
    """Columns ``rho,step,time,lyapunov_time,mean_rmse,std_rmse``; step is 1-based."""
    lines = ["rho,step,time,lyapunov_time,mean_rmse,std_rmse"]
    lyap = surface.lyapunov_max
    for i, rho in enumerate(surface.rho_grid):
        for s in range(surface.n_steps):
            t = (s + 1) * surface.dt
            lt = f"{t * lyap:.17g}" if lyap else ""
            lines.append(f"{rho:.17g},{s + 1},{t:.17g},{lt},"
                         f"{surface.mean[i, s]:.17g},{surface.std[i, s]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_surface_csv(path, ensemble_size=0) -> ErrorSurface:
    rows = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    rows = np.atleast_1d(rows)
    rho_grid = np.unique(rows["rho"])
    n_steps = int(rows["step"].max())
    mean = np.zeros((len(rho_grid), n_steps))
    std = np.zeros_like(mean)
    idx = np.searchsorted(rho_grid, rows["rho"])
    mean[idx, rows["step"].astype(int) - 1] = rows["mean_rmse"]
    std[idx, rows["step"].astype(int) - 1] = rows["std_rmse"]
    first = rows[rows["step"] == 1]
    dt = float(first["time"][0])
    lt = first["lyapunov_time"][0]
    lyap = None if np.isnan(lt) else float(lt) / dt
    return ErrorSurface(rho_grid, mean, std, ensemble_size, dt, lyap)


def surface_to_gray(values: np.ndarray, cutoff: float = 3.0) -> np.ndarray:
    """Linear map: 0 -> 0 (black), ``cutoff`` and above -> 255 (white)."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    clipped = np.clip(np.nan_to_num(values, nan=cutoff), 0.0, cutoff)
    return np.rint(255.0 * clipped / cutoff).astype(np.uint8)


def write_heatmap_pgm(surface: ErrorSurface, path, cutoff: float = 3.0) -> None:
    """Plain (P2) graymap of mean RMSE: columns are steps, rows are rho with
    the largest rho on the first (top) row."""
    gray = surface_to_gray(surface.mean, cutoff)[::-1]
    h, w = gray.shape
    lines = ["P2", f"# mean RMSE, linear gray, cutoff={cutoff!r}, top row rho="
             f"{surface.rho_grid[-1]!r}", f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in gray]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if tokens[0] != "P2":
        raise ValueError("not a plain PGM file")
    w, h, _ = (int(v) for v in tokens[1:4])
    return np.array(tokens[4:4 + w * h], dtype=np.uint8).reshape(h, w)
