"""Sampled fields and their encoding into real-valued input channels."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class Encoding(str, enum.Enum):
    MAGNITUDE = "magnitude"
    REAL_IMAG = "real_imag"
    REAL = "real"


@dataclass(frozen=True)
class SampledField:
    """Raw generator output: ``values[i, j]`` is the field at grid[i], times[j]."""

    values: np.ndarray
    grid: np.ndarray
    times: np.ndarray
    system_tag: str = ""

    @property
    def dt(self) -> float:
        if len(self.times) < 2:
            return float("nan")
        return float(self.times[1] - self.times[0])

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def encode(self, encoding: Encoding | str, dt: float | None = None) -> "FieldSeries":
        return encode(self.values, encoding, dt=self.dt if dt is None else dt,
                      grid=self.grid, system_tag=self.system_tag)


@dataclass(frozen=True)
class FieldSeries:
    """M-channel real time series, channel-major (shape M x T)."""

    data: np.ndarray
    dt: float
    grid: np.ndarray
    encoding: Encoding = Encoding.REAL
    system_tag: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D (channels x steps), got shape {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float))
        object.__setattr__(self, "encoding", Encoding(self.encoding))
        if not np.all(np.isfinite(data)):
            raise ValueError("field series contains non-finite values")
        if self.encoding is Encoding.REAL_IMAG and data.shape[0] % 2:
            raise ValueError("real/imag split needs an even channel count")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_steps(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n_steps

    def segment(self, start: int, stop: int | None = None) -> "FieldSeries":
        return FieldSeries(self.data[:, start:stop], self.dt, self.grid, self.encoding,
                           self.system_tag, dict(self.meta))

    def with_data(self, data: np.ndarray) -> "FieldSeries":
        return FieldSeries(data, self.dt, self.grid, self.encoding, self.system_tag,
                           dict(self.meta))

    def magnitude(self) -> np.ndarray:
        """|u| per grid point, undoing the real/imag split if needed."""
        if self.encoding is Encoding.REAL_IMAG:
            half = self.n_channels // 2
            return np.hypot(self.data[:half], self.data[half:])
        return np.abs(self.data)


def encode(values, encoding: Encoding | str, *, dt: float, grid=None,
           system_tag: str = "") -> FieldSeries:
    """Turn a (grid x time) real or complex field into input channels.

    MAGNITUDE gives |psi| per grid point, REAL_IMAG stacks real parts over
    imaginary parts (2 x grid channels), REAL passes a real field through.
    """
    values = np.asarray(values)
    encoding = Encoding(encoding)
    if grid is None:
        grid = np.arange(values.shape[0], dtype=float)
    if encoding is Encoding.MAGNITUDE:
        data = np.abs(values)
    elif encoding is Encoding.REAL_IMAG:
        if not np.iscomplexobj(values):
            raise ValueError("real/imag split requires a complex field")
        data = np.concatenate([values.real, values.imag], axis=0)
    else:
        if np.iscomplexobj(values):
            raise ValueError("real encoding requires a real field")
        data = values
    return FieldSeries(np.array(data, dtype=float), float(dt), grid, encoding, system_tag)


def write_series_csv(series: FieldSeries, path) -> None:
    """One row per time sample, 17 significant digits."""
    header = [
        f"# system={series.system_tag}",
        f"# encoding={series.encoding.value}",
        f"# dt={series.dt!r}",
        "# grid=" + ",".join(f"{g:.17g}" for g in series.grid),
    ]
    body = [",".join(f"{v:.17g}" for v in row) for row in series.data.T]
    Path(path).write_text("\n".join(header + body) + "\n")


def read_series_csv(path) -> FieldSeries:
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line.strip():
            rows.append([float(v) for v in line.split(",")])
    for key in ("encoding", "dt", "grid"):
        if key not in meta:
            raise ValueError(f"{path}: missing '# {key}=' header")
    grid = [float(g) for g in meta["grid"].split(",")] if meta["grid"] else []
    n_channels = len(rows[0]) if rows else (2 * len(grid) if meta["encoding"] == "real_imag"
                                            else len(grid))
    data = np.array(rows, dtype=float).reshape(-1, n_channels).T
    return FieldSeries(data, float(meta["dt"]), np.array(grid), Encoding(meta["encoding"]),
                       meta.get("system", ""))


def write_complex_field(sampled: SampledField, prefix) -> tuple[Path, Path]:
    """Export a complex field as ``<prefix>_re.csv`` and ``<prefix>_im.csv``."""
    prefix = Path(prefix)
    paths = (prefix.with_name(prefix.name + "_re.csv"),
             prefix.with_name(prefix.name + "_im.csv"))
    for part, path in zip((sampled.values.real, sampled.values.imag), paths):
        write_series_csv(FieldSeries(part, sampled.dt, sampled.grid, Encoding.REAL,
                                     sampled.system_tag), path)
    return paths
