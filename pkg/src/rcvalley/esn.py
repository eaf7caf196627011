"""Echo state network: state update, ridge readout, open and closed loop.

Conventions used throughout:

* ``r(t+1) = tanh(W_res r(t) + W_IR u(t))`` with ``r(0) = 0``.
* Column ``t`` of a state matrix is the normalized state after consuming
  input ``u(t)``; its training target is ``u(t+1)``.
* Normalization squares the components at even 1-based positions
  (0-based indices 1, 3, 5, ...).
* In closed loop the readout of the current state is recorded as the
  prediction of the next sample and fed back as the next input.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import SingularSystemError
from .targets.series import Encoding, FieldSeries
from .topology import ReservoirNetwork, TopologyKind, TopologySpec

# Column block size for state generation and Gram accumulation. Fixed so that
# streamed and in-memory training sum in exactly the same order.
CHUNK = 2048


@dataclass(frozen=True)
class EsnHyperParams:
    n: int
    input_dim: int = 64
    output_dim: int | None = None
    input_scale: float = 1.0
    transient_steps: int = 10
    ridge: float = 1e-4
    dt: float = 1.0

    def __post_init__(self):
        if self.output_dim is None:
            object.__setattr__(self, "output_dim", self.input_dim)
        if self.n < 1 or self.input_dim < 1:
            raise ValueError("n and input_dim must be positive")
        if self.n % self.input_dim:
            raise ValueError(
                f"reservoir size {self.n} is not divisible by input_dim {self.input_dim}")
        if self.output_dim != self.input_dim:
            raise ValueError("output_dim must equal input_dim (outputs are fed back)")
        if self.ridge < 0 or self.transient_steps < 0:
            raise ValueError("ridge and transient_steps must be nonnegative")


@dataclass(frozen=True)
class InputMap:
    """n x M input matrix with exactly one nonzero per row.

    Rows come in M contiguous blocks of n/M; block j reads channel j.
    """

    weights: sp.csr_matrix
    seed: int = 0

    @property
    def channels(self) -> np.ndarray:
        return self.weights.indices

    @property
    def values(self) -> np.ndarray:
        return self.weights.data

    def drive(self, u: np.ndarray) -> np.ndarray:
        """W_IR @ u for a vector or a (M x T) block of inputs."""
        if u.ndim == 1:
            return self.values * u[self.channels]
        return self.values[:, None] * u[self.channels, :]


def make_input_map(n: int, input_dim: int, input_scale: float, seed: int) -> InputMap:
    if n % input_dim:
        raise ValueError(f"n={n} not divisible by input_dim={input_dim}")
    rng = np.random.default_rng(seed)
    per_block = n // input_dim
    channels = np.repeat(np.arange(input_dim), per_block)
    values = rng.uniform(-input_scale, input_scale, size=n)
    weights = sp.csr_matrix((values, channels, np.arange(n + 1)), shape=(n, input_dim))
    return InputMap(weights, seed)


@dataclass(frozen=True)
class ReservoirState:
    r: np.ndarray
    step_index: int = 0

    @classmethod
    def zeros(cls, n: int) -> "ReservoirState":
        return cls(np.zeros(n), 0)


@dataclass(frozen=True)
class EsnModel:
    hyper: EsnHyperParams
    input_map: InputMap
    reservoir: ReservoirNetwork
    readout: np.ndarray | None = None

    def __post_init__(self):
        n = self.hyper.n
        if self.input_map.weights.shape != (n, self.hyper.input_dim):
            raise ValueError("input map shape does not match hyperparameters")
        if self.reservoir.weights.shape != (n, n):
            raise ValueError("reservoir shape does not match hyperparameters")
        if self.readout is not None and self.readout.shape != (self.hyper.output_dim, n):
            raise ValueError(f"readout must be {(self.hyper.output_dim, n)}, "
                             f"got {self.readout.shape}")

    @property
    def trained(self) -> bool:
        return self.readout is not None

    def with_readout(self, readout: np.ndarray) -> "EsnModel":
        return EsnModel(self.hyper, self.input_map, self.reservoir, np.asarray(readout))


def normalize_state(r: np.ndarray) -> np.ndarray:
    """Square the components at even 1-based positions; works on vectors and
    on state matrices (positions run along axis 0)."""
    out = np.array(r, dtype=float, copy=True)
    out[1::2] **= 2
    return out


def step(model: EsnModel, state: ReservoirState, u) -> ReservoirState:
    u = np.asarray(u, dtype=float)
    if u.shape != (model.hyper.input_dim,):
        raise ValueError(f"input must have shape ({model.hyper.input_dim},), got {u.shape}")
    if state.r.shape != (model.hyper.n,):
        raise ValueError("state dimension does not match the reservoir")
    r = np.tanh(model.reservoir.weights @ state.r + model.input_map.drive(u))
    return ReservoirState(r, state.step_index + 1)


def _check_series(model: EsnModel, series: FieldSeries):
    if series.n_channels != model.hyper.input_dim:
        raise ValueError(f"series has {series.n_channels} channels, "
                         f"model expects {model.hyper.input_dim}")
    if series.n_steps == 0:
        raise ValueError("empty series")


def iter_state_chunks(model: EsnModel, inputs: np.ndarray, initial: ReservoirState):
    """Drive the reservoir open loop; yield (first column, normalized chunk, state).

    ``state`` is the raw reservoir state after the last column of the chunk.
    """
    w_res = model.reservoir.weights
    r = initial.r.copy()
    index = initial.step_index
    n_steps = inputs.shape[1]
    for start in range(0, n_steps, CHUNK):
        stop = min(start + CHUNK, n_steps)
        drive = model.input_map.drive(inputs[:, start:stop])
        block = np.empty((model.hyper.n, stop - start))
        for c in range(stop - start):
            r = np.tanh(w_res @ r + drive[:, c])
            block[:, c] = r
        index += stop - start
        block[1::2] **= 2
        yield start, block, ReservoirState(r.copy(), index)


@dataclass
class ListenResult:
    states: np.ndarray
    final_state: ReservoirState
    first_step: int


def listen(model: EsnModel, series: FieldSeries, initial: ReservoirState | None = None
           ) -> ListenResult:
    """Open-loop drive over every column of ``series``; returns n x T normalized states."""
    _check_series(model, series)
    initial = initial or ReservoirState.zeros(model.hyper.n)
    states = np.empty((model.hyper.n, series.n_steps))
    final = initial
    for start, block, final in iter_state_chunks(model, series.data, initial):
        states[:, start:start + block.shape[1]] = block
    return ListenResult(states, final, initial.step_index)


class _GramAccumulator:
    def __init__(self, n: int, n_out: int):
        self.gram = np.zeros((n, n))
        self.cross = np.zeros((n, n_out))
        self.count = 0

    def add(self, states: np.ndarray, targets: np.ndarray):
        self.gram += states @ states.T
        self.cross += states @ targets.T
        self.count += states.shape[1]

    def solve(self, ridge: float) -> np.ndarray:
        if self.count == 0:
            raise ValueError("no training columns left after discarding transients")
        system = self.gram.copy()
        system[np.diag_indices_from(system)] += ridge
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                solution = scipy.linalg.solve(system, self.cross, assume_a="pos",
                                              check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
            raise SingularSystemError(
                f"ridge system is numerically singular (ridge={ridge}): {exc}") from exc
        return solution.T


def _chunk_bounds(total: int, discard: int):
    for start in range(0, total, CHUNK):
        lo = max(start, discard)
        hi = min(start + CHUNK, total)
        if lo < hi:
            yield lo, hi


def train_readout(states: np.ndarray, targets: np.ndarray, ridge: float,
                  discard: int = 0) -> np.ndarray:
    """Ridge readout ``W = V R'^T (R' R'^T + ridge I)^-1`` after dropping ``discard`` columns.

    Solved as a symmetric positive-definite system, never by explicit inverse.
    """
    states = np.asarray(states, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if states.shape[1] != targets.shape[1]:
        raise ValueError("states and targets must have the same number of columns")
    if states.shape[1] <= discard:
        raise ValueError(f"need more than {discard} columns, got {states.shape[1]}")
    acc = _GramAccumulator(states.shape[0], targets.shape[0])
    for lo, hi in _chunk_bounds(states.shape[1], discard):
        acc.add(states[:, lo:hi], targets[:, lo:hi])
    return acc.solve(ridge)


@dataclass
class FitResult:
    model: EsnModel
    final_state: ReservoirState
    n_columns: int


def fit(model: EsnModel, series: FieldSeries, initial: ReservoirState | None = None
        ) -> FitResult:
    """Train the readout on one-step-ahead pairs of ``series`` without storing states.

    Inputs are columns 0..T-2, targets columns 1..T-1; the first
    ``transient_steps`` state columns are discarded. Gives the same readout as
    ``train_readout(listen(...).states[:, :-1], data[:, 1:], ...)``.
    """
    _check_series(model, series)
    if series.n_steps - 1 <= model.hyper.transient_steps:
        raise ValueError("training series is not longer than the transient")
    initial = initial or ReservoirState.zeros(model.hyper.n)
    inputs = series.data[:, :-1]
    targets = series.data[:, 1:]
    discard = model.hyper.transient_steps
    acc = _GramAccumulator(model.hyper.n, model.hyper.output_dim)
    final = initial
    for start, block, final in iter_state_chunks(model, inputs, initial):
        stop = start + block.shape[1]
        for lo, hi in _chunk_bounds(stop, discard):
            if lo >= start:
                acc.add(block[:, lo - start:hi - start], targets[:, lo:hi])
    trained = model.with_readout(acc.solve(model.hyper.ridge))
    return FitResult(trained, final, inputs.shape[1])


def one_step_errors(model: EsnModel, series: FieldSeries,
                    initial: ReservoirState | None = None) -> np.ndarray:
    """Per-step RMSE of teacher-forced one-step outputs over ``series``.

    Entry t compares W_RO r'(t) against column t+1; transients are not dropped.
    """
    if not model.trained:
        raise ValueError("model has no readout")
    _check_series(model, series)
    initial = initial or ReservoirState.zeros(model.hyper.n)
    inputs = series.data[:, :-1]
    targets = series.data[:, 1:]
    out = np.empty(inputs.shape[1])
    for start, block, _ in iter_state_chunks(model, inputs, initial):
        stop = start + block.shape[1]
        diff = model.readout @ block - targets[:, start:stop]
        out[start:stop] = np.sqrt(np.mean(diff ** 2, axis=0))
    return out


@dataclass
class Prediction:
    series: FieldSeries
    final_state: ReservoirState
    diverged_at: int | None = None
    warmup_outputs: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def predict(model: EsnModel, warmup: FieldSeries | None, start_state: ReservoirState,
            horizon: int, template: FieldSeries | None = None) -> Prediction:
    """Closed-loop forecast of ``horizon`` samples.

    Warm start: pass the final training state and ``warmup=None``. Cold
    start: pass a zero state and a true-data ``warmup`` segment that spins the
    reservoir up open loop first. Prediction k estimates the sample that
    follows the last consumed input by k+1 steps. Non-finite output stops the
    loop and sets ``diverged_at``.
    """
    if not model.trained:
        raise ValueError("model has no readout; train it first")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    state = start_state
    warmup_outputs = None
    if warmup is not None:
        _check_series(model, warmup)
        warmup_outputs = np.empty((model.hyper.output_dim, warmup.n_steps))
        for start, block, state in iter_state_chunks(model, warmup.data, state):
            warmup_outputs[:, start:start + block.shape[1]] = model.readout @ block

    w_res = model.reservoir.weights
    w_out = model.readout
    drive = model.input_map.drive
    r = state.r.copy()
    out = np.empty((model.hyper.output_dim, horizon))
    diverged_at = None
    done = 0
    # overflow is how divergence shows up; it is detected below, not warned about
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(horizon):
            rn = r.copy()
            rn[1::2] **= 2
            o = w_out @ rn
            if not np.all(np.isfinite(o)):
                diverged_at = k
                break
            out[:, k] = o
            done = k + 1
            if k + 1 < horizon:
                r = np.tanh(w_res @ r + drive(o))
    final = ReservoirState(r, state.step_index + max(done - 1, 0))
    if template is not None:
        series = FieldSeries(out[:, :done], template.dt, template.grid,
                             template.encoding, template.system_tag + "|prediction")
    else:
        series = FieldSeries(out[:, :done], model.hyper.dt,
                             np.arange(model.hyper.output_dim, dtype=float), Encoding.REAL,
                             "prediction")
    return Prediction(series, final, diverged_at, warmup_outputs)


# ---------------------------------------------------------------------------
# serialization

def save_model(model: EsnModel, path, state: ReservoirState | None = None,
               meta: dict | None = None) -> None:
    """Write a model to a single ``.npz`` container (IEEE-754 exact arrays).

    Keys: ``hyper`` and ``topology`` (JSON strings), ``input_seed``,
    ``input_channels``/``input_values`` (one nonzero per row),
    ``res_data``/``res_indices``/``res_indptr`` (CSR of W_res), ``rho``,
    and ``readout`` (L x n, absent if untrained). An optional reservoir
    ``state`` (raw, unnormalized) and JSON ``meta`` can ride along.
    """
    res = model.reservoir.weights.tocsr()
    spec = model.reservoir.spec
    arrays = {
        "hyper": np.array(json.dumps(asdict(model.hyper))),
        "topology": np.array(json.dumps(
            None if spec is None else {**asdict(spec), "kind": spec.kind.value})),
        "input_seed": np.array(model.input_map.seed, dtype=np.uint64),
        "input_channels": model.input_map.channels.astype(np.int64),
        "input_values": model.input_map.values,
        "res_data": res.data,
        "res_indices": res.indices.astype(np.int64),
        "res_indptr": res.indptr.astype(np.int64),
        "rho": np.array(model.reservoir.spectral_radius),
    }
    if model.readout is not None:
        arrays["readout"] = model.readout
    if state is not None:
        arrays["state"] = state.r
        arrays["state_step"] = np.array(state.step_index, dtype=np.int64)
    arrays["meta"] = np.array(json.dumps(meta or {}))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> EsnModel:
    return load_checkpoint(path)[0]


def load_checkpoint(path) -> tuple[EsnModel, ReservoirState | None, dict]:
    """Model plus the saved reservoir state (or None) and metadata."""
    with np.load(Path(path), allow_pickle=False) as z:
        hyper = EsnHyperParams(**json.loads(str(z["hyper"])))
        topo = json.loads(str(z["topology"]))
        spec = None if topo is None else TopologySpec(**{**topo, "kind": TopologyKind(topo["kind"])})
        n = hyper.n
        w_in = sp.csr_matrix((z["input_values"], z["input_channels"], np.arange(n + 1)),
                             shape=(n, hyper.input_dim))
        w_res = sp.csr_matrix((z["res_data"], z["res_indices"], z["res_indptr"]), shape=(n, n))
        readout = z["readout"] if "readout" in z.files else None
        state = None
        if "state" in z.files:
            state = ReservoirState(np.array(z["state"]), int(z["state_step"]))
        meta = json.loads(str(z["meta"])) if "meta" in z.files else {}
        model = EsnModel(hyper, InputMap(w_in, int(z["input_seed"])),
                         ReservoirNetwork(w_res, float(z["rho"]), spec), readout)
        return model, state, meta
