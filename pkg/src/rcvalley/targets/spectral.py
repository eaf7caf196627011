"""Pseudo-spectral ETDRK4 integration of the KSE and the 1D CGLE.

Both equations are integrated on periodic domains in Fourier space. The
fourth-order exponential time differencing Runge-Kutta scheme of Cox and
Matthews is used, with its phi-function coefficients evaluated by contour
averaging (Kassam and Trefethen) to avoid cancellation for small |L h|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SolverDivergence
from .series import SampledField

CONTOUR_POINTS = 64


class Etdrk4:
    """ETDRK4 stepper for ``v' = L v + N(v)`` with diagonal ``L``.

    ``linear`` holds the Fourier symbol, ``nonlinear`` maps spectral state to
    the spectral nonlinear term.
    """

    def __init__(self, linear, nonlinear, h: float):
        self.h = float(h)
        self.nonlinear = nonlinear
        lin = np.asarray(linear)
        real_symbol = not np.iscomplexobj(lin)
        lh = self.h * lin.astype(complex)
        self.e = np.exp(lh)
        self.e2 = np.exp(lh / 2)

        roots = np.exp(2j * np.pi * (np.arange(1, CONTOUR_POINTS + 1) - 0.5) / CONTOUR_POINTS)
        lr = lh[:, None] + roots[None, :]
        exp_lr = np.exp(lr)
        q = self.h * np.mean((np.exp(lr / 2) - 1) / lr, axis=1)
        f1 = self.h * np.mean((-4 - lr + exp_lr * (4 - 3 * lr + lr ** 2)) / lr ** 3, axis=1)
        f2 = self.h * np.mean((2 + lr + exp_lr * (lr - 2)) / lr ** 3, axis=1)
        f3 = self.h * np.mean((-4 - 3 * lr - lr ** 2 + exp_lr * (4 - lr)) / lr ** 3, axis=1)
        if real_symbol:
            self.e, self.e2 = self.e.real, self.e2.real
            q, f1, f2, f3 = q.real, f1.real, f2.real, f3.real
        self.q, self.f1, self.f2, self.f3 = q, f1, f2, f3

    def step(self, v):
        nl = self.nonlinear
        nv = nl(v)
        a = self.e2 * v + self.q * nv
        na = nl(a)
        b = self.e2 * v + self.q * na
        nb = nl(b)
        c = self.e2 * a + self.q * (2 * nb - nv)
        nc = nl(c)
        return self.e * v + self.f1 * nv + 2 * self.f2 * (na + nb) + self.f3 * nc

    def advance(self, v, n_steps: int, step_offset: int = 0):
        for i in range(n_steps):
            with np.errstate(over="ignore", invalid="ignore"):
                v = self.step(v)
            if not np.all(np.isfinite(v)):
                raise SolverDivergence(
                    f"non-finite field at integration step {step_offset + i + 1}; "
                    "time step too large?", step=step_offset + i + 1)
        return v


def _dealias_mask(modes: np.ndarray, n: int) -> np.ndarray:
    return (np.abs(modes) < n / 3).astype(float)


# ---------------------------------------------------------------------------
# Kuramoto-Sivashinsky

@dataclass(frozen=True)
class KseParams:
    domain_length: float = 22.0
    x_points: int = 64
    dt: float = 0.25
    lyapunov_max: float = 0.05
    seed: int = 0
    substeps: int = 10
    transient: float = 2000.0
    init_modes: int = 8
    init_amplitude: float = 0.1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        n = self.x_points
        if n < 4 or n & (n - 1):
            raise ValueError("x_points must be a power of two")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def h(self) -> float:
        return self.dt / self.substeps

    def grid(self) -> np.ndarray:
        return np.arange(self.x_points) * self.domain_length / self.x_points


class KseModel:
    """u_t = -u u_x - u_xx - u_xxxx on a periodic domain (real FFT)."""

    def __init__(self, domain_length: float, n: int, h: float, dealias: bool = True):
        self.n = n
        m = np.arange(n // 2 + 1)
        q = 2 * np.pi * m / domain_length
        self.linear = q ** 2 - q ** 4
        qd = q.copy()
        qd[-1] = 0.0  # odd derivative drops the Nyquist mode
        self._grad = -0.5j * qd
        self._mask = _dealias_mask(m, n) if dealias else np.ones_like(q)
        self.stepper = Etdrk4(self.linear, self._nonlinear, h)

    def _nonlinear(self, v):
        u = np.fft.irfft(v * self._mask, n=self.n)
        return self._mask * self._grad * np.fft.rfft(u * u)

    def to_spectral(self, u):
        return np.fft.rfft(u)

    def to_physical(self, v):
        return np.fft.irfft(v, n=self.n)


def kse_initial_condition(params: KseParams) -> np.ndarray:
    rng = np.random.default_rng(params.seed)
    x = params.grid()
    m = np.arange(1, params.init_modes + 1)
    q = 2 * np.pi * m / params.domain_length
    c = rng.uniform(-params.init_amplitude, params.init_amplitude, size=len(m))
    phi = rng.uniform(0, 2 * np.pi, size=len(m))
    return np.sum(c[:, None] * np.cos(q[:, None] * x[None, :] + phi[:, None]), axis=0)


def integrate_kse(u0, params: KseParams, total_time: float, h: float | None = None):
    """Advance ``u0`` by ``total_time`` with fixed step ``h``; returns u(x, total_time)."""
    h = params.h if h is None else h
    n_steps = int(round(total_time / h))
    model = KseModel(params.domain_length, params.x_points, h)
    v = model.stepper.advance(model.to_spectral(np.asarray(u0, dtype=float)), n_steps)
    return model.to_physical(v)


def solve_kse(params: KseParams, total_steps: int, initial=None,
              transient: float | None = None) -> SampledField:
    """Sample the KSE every ``params.dt`` after discarding a transient.

    The first sample is the state at the end of the transient.
    """
    transient = params.transient if transient is None else transient
    u0 = kse_initial_condition(params) if initial is None else np.asarray(initial, float)
    model = KseModel(params.domain_length, params.x_points, params.h)
    step = model.stepper
    v = model.to_spectral(u0)
    n_transient = int(round(transient / params.h))
    v = step.advance(v, n_transient)
    out = np.empty((params.x_points, total_steps))
    for j in range(total_steps):
        if j:
            v = step.advance(v, params.substeps, step_offset=n_transient + j * params.substeps)
        out[:, j] = model.to_physical(v)
    times = params.dt * np.arange(total_steps)
    tag = f"kse(L={params.domain_length},n={params.x_points},seed={params.seed})"
    return SampledField(out, params.grid(), times, tag)


# ---------------------------------------------------------------------------
# Complex Ginzburg-Landau

@dataclass(frozen=True)
class CglParams:
    alpha_disp: float = 2.0
    beta_disp: float = -2.0
    x_min: float = -9.0
    x_max: float = 9.0
    x_points: int = 32
    integrate_dt: float = 1e-4
    sample_dt: float = 0.07
    lyapunov_max: float = 0.22
    seed: int = 0
    transient: float = 100.0
    init_amplitude: float = 0.1
    init_modes: int = 4

    def __post_init__(self):
        if self.integrate_dt <= 0 or self.sample_dt <= 0:
            raise ValueError("time steps must be positive")
        ratio = self.sample_dt / self.integrate_dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise ValueError("sample_dt must be an integer multiple of integrate_dt")
        if self.x_max <= self.x_min:
            raise ValueError("empty domain")

    @property
    def substeps(self) -> int:
        return int(round(self.sample_dt / self.integrate_dt))

    @property
    def domain_length(self) -> float:
        return self.x_max - self.x_min

    def grid(self) -> np.ndarray:
        return self.x_min + np.arange(self.x_points) * self.domain_length / self.x_points


class CglModel:
    """u_t = u + (1 + i alpha) u_xx - (1 + i beta) |u|^2 u, periodic (complex FFT)."""

    def __init__(self, params: CglParams, h: float, dealias: bool = True):
        n = params.x_points
        self.n = n
        m = np.fft.fftfreq(n, d=1.0 / n)
        q = 2 * np.pi * m / params.domain_length
        self.linear = 1 - (1 + 1j * params.alpha_disp) * q ** 2
        self._coef = -(1 + 1j * params.beta_disp)
        self._mask = _dealias_mask(m, n) if dealias else np.ones(n)
        self.stepper = Etdrk4(self.linear, self._nonlinear, h)

    def _nonlinear(self, v):
        u = np.fft.ifft(v * self._mask)
        return self._mask * self._coef * np.fft.fft((u.real ** 2 + u.imag ** 2) * u)

    def to_spectral(self, u):
        return np.fft.fft(u)

    def to_physical(self, v):
        return np.fft.ifft(v)


def cgle_initial_condition(params: CglParams) -> np.ndarray:
    rng = np.random.default_rng(params.seed)
    x = params.grid()
    m = np.arange(-params.init_modes, params.init_modes + 1)
    q = 2 * np.pi * m / params.domain_length
    c = params.init_amplitude * (rng.uniform(-1, 1, len(m)) + 1j * rng.uniform(-1, 1, len(m)))
    return np.sum(c[:, None] * np.exp(1j * q[:, None] * x[None, :]), axis=0)


def integrate_cgle(u0, params: CglParams, total_time: float, h: float | None = None):
    h = params.integrate_dt if h is None else h
    n_steps = int(round(total_time / h))
    model = CglModel(params, h)
    v = model.stepper.advance(model.to_spectral(np.asarray(u0, dtype=complex)), n_steps)
    return model.to_physical(v)


def solve_cgle(params: CglParams, total_samples: int, initial=None,
               transient: float | None = None) -> SampledField:
    """Sample the CGLE every ``sample_dt`` after discarding a transient."""
    transient = params.transient if transient is None else transient
    u0 = cgle_initial_condition(params) if initial is None else np.asarray(initial, complex)
    model = CglModel(params, params.integrate_dt)
    step = model.stepper
    v = model.to_spectral(u0)
    n_transient = int(round(transient / params.integrate_dt))
    v = step.advance(v, n_transient)
    out = np.empty((params.x_points, total_samples), dtype=complex)
    for j in range(total_samples):
        if j:
            v = step.advance(v, params.substeps,
                             step_offset=n_transient + j * params.substeps)
        out[:, j] = model.to_physical(v)
    times = params.sample_dt * np.arange(total_samples)
    tag = (f"cgle(alpha={params.alpha_disp},beta={params.beta_disp},"
           f"n={params.x_points},seed={params.seed})")
    return SampledField(out, params.grid(), times, tag)
