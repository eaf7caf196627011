"""Fast self-check suite: each check compares an implementation against an
independent oracle and reports pass/fail with the measured figure."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import SingularSystemError
from .esn import EsnHyperParams, train_readout
from .targets.nlse import NlseParams, breather, collision, nlse_grid, nlse_residual
from .targets.spectral import (CglModel, CglParams, KseModel, integrate_cgle)
from .topology import (TopologyKind, TopologySpec, assign_weights, generate_topology,
                       scale_to_spectral_radius)

NLSE_RESIDUAL_TOL = 1e-4
MIN_CONVERGENCE_ORDER = 3.5
COLLISION_SETTINGS = ((0.14, 0.34), (0.42, 0.18))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def check_spectral_scaling(n_matrices: int = 100, n: int = 200, k: float = 3.0,
                           targets=(0.1, 0.7, 1.4, 2.0), rel_tol: float = 1e-6):
    worst = 0.0
    for seed in range(n_matrices):
        spec = TopologySpec(TopologyKind.DIRECTED_RANDOM, n, k, seed=seed)
        base = assign_weights(generate_topology(spec), seed + 10_000)
        for target in targets:
            scaled = scale_to_spectral_radius(base, target, spec).weights
            rho = float(np.max(np.abs(np.linalg.eigvals(scaled.toarray()))))
            worst = max(worst, abs(rho - target) / target)
    return worst < rel_tol, f"max relative error {worst:.2e} (tol {rel_tol:g})"


def _ridge_oracle(states, targets, ridge):
    """Minimize ||W R - V||^2 + ridge ||W||^2 row by row with damped LSQR."""
    rows = []
    for v in targets:
        sol = spla.lsqr(states.T, v, damp=math.sqrt(ridge), atol=1e-15, btol=1e-15,
                        conlim=1e12, iter_lim=50_000)
        rows.append(sol[0])
    return np.array(rows)


def check_ridge(instances: int = 10, n: int = 50, steps: int = 500, outputs: int = 3,
                ridge: float = 1e-4, rel_tol: float = 1e-6):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(instances):
        states = rng.uniform(-1, 1, (n, steps))
        targets = rng.normal(size=(outputs, steps))
        w = train_readout(states, targets, ridge)
        ref = _ridge_oracle(states, targets, ridge)
        worst = max(worst, float(np.linalg.norm(w - ref) / np.linalg.norm(ref)))
    return worst < rel_tol, f"max relative deviation from LSQR {worst:.2e} (tol {rel_tol:g})"


def check_singular_ridge():
    rng = np.random.default_rng(7)
    states = rng.uniform(-1, 1, (6, 40))
    states[3] = states[1]  # duplicated row: R R^T is singular
    targets = rng.normal(size=(2, 40))
    try:
        train_readout(states, targets, 0.0)
    except SingularSystemError as exc:
        return True, f"rank-deficient data with zero ridge rejected ({exc})"
    return False, "zero ridge on rank-deficient states did not raise"


def nlse_residuals(variant: str = "standard", steps: int = 400) -> dict:
    """Worst NLSE residual for each analytic state on its sampling grid."""
    grid = nlse_grid()
    out = {}
    cases = [("AB a=0.25", NlseParams(a=0.25, variant=variant)),
             ("KM a=0.7", NlseParams(a=0.7, role_swap=True, variant=variant))]
    for label, p in cases:
        coord = p.dt * np.arange(steps)
        if p.role_swap:
            x, t = np.meshgrid(coord, grid, indexing="xy")
        else:
            x, t = np.meshgrid(grid, coord, indexing="ij")
        res = _residual(lambda xx, tt, p=p: breather(xx, tt, p.a, p.variant), x, t)
        out[label] = res
    coll_dt = math.pi / 40
    x, t = np.meshgrid(grid, coll_dt * np.arange(steps), indexing="ij")
    for a1, a2 in COLLISION_SETTINGS:
        out[f"collision a1={a1} a2={a2}"] = _residual(
            lambda xx, tt, a1=a1, a2=a2: collision(xx, tt, a1, a2), x, t)
    return out


def _residual(func, x, t):
    return float(np.max(nlse_residual(func, x, t)))


def check_nlse(variant: str = "standard", tol: float = NLSE_RESIDUAL_TOL):
    res = nlse_residuals(variant)
    worst = max(res.values())
    detail = ", ".join(f"{k}: {v:.1e}" for k, v in res.items())
    return worst < tol, f"max residual {worst:.1e} (tol {tol:g}; {detail})"


def convergence_order(errors_by_h) -> float:
    """Observed order from successive differences of a halving step ladder."""
    d = [np.max(np.abs(a - b)) for a, b in zip(errors_by_h, errors_by_h[1:])]
    return float(np.log2(d[0] / d[1]))


def kse_convergence_order(hs=(0.025, 0.0125, 0.00625), total_time: float = 25.0) -> float:
    length, n = 22.0, 64
    x = np.arange(n) * length / n
    u0 = np.cos(2 * np.pi * x / length) * (1 + np.sin(2 * np.pi * x / length))
    sols = []
    for h in hs:
        model = KseModel(length, n, h)
        v = model.stepper.advance(model.to_spectral(u0), int(round(total_time / h)))
        sols.append(model.to_physical(v))
    return convergence_order(sols)


def cgle_convergence_order(hs=(0.005, 0.0025, 0.00125), total_time: float = 1.0) -> float:
    params = CglParams()
    x = params.grid()
    q = 2 * np.pi / params.domain_length
    u0 = 0.8 * np.exp(1j * q * x) + 0.3 * np.cos(2 * q * x) + 0.2j * np.sin(3 * q * x)
    sols = []
    for h in hs:
        model = CglModel(params, h)
        v = model.stepper.advance(model.to_spectral(u0), int(round(total_time / h)))
        sols.append(model.to_physical(v))
    return convergence_order(sols)


def check_etdrk4(min_order: float = MIN_CONVERGENCE_ORDER):
    kse = kse_convergence_order()
    cgle = cgle_convergence_order()
    ok = kse >= min_order and cgle >= min_order
    return ok, f"self-convergence order KSE {kse:.2f}, CGLE {cgle:.2f} (min {min_order})"


def plane_wave_error(h: float = 1e-3, checkpoints: int = 10) -> float:
    params = CglParams()
    u = np.ones(params.x_points, dtype=complex)
    worst = 0.0
    for k in range(1, checkpoints + 1):
        u = integrate_cgle(u, params, 1.0 / checkpoints, h)
        exact = np.exp(-1j * params.beta_disp * k / checkpoints)
        worst = max(worst, float(np.max(np.abs(u - exact))))
    return worst


def check_plane_wave(tol: float = 1e-6):
    err = plane_wave_error()
    return err < tol, f"max error vs exp(-i beta t) over [0, 1]: {err:.1e} (tol {tol:g})"


def _tiny_spec():
    from .sweep import SweepSpec, SystemSpec

    system = SystemSpec("ab", NlseParams())
    esn = EsnHyperParams(n=128, input_dim=64, dt=system.dt)
    topo = TopologySpec(TopologyKind.DIRECTED_RANDOM, 128, 3.0)
    return SweepSpec(system, esn, topo, (0.5, 1.2), ensemble_size=2, train_steps=300,
                     horizon=30, master_seed=99)


def check_determinism():
    from .sweep import run_single, run_sweep

    spec = _tiny_spec()
    first = run_sweep(spec)
    again = [run_single(spec, r.rho_index, r.realization_index) for r in first.records]
    same_records = all(a.same_result(b) for a, b in zip(first.records, again))
    second = run_sweep(spec)
    same_surface = (np.array_equal(first.surface.mean, second.surface.mean)
                    and np.array_equal(first.surface.std, second.surface.std))
    ok = same_records and same_surface and first.n_failed == 0
    return ok, (f"records identical: {same_records}, surfaces identical: {same_surface}, "
                f"failed runs: {first.n_failed}")


CHECKS = {
    "spectral-scaling": check_spectral_scaling,
    "ridge-vs-oracle": check_ridge,
    "singular-ridge": check_singular_ridge,
    "nlse-residual": check_nlse,
    "etdrk4-convergence": check_etdrk4,
    "cgle-plane-wave": check_plane_wave,
    "determinism": check_determinism,
}


def run_checks(names=None, nlse_variant: str = "standard", report=None) -> list[CheckResult]:
    """Run the named checks (all by default); ``report`` receives each result."""
    results = []
    for name in names or CHECKS:
        fn = CHECKS[name]
        started = time.perf_counter()
        try:
            ok, detail = fn(nlse_variant) if name == "nlse-residual" else fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        result = CheckResult(name, bool(ok), detail, time.perf_counter() - started)
        results.append(result)
        if report:
            report(result)
    return results
