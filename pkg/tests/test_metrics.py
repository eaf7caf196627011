import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import series_of
from rcvalley.metrics import (ErrorSurface, ErrorTrace, detect_valley, divergence_cap,
                              ensemble_stats, read_pgm, read_surface_csv, rmse_per_step,
                              surface_to_gray, write_heatmap_pgm, write_surface_csv)
from rcvalley.targets.series import Encoding, FieldSeries


def test_rmse_identical_is_zero():
    s = series_of(np.random.default_rng(0).normal(size=(5, 7)))
    np.testing.assert_array_equal(rmse_per_step(s, s).rmse, 0.0)


def test_rmse_zero_vs_one():
    trace = rmse_per_step(series_of(np.zeros((9, 4))), series_of(np.ones((9, 4))))
    np.testing.assert_array_equal(trace.rmse, 1.0)


def test_rmse_three_four():
    trace = rmse_per_step(series_of([[0.0], [0.0]]), series_of([[3.0], [4.0]]))
    assert trace.rmse[0] == pytest.approx(np.sqrt(12.5), abs=1e-15)


def test_rmse_rejects_mismatches():
    a = series_of(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        rmse_per_step(a, series_of(np.zeros((2, 4))))
    with pytest.raises(ValueError):
        rmse_per_step(a, series_of(np.zeros((2, 3)), dt=0.5))
    other = FieldSeries(np.zeros((2, 3)), 1.0, [0, 1], Encoding.MAGNITUDE)
    with pytest.raises(ValueError):
        rmse_per_step(a, other)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=50, deadline=None)
# scale factors stay where squaring cannot underflow
@given(arrays(float, (3, 3, 6), elements=finite),
       st.just(0.0) | st.floats(1e-3, 1e3) | st.floats(-1e3, -1e-3))
def test_rmse_properties(x, c):
    a, b, d = (series_of(v) for v in x)
    ab = rmse_per_step(a, b).rmse
    np.testing.assert_array_equal(ab, rmse_per_step(b, a).rmse)
    bd = rmse_per_step(b, d).rmse
    ad = rmse_per_step(a, d).rmse
    assert np.all(ad <= ab + bd + 1e-9 * (1 + ab + bd))
    scaled = rmse_per_step(series_of(c * x[0]), series_of(c * x[1])).rmse
    np.testing.assert_allclose(scaled, abs(c) * ab, rtol=1e-12, atol=1e-300)


def test_trace_times_and_valid_time():
    tr = ErrorTrace([0.1, 0.2, 0.6, 0.1], dt=0.25, lyapunov_max=0.05)
    np.testing.assert_allclose(tr.times, [0.25, 0.5, 0.75, 1.0])
    assert tr.valid_steps(0.5) == 2
    assert tr.valid_time(0.5) == pytest.approx(2 * 0.25 * 0.05)
    assert tr.valid_time(0.5, lyapunov=False) == 0.5
    assert ErrorTrace([0.1, 0.2], 1.0).valid_steps() == 2
    with pytest.raises(ValueError):
        ErrorTrace([-1.0], 1.0)


def test_ensemble_single_trace():
    tr = ErrorTrace([0.3, 0.5, 0.9], 1.0)
    mean, std = ensemble_stats([tr])
    np.testing.assert_array_equal(mean, tr.rmse)
    np.testing.assert_array_equal(std, 0.0)


def test_ensemble_two_traces():
    mean, std = ensemble_stats([ErrorTrace(np.zeros(4), 1.0), ErrorTrace(np.full(4, 2.0), 1.0)])
    np.testing.assert_array_equal(mean, 1.0)
    np.testing.assert_array_equal(std, 1.0)


def test_ensemble_empty():
    with pytest.raises(ValueError):
        ensemble_stats([])


def test_ensemble_caps_diverged_traces():
    ok = ErrorTrace([0.0, 0.0, 0.0], 1.0)
    bad = ErrorTrace([0.2], 1.0, diverged_at=1)
    mean, _ = ensemble_stats([ok, bad], cap=4.0, length=3)
    np.testing.assert_array_equal(mean, [0.1, 2.0, 2.0])
    assert len(bad) == 1  # inputs untouched
    with pytest.raises(ValueError):
        ensemble_stats([ok, bad])


def test_divergence_cap():
    s = series_of(np.full((2, 3), 2.0))
    assert divergence_cap(s) == pytest.approx(20.0)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (5, 4), elements=st.floats(0, 10)), st.permutations(range(5)))
def test_ensemble_permutation_invariance(rows, perm):
    traces = [ErrorTrace(r, 1.0) for r in rows]
    m1, s1 = ensemble_stats(traces)
    m2, s2 = ensemble_stats([traces[i] for i in perm])
    np.testing.assert_allclose(m1, m2, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(s1, s2, rtol=1e-9, atol=1e-12)


def surface(scores, steps=3):
    mean = np.repeat(np.asarray(scores, float)[:, None], steps, axis=1)
    return ErrorSurface(np.arange(len(scores)) * 0.5, mean, np.zeros_like(mean), 1, 0.1)


def test_valley_flat_zero():
    rep = detect_valley(surface([0, 0, 0, 0]), 0.5)
    assert (rep.rho_lo, rep.rho_hi) == (0.0, 1.5)


def test_valley_v_shape():
    rep = detect_valley(surface([5, 1, 0.2, 1, 5]), 1.5)
    assert (rep.rho_lo, rep.rho_hi, rep.best_rho) == (0.5, 1.5, 1.0)
    np.testing.assert_allclose(rep.scores, [5, 1, 0.2, 1, 5])


def test_valley_empty_keeps_best():
    rep = detect_valley(surface([5, 3, 4]), 0.5)
    assert rep.empty and rep.width == 0.0 and rep.best_rho == 0.5
    assert "rho_lo=none" in rep.to_text()


def test_valley_horizon_scoring():
    mean = np.array([[0.1, 0.1, 9.0], [0.4, 0.4, 0.4]])
    surf = ErrorSurface([0.1, 0.2], mean, np.zeros_like(mean), 1, 1.0)
    assert detect_valley(surf, 0.5, horizon_steps=2).best_rho == 0.1
    assert detect_valley(surf, 0.5).best_rho == 0.2
    with pytest.raises(ValueError):
        detect_valley(surf, 0.5, horizon_steps=4)


def test_valley_skips_failed_rows():
    mean = np.array([[np.nan] * 2, [0.1, 0.1], [0.2, 0.2]])
    surf = ErrorSurface([0.1, 0.2, 0.3], mean, np.zeros_like(mean), 1, 1.0)
    rep = detect_valley(surf, 0.5)
    assert (rep.rho_lo, rep.rho_hi) == (0.2, 0.3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=12), st.floats(0, 5), st.floats(0, 5))
def test_valley_monotone_in_threshold(scores, t1, t2):
    lo_t, hi_t = sorted((t1, t2))
    small = detect_valley(surface(scores), lo_t)
    big = detect_valley(surface(scores), hi_t)
    if not small.empty:
        assert not big.empty
        assert big.rho_lo <= small.rho_lo and big.rho_hi >= small.rho_hi
        assert small.rho_lo <= small.best_rho <= small.rho_hi


def test_surface_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    surf = ErrorSurface([0.01, 0.1, 1.0], rng.uniform(size=(3, 5)), rng.uniform(size=(3, 5)),
                        4, 0.25, lyapunov_max=0.05)
    path = tmp_path / "surface.csv"
    write_surface_csv(surf, path)
    assert path.read_text().splitlines()[0] == "rho,step,time,lyapunov_time,mean_rmse,std_rmse"
    back = read_surface_csv(path)
    np.testing.assert_array_equal(back.mean, surf.mean)
    np.testing.assert_array_equal(back.std, surf.std)
    np.testing.assert_array_equal(back.rho_grid, surf.rho_grid)
    assert back.dt == 0.25 and back.lyapunov_max == pytest.approx(0.05)


def test_gray_mapping():
    np.testing.assert_array_equal(surface_to_gray(np.array([0.0, 1.5, 3.0, 7.0])),
                                  [0, 128, 255, 255])
    with pytest.raises(ValueError):
        surface_to_gray(np.zeros(2), cutoff=0)


def test_heatmap_pgm(tmp_path):
    mean = np.array([[0.0, 3.0], [1.5, 6.0]])
    surf = ErrorSurface([0.1, 0.2], mean, np.zeros_like(mean), 1, 1.0)
    path = tmp_path / "s.pgm"
    write_heatmap_pgm(surf, path, cutoff=3.0)
    img = read_pgm(path)
    # top row is the largest rho
    np.testing.assert_array_equal(img, [[128, 255], [0, 255]])
