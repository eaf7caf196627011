import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import explicit_model, series_of, small_model
from rcvalley.errors import SingularSystemError
from rcvalley.esn import (CHUNK, EsnHyperParams, ReservoirState, fit, listen, load_checkpoint,
                          load_model, make_input_map, normalize_state, one_step_errors,
                          predict, save_model, step, train_readout)
from rcvalley.metrics import training_error
from rcvalley.verify import _ridge_oracle


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        EsnHyperParams(n=100, input_dim=64)
    with pytest.raises(ValueError):
        EsnHyperParams(n=128, input_dim=64, output_dim=32)
    with pytest.raises(ValueError):
        EsnHyperParams(n=128, input_dim=64, ridge=-1)
    assert EsnHyperParams(n=4992, input_dim=64).output_dim == 64


def test_input_map_blocks():
    imap = make_input_map(4992, 64, 1.0, seed=3)
    w = imap.weights
    assert w.shape == (4992, 64)
    assert np.all(np.diff(w.indptr) == 1)
    np.testing.assert_array_equal(w.indices, np.repeat(np.arange(64), 78))
    assert np.all(np.abs(w.data) <= 1.0)


def test_step_zero_weights():
    model = explicit_model(np.zeros((3, 3)), np.zeros(3))
    out = step(model, ReservoirState(np.array([0.3, -0.2, 0.9])), [5.0])
    np.testing.assert_array_equal(out.r, 0.0)
    assert out.step_index == 1


def test_step_scalar_tanh():
    model = explicit_model([[0.5]], [1.0])
    out = step(model, ReservoirState.zeros(1), [1.0])
    assert out.r[0] == pytest.approx(0.7615941559557649, abs=1e-15)


def test_step_dimension_mismatch():
    model = explicit_model([[0.5]], [1.0])
    with pytest.raises(ValueError):
        step(model, ReservoirState.zeros(1), [1.0, 2.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4))
def test_step_bounded(u):
    model = small_model()
    r = step(model, ReservoirState.zeros(32), u).r
    assert np.all(np.abs(r) <= 1)


def test_normalize_examples():
    np.testing.assert_array_equal(normalize_state([0.5, -0.5, 0.25]), [0.5, 0.25, 0.25])
    np.testing.assert_array_equal(normalize_state(np.zeros(5)), 0.0)
    v = np.array([1, -1, -1, 1, -1, -1.0])
    out = normalize_state(v)
    np.testing.assert_array_equal(out[0::2], v[0::2])
    np.testing.assert_array_equal(out[1::2], 1.0)


def test_listen_zero_input():
    model = explicit_model(np.eye(4) * 0.5, np.zeros(4))
    res = listen(model, series_of(np.zeros((1, 10))))
    np.testing.assert_array_equal(res.states, 0.0)


def test_listen_empty_series():
    with pytest.raises(ValueError):
        listen(small_model(), series_of(np.zeros((4, 0))))


def test_listen_matches_repeated_steps():
    model = small_model()
    rng = np.random.default_rng(0)
    data = rng.normal(size=(4, 100))
    states = listen(model, series_of(data)).states
    s = ReservoirState.zeros(32)
    for t in range(100):
        s = step(model, s, data[:, t])
        np.testing.assert_array_equal(states[:, t], normalize_state(s.r))


def test_listen_across_chunks():
    model = small_model(n=8, m=4)
    data = np.random.default_rng(1).normal(size=(4, CHUNK + 7))
    res = listen(model, series_of(data))
    s = ReservoirState.zeros(8)
    for t in range(data.shape[1]):
        s = step(model, s, data[:, t])
    np.testing.assert_array_equal(res.final_state.r, s.r)
    assert res.final_state.step_index == data.shape[1]


def test_ridge_scalar_examples():
    np.testing.assert_allclose(train_readout([[1.0, 1.0]], [[2.0, 2.0]], 0.0), [[2.0]])
    np.testing.assert_allclose(train_readout([[1.0, 1.0]], [[2.0, 2.0]], 2.0), [[1.0]])


def test_ridge_discard_drops_leading_columns():
    states = np.array([[100.0, 1.0, 1.0]])
    targets = np.array([[-50.0, 2.0, 2.0]])
    np.testing.assert_allclose(train_readout(states, targets, 0.0, discard=1), [[2.0]])


def test_ridge_matches_iterative_minimizer():
    rng = np.random.default_rng(42)
    states = rng.uniform(-1, 1, (20, 200))
    targets = rng.normal(size=(3, 200))
    w = train_readout(states, targets, 1e-4)
    ref = _ridge_oracle(states, targets, 1e-4)
    assert np.linalg.norm(w - ref) / np.linalg.norm(ref) < 1e-6


def test_ridge_singular_reported():
    states = np.ones((3, 10))
    with pytest.raises(SingularSystemError):
        train_readout(states, np.ones((1, 10)), 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), ridge=st.floats(1e-8, 10.0))
def test_normal_equations_and_shrinkage(seed, ridge):
    rng = np.random.default_rng(seed)
    states = rng.uniform(-1, 1, (10, 60))
    targets = rng.normal(size=(2, 60))
    w = train_readout(states, targets, ridge)
    lhs = (states @ states.T + ridge * np.eye(10)) @ w.T
    rhs = states @ targets.T
    scale = max(1.0, np.abs(rhs).max())
    assert np.abs(lhs - rhs).max() < 1e-8 * scale
    bigger = train_readout(states, targets, 2 * ridge)
    assert np.linalg.norm(bigger) <= np.linalg.norm(w) * (1 + 1e-12)


def test_fit_equals_listen_then_train():
    model = small_model(n=16, m=4, transient=5)
    data = np.random.default_rng(2).normal(size=(4, CHUNK + 300))
    series = series_of(data)
    fitted = fit(model, series)
    states = listen(model, series.segment(0, data.shape[1] - 1)).states
    ref = train_readout(states, data[:, 1:], model.hyper.ridge, discard=5)
    np.testing.assert_array_equal(fitted.model.readout, ref)
    assert fitted.n_columns == data.shape[1] - 1


def test_predict_zero_readout():
    model = small_model().with_readout(np.zeros((4, 32)))
    pred = predict(model, None, ReservoirState(np.full(32, 0.3)), 20)
    np.testing.assert_array_equal(pred.series.data, 0.0)


def test_predict_horizon_zero():
    model = small_model().with_readout(np.zeros((4, 32)))
    pred = predict(model, None, ReservoirState.zeros(32), 0)
    assert pred.series.data.shape == (4, 0)


def test_predict_untrained():
    with pytest.raises(ValueError):
        predict(small_model(), None, ReservoirState.zeros(32), 5)


def test_predict_reports_divergence():
    readout = np.full((4, 32), 1e308)
    model = small_model().with_readout(readout)
    pred = predict(model, None, ReservoirState(np.ones(32)), 10)
    assert pred.diverged_at == 0
    assert pred.series.n_steps == 0


def test_closed_loop_replays_interpolated_training_window():
    # fewer columns than neurons: a vanishing ridge interpolates every target,
    # so closed loop started where training started must replay the window.
    # Sizes are chosen so the interpolating readout is well conditioned and
    # feedback does not amplify rounding.
    model = small_model(n=512, m=4, rho=0.9, alpha=0.2, ridge=1e-12, transient=0)
    data = np.random.default_rng(5).normal(size=(4, 41))
    fitted = fit(model, series_of(data)).model
    start = step(model, ReservoirState.zeros(512), data[:, 0])
    pred = predict(fitted, None, start, 40)
    np.testing.assert_allclose(pred.series.data, data[:, 1:], atol=1e-8)


def test_training_error_zero_for_representable_targets():
    model = small_model(n=16, m=4, ridge=0.0, transient=0)
    data = np.random.default_rng(6).normal(size=(4, 200))
    states = listen(model, series_of(data)).states
    w_star = np.random.default_rng(7).normal(size=(4, 16))
    targets = w_star @ states
    w = train_readout(states, targets, 0.0)
    assert training_error(model.with_readout(w), states, targets) < 1e-10


def test_cold_start_matches_open_loop():
    model = small_model(n=32, m=4, rho=0.5, ridge=1e-3, transient=0)
    rng = np.random.default_rng(9)
    data = rng.normal(size=(4, 200))
    trained = fit(model, series_of(data)).model
    warm = series_of(data[:, 100:150])
    pred = predict(trained, warm, ReservoirState.zeros(32), 5)
    ref = listen(trained, warm).states
    np.testing.assert_allclose(pred.warmup_outputs, trained.readout @ ref, atol=1e-12)
    np.testing.assert_allclose(pred.series.data[:, 0], pred.warmup_outputs[:, -1], rtol=1e-13)


def test_one_step_errors_length():
    model = small_model(n=16, m=4)
    series = series_of(np.random.default_rng(0).normal(size=(4, 50)))
    trained = fit(model, series).model
    errs = one_step_errors(trained, series)
    assert errs.shape == (49,) and np.all(errs >= 0)


def test_pipeline_determinism():
    series = series_of(np.random.default_rng(3).normal(size=(4, 300)))
    a = fit(small_model(seed=4), series)
    b = fit(small_model(seed=4), series)
    np.testing.assert_array_equal(a.model.readout, b.model.readout)
    pa = predict(a.model, None, a.final_state, 30).series.data
    pb = predict(b.model, None, b.final_state, 30).series.data
    np.testing.assert_array_equal(pa, pb)


def test_model_round_trip(tmp_path):
    series = series_of(np.random.default_rng(3).normal(size=(4, 100)))
    fitted = fit(small_model(), series)
    path = tmp_path / "m.npz"
    save_model(fitted.model, path, fitted.final_state, {"train_steps": 99})
    back, state, meta = load_checkpoint(path)
    np.testing.assert_array_equal(back.readout, fitted.model.readout)
    assert (back.reservoir.weights != fitted.model.reservoir.weights).nnz == 0
    assert (back.input_map.weights != fitted.model.input_map.weights).nnz == 0
    assert back.hyper == fitted.model.hyper
    assert back.reservoir.spec == fitted.model.reservoir.spec
    np.testing.assert_array_equal(state.r, fitted.final_state.r)
    assert meta == {"train_steps": 99}
    untrained = tmp_path / "u.npz"
    save_model(small_model(), untrained)
    assert load_model(untrained).readout is None
