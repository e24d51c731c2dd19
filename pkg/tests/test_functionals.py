import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from affectcues.errors import NonBinaryValueError, SeriesTooShortError, WindowTooShortError
from affectcues.functionals import (
    BINARY_FUNCTIONALS,
    CONTINUOUS_FUNCTIONALS,
    WaveletConfig,
    WindowPlan,
    binary_functionals,
    continuous_functionals,
    continuous_functionals_batch,
    extract_features,
    read_feature_csv,
)
from affectcues.ingest import ChannelSpec, RecordingSeries

F = {name: i for i, name in enumerate(CONTINUOUS_FUNCTIONALS)}
B = {name: i for i, name in enumerate(BINARY_FUNCTIONALS)}


def test_constant_window_degenerate_convention():
    v = continuous_functionals([2.0, 2.0, 2.0, 2.0], 25)
    for name in ("min", "max", "mean", "median", "quartile1", "quartile3", "rms", "linreg_intercept"):
        assert v[F[name]] == 2.0
    for name in ("std", "skewness", "kurtosis", "linreg_slope", "zero_crossing_rate", "iqr"):
        assert v[F[name]] == 0.0


def test_ramp_hand_values():
    v = continuous_functionals([1.0, 2.0, 3.0], 25)
    assert v[F["mean"]] == pytest.approx(2.0, abs=1e-12)
    assert v[F["std"]] == pytest.approx(np.sqrt(2 / 3), abs=1e-12)
    assert v[F["linreg_slope"]] == pytest.approx(25.0, rel=1e-12)
    assert v[F["linreg_intercept"]] == pytest.approx(1.0, abs=1e-12)


def test_alternating_zero_crossing_rate():
    v = continuous_functionals([1.0, -1.0, 1.0, -1.0], 25)
    assert v[F["zero_crossing_rate"]] == 1.0


def test_exact_zeros_are_not_crossings():
    # mean is 0, so neighbors always pass through an exact zero: no strict sign change
    v = continuous_functionals([1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0], 25)
    assert v[F["zero_crossing_rate"]] == 0.0


def test_window_too_short():
    with pytest.raises(WindowTooShortError):
        continuous_functionals([1.0], 25)


def test_binary_hand_values():
    v = binary_functionals([1, 1, 0, 1], 25)
    np.testing.assert_allclose(v, [0.75, 0.04, 0.06, 0.08, 0.12], rtol=0, atol=1e-15)


def test_binary_all_zero_and_all_one():
    np.testing.assert_array_equal(binary_functionals([0] * 10, 25), 0.0)
    v = binary_functionals([1] * 100, 25)
    assert v[B["ratio"]] == 1.0
    assert v[B["time_total"]] == pytest.approx(4.0) and v[B["time_max"]] == pytest.approx(4.0)


def test_binary_rejects_non_binary():
    with pytest.raises(NonBinaryValueError):
        binary_functionals([0, 2, 1], 25)


def test_matches_naive_oracle_on_random_windows():
    rng = np.random.default_rng(11)
    for _ in range(200):
        w = int(rng.integers(3, 120))
        x = rng.normal(rng.uniform(-3, 3), rng.uniform(0.01, 5), w)
        assert max(oracles.rel_err(continuous_functionals(x, 25), oracles.continuous(x, 25))) <= 1e-9
        b = (rng.uniform(size=w) < rng.uniform(0.1, 0.9)).astype(float)
        assert max(oracles.rel_err(binary_functionals(b, 25), oracles.binary(b, 25))) <= 1e-12


windows = st.lists(st.floats(-1e3, 1e3, allow_subnormal=False), min_size=3, max_size=40)


@settings(max_examples=100, deadline=None)
@given(windows)
def test_quartiles_are_ordered(values):
    v = continuous_functionals(values, 25)
    assert v[F["min"]] <= v[F["quartile1"]] <= v[F["median"]] <= v[F["quartile3"]] <= v[F["max"]]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=40).filter(lambda v: np.ptp(v) > 1e-3), st.floats(-50, 50))
def test_shift_equivariance(values, c):
    a = continuous_functionals(values, 25)
    b = continuous_functionals(np.asarray(values) + c, 25)
    for name in ("min", "max", "mean", "median", "quartile1", "quartile3", "linreg_intercept"):
        assert b[F[name]] == pytest.approx(a[F[name]] + c, abs=1e-9 * (1 + abs(c)) * 10)
    for name in ("std", "skewness", "kurtosis", "linreg_slope", "zero_crossing_rate", "iqr", "iqr_lower", "iqr_upper"):
        assert b[F[name]] == pytest.approx(a[F[name]], abs=1e-7)


def test_batch_equals_single():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(7, 30))
    batch = continuous_functionals_batch(x, 25)
    for i in range(7):
        np.testing.assert_allclose(batch[i], continuous_functionals(x[i], 25), rtol=1e-13, atol=1e-15)


def _series(n, binary=False, seed=0):
    rng = np.random.default_rng(seed)
    chans = [ChannelSpec("a", "continuous")]
    cols = [np.cumsum(rng.normal(size=n))]
    if binary:
        chans.append(ChannelSpec("b", "binary"))
        cols.append((rng.uniform(size=n) < 0.3).astype(float))
    return RecordingSeries("s", chans, np.column_stack(cols))


def test_row_count_full_length_recording():
    m = extract_features(_series(7500), WindowPlan(4.0), WaveletConfig(enabled=False))
    assert m.n_rows == 7401
    assert m.end_frames[0] == 99 and m.end_frames[-1] == 7499


def test_column_count_without_wavelets():
    m = extract_features(_series(200), WindowPlan(4.0), WaveletConfig(enabled=False))
    assert len(m.columns) == 32
    assert {p.view for p in m.provenance} == {"static", "dynamic"}


def test_column_count_with_wavelets_and_binary():
    m = extract_features(_series(300, binary=True), WindowPlan(8.0))
    # W=200 frames allows 3 db10 levels: 4 bands x 5 statistics
    assert len(m.columns) == 32 + 20 + 5
    assert sum(p.view == "wavelet" for p in m.provenance) == 20


def test_single_row_at_boundary_and_too_short():
    assert extract_features(_series(100), WindowPlan(4.0)).n_rows == 1
    with pytest.raises(SeriesTooShortError):
        extract_features(_series(99), WindowPlan(4.0))


def test_rows_match_direct_functionals():
    s = _series(150, binary=True, seed=2)
    m = extract_features(s, WindowPlan(4.0), WaveletConfig(enabled=False))
    row = 17
    win = s.channel("a")[row : row + 100]
    static = m.values[row, :16]
    dynamic = m.values[row, 16:32]
    np.testing.assert_allclose(static, oracles.continuous(win, 25), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(dynamic, oracles.continuous(np.diff(win), 25), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(m.values[row, 32:], oracles.binary(s.channel("b")[row : row + 100], 25))


@pytest.mark.parametrize("n_frames", [100, 137, 260])
def test_row_count_formula(n_frames):
    plan = WindowPlan(4.0)
    assert extract_features(_series(n_frames), plan).n_rows == n_frames - 100 + 1 == plan.n_rows(n_frames)


def test_window_plan_validation():
    with pytest.raises(ValueError):
        WindowPlan(4.01)
    assert WindowPlan(6.0).window_frames == 150


def test_feature_csv_round_trip(tmp_path):
    m = extract_features(_series(130, binary=True), WindowPlan(4.0))
    back = read_feature_csv(m.to_csv(tmp_path / "f.csv"))
    assert back.columns == m.columns
    assert back.provenance == m.provenance
    assert back.plan == m.plan
    np.testing.assert_array_equal(back.end_frames, m.end_frames)
    np.testing.assert_array_equal(back.values, m.values)
