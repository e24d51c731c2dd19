import numpy as np
import pytest
from sklearn.feature_selection import mutual_info_regression

import oracles
from affectcues.errors import AllFeaturesDroppedError, LengthMismatchError, TooFewSamplesError
from affectcues.functionals import FeatureProvenance, WindowedFeatureMatrix, WindowPlan
from affectcues.selection import (
    MIEstimator,
    MiReport,
    estimate_mi,
    filter_features,
    mutual_information,
    read_mi_report,
)


def _matrix(values, names):
    values = np.asarray(values, float)
    prov = [FeatureProvenance(n, "static", "mean") for n in names]
    return WindowedFeatureMatrix("s", WindowPlan(4.0), values, prov, np.arange(99, 99 + values.shape[0]))


def test_identical_variables_have_high_mi():
    x = np.random.default_rng(0).uniform(size=5000)
    mi = estimate_mi(x, x)
    assert mi >= 1.5
    # a coarse histogram estimate bounds the information from below
    assert oracles.binned_mi(x, x, bins=20) >= 1.5


def test_independent_variables_have_near_zero_mi():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=5000)
    y = rng.permutation(x)
    assert abs(estimate_mi(x, y)) <= 0.05


def test_matches_reference_ksg_implementation():
    rng = np.random.default_rng(3)
    for _ in range(3):
        x = rng.normal(size=1500)
        y = np.tanh(x) + rng.normal(scale=0.4, size=1500)
        ref = mutual_info_regression(x[:, None], y, n_neighbors=3, random_state=0)[0]
        assert estimate_mi(x, y) == pytest.approx(ref, abs=1e-6)


def test_binary_feature_uses_discrete_estimator():
    rng = np.random.default_rng(4)
    b = (rng.uniform(size=1500) < 0.4).astype(float)
    y = b + rng.normal(scale=0.7, size=1500)
    ref = mutual_info_regression(b[:, None], y, discrete_features=True, n_neighbors=3, random_state=0)[0]
    assert estimate_mi(b, y) == pytest.approx(ref, abs=1e-6)
    assert estimate_mi(b, y) > 0.1


def test_errors():
    with pytest.raises(LengthMismatchError):
        estimate_mi(np.zeros(100), np.zeros(99))
    with pytest.raises(TooFewSamplesError):
        estimate_mi(np.arange(10.0), np.arange(10.0))


def test_estimates_are_deterministic_and_non_negative():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=(2, 800))
    a, b = estimate_mi(x, y), estimate_mi(x, y)
    assert a == b and a >= 0.0


def test_self_information_beats_permuted():
    rng = np.random.default_rng(6)
    wins = 0
    for _ in range(100):
        x = rng.normal(size=200)
        wins += estimate_mi(x, x) >= estimate_mi(x, rng.permutation(x))
    assert wins >= 99


def test_filter_keeps_copy_drops_noise():
    rng = np.random.default_rng(7)
    y = rng.normal(size=2000)
    m = _matrix(np.column_stack([rng.normal(size=2000), y, rng.normal(size=2000)]), ["n1", "copy", "n2"])
    kept, report = filter_features(m, y, 0.1)
    assert kept.columns == ["copy__static__mean"]
    assert set(report.kept) | set(report.dropped) == set(m.columns)
    assert all(mi >= 0.1 for c, mi in zip(report.columns, report.mi) if c in report.kept)


def test_filter_preserves_order_of_survivors():
    rng = np.random.default_rng(8)
    y = rng.normal(size=1000)
    m = _matrix(np.column_stack([y + 0.1 * rng.normal(size=1000), rng.normal(size=1000), 2 * y]), ["a", "b", "c"])
    kept, _ = filter_features(m, y, 0.1)
    assert kept.columns == ["a__static__mean", "c__static__mean"]


def test_threshold_must_be_positive():
    m = _matrix(np.random.default_rng(0).normal(size=(100, 1)), ["a"])
    with pytest.raises(ValueError):
        filter_features(m, np.zeros(100), 0.0)


def test_all_noise_is_rejected():
    rng = np.random.default_rng(9)
    m = _matrix(rng.normal(size=(3000, 4)), list("abcd"))
    with pytest.raises(AllFeaturesDroppedError):
        filter_features(m, rng.normal(size=3000), 0.2)


def test_threshold_monotonicity():
    rng = np.random.default_rng(10)
    y = rng.normal(size=1500)
    cols = [y * s + rng.normal(size=1500) for s in np.linspace(0, 3, 12)]
    report = mutual_information(np.column_stack(cols), [f"c{i}" for i in range(12)], y)
    k1, k15, k2 = (set(report.at(t).kept) for t in (0.1, 0.15, 0.2))
    assert k2 <= k15 <= k1
    assert k2 and k1 != set(report.columns)


def test_precomputed_report_gives_same_selection():
    rng = np.random.default_rng(11)
    y = rng.normal(size=600)
    m = _matrix(np.column_stack([y + rng.normal(size=600), rng.normal(size=600)]), ["a", "b"])
    first, rep = filter_features(m, y, 0.1)
    second, rep2 = filter_features(m, y, 0.15, report=rep)
    assert rep2.threshold == 0.15
    np.testing.assert_array_equal(rep.mi, rep2.mi)


def test_estimator_reuse_matches_one_shot():
    rng = np.random.default_rng(12)
    y = rng.normal(size=500)
    xs = rng.normal(size=(3, 500)) + y
    est = MIEstimator(y)
    for x in xs:
        assert est(x) == estimate_mi(x, y)


def test_report_csv_round_trip(tmp_path):
    rep = MiReport(["a", "b", "c"], [0.3, 0.05, 0.12], 0.1)
    back = read_mi_report(rep.to_csv(tmp_path / "mi.csv"), 0.1)
    assert back.columns == rep.columns and back.kept == ["a", "c"]
    np.testing.assert_array_equal(back.mi, rep.mi)
    text = (tmp_path / "mi.csv").read_text().splitlines()
    assert text[0] == "feature,mi,kept" and text[2].endswith(",0")
