import json

import numpy as np
import pytest

import affectcues.pipeline as pl
from affectcues.config import load_config
from affectcues.errors import ConfigError, DivergedToNonFiniteError, ExperimentError
from affectcues.functionals import read_feature_csv
from affectcues.model import load
from affectcues.pipeline import REPORT_COLUMNS, explore_lld, extract_to_dir, read_report, run_experiment
from affectcues.synth import SynthSpec, generate_synthetic


@pytest.fixture
def cfg(small_config):
    return load_config(small_config)


def test_report_enumerates_every_configuration(cfg, tmp_path):
    path = run_experiment(cfg, tmp_path / "run", deterministic=True)
    rows = read_report(path)
    assert tuple(rows[0]) == REPORT_COLUMNS
    val = [r for r in rows if r["partition"] == "validation"]
    test = [r for r in rows if r["partition"] == "test"]
    # 1 set x 2 dimensions x 1 window x 2 delays x 1 threshold
    assert len(val) == 4 and len(test) == 2
    assert {(r["dimension"], r["delay_s"]) for r in val} == {(d, x) for d in ("arousal", "valence") for x in ("0", "0.2")}
    for dim in ("arousal", "valence"):
        block = [r for r in val if r["dimension"] == dim]
        best = max(block, key=lambda r: float(r["ccc"]))
        (t,) = [r for r in test if r["dimension"] == dim]
        assert (t["window_s"], t["delay_s"], t["mi_threshold"]) == (best["window_s"], best["delay_s"], best["mi_threshold"])
    assert all(int(r["n_features"]) > 0 and np.isfinite(float(r["ccc"])) for r in rows)


def test_artifacts(cfg, tmp_path):
    out = tmp_path / "run"
    run_experiment(cfg, out, deterministic=True)
    models = sorted(p.name for p in (out / "models").glob("*.npz"))
    assert models == sorted(f"all__{d}__W4__D{x}__T0.05.npz" for d in ("arousal", "valence") for x in ("0", "0.2"))
    assert len(list((out / "mi").glob("*.csv"))) == 4
    logs = [json.loads(line) for line in (out / "training.jsonl").read_text().splitlines()]
    assert len(logs) == 4 and all(entry["val_sse"] for entry in logs)
    winners = json.loads((out / "winners.json").read_text())
    assert len(winners) == 2
    params, meta = load(out / "models" / f"{winners[0]['tag']}.npz")
    assert meta["validation_ccc"] == pytest.approx(winners[0]["validation_ccc"])
    assert params.standardizer is not None and params.feature_columns


def test_rerun_is_byte_identical_and_jobs_do_not_matter(cfg, tmp_path):
    a = run_experiment(cfg, tmp_path / "a", deterministic=True).read_bytes()
    b = run_experiment(cfg, tmp_path / "b", deterministic=True).read_bytes()
    c = run_experiment(cfg, tmp_path / "c", jobs=2, deterministic=True).read_bytes()
    assert a == b == c


def test_unknown_channel_fails_before_training(small_config, tmp_path, monkeypatch):
    text = small_config.read_text().replace("all = [", 'all = ["pupil", ')
    small_config.write_text(text)
    cfg = load_config(small_config)
    monkeypatch.setattr(pl, "train_task", lambda *a: pytest.fail("training started"))
    with pytest.raises(ConfigError, match="pupil"):
        run_experiment(cfg, tmp_path / "run")


def test_failure_keeps_finished_rows(cfg, tmp_path, monkeypatch):
    real = pl.train_task
    calls = []

    def flaky(task, *args):
        calls.append(task.tag)
        if len(calls) == 3:
            raise DivergedToNonFiniteError("loss became nan")
        return real(task, *args)

    monkeypatch.setattr(pl, "train_task", flaky)
    out = tmp_path / "run"
    with pytest.raises(ExperimentError, match="all__valence__W4__D0__T0.05"):
        run_experiment(cfg, out)
    rows = read_report(out / "report.csv")
    assert [r["dimension"] for r in rows] == ["arousal", "arousal", "arousal"]
    assert rows[-1]["partition"] == "test"


def test_threshold_that_drops_everything_gives_nan_rows(small_corpus, small_config, tmp_path):
    text = small_config.read_text().replace("mi_thresholds = [0.05]", "mi_thresholds = [0.05, 50.0]")
    small_config.write_text(text)
    rows = read_report(run_experiment(load_config(small_config), tmp_path / "run", deterministic=True))
    dropped = [r for r in rows if r["mi_threshold"] == "50"]
    assert len(dropped) == 4
    assert all(r["n_features"] == "0" and r["ccc"] == "nan" and r["partition"] == "validation" for r in dropped)
    assert sum(r["partition"] == "test" for r in rows) == 2


def test_only_huge_threshold_skips_test_pass(small_config, tmp_path):
    text = small_config.read_text().replace("mi_thresholds = [0.05]", "mi_thresholds = [50.0]")
    small_config.write_text(text)
    rows = read_report(run_experiment(load_config(small_config), tmp_path / "run"))
    assert len(rows) == 4 and not any(r["partition"] == "test" for r in rows)
    assert json.loads((tmp_path / "run" / "winners.json").read_text()) == []


def test_thresholds_with_identical_selection_share_a_model(small_config, tmp_path):
    text = small_config.read_text().replace("mi_thresholds = [0.05]", "mi_thresholds = [0.001, 0.002]")
    small_config.write_text(text)
    rows = read_report(run_experiment(load_config(small_config), tmp_path / "run", deterministic=True))
    val = [r for r in rows if r["partition"] == "validation"]
    pairs = {}
    for r in val:
        pairs.setdefault((r["dimension"], r["delay_s"]), []).append((r["n_features"], r["ccc"]))
    for got in pairs.values():
        if got[0][0] == got[1][0]:
            assert got[0] == got[1]


def test_extract_writes_one_matrix_per_subject(cfg, tmp_path):
    paths = extract_to_dir(cfg, tmp_path)
    subjects = [s for p in ("train", "validation", "test") for s in cfg.partition.subjects(p)]
    assert sorted(p.stem for p in paths) == sorted(subjects)
    m = read_feature_csv(paths[0])
    assert m.subject_id == paths[0].stem and m.plan.window_seconds == 4.0
    assert "ch00__static__mean" in m.columns and "ev00__static__ratio" in m.columns


def _explore_corpus(tmp_path, n_frames):
    spec = SynthSpec(n_train=2, n_validation=1, n_test=1, n_frames=n_frames, lag=0.0, n_continuous=4, n_binary=1, seed=9)
    root = generate_synthetic(spec, tmp_path)
    # replace the arousal track with an 8 s window mean of ch00, aligned to window ends
    for s in spec.subjects()["train"] + spec.subjects()["validation"]:
        rec = np.genfromtxt(root / "recordings" / f"{s}.csv", delimiter=",", names=True)
        x = rec["ch00"].copy()
        idx = np.arange(x.size)
        good = ~np.isnan(x)
        x[~good] = np.interp(idx[~good], idx[good], x[good])
        span = 200
        c = np.concatenate([[0.0], np.cumsum(x)])
        y = np.empty_like(x)
        y[span - 1 :] = (c[span:] - c[:-span]) / span
        y[: span - 1] = y[span - 1]
        y = y / 200.0  # one scale for every subject keeps annotations inside [-1, 1]
        ann = np.genfromtxt(root / "annotations" / f"{s}.csv", delimiter=",", names=True)
        with (root / "annotations" / f"{s}.csv").open("w") as fh:
            fh.write("frame,arousal,valence\n")
            for t in range(x.size):
                fh.write(f"{t},{float(y[t])!r},{float(ann['valence'][t])!r}\n")
    return root


def test_explore_ranks_the_source_channel_first(tmp_path):
    root = _explore_corpus(tmp_path, 1500)
    cfg = load_config(root / "experiment.toml")
    rows = read_report(explore_lld(cfg, tmp_path / "out"))
    n_static = 5  # four continuous means and one binary ratio
    assert len(rows) == n_static * len(cfg.sweep.dimensions)
    top = rows[0]
    assert top["rank"] == "1" and top["dimension"] == "arousal" and top["channel"] == "ch00"
    assert float(top["r"]) > 0.99


def test_explore_noise_channel_is_uncorrelated(tmp_path):
    rng = np.random.default_rng(0)
    root = generate_synthetic(
        SynthSpec(n_train=1, n_validation=1, n_test=1, n_frames=3000, lag=0.0, n_continuous=4, n_binary=1, seed=2), tmp_path
    )
    for s in ("S000", "S001"):
        with (root / "annotations" / f"{s}.csv").open("w") as fh:
            fh.write("frame,arousal,valence\n")
            for t, (a, v) in enumerate(rng.uniform(-1, 1, size=(3000, 2))):
                fh.write(f"{t},{float(a)!r},{float(v)!r}\n")
    text = (root / "experiment.toml").read_text().replace("[sweep]", "[explore]\nwindow_seconds = 0.12\n\n[sweep]")
    (root / "experiment.toml").write_text(text)
    rows = read_report(explore_lld(load_config(root / "experiment.toml"), tmp_path / "out"))
    assert int(rows[0]["n"]) >= 5000
    assert all(abs(float(r["r"])) <= 0.05 for r in rows)
