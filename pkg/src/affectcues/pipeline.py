"""End-to-end experiment wiring: ingest, features, exploration and the sweep.

The sweep runs, per (modality set, dimension) block, every combination of
window size, delay and MI threshold: shift, select on training pairs,
standardize, train, then score on validation.  Only the block winner is
scored on the test partition.  Report rows are appended as they complete so
a crash keeps everything finished so far.
"""

from __future__ import annotations

import contextlib
import csv
import json
import logging
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import model as mdl
from .alignment import fit_on_pairs, shift_labels
from .config import ExperimentConfig, validate_channels
from .errors import AffectCuesError, AllFeaturesDroppedError, ConstantInputError, ExperimentError
from .functionals import WindowedFeatureMatrix, WindowPlan, extract_features
from .ingest import (
    AnnotationTrack,
    RecordingSeries,
    parse_annotation_csv,
    parse_tracker_csv,
    repair_missing,
)
from .lld import derive_llds
from .metrics import ccc, pearson
from .selection import MiReport, mutual_information

log = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "system",
    "dimension",
    "partition",
    "window_s",
    "delay_s",
    "mi_threshold",
    "n_features",
    "sse",
    "ccc",
)


# ---------------------------------------------------------------- corpus
@dataclass
class Corpus:
    series: dict[str, RecordingSeries]
    labels: dict[tuple[str, str], AnnotationTrack]

    def channels(self) -> list[str]:
        return next(iter(self.series.values())).names


def load_recording(cfg: ExperimentConfig, subject: str) -> RecordingSeries:
    d = cfg.data
    raw = parse_tracker_csv(
        d.recording_path(subject),
        d.mapping(),
        subject_id=subject,
        frame_rate=d.frame_rate,
        confidence_column=d.confidence_column,
    )
    repaired = repair_missing(raw, d.max_gap, confidence_threshold=d.confidence_threshold)
    return derive_llds(repaired, cfg.lld)


def load_corpus(
    cfg: ExperimentConfig, subjects: list[str] | None = None, dimensions: list[str] | None = None
) -> Corpus:
    subjects = list(subjects or cfg.partition.all_subjects)
    dimensions = list(dimensions or cfg.sweep.dimensions)
    series, labels = {}, {}
    for s in subjects:
        series[s] = load_recording(cfg, s)
        for dim in dimensions:
            labels[(s, dim)] = parse_annotation_csv(
                cfg.data.annotation_path(s),
                dim,
                subject_id=s,
                column=cfg.data.annotation_columns.get(dim),
            )
    names = {tuple(x.names) for x in series.values()}
    if len(names) != 1:
        raise ExperimentError("recordings disagree on their channel lists")
    validate_channels(cfg, list(next(iter(names))))
    return Corpus(series, labels)


def sweep_channels(cfg: ExperimentConfig) -> list[str]:
    out: list[str] = []
    for name in cfg.modality_sets:
        out += [c for c in cfg.set_channels(name) if c not in out]
    return out


def extract_corpus(
    cfg: ExperimentConfig, corpus: Corpus, plan: WindowPlan, channels: list[str] | None = None
) -> dict[str, WindowedFeatureMatrix]:
    return {s: extract_features(x, plan, cfg.wavelet, channels) for s, x in corpus.series.items()}


def extract_to_dir(cfg: ExperimentConfig, out: Path) -> list[Path]:
    """Write one feature CSV per subject and window size under ``out/features``."""
    corpus = load_corpus(cfg, dimensions=[])
    channels = sweep_channels(cfg) if cfg.groups else None
    written = []
    for plan in cfg.plans():
        for s, m in extract_corpus(cfg, corpus, plan, channels).items():
            written.append(m.to_csv(out / "features" / f"W{plan.window_seconds:g}" / f"{s}.csv"))
    return written


# ---------------------------------------------------------------- exploration
EXPLORE_COLUMNS = ("rank", "dimension", "feature", "channel", "r", "n")


def explore_lld(cfg: ExperimentConfig, out: Path) -> Path:
    """Rank every windowed-mean LLD feature by |Pearson r| against each shifted target.

    Continuous channels contribute their static mean, binary channels their
    active ratio (the windowed mean of a 0/1 signal).
    """
    ex = cfg.explore
    subjects = [s for p in ex.partitions for s in cfg.partition.subjects(p)]
    corpus = load_corpus(cfg, subjects)
    plan = WindowPlan(ex.window_seconds, cfg.data.frame_rate)
    feats = extract_corpus(cfg, corpus, plan)
    wanted = [
        c for c in feats[subjects[0]].provenance if c.view == "static" and c.functional in ("mean", "ratio")
    ]
    cols = [p.column for p in wanted]
    rows = []
    for dim in cfg.sweep.dimensions:
        pairs = [shift_labels(feats[s].select_columns(cols), corpus.labels[(s, dim)], ex.delay) for s in subjects]
        x = np.concatenate([m.values for m, _ in pairs])
        y = np.concatenate([t for _, t in pairs])
        scored = []
        for j, p in enumerate(wanted):
            try:
                r = pearson(x[:, j], y)
            except ConstantInputError:
                r = float("nan")
            scored.append((p, r))
        scored.sort(key=lambda pr: -abs(pr[1]) if np.isfinite(pr[1]) else np.inf)
        for rank, (p, r) in enumerate(scored, start=1):
            rows.append([rank, dim, p.column, p.channel, repr(float(r)), y.size])
    path = out / "explore.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EXPLORE_COLUMNS)
        w.writerows(rows)
    return path


# ---------------------------------------------------------------- sweep
@dataclass(frozen=True)
class Task:
    system: str
    dimension: str
    window_s: float
    delay_s: float
    threshold: float
    columns: tuple[str, ...]

    @property
    def tag(self) -> str:
        return f"{self.system}__{self.dimension}__W{self.window_s:g}__D{self.delay_s:g}__T{self.threshold:g}"


@dataclass
class TaskResult:
    task: Task
    sse: float
    ccc: float
    params: mdl.ModelParameters | None
    log: mdl.TrainLog | None
    seconds: float

    @property
    def n_features(self) -> int:
        return len(self.task.columns)


# Shared with worker processes through fork; see _run_tasks.
_STATE: dict = {}


def _pairs(task: Task, subjects, partition_feats, labels):
    return [
        shift_labels(partition_feats[s].select_columns(task.columns), labels[(s, task.dimension)], task.delay_s)
        for s in subjects
    ]


def _score(params: mdl.ModelParameters, pairs) -> tuple[float, float]:
    preds = [mdl.predict(params, m.values) for m, _ in pairs]
    p = np.concatenate(preds)
    t = np.concatenate([y for _, y in pairs])
    r = p - t
    return float(r @ r), ccc(p, t)


def train_task(task: Task, cfg: ExperimentConfig, feats, labels) -> TaskResult:
    """Shift, standardize, train and score one configuration tuple on validation."""
    t0 = time.perf_counter()
    train = _pairs(task, cfg.partition.train, feats, labels)
    val = _pairs(task, cfg.partition.validation, feats, labels)
    st = fit_on_pairs(train)
    tr = [(st.apply(m.values), st.transform_target(y)) for m, y in train]
    va = [(st.apply(m.values), st.transform_target(y)) for m, y in val]
    params, tlog = mdl.train(cfg.model_config(len(task.columns)), tr, va)
    params.standardizer = st
    params.feature_columns = list(task.columns)
    sse, c = _score(params, val)
    return TaskResult(task, sse, c, params, tlog, time.perf_counter() - t0)


def _worker(task: Task) -> TaskResult:
    s = _STATE
    ctx = threadpool_limits(1) if s["deterministic"] else contextlib.nullcontext()
    with ctx:
        try:
            return train_task(task, s["cfg"], s["feats"][task.window_s], s["labels"])
        except AffectCuesError as exc:
            raise ExperimentError(f"{task.tag}: {exc}") from exc


def _run_tasks(tasks: list[Task], jobs: int):
    """Yield results in task order, training in worker processes when jobs > 1."""
    if jobs <= 1 or len(tasks) <= 1:
        for t in tasks:
            yield _worker(t)
        return
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
        yield from pool.map(_worker, tasks)


def _fmt(v: float) -> str:
    return repr(float(v))


class ReportWriter:
    """Appends rows to the report CSV, flushing each one."""

    def __init__(self, path: Path):
        self.path = path
        path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = path.open("w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(REPORT_COLUMNS)
        self._fh.flush()

    def row(self, task: Task, partition: str, n_features: int, sse: float, c: float) -> None:
        self._w.writerow(
            [
                task.system,
                task.dimension,
                partition,
                f"{task.window_s:g}",
                f"{task.delay_s:g}",
                f"{task.threshold:g}",
                n_features,
                _fmt(sse),
                _fmt(c),
            ]
        )
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_report(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _mi_report(cfg, system, dim, plan, delay, feats, labels, columns) -> MiReport:
    """MI of each column against the shifted target, on strided training rows."""
    stride = cfg.selection.stride
    xs, ys = [], []
    for s in cfg.partition.train:
        m, y = shift_labels(feats[s].select_columns(columns), labels[(s, dim)], delay)
        xs.append(m.values[::stride])
        ys.append(y[::stride])
    try:
        return mutual_information(
            np.concatenate(xs),
            columns,
            np.concatenate(ys),
            k=cfg.selection.k,
            seed=cfg.selection.seed,
            threshold=min(cfg.sweep.mi_thresholds),
        )
    except AffectCuesError as exc:
        raise ExperimentError(f"MI for {system}/{dim}/W={plan.window_seconds:g}/D={delay:g}: {exc}") from exc


def run_experiment(
    cfg: ExperimentConfig, out: Path | None = None, *, jobs: int = 1, deterministic: bool = False
) -> Path:
    """Run the full sweep and return the report CSV path."""
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    limits = threadpool_limits(1) if deterministic else contextlib.nullcontext()
    with limits:
        return _run(cfg, out, jobs, deterministic)


def _run(cfg: ExperimentConfig, out: Path, jobs: int, deterministic: bool) -> Path:
    t_start = time.perf_counter()
    corpus = load_corpus(cfg)
    channels = sweep_channels(cfg)
    feats: dict[float, dict[str, WindowedFeatureMatrix]] = {}
    for plan in cfg.plans():
        feats[plan.window_seconds] = extract_corpus(cfg, corpus, plan, channels)
        log.info("extracted W=%gs features (%.1fs elapsed)", plan.window_seconds, time.perf_counter() - t_start)
    _STATE.update(cfg=cfg, feats=feats, labels=corpus.labels, deterministic=deterministic)

    report = ReportWriter(out / "report.csv")
    train_log = (out / "training.jsonl").open("w", encoding="utf-8")
    winners = []
    try:
        for system in cfg.modality_sets:
            set_chans = cfg.set_channels(system)
            for dim in cfg.sweep.dimensions:
                tasks = []
                for plan in cfg.plans():
                    w = plan.window_seconds
                    sample = feats[w][cfg.partition.train[0]].select_channels(set_chans)
                    for d in cfg.sweep.delays:
                        mi = _mi_report(cfg, system, dim, plan, d, feats[w], corpus.labels, sample.columns)
                        mi.to_csv(out / "mi" / f"{system}__{dim}__W{w:g}__D{d:g}.csv")
                        for thr in cfg.sweep.mi_thresholds:
                            tasks.append(Task(system, dim, w, d, thr, tuple(mi.at(thr).kept)))

                best: TaskResult | None = None
                for r in _train_all(tasks, jobs):
                    key = r.task
                    if r.params is None:
                        log.warning("%s: %s, no model trained", key.tag, AllFeaturesDroppedError.__name__)
                        report.row(key, "validation", 0, r.sse, r.ccc)
                        continue
                    report.row(key, "validation", r.n_features, r.sse, r.ccc)
                    mdl.save(r.params, out / "models" / f"{key.tag}.npz", {"validation_ccc": r.ccc})
                    train_log.write(json.dumps({"tag": key.tag, **r.log.to_dict()}, sort_keys=True) + "\n")
                    train_log.flush()
                    if best is None or r.ccc > best.ccc:
                        best = r
                if best is None:
                    log.warning("%s/%s: no configuration kept any feature; no test pass", system, dim)
                    continue
                t = best.task
                test_pairs = _pairs(t, cfg.partition.test, feats[t.window_s], corpus.labels)
                sse, c = _score(best.params, test_pairs)
                report.row(t, "test", best.n_features, sse, c)
                winners.append({"tag": t.tag, "validation_ccc": best.ccc, "test_ccc": c})
                log.info("%s/%s winner %s: validation CCC %.4f, test CCC %.4f", system, dim, t.tag, best.ccc, c)
    finally:
        report.close()
        train_log.close()
    (out / "winners.json").write_text(json.dumps(winners, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("sweep finished in %.1fs", time.perf_counter() - t_start)
    return report.path


def _train_all(tasks: list[Task], jobs: int):
    """Yield one result per task, in order.

    A task whose threshold kept no column yields a NaN result without a
    model.  Thresholds that keep identical columns share one trained model,
    which is exact because training is deterministic.
    """
    unique: dict[tuple, Task] = {}
    for t in tasks:
        if t.columns:
            unique.setdefault((t.window_s, t.delay_s, t.columns), t)
    stream = _run_tasks(list(unique.values()), jobs)
    trained: dict[tuple, TaskResult] = {}
    nan = float("nan")
    for t in tasks:
        if not t.columns:
            yield TaskResult(t, nan, nan, None, None, 0.0)
            continue
        key = (t.window_s, t.delay_s, t.columns)
        while key not in trained:
            r = next(stream)
            trained[(r.task.window_s, r.task.delay_s, r.task.columns)] = r
            log.info("%s: validation CCC %.4f (%d features, %.1fs)", r.task.tag, r.ccc, r.n_features, r.seconds)
        r = trained[key]
        yield TaskResult(t, r.sse, r.ccc, r.params, r.log, r.seconds)
