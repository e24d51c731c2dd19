"""Mutual-information filtering of feature columns against the regression target."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

from .errors import AllFeaturesDroppedError, LengthMismatchError, TooFewSamplesError
from .functionals import WindowedFeatureMatrix

DEFAULT_K = 3
DEFAULT_SEED = 1787452436
JITTER = 1e-10
MIN_SAMPLES = 50
DEFAULT_THRESHOLDS = (0.1, 0.15, 0.2)


def _jittered(v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance copy of ``v`` with a tiny deterministic jitter to break distance ties."""
    sd = v.std()
    out = v / sd if sd > 0 else v.copy()
    return out + JITTER * rng.standard_normal(v.size)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _count_within(tree: cKDTree, points: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Neighbors strictly closer than ``radius`` (the point itself included)."""
    r = np.nextafter(radius, 0)
    return tree.query_ball_point(points, r, p=np.inf, return_length=True)


def _mi_continuous(x: np.ndarray, y: np.ndarray, y_tree: cKDTree, k: int) -> float:
    n = x.size
    joint = np.column_stack([x, y])
    eps = cKDTree(joint).query(joint, k=k + 1, p=np.inf)[0][:, -1]
    nx = _count_within(cKDTree(x[:, None]), x[:, None], eps) - 1
    ny = _count_within(y_tree, y[:, None], eps) - 1
    return digamma(n) + digamma(k) - np.mean(digamma(nx + 1) + digamma(ny + 1))


def _mi_discrete(labels: np.ndarray, y: np.ndarray, y_tree: cKDTree, k: int) -> float:
    n = labels.size
    radius = np.zeros(n)
    k_used = np.zeros(n)
    class_size = np.zeros(n)
    for value in np.unique(labels):
        members = labels == value
        count = int(members.sum())
        if count < 2:
            continue
        kk = min(k, count - 1)
        pts = y[members][:, None]
        radius[members] = cKDTree(pts).query(pts, k=kk + 1, p=np.inf)[0][:, -1]
        k_used[members] = kk
        class_size[members] = count
    ok = class_size > 1
    if not ok.any():
        return 0.0
    m = _count_within(y_tree, y[ok][:, None], radius[ok])
    return digamma(ok.sum()) + np.mean(digamma(k_used[ok])) - np.mean(digamma(class_size[ok])) - np.mean(digamma(m))


def _is_binary(v: np.ndarray) -> bool:
    return bool(np.all((v == 0) | (v == 1)))


class MIEstimator:
    """Kraskov kNN mutual information (nats) of many features against one target.

    The target's neighbor tree is built once and reused for every column.
    Columns holding only 0/1 values use the discrete-continuous estimator.
    """

    def __init__(self, target, k: int = DEFAULT_K, seed: int = DEFAULT_SEED):
        y = np.asarray(target, dtype=float).ravel()
        if y.size < MIN_SAMPLES:
            raise TooFewSamplesError(f"need at least {MIN_SAMPLES} samples, got {y.size}")
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.seed = seed
        self.n = y.size
        self.y = _jittered(y, _rng(seed))
        self.y_tree = cKDTree(self.y[:, None])

    def __call__(self, feature) -> float:
        x = np.asarray(feature, dtype=float).ravel()
        if x.size != self.n:
            raise LengthMismatchError(f"feature has {x.size} samples, target has {self.n}")
        if _is_binary(x):
            mi = _mi_discrete(x, self.y, self.y_tree, self.k)
        else:
            x = _jittered(x, _rng(self.seed + 1))
            mi = _mi_continuous(x, self.y, self.y_tree, self.k)
        return max(0.0, float(mi))


def estimate_mi(feature, target, k: int = DEFAULT_K, seed: int = DEFAULT_SEED) -> float:
    f = np.asarray(feature).ravel()
    t = np.asarray(target).ravel()
    if f.size != t.size:
        raise LengthMismatchError(f"lengths differ: {f.size} vs {t.size}")
    return MIEstimator(t, k, seed)(f)


@dataclass
class MiReport:
    columns: list[str]
    mi: np.ndarray
    threshold: float
    k: int = DEFAULT_K
    kept: list[str] = field(init=False)
    dropped: list[str] = field(init=False)

    def __post_init__(self):
        self.mi = np.asarray(self.mi, dtype=float)
        keep = self.mi >= self.threshold
        self.kept = [c for c, m in zip(self.columns, keep) if m]
        self.dropped = [c for c, m in zip(self.columns, keep) if not m]

    def at(self, threshold: float) -> "MiReport":
        return MiReport(self.columns, self.mi, threshold, self.k)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        kept = set(self.kept)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["feature", "mi", "kept"])
            for c, m in zip(self.columns, self.mi):
                w.writerow([c, repr(float(m)), int(c in kept)])
        return path


def read_mi_report(path: str | Path, threshold: float, k: int = DEFAULT_K) -> MiReport:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return MiReport([r["feature"] for r in rows], [float(r["mi"]) for r in rows], threshold, k)


def mutual_information(
    values: np.ndarray,
    columns: Sequence[str],
    target,
    *,
    k: int = DEFAULT_K,
    seed: int = DEFAULT_SEED,
    threshold: float = DEFAULT_THRESHOLDS[0],
) -> MiReport:
    """Per-column MI of a (rows x columns) array against ``target``."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != np.size(target):
        raise LengthMismatchError(f"{values.shape[0]} rows vs {np.size(target)} targets")
    est = MIEstimator(target, k, seed)
    mi = np.array([est(values[:, j]) for j in range(values.shape[1])])
    return MiReport(list(columns), mi, threshold, k)


def check_threshold(threshold: float) -> None:
    if not threshold > 0:
        raise ValueError(f"MI threshold must be positive, got {threshold}")


def filter_features(
    matrix: WindowedFeatureMatrix,
    target,
    threshold: float,
    *,
    k: int = DEFAULT_K,
    seed: int = DEFAULT_SEED,
    report: MiReport | None = None,
) -> tuple[WindowedFeatureMatrix, MiReport]:
    """Drop every column whose MI with ``target`` is below ``threshold``.

    ``matrix`` and ``target`` must already be paired (after the label shift)
    and come from the training partition.  A precomputed ``report`` for the
    same inputs can be passed to re-threshold without re-estimating.
    """
    check_threshold(threshold)
    if report is None:
        report = mutual_information(matrix.values, matrix.columns, target, k=k, seed=seed, threshold=threshold)
    else:
        report = report.at(threshold)
    if not report.kept:
        raise AllFeaturesDroppedError(
            f"no feature reaches MI {threshold} (max {report.mi.max(initial=0.0):.4f} nats)"
        )
    return matrix.select_columns(report.kept), report
