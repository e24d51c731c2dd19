"""Annotation delay compensation and z-standardization fitted on training data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ColumnCountMismatchError,
    DelayNotFrameAlignedError,
    LengthMismatchError,
    TooFewRowsError,
)
from .functionals import WindowedFeatureMatrix
from .ingest import AnnotationTrack

DEGENERATE_STD = 1e-12


def default_delays(max_delay: float = 4.4, step: float = 0.2) -> list[float]:
    n = int(round(max_delay / step))
    return [round(i * step, 10) for i in range(n + 1)]


def delay_frames(delay: float, frame_rate: int) -> int:
    k = delay * frame_rate
    if delay < 0 or abs(k - round(k)) > 1e-9:
        raise DelayNotFrameAlignedError(f"delay {delay} s is {k} frames at {frame_rate} fps")
    return int(round(k))


@dataclass(frozen=True)
class ShiftGrid:
    delays: tuple[float, ...] = tuple(default_delays())

    def validate(self, frame_rate: int) -> list[int]:
        frames = [delay_frames(d, frame_rate) for d in self.delays]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError("delays must be strictly increasing")
        return frames


def shift_labels(
    features: WindowedFeatureMatrix, labels: AnnotationTrack | np.ndarray, delay: float
) -> tuple[WindowedFeatureMatrix, np.ndarray]:
    """Pair the feature row ending at frame t with the label at frame t + k.

    k is ``delay`` in frames.  The last k rows have no label and are dropped.
    """
    values = labels.values if isinstance(labels, AnnotationTrack) else np.asarray(labels, dtype=float)
    k = delay_frames(delay, features.plan.frame_rate)
    n_pairs = features.n_rows - k
    if n_pairs < 1:
        raise TooFewRowsError(f"delay of {k} frames leaves no rows out of {features.n_rows}")
    label_idx = features.end_frames[:n_pairs] + k
    if label_idx[-1] >= values.size:
        raise LengthMismatchError(
            f"annotation has {values.size} frames, features end at frame {features.end_frames[-1]}"
        )
    return features.head(n_pairs), values[label_idx]


@dataclass
class Standardizer:
    feature_mean: np.ndarray
    feature_std: np.ndarray
    target_mean: float
    target_std: float

    @property
    def degenerate(self) -> np.ndarray:
        return self.feature_std < DEGENERATE_STD

    def apply(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=float)
        if x.shape[-1] != self.feature_mean.size:
            raise ColumnCountMismatchError(
                f"{x.shape[-1]} columns, standardizer fitted on {self.feature_mean.size}"
            )
        safe = np.where(self.degenerate, 1.0, self.feature_std)
        z = (x - self.feature_mean) / safe
        z[..., self.degenerate] = 0.0
        return z

    def transform_target(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.target_std < DEGENERATE_STD:
            return np.zeros_like(y)
        return (y - self.target_mean) / self.target_std

    def invert_target(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.target_std < DEGENERATE_STD:
            return np.full_like(z, self.target_mean)
        return z * self.target_std + self.target_mean

    def to_arrays(self, prefix: str = "std_") -> dict[str, np.ndarray]:
        return {
            f"{prefix}feature_mean": self.feature_mean,
            f"{prefix}feature_std": self.feature_std,
            f"{prefix}target": np.array([self.target_mean, self.target_std]),
        }

    @classmethod
    def from_arrays(cls, arrays, prefix: str = "std_") -> "Standardizer":
        t = np.asarray(arrays[f"{prefix}target"])
        return cls(
            np.asarray(arrays[f"{prefix}feature_mean"]),
            np.asarray(arrays[f"{prefix}feature_std"]),
            float(t[0]),
            float(t[1]),
        )


def fit_standardizer(train_features, train_labels) -> Standardizer:
    """Population mean/std per feature column and for the target."""
    x = np.asarray(train_features, dtype=float)
    y = np.asarray(train_labels, dtype=float).ravel()
    if x.ndim != 2:
        raise ValueError("train_features must be 2-D")
    if x.shape[0] != y.size:
        raise LengthMismatchError(f"{x.shape[0]} feature rows vs {y.size} labels")
    if x.shape[0] < 2:
        raise TooFewRowsError("need at least 2 training rows")
    return Standardizer(x.mean(axis=0), x.std(axis=0), float(y.mean()), float(y.std()))


def fit_on_pairs(pairs: Sequence[tuple[WindowedFeatureMatrix, np.ndarray]]) -> Standardizer:
    return fit_standardizer(
        np.concatenate([f.values for f, _ in pairs]), np.concatenate([y for _, y in pairs])
    )

