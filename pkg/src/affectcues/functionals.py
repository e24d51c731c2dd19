"""Sliding-window statistical functionals over LLD channels.

Each continuous channel yields 16 functionals on the static window and 16 on
its in-window lagged difference, plus wavelet band summaries; each binary
channel yields 5 event-run functionals.  Windows hop one frame and are
end-aligned, so row ``i`` summarizes frames ``i .. i + W - 1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numba
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import wavelet as wv
from .errors import NonBinaryValueError, SeriesTooShortError, WindowTooShortError
from .ingest import RecordingSeries

CONTINUOUS_FUNCTIONALS = (
    "min",
    "max",
    "mean",
    "median",
    "quartile1",
    "quartile3",
    "skewness",
    "kurtosis",
    "std",
    "iqr",
    "iqr_lower",
    "iqr_upper",
    "linreg_slope",
    "linreg_intercept",
    "rms",
    "zero_crossing_rate",
)
BINARY_FUNCTIONALS = ("ratio", "time_min", "time_mean", "time_max", "time_total")
VIEWS = ("static", "dynamic", "wavelet")

# Windows whose peak-to-peak range is below this fraction of their magnitude are
# treated as constant: higher moments, slope and zero crossings are reported as 0.
DEGENERATE_RTOL = 1e-12


def _type7(sorted_x: np.ndarray, p: float) -> np.ndarray:
    n = sorted_x.shape[-1]
    h = (n - 1) * p
    lo = int(math.floor(h))
    hi = min(lo + 1, n - 1)
    frac = h - lo
    return sorted_x[..., lo] + frac * (sorted_x[..., hi] - sorted_x[..., lo])


def continuous_functionals_batch(windows: np.ndarray, frame_rate: float) -> np.ndarray:
    """Row-wise :func:`continuous_functionals` for a ``(n_windows, W)`` array."""
    x = np.asarray(windows, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array of windows")
    W = x.shape[1]
    if W < 2:
        raise WindowTooShortError(f"window of {W} samples; need at least 2")

    s = np.sort(x, axis=1)
    mn, mx = s[:, 0], s[:, -1]
    q1, med, q3 = _type7(s, 0.25), _type7(s, 0.5), _type7(s, 0.75)
    mean = x.mean(axis=1)
    c = x - mean[:, None]
    c2 = c * c
    m2 = c2.mean(axis=1)
    m3 = np.einsum("ij,ij->i", c2, c) / W
    m4 = np.einsum("ij,ij->i", c2, c2) / W
    scale = np.maximum(np.abs(mn), np.abs(mx))
    # a tiny spread can underflow the variance (or its square) even when the window is not constant
    degenerate = ((mx - mn) <= DEGENERATE_RTOL * scale) | (m2 < np.sqrt(np.finfo(float).tiny))
    safe_m2 = np.where(degenerate, 1.0, m2)
    skew = np.where(degenerate, 0.0, m3 / safe_m2**1.5)
    kurt = np.where(degenerate, 0.0, m4 / safe_m2**2 - 3.0)
    std = np.where(degenerate, 0.0, np.sqrt(m2))

    t = np.arange(W) / frame_rate
    tc = t - t.mean()
    slope = np.where(degenerate, 0.0, (c @ tc) / (tc @ tc))
    intercept = mean - slope * t.mean()

    rms = np.sqrt(np.einsum("ij,ij->i", x, x) / W)
    crossings = np.count_nonzero(c[:, 1:] * c[:, :-1] < 0, axis=1)
    zcr = np.where(degenerate, 0.0, crossings / (W - 1))

    return np.column_stack(
        [mn, mx, mean, med, q1, q3, skew, kurt, std, q3 - q1, med - q1, q3 - med, slope, intercept, rms, zcr]
    )


def continuous_functionals(window, frame_rate: float) -> np.ndarray:
    """The 16 continuous functionals of one window, in ``CONTINUOUS_FUNCTIONALS`` order.

    Moments are population moments (skewness g1, excess kurtosis g2),
    quartiles interpolate linearly between order statistics, the regression
    slope is in units per second against time from the window start, and the
    zero-crossing rate counts strict sign changes of the mean-centered
    samples divided by ``W - 1``.
    """
    w = np.asarray(window, dtype=float)
    if w.ndim != 1:
        raise ValueError("expected a 1-D window")
    return continuous_functionals_batch(w[None, :], frame_rate)[0]


@numba.njit(cache=True)
def _binary_batch(x, frame_rate):
    n, W = x.shape
    out = np.zeros((n, 5))
    for r in range(n):
        ones = 0
        runs = 0
        run = 0
        shortest = W + 1
        longest = 0
        for i in range(W + 1):
            if i < W and x[r, i] == 1.0:
                ones += 1
                run += 1
            elif run > 0:
                runs += 1
                shortest = min(shortest, run)
                longest = max(longest, run)
                run = 0
        out[r, 0] = ones / W
        if runs > 0:
            out[r, 1] = shortest / frame_rate
            out[r, 2] = ones / runs / frame_rate
            out[r, 3] = longest / frame_rate
            out[r, 4] = ones / frame_rate
    return out


def binary_functionals_batch(windows: np.ndarray, frame_rate: float) -> np.ndarray:
    x = np.ascontiguousarray(windows, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array of windows")
    if x.shape[1] < 2:
        raise WindowTooShortError(f"window of {x.shape[1]} samples; need at least 2")
    if not np.all((x == 0) | (x == 1)):
        raise NonBinaryValueError("binary functionals need 0/1 values")
    return _binary_batch(x, float(frame_rate))


def binary_functionals(window, frame_rate: float) -> np.ndarray:
    """ratio of ones, then min/mean/max/total duration (s) of the runs of ones."""
    w = np.asarray(window, dtype=float)
    return binary_functionals_batch(w[None, :], frame_rate)[0]


@dataclass(frozen=True)
class WindowPlan:
    window_seconds: float
    frame_rate: int = 25
    hop_frames: int = 1

    def __post_init__(self):
        if self.hop_frames != 1:
            raise ValueError("only a hop of 1 frame is supported")
        frames = self.window_seconds * self.frame_rate
        if abs(frames - round(frames)) > 1e-9:
            raise ValueError(f"{self.window_seconds} s is not a whole number of frames at {self.frame_rate} fps")
        if round(frames) < 2:
            raise WindowTooShortError("window must span at least 2 frames")

    @property
    def window_frames(self) -> int:
        return int(round(self.window_seconds * self.frame_rate))

    def n_rows(self, n_frames: int) -> int:
        return n_frames - self.window_frames + 1


@dataclass(frozen=True)
class FeatureProvenance:
    channel: str
    view: str
    functional: str

    @property
    def column(self) -> str:
        return f"{self.channel}__{self.view}__{self.functional}"


@dataclass
class WindowedFeatureMatrix:
    subject_id: str
    plan: WindowPlan
    values: np.ndarray
    provenance: list[FeatureProvenance]
    end_frames: np.ndarray
    columns: list[str] = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.end_frames = np.asarray(self.end_frames, dtype=int)
        self.columns = [p.column for p in self.provenance]
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("duplicate feature column names")
        if self.values.shape != (self.end_frames.size, len(self.columns)):
            raise ValueError(f"values shape {self.values.shape} inconsistent with rows/columns")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def select_columns(self, names: Sequence[str]) -> "WindowedFeatureMatrix":
        pos = {c: i for i, c in enumerate(self.columns)}
        idx = [pos[n] for n in names]
        return replace(
            self, values=self.values[:, idx], provenance=[self.provenance[i] for i in idx]
        )

    def select_channels(self, channels: Sequence[str]) -> "WindowedFeatureMatrix":
        keep = set(channels)
        return self.select_columns([p.column for p in self.provenance if p.channel in keep])

    def head(self, n_rows: int) -> "WindowedFeatureMatrix":
        return replace(self, values=self.values[:n_rows], end_frames=self.end_frames[:n_rows])

    def to_csv(self, path: str | Path) -> Path:
        """CSV with a ``#``-prefixed provenance header block above the data header."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(f"# subject_id={self.subject_id}\n")
            fh.write(f"# window_seconds={self.plan.window_seconds!r}\n")
            fh.write(f"# frame_rate={self.plan.frame_rate}\n")
            fh.write(f"# hop_frames={self.plan.hop_frames}\n")
            for attr in ("channel", "view", "functional"):
                fh.write(f"# {attr}," + ",".join(getattr(p, attr) for p in self.provenance) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["end_frame", *self.columns])
            for frame, row in zip(self.end_frames, self.values):
                writer.writerow([int(frame), *map(repr, row.tolist())])
        return path


def read_feature_csv(path: str | Path) -> WindowedFeatureMatrix:
    meta: dict[str, str] = {}
    prov: dict[str, list[str]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body_start = 0
    for body_start, line in enumerate(lines):
        if not line.startswith("# "):
            break
        item = line[2:]
        if "=" in item and "," not in item.split("=", 1)[0]:
            key, value = item.split("=", 1)
            meta[key] = value
        else:
            key, *vals = item.split(",")
            prov[key] = vals
    rows = list(csv.reader(lines[body_start + 1 :]))
    plan = WindowPlan(float(meta["window_seconds"]), int(meta["frame_rate"]), int(meta["hop_frames"]))
    provenance = [FeatureProvenance(*t) for t in zip(prov["channel"], prov["view"], prov["functional"])]
    data = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), len(provenance))
    frames = np.array([int(r[0]) for r in rows], dtype=int)
    return WindowedFeatureMatrix(meta["subject_id"], plan, data, provenance, frames)


@dataclass(frozen=True)
class WaveletConfig:
    enabled: bool = True
    order: int = wv.DEFAULT_ORDER
    levels: int | None = None  # None: as many as the window allows


def extract_features(
    series: RecordingSeries,
    plan: WindowPlan,
    wavelet_cfg: WaveletConfig | None = WaveletConfig(),
    channels: Sequence[str] | None = None,
) -> WindowedFeatureMatrix:
    if plan.frame_rate != series.frame_rate:
        raise ValueError(f"plan is at {plan.frame_rate} fps, series at {series.frame_rate} fps")
    W = plan.window_frames
    if series.n_frames < W:
        raise SeriesTooShortError(f"{series.subject_id}: {series.n_frames} frames < window of {W}")
    if W < 3:
        raise WindowTooShortError("the lagged-difference view needs windows of at least 3 frames")
    names = list(channels) if channels is not None else series.names

    levels = 0
    wavelet = None
    if wavelet_cfg is not None and wavelet_cfg.enabled:
        wavelet = wv.daubechies(wavelet_cfg.order)
        if W >= wavelet.filter_length:
            allowed = wv.max_levels(W, wavelet.filter_length)
            levels = allowed if wavelet_cfg.levels is None else wavelet_cfg.levels
        if levels < 1:
            wavelet = None

    blocks, provenance = [], []
    fps = series.frame_rate
    for name in names:
        x = series.channel(name)
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{series.subject_id}: channel {name!r} has non-finite values; repair first")
        win = sliding_window_view(x, W)
        if series.spec(name).is_binary:
            blocks.append(binary_functionals_batch(win, fps))
            provenance += [FeatureProvenance(name, "static", f) for f in BINARY_FUNCTIONALS]
            continue
        blocks.append(continuous_functionals_batch(win, fps))
        provenance += [FeatureProvenance(name, "static", f) for f in CONTINUOUS_FUNCTIONALS]
        blocks.append(continuous_functionals_batch(sliding_window_view(np.diff(x), W - 1), fps))
        provenance += [FeatureProvenance(name, "dynamic", f) for f in CONTINUOUS_FUNCTIONALS]
        if wavelet is not None:
            blocks.append(wv.band_features(wv.dwt(win, levels, wavelet)))
            provenance += [FeatureProvenance(name, "wavelet", f) for f in wv.band_feature_names(levels)]

    n_rows = plan.n_rows(series.n_frames)
    values = np.column_stack(blocks) if blocks else np.zeros((n_rows, 0))
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{series.subject_id}: non-finite feature values")
    return WindowedFeatureMatrix(series.subject_id, plan, values, provenance, np.arange(W - 1, series.n_frames))
