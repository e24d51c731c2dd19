"""Derived low-level descriptors: frame-wise deltas and binary event channels.

All derived channels are 0 at the first frame, and ties between consecutive
frames never set an event.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BinaryChannelNotAllowedError, LengthMismatchError, NonBinaryValueError
from .ingest import ChannelSpec, RecordingSeries

DEFAULT_FIXATION_THRESHOLD = 0.02  # rad/frame

EVENT_NAMES = ("eye_fixation", "gaze_approach", "direct_gaze", "pupil_dilation", "pupil_constriction")


@dataclass
class DerivedChannelSet:
    deltas: dict[str, np.ndarray] = field(default_factory=dict)
    events: dict[str, np.ndarray] = field(default_factory=dict)

    def specs_and_columns(self, units: dict[str, str] | None = None):
        units = units or {}
        specs, cols = [], []
        for name, values in self.deltas.items():
            specs.append(ChannelSpec(delta_name(name), "continuous", units.get(name, "")))
            cols.append(values)
        for name, values in self.events.items():
            specs.append(ChannelSpec(name, "binary", "logical"))
            cols.append(values)
        return specs, cols


def delta_name(channel: str) -> str:
    return f"{channel}_delta"


def _lagged_diff(values: np.ndarray) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    out[1:] = np.diff(values)
    return out


def compute_deltas(series: RecordingSeries, channels: Sequence[str]) -> DerivedChannelSet:
    """delta[t] = value[t] - value[t-1], with delta[0] = 0."""
    derived = DerivedChannelSet()
    for name in channels:
        if series.spec(name).is_binary:
            raise BinaryChannelNotAllowedError(f"cannot take deltas of binary channel {name!r}")
        derived.deltas[name] = _lagged_diff(series.channel(name))
    return derived


def pupil_events(pupil_diameter) -> tuple[np.ndarray, np.ndarray]:
    """Dilation/constriction flags from frame-to-frame pupil diameter change."""
    d = np.asarray(pupil_diameter, dtype=float)
    if d.ndim != 1 or d.size < 1:
        raise LengthMismatchError("pupil series must be a non-empty 1-D sequence")
    step = _lagged_diff(d)
    return (step > 0).astype(float), (step < 0).astype(float)


def gaze_events(
    gaze_x,
    gaze_y,
    gaze_distance,
    fixation_threshold: float = DEFAULT_FIXATION_THRESHOLD,
) -> tuple[np.ndarray, np.ndarray]:
    """Eye fixation and gaze approach flags.

    A frame is a fixation when the angular gaze displacement since the
    previous frame is below ``fixation_threshold``; it is an approach when
    the gaze distance strictly decreases.
    """
    gx, gy, dist = (np.asarray(a, dtype=float) for a in (gaze_x, gaze_y, gaze_distance))
    if not (gx.shape == gy.shape == dist.shape) or gx.ndim != 1:
        raise LengthMismatchError("gaze_x, gaze_y and gaze_distance must have equal lengths")
    if fixation_threshold <= 0:
        raise ValueError("fixation_threshold must be positive")
    motion = np.hypot(_lagged_diff(gx), _lagged_diff(gy))
    fixation = (motion < fixation_threshold).astype(float)
    fixation[:1] = 0.0
    approach = (_lagged_diff(dist) < 0).astype(float)
    return fixation, approach


def attach_direct_gaze(series: RecordingSeries, annotation_column, name: str = "direct_gaze") -> RecordingSeries:
    values = np.asarray(annotation_column, dtype=float)
    if values.shape != (series.n_frames,):
        raise LengthMismatchError(
            f"direct-gaze annotation has {values.size} frames, series has {series.n_frames}"
        )
    if not np.all((values == 0) | (values == 1)):
        raise NonBinaryValueError("direct-gaze annotation must contain only 0 and 1")
    return series.with_channels([ChannelSpec(name, "binary", "logical")], [values])


@dataclass
class LLDConfig:
    """Which raw channels feed the derived descriptors (all optional)."""

    deltas: list[str] = field(default_factory=list)
    pupil: str | None = None
    gaze_x: str | None = None
    gaze_y: str | None = None
    gaze_distance: str | None = None
    direct_gaze: str | None = None
    fixation_threshold: float = DEFAULT_FIXATION_THRESHOLD


def derive_llds(series: RecordingSeries, cfg: LLDConfig) -> RecordingSeries:
    """Append every configured derived channel to ``series``.

    ``cfg.direct_gaze`` names a binary column already present in the series
    (the human annotation ingested alongside the tracker output); it is
    re-attached under the canonical ``direct_gaze`` name.
    """
    derived = compute_deltas(series, cfg.deltas)
    if cfg.pupil:
        dil, con = pupil_events(series.channel(cfg.pupil))
        derived.events["pupil_dilation"] = dil
        derived.events["pupil_constriction"] = con
    if cfg.gaze_x and cfg.gaze_y and cfg.gaze_distance:
        fix, app = gaze_events(
            series.channel(cfg.gaze_x),
            series.channel(cfg.gaze_y),
            series.channel(cfg.gaze_distance),
            cfg.fixation_threshold,
        )
        derived.events["eye_fixation"] = fix
        derived.events["gaze_approach"] = app
    units = {c.name: c.units for c in series.channels}
    specs, cols = derived.specs_and_columns(units)
    out = series.with_channels(specs, cols)
    if cfg.direct_gaze and cfg.direct_gaze != "direct_gaze":
        out = attach_direct_gaze(out, series.channel(cfg.direct_gaze))
    return out
