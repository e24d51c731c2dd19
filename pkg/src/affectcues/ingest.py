"""Tracker/annotation CSV parsing, missing-data repair and subject partitions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import (
    AllFramesInvalidError,
    EmptyFileError,
    LengthMismatchError,
    MissingColumnError,
    NonBinaryValueError,
    NonNumericCellError,
    RowLengthMismatchError,
    UnknownChannelError,
    UnknownSubjectError,
)

DEFAULT_FRAME_RATE = 25
DEFAULT_MAX_GAP = 0.5  # seconds
CONFIDENCE_THRESHOLD = 0.5


class ChannelKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    kind: ChannelKind = ChannelKind.CONTINUOUS
    units: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))

    @property
    def is_binary(self) -> bool:
        return self.kind is ChannelKind.BINARY


@dataclass
class RecordingSeries:
    """Uniformly sampled multi-channel frame series for one recording.

    ``data`` has shape ``(n_frames, n_channels)``, column ``j`` holding the
    values of ``channels[j]``.
    """

    subject_id: str
    channels: list[ChannelSpec]
    data: np.ndarray
    frame_rate: int = DEFAULT_FRAME_RATE
    confidence: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim == 1:
            self.data = self.data[:, None]
        if self.data.ndim != 2 or self.data.shape[1] != len(self.channels):
            raise LengthMismatchError(
                f"data shape {self.data.shape} does not match {len(self.channels)} channels"
            )
        if self.data.shape[0] < 1:
            raise EmptyFileError(f"{self.subject_id}: series has no frames")
        if self.frame_rate <= 0 or int(self.frame_rate) != self.frame_rate:
            raise ValueError(f"frame_rate must be a positive integer, got {self.frame_rate}")
        self.frame_rate = int(self.frame_rate)
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate channel names in {names}")
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=float)
            if self.confidence.shape != (self.n_frames,):
                raise LengthMismatchError("confidence length differs from series length")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownChannelError(f"{self.subject_id}: no channel {name!r}") from None

    def spec(self, name: str) -> ChannelSpec:
        return self.channels[self.index(name)]

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, self.index(name)]

    def with_channels(self, specs: Sequence[ChannelSpec], columns: Sequence[np.ndarray]) -> "RecordingSeries":
        """Return a copy with extra channels appended (existing names are replaced)."""
        channels = list(self.channels)
        data = self.data.copy()
        for spec, values in zip(specs, columns):
            values = np.asarray(values, dtype=float)
            if values.shape != (self.n_frames,):
                raise LengthMismatchError(
                    f"channel {spec.name!r} has length {values.shape}, series has {self.n_frames}"
                )
            if spec.name in self.names:
                j = self.index(spec.name)
                channels[j] = spec
                data[:, j] = values
            else:
                channels.append(spec)
                data = np.column_stack([data, values])
        return replace(self, channels=channels, data=data)

    def select(self, names: Sequence[str]) -> "RecordingSeries":
        idx = [self.index(n) for n in names]
        return replace(self, channels=[self.channels[i] for i in idx], data=self.data[:, idx].copy())

    def validate_binary(self) -> None:
        for j, spec in enumerate(self.channels):
            if spec.is_binary:
                col = self.data[:, j]
                finite = col[np.isfinite(col)]
                if not np.all((finite == 0) | (finite == 1)):
                    raise NonBinaryValueError(f"{self.subject_id}: channel {spec.name!r} is not 0/1-valued")


class Dimension(str, Enum):
    AROUSAL = "arousal"
    VALENCE = "valence"


@dataclass
class AnnotationTrack:
    subject_id: str
    dimension: Dimension
    values: np.ndarray

    def __post_init__(self):
        self.dimension = Dimension(self.dimension)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 1:
            raise LengthMismatchError("annotation must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.subject_id}/{self.dimension.value}: non-finite annotation value")
        if np.any(np.abs(self.values) > 1.0):
            raise ValueError(f"{self.subject_id}/{self.dimension.value}: annotation outside [-1, 1]")

    def __len__(self) -> int:
        return self.values.size


class Partition(str, Enum):
    TRAIN = "train"
    VALIDATION = "validation"
    TEST = "test"


@dataclass(frozen=True)
class PartitionSpec:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            ids = tuple(getattr(self, name))
            object.__setattr__(self, name, ids)
            if not ids:
                raise ValueError(f"partition {name!r} is empty")
        sets = [set(self.train), set(self.validation), set(self.test)]
        for a in range(3):
            for b in range(a + 1, 3):
                shared = sets[a] & sets[b]
                if shared:
                    raise ValueError(f"subjects listed in two partitions: {sorted(shared)}")

    def subjects(self, partition: Partition | str) -> tuple[str, ...]:
        return getattr(self, Partition(partition).value)

    @property
    def all_subjects(self) -> tuple[str, ...]:
        return self.train + self.validation + self.test


# Subject split used for the RECOLA experiments.
RECOLA_PARTITION = PartitionSpec(
    train=("P16", "P17", "P19", "P21", "P23", "P26", "P30", "P65"),
    validation=("P25", "P28", "P34", "P37", "P41", "P48", "P56", "P58"),
    test=("P39", "P42", "P43", "P45", "P46", "P62", "P64"),
)


def assign_partition(subject_id: str, spec: PartitionSpec) -> Partition:
    for part in Partition:
        if subject_id in spec.subjects(part):
            return part
    raise UnknownSubjectError(f"subject {subject_id!r} is not in any partition")


# A mapping key is either one CSV column or a tuple of columns averaged per frame.
ColumnKey = Union[str, tuple]

# OpenFace 2.0 FeatureExtraction output.  OpenFace does not emit a pupil
# diameter or a gaze distance; per-eye columns for those are expected to be
# appended upstream under the names below.
OPENFACE_PRESET: dict[ColumnKey, ChannelSpec] = {
    "pose_Tx": ChannelSpec("head_loc_x", "continuous", "mm"),
    "pose_Ty": ChannelSpec("head_loc_y", "continuous", "mm"),
    "pose_Tz": ChannelSpec("head_loc_z", "continuous", "mm"),
    "pose_Rx": ChannelSpec("head_pitch", "continuous", "rad"),
    "pose_Ry": ChannelSpec("head_yaw", "continuous", "rad"),
    "pose_Rz": ChannelSpec("head_roll", "continuous", "rad"),
    "gaze_angle_x": ChannelSpec("gaze_x", "continuous", "rad"),
    "gaze_angle_y": ChannelSpec("gaze_y", "continuous", "rad"),
    ("pupil_diameter_0", "pupil_diameter_1"): ChannelSpec("pupil_diameter", "continuous", "mm"),
    ("gaze_distance_0", "gaze_distance_1"): ChannelSpec("gaze_distance", "continuous", "mm"),
    "AU45_c": ChannelSpec("blink", "binary", "logical"),
    "AU45_r": ChannelSpec("blink_intensity", "continuous", "intensity"),
}


def _parse_float(cell: str, row: int, column: str) -> float:
    text = cell.strip()
    try:
        if not text:
            raise ValueError
        return float(text)
    except ValueError:
        raise NonNumericCellError(row, column, cell) from None


def parse_tracker_csv(
    path: str | Path,
    mapping: Mapping[ColumnKey, ChannelSpec],
    *,
    subject_id: str | None = None,
    frame_rate: int = DEFAULT_FRAME_RATE,
    confidence_column: str | None = None,
) -> RecordingSeries:
    """Read a per-frame tracker CSV into a :class:`RecordingSeries`.

    Only mapped columns are converted; the rest are ignored apart from the
    row-length check.  Header names are whitespace-stripped because OpenFace
    pads them.  Row numbers in errors are 1-based data rows (header excluded).
    """
    path = Path(path)
    subject_id = subject_id or path.stem
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFileError(f"{path}: no header row") from None
        position = {name: i for i, name in enumerate(header)}

        wanted: list[str] = []
        for key in mapping:
            for col in (key,) if isinstance(key, str) else key:
                if col not in position:
                    raise MissingColumnError(col)
                wanted.append(col)
        if confidence_column is not None:
            if confidence_column not in position:
                raise MissingColumnError(confidence_column)
            wanted.append(confidence_column)
        wanted = list(dict.fromkeys(wanted))

        columns: dict[str, list[float]] = {c: [] for c in wanted}
        n_rows = 0
        for row in reader:
            if not row:
                continue
            n_rows += 1
            if len(row) != len(header):
                raise RowLengthMismatchError(n_rows, len(header), len(row))
            for col in wanted:
                columns[col].append(_parse_float(row[position[col]], n_rows, col))
    if n_rows == 0:
        raise EmptyFileError(f"{path}: no data rows")

    specs, values = [], []
    for key, spec in mapping.items():
        if isinstance(key, str):
            values.append(np.asarray(columns[key]))
        else:
            # nanmean would hide a one-eye dropout; a NaN in either eye stays NaN for repair.
            values.append(np.mean([columns[c] for c in key], axis=0))
        specs.append(spec)
    confidence = np.asarray(columns[confidence_column]) if confidence_column else None
    return RecordingSeries(subject_id, specs, np.column_stack(values), frame_rate, confidence)


def _format(value: float, binary: bool) -> str:
    if binary and value in (0.0, 1.0):
        return str(int(value))
    return repr(float(value))


def write_series_csv(series: RecordingSeries, path: str | Path, *, confidence_column: str = "confidence") -> Path:
    """Write ``series`` as a frame-per-row CSV readable by :func:`parse_tracker_csv`.

    Floats are written with ``repr`` so a re-parse is value-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    binary = [c.is_binary for c in series.channels]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        header = ["frame", *series.names]
        if series.confidence is not None:
            header.append(confidence_column)
        writer.writerow(header)
        for t in range(series.n_frames):
            row = [str(t)] + [_format(v, b) for v, b in zip(series.data[t], binary)]
            if series.confidence is not None:
                row.append(repr(float(series.confidence[t])))
            writer.writerow(row)
    return path


def identity_mapping(series: RecordingSeries) -> dict[str, ChannelSpec]:
    """Column mapping that re-reads a file written by :func:`write_series_csv`."""
    return {c.name: c for c in series.channels}


def parse_annotation_csv(
    path: str | Path,
    dimension: Dimension | str,
    *,
    subject_id: str | None = None,
    column: str | None = None,
) -> AnnotationTrack:
    """Read one affect dimension from a per-frame annotation CSV."""
    dimension = Dimension(dimension)
    path = Path(path)
    column = column or dimension.value
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise EmptyFileError(f"{path}: no header row") from None
        if column not in header:
            raise MissingColumnError(column)
        j = header.index(column)
        values = []
        for i, row in enumerate(reader, start=1):
            if not any(cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise RowLengthMismatchError(i, len(header), len(row))
            values.append(_parse_float(row[j], i, column))
    if not values:
        raise EmptyFileError(f"{path}: no data rows")
    return AnnotationTrack(subject_id or path.stem, dimension, np.asarray(values))


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open ``(start, stop)`` index ranges where ``mask`` is True."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def repair_missing(
    series: RecordingSeries,
    max_gap: float = DEFAULT_MAX_GAP,
    *,
    confidence_threshold: float = CONFIDENCE_THRESHOLD,
) -> RecordingSeries:
    """Fill tracker dropouts channel by channel.

    A frame is invalid for a channel when the value is non-finite or the
    frame's tracker confidence is below ``confidence_threshold``.  Interior
    runs no longer than ``max_gap`` seconds are linearly interpolated on
    continuous channels; every other gap (binary channels, long runs,
    trailing runs) holds the last valid value, and leading invalid frames
    take the first valid one.
    """
    if max_gap < 0:
        raise ValueError("max_gap must be >= 0")
    max_run = int(math.floor(max_gap * series.frame_rate + 1e-9))
    low_conf = np.zeros(series.n_frames, dtype=bool)
    if series.confidence is not None:
        low_conf = ~(series.confidence >= confidence_threshold)

    data = series.data.copy()
    for j, spec in enumerate(series.channels):
        col = data[:, j]
        invalid = ~np.isfinite(col) | low_conf
        if not invalid.any():
            continue
        if invalid.all():
            raise AllFramesInvalidError(spec.name)
        for start, stop in _runs(invalid):
            if start == 0:
                col[:stop] = col[stop]
            elif stop == series.n_frames or spec.is_binary or stop - start > max_run:
                col[start:stop] = col[start - 1]
            else:
                left, right = col[start - 1], col[stop]
                frac = np.arange(1, stop - start + 1) / (stop - start + 1)
                col[start:stop] = left + (right - left) * frac
    repaired = replace(series, data=data)
    repaired.validate_binary()
    return repaired
