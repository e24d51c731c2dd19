"""Synthetic corpus generator with a known annotation lag.

Each recording carries smooth random continuous channels and binary event
channels.  Arousal (valence) is a smooth squashed function of the trailing
moving average of two driver channels, read ``lag`` seconds late, which is
how a rater integrating recent cues and answering with a delay behaves.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d, uniform_filter1d

from .ingest import RECOLA_PARTITION, ChannelSpec, RecordingSeries, write_series_csv

CONTINUOUS_UNITS = "a.u."


@dataclass
class SynthSpec:
    n_train: int = 8
    n_validation: int = 8
    n_test: int = 7
    n_frames: int = 7500
    frame_rate: int = 25
    n_continuous: int = 10
    n_binary: int = 2
    lag: float = 1.0
    target_span: float = 4.0
    seed: int = 1787452436
    drivers: dict[str, list[str]] = field(
        default_factory=lambda: {"arousal": ["ch00", "ch01"], "valence": ["ch02", "ch03"]}
    )
    annotation_noise: float = 0.0
    dropouts: int = 3  # NaN gaps injected per continuous channel
    smoothing: tuple[float, float] = (0.04, 0.16)  # range of Gaussian smoothing widths, seconds

    def __post_init__(self):
        if min(self.n_train, self.n_validation, self.n_test) < 1:
            raise ValueError("every partition needs at least one recording")
        if self.n_frames < 2 or self.frame_rate < 1:
            raise ValueError("n_frames >= 2 and frame_rate >= 1 required")
        if self.lag < 0 or abs(self.lag * self.frame_rate - round(self.lag * self.frame_rate)) > 1e-9:
            raise ValueError("lag must be a non-negative whole number of frames")
        names = set(self.channel_names)
        for dim, chans in self.drivers.items():
            if dim not in ("arousal", "valence") or len(chans) != 2 or not set(chans) <= names:
                raise ValueError(f"bad driver specification for {dim!r}: {chans}")

    @property
    def channel_names(self) -> list[str]:
        return [f"ch{i:02d}" for i in range(self.n_continuous)] + [f"ev{i:02d}" for i in range(self.n_binary)]

    def subjects(self) -> dict[str, list[str]]:
        counts = {"train": self.n_train, "validation": self.n_validation, "test": self.n_test}
        recola = {p: list(RECOLA_PARTITION.subjects(p)) for p in counts}
        if all(counts[p] == len(recola[p]) for p in counts):
            return recola
        out, i = {}, 0
        for p, n in counts.items():
            out[p] = [f"S{j:03d}" for j in range(i, i + n)]
            i += n
        return out


def _smooth_noise(rng: np.random.Generator, n: int, sigma_frames: float) -> np.ndarray:
    x = gaussian_filter1d(rng.standard_normal(n), sigma_frames, mode="reflect")
    return (x - x.mean()) / x.std()


def _trailing_mean(x: np.ndarray, span: int) -> np.ndarray:
    # uniform_filter1d centres the window; shift the origin so frame t averages t-span+1 .. t
    return uniform_filter1d(x, span, mode="nearest", origin=(span - 1) // 2)


def _delay(x: np.ndarray, k: int) -> np.ndarray:
    if k == 0:
        return x.copy()
    return np.concatenate([np.full(k, x[0]), x[:-k]])


def make_recording(spec: SynthSpec, subject: str, rng: np.random.Generator, offsets: np.ndarray | None = None):
    n, fps = spec.n_frames, spec.frame_rate
    clean = {}
    for name in spec.channel_names[: spec.n_continuous]:
        clean[name] = _smooth_noise(rng, n, rng.uniform(*spec.smoothing) * fps)
    events = {}
    for name in spec.channel_names[spec.n_continuous :]:
        events[name] = (_smooth_noise(rng, n, 0.3 * fps) > 0.8).astype(float)

    span = int(round(spec.target_span * fps))
    k = int(round(spec.lag * fps))
    targets = {}
    for dim, (a, b) in spec.drivers.items():
        u, v = _trailing_mean(clean[a], span), _trailing_mean(clean[b], span)
        u, v = u / u.std(), v / v.std()
        drive = 0.8 * u - 0.5 * v + 0.2 * u * v
        y = np.tanh(0.6 * drive)
        if spec.annotation_noise > 0:
            y = y + spec.annotation_noise * rng.standard_normal(n)
        targets[dim] = np.clip(_delay(y, k), -1.0, 1.0)

    if offsets is None:
        offsets = np.zeros(spec.n_continuous)
    channels, cols = [], []
    for (name, x), offset in zip(clean.items(), offsets):
        observed = 10.0 * x + offset
        for _ in range(spec.dropouts):
            start = int(rng.integers(1, n - 10))
            observed[start : start + int(rng.integers(1, 6))] = np.nan
        channels.append(ChannelSpec(name, "continuous", CONTINUOUS_UNITS))
        cols.append(observed)
    for name, x in events.items():
        channels.append(ChannelSpec(name, "binary", "logical"))
        cols.append(x)
    confidence = np.ones(n)
    series = RecordingSeries(subject, channels, np.column_stack(cols), fps, confidence)
    return series, targets


def generate_synthetic(spec: SynthSpec, out_dir: str | Path) -> Path:
    """Write recordings/, annotations/, metadata.json and experiment.toml under ``out_dir``."""
    out = Path(out_dir)
    (out / "recordings").mkdir(parents=True, exist_ok=True)
    (out / "annotations").mkdir(parents=True, exist_ok=True)
    partition = spec.subjects()
    root = np.random.SeedSequence(spec.seed)
    subjects = [s for p in ("train", "validation", "test") for s in partition[p]]
    corpus_ss, *subject_ss = root.spawn(len(subjects) + 1)
    # per-channel operating points shared by every recording
    offsets = np.random.Generator(np.random.Philox(corpus_ss)).uniform(-50, 50, spec.n_continuous)
    for subject, child in zip(subjects, subject_ss):
        rng = np.random.Generator(np.random.Philox(child))
        series, targets = make_recording(spec, subject, rng, offsets)
        write_series_csv(series, out / "recordings" / f"{subject}.csv")
        with (out / "annotations" / f"{subject}.csv").open("w", encoding="utf-8") as fh:
            dims = list(targets)
            fh.write(",".join(["frame", *dims]) + "\n")
            for t in range(spec.n_frames):
                fh.write(",".join([str(t), *(repr(float(targets[d][t])) for d in dims)]) + "\n")

    meta = {
        "spec": asdict(spec),
        "true_lag_seconds": spec.lag,
        "partition": partition,
        "channels": [
            {"name": c, "kind": "binary" if c.startswith("ev") else "continuous"} for c in spec.channel_names
        ],
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "experiment.toml").write_text(default_config_text(spec, partition), encoding="utf-8")
    return out


def default_config_text(spec: SynthSpec, partition: dict[str, list[str]]) -> str:
    def arr(items):
        return "[" + ", ".join(f'"{i}"' for i in items) + "]"

    lines = [
        "# Generated alongside the synthetic corpus; paths are relative to this file.",
        "[data]",
        'recordings = "recordings"',
        'annotations = "annotations"',
        f"frame_rate = {spec.frame_rate}",
        'confidence_column = "confidence"',
        "",
        "[data.channels]",
    ]
    for name in spec.channel_names:
        kind = "binary" if name.startswith("ev") else "continuous"
        lines.append(f'{name} = {{ kind = "{kind}" }}')
    lines += [
        "",
        "[partition]",
        f"train = {arr(partition['train'])}",
        f"validation = {arr(partition['validation'])}",
        f"test = {arr(partition['test'])}",
        "",
        "[modalities.groups]",
        f"all = {arr(spec.channel_names)}",
        "",
        "[modalities]",
        'sets = ["all"]',
        "",
        "[sweep]",
        "window_seconds = [4]",
        "delay_max = 2.0",
        "delay_step = 0.2",
        "mi_thresholds = [0.1]",
        'dimensions = ["arousal"]',
        "",
        "# A short training budget keeps the whole sweep within minutes on one core.",
        "[model]",
        "max_epochs = 5",
        "patience = 2",
        "",
        "[output]",
        'dir = "results"',
        "",
    ]
    return "\n".join(lines)
