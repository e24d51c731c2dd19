"""Experiment configuration read from a TOML file.

Every table and key is optional except ``[data]``.  Relative paths are
resolved against the directory holding the config file.  Unknown keys are
rejected so that typos fail loudly instead of silently using defaults.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .alignment import ShiftGrid, default_delays
from .errors import ConfigError, DelayNotFrameAlignedError
from .functionals import WaveletConfig, WindowPlan
from .ingest import OPENFACE_PRESET, RECOLA_PARTITION, ChannelSpec, Dimension, PartitionSpec
from .lld import LLDConfig
from .model import ModelConfig
from .selection import DEFAULT_K, DEFAULT_SEED, DEFAULT_THRESHOLDS, check_threshold

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PRESETS = ("openface", "custom")
DEFAULT_MI_STRIDE = 25


@dataclass
class DataConfig:
    recordings: Path
    annotations: Path
    frame_rate: int = 25
    preset: str = "custom"
    channels: dict[Any, ChannelSpec] = field(default_factory=dict)
    confidence_column: str | None = None
    max_gap: float = 0.5
    confidence_threshold: float = 0.5
    annotation_columns: dict[str, str] = field(default_factory=dict)

    def mapping(self) -> dict[Any, ChannelSpec]:
        if self.preset == "openface":
            return {**OPENFACE_PRESET, **self.channels}
        return dict(self.channels)

    def recording_path(self, subject: str) -> Path:
        return self.recordings / f"{subject}.csv"

    def annotation_path(self, subject: str) -> Path:
        return self.annotations / f"{subject}.csv"


@dataclass
class SweepConfig:
    window_seconds: list[float] = field(default_factory=lambda: [4.0, 6.0, 8.0])
    delays: list[float] = field(default_factory=default_delays)
    mi_thresholds: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    dimensions: list[str] = field(default_factory=lambda: ["arousal", "valence"])

    @property
    def n_tuples(self) -> int:
        return len(self.window_seconds) * len(self.delays) * len(self.mi_thresholds)


@dataclass
class SelectionConfig:
    k: int = DEFAULT_K
    seed: int = DEFAULT_SEED
    stride: int = DEFAULT_MI_STRIDE  # estimate MI on every stride-th training row


@dataclass
class ExploreConfig:
    window_seconds: float = 8.0
    delay: float = 0.0
    partitions: list[str] = field(default_factory=lambda: ["train", "validation"])


@dataclass
class ExperimentConfig:
    data: DataConfig
    partition: PartitionSpec = RECOLA_PARTITION
    lld: LLDConfig = field(default_factory=LLDConfig)
    groups: dict[str, list[str]] = field(default_factory=dict)
    modality_sets: list[str] = field(default_factory=list)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    wavelet: WaveletConfig = field(default_factory=WaveletConfig)
    model: dict[str, Any] = field(default_factory=dict)
    explore: ExploreConfig = field(default_factory=ExploreConfig)
    output: Path = Path("results")
    source: Path | None = None

    def set_channels(self, name: str) -> list[str]:
        """Channels of a modality set; ``a+b`` is the union of groups a and b."""
        out: list[str] = []
        for part in name.split("+"):
            part = part.strip()
            if part not in self.groups:
                raise ConfigError(f"modality set {name!r} uses unknown group {part!r}")
            out += [c for c in self.groups[part] if c not in out]
        return out

    def model_config(self, input_dim: int) -> ModelConfig:
        return ModelConfig(input_dim=input_dim, **self.model)

    def plans(self) -> list[WindowPlan]:
        return [WindowPlan(w, self.data.frame_rate) for w in self.sweep.window_seconds]


# ---------------------------------------------------------------- parsing
def _check_keys(table: dict, allowed, where: str) -> None:
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(extra)}")


def _table(raw: dict, key: str) -> dict:
    value = raw.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{key}] must be a table")
    return value


def _names(cls) -> list[str]:
    return [f.name for f in fields(cls)]


def _parse_channels(table: dict) -> dict[Any, ChannelSpec]:
    out: dict[Any, ChannelSpec] = {}
    for column, spec in table.items():
        if isinstance(spec, str):
            spec = {"kind": spec}
        if not isinstance(spec, dict):
            raise ConfigError(f"channel {column!r} must be a table or a kind string")
        _check_keys(spec, ("name", "kind", "units", "columns"), f"data.channels.{column}")
        key = tuple(spec["columns"]) if "columns" in spec else column
        try:
            out[key] = ChannelSpec(spec.get("name", column), spec.get("kind", "continuous"), spec.get("units", ""))
        except ValueError as exc:
            raise ConfigError(f"channel {column!r}: {exc}") from None
    return out


def _parse_data(table: dict, base: Path) -> DataConfig:
    _check_keys(table, _names(DataConfig), "data")
    for key in ("recordings", "annotations"):
        if key not in table:
            raise ConfigError(f"[data] needs {key!r}")
    preset = table.get("preset", "custom")
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")
    channels = _parse_channels(table.get("channels", {}))
    if preset == "custom" and not channels:
        raise ConfigError("the custom preset needs a [data.channels] table")
    ann = dict(table.get("annotation_columns", {}))
    for dim in ann:
        Dimension(dim)
    return DataConfig(
        recordings=base / table["recordings"],
        annotations=base / table["annotations"],
        frame_rate=int(table.get("frame_rate", 25)),
        preset=preset,
        channels=channels,
        confidence_column=table.get("confidence_column"),
        max_gap=float(table.get("max_gap", 0.5)),
        confidence_threshold=float(table.get("confidence_threshold", 0.5)),
        annotation_columns=ann,
    )


def _parse_sweep(table: dict) -> SweepConfig:
    _check_keys(table, [*_names(SweepConfig), "delay_max", "delay_step"], "sweep")
    sweep = SweepConfig()
    if "window_seconds" in table:
        sweep.window_seconds = [float(w) for w in table["window_seconds"]]
    if "delays" in table:
        if "delay_max" in table or "delay_step" in table:
            raise ConfigError("give either 'delays' or 'delay_max'/'delay_step', not both")
        sweep.delays = [float(d) for d in table["delays"]]
    elif "delay_max" in table or "delay_step" in table:
        sweep.delays = default_delays(float(table.get("delay_max", 4.4)), float(table.get("delay_step", 0.2)))
    if "mi_thresholds" in table:
        sweep.mi_thresholds = [float(t) for t in table["mi_thresholds"]]
    if "dimensions" in table:
        sweep.dimensions = [Dimension(d).value for d in table["dimensions"]]
    for name in ("window_seconds", "delays", "mi_thresholds", "dimensions"):
        values = getattr(sweep, name)
        if not values:
            raise ConfigError(f"[sweep] {name} is empty")
        if len(set(values)) != len(values):
            raise ConfigError(f"[sweep] {name} has duplicates")
    for t in sweep.mi_thresholds:
        check_threshold(t)
    return sweep


def _parse_model(table: dict) -> dict[str, Any]:
    allowed = [n for n in _names(ModelConfig) if n != "input_dim"]
    _check_keys(table, allowed, "model")
    out = dict(table)
    if "hidden_sizes" in out:
        out["hidden_sizes"] = tuple(out["hidden_sizes"])
    if out.get("clip_norm") == 0:
        out["clip_norm"] = None  # TOML has no null; 0 switches clipping off
    ModelConfig(input_dim=1, **out)  # validate now, not at the first training run
    return out


def parse_config(raw: dict, base: Path | str = ".", source: Path | None = None) -> ExperimentConfig:
    base = Path(base)
    _check_keys(raw, ("data", "partition", "lld", "modalities", "sweep", "selection", "wavelet", "model", "explore", "output"), "top level")
    try:
        data = _parse_data(_table(raw, "data"), base)

        part = _table(raw, "partition")
        _check_keys(part, ("train", "validation", "test"), "partition")
        partition = PartitionSpec(**{k: tuple(v) for k, v in part.items()}) if part else RECOLA_PARTITION

        lld_t = _table(raw, "lld")
        _check_keys(lld_t, _names(LLDConfig), "lld")
        lld = LLDConfig(**lld_t)

        mod = _table(raw, "modalities")
        _check_keys(mod, ("groups", "sets"), "modalities")
        groups = {k: list(v) for k, v in mod.get("groups", {}).items()}
        for name in groups:
            if "+" in name:
                raise ConfigError(f"group name {name!r} may not contain '+'")
        sets = list(mod.get("sets", list(groups)))

        sel_t = _table(raw, "selection")
        _check_keys(sel_t, _names(SelectionConfig), "selection")
        selection = SelectionConfig(**sel_t)
        if selection.k < 1 or selection.stride < 1:
            raise ConfigError("[selection] k and stride must be >= 1")

        wav_t = _table(raw, "wavelet")
        _check_keys(wav_t, _names(WaveletConfig), "wavelet")
        wavelet = WaveletConfig(**wav_t)

        exp_t = _table(raw, "explore")
        _check_keys(exp_t, _names(ExploreConfig), "explore")
        explore = ExploreConfig(**exp_t)

        out_t = _table(raw, "output")
        _check_keys(out_t, ("dir",), "output")
        cfg = ExperimentConfig(
            data=data,
            partition=partition,
            lld=lld,
            groups=groups,
            modality_sets=sets,
            sweep=_parse_sweep(_table(raw, "sweep")),
            selection=selection,
            wavelet=wavelet,
            model=_parse_model(_table(raw, "model")),
            explore=explore,
            output=base / out_t.get("dir", "results"),
            source=source,
        )
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    validate_static(cfg)
    return cfg


def validate_static(cfg: ExperimentConfig) -> None:
    """Checks that need no data: non-empty sweep, frame-aligned delays and windows, known groups."""
    if not cfg.modality_sets:
        raise ConfigError("no modality sets configured")
    for name in cfg.modality_sets:
        if not cfg.set_channels(name):
            raise ConfigError(f"modality set {name!r} is empty")
    try:
        ShiftGrid(tuple(cfg.sweep.delays)).validate(cfg.data.frame_rate)
        cfg.plans()
        WindowPlan(cfg.explore.window_seconds, cfg.data.frame_rate)
        ShiftGrid((cfg.explore.delay,)).validate(cfg.data.frame_rate)
    except (ValueError, DelayNotFrameAlignedError) as exc:
        raise ConfigError(str(exc)) from exc
    for p in cfg.explore.partitions:
        if p not in ("train", "validation", "test"):
            raise ConfigError(f"[explore] unknown partition {p!r}")


def validate_channels(cfg: ExperimentConfig, available: list[str]) -> None:
    """Fail fast when a modality group names a channel that ingestion did not produce."""
    have = set(available)
    for group, chans in cfg.groups.items():
        missing = [c for c in chans if c not in have]
        if missing:
            raise ConfigError(f"group {group!r} names unknown channel(s): {', '.join(missing)}")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(raw, path.parent, path)
