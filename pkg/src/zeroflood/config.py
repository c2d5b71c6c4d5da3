"""Pipeline configuration: a flat key=value file with dotted section prefixes.

Example::

    # paths are resolved relative to the config file
    paths.fsm_raster = fsm.zfr
    paths.metadata_csv = samples.csv
    paths.eo_raster_dir = eo
    paths.output_dir = out

    sampling.tile_side = 640
    split.seed = 42
    model.tim_modalities = s2,dem
    labels.policy = rp100_only

Unknown keys are rejected so typos fail loudly. Input paths must exist when
the file is loaded; the output directory is created on demand by commands.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .metrics import LABEL_POLICIES, RP100_ONLY
from .model.network import canonical_modalities


@dataclass
class PathsConfig:
    fsm_raster: Path
    metadata_csv: Path
    eo_raster_dir: Path
    output_dir: Path


@dataclass
class SamplingConfig:
    tile_side: float
    ratio_min: float = 0.1
    ratio_max: float = 1.0


@dataclass
class SplitConfig:
    seed: int = 0
    counts: tuple[int, int, int] | None = None


@dataclass
class ModelConfig:
    """Hyperparameters of the segmentation estimator, one field per knob."""

    in_channels: int = 1
    base_channels: int = 8
    input_modality: str = "S1"
    tim_modalities: tuple[str, ...] = ()
    tim_channels_per_modality: int = 8
    decoder_depth: int = 2
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    learning_rate: float = 1.0
    max_epochs: int = 120
    patience: int = 20
    seed: int = 0


@dataclass
class InferenceConfig:
    tile: int = 64
    overlap: int = 0
    threshold: float = 0.5


@dataclass
class PipelineConfig:
    paths: PathsConfig
    sampling: SamplingConfig
    split: SplitConfig = field(default_factory=SplitConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    fsm_label_policy: str = RP100_ONLY

    def model_params(self) -> dict:
        return {f.name: getattr(self.model, f.name) for f in fields(ModelConfig)}


def _parse_counts(value: str):
    parts = [p.strip() for p in value.split(",")]
    if len(parts) != 3:
        raise ConfigError(f"split.counts needs three comma-separated integers, got {value!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ConfigError(f"split.counts must be integers, got {value!r}")


def _coerce(key: str, value: str, kind):
    try:
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}")
    return value


_SCHEMA = {
    "paths.fsm_raster": str,
    "paths.metadata_csv": str,
    "paths.eo_raster_dir": str,
    "paths.output_dir": str,
    "sampling.tile_side": float,
    "sampling.ratio_min": float,
    "sampling.ratio_max": float,
    "split.seed": int,
    "split.counts": str,
    "model.in_channels": int,
    "model.base_channels": int,
    "model.input_modality": str,
    "model.tim_modalities": str,
    "model.tim_channels_per_modality": int,
    "model.decoder_depth": int,
    "model.focal_gamma": float,
    "model.focal_alpha": float,
    "model.learning_rate": float,
    "model.max_epochs": int,
    "model.patience": int,
    "model.seed": int,
    "inference.tile": int,
    "inference.overlap": int,
    "inference.threshold": float,
    "labels.policy": str,
}

_REQUIRED = (
    "paths.fsm_raster",
    "paths.metadata_csv",
    "paths.eo_raster_dir",
    "paths.output_dir",
    "sampling.tile_side",
)


def parse_config_text(text: str, base_dir: Path) -> PipelineConfig:
    values: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _coerce(key, value, _SCHEMA[key])

    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")

    def path_of(key):
        return (base_dir / str(values[key])).resolve()

    paths = PathsConfig(
        fsm_raster=path_of("paths.fsm_raster"),
        metadata_csv=path_of("paths.metadata_csv"),
        eo_raster_dir=path_of("paths.eo_raster_dir"),
        output_dir=path_of("paths.output_dir"),
    )
    for name in ("fsm_raster", "metadata_csv", "eo_raster_dir"):
        p = getattr(paths, name)
        if not p.exists():
            raise ConfigError(f"paths.{name}: {p} does not exist")

    sampling = SamplingConfig(
        tile_side=values["sampling.tile_side"],
        ratio_min=values.get("sampling.ratio_min", 0.1),
        ratio_max=values.get("sampling.ratio_max", 1.0),
    )
    if sampling.tile_side <= 0:
        raise ConfigError("sampling.tile_side must be positive")
    if not (0 <= sampling.ratio_min <= sampling.ratio_max):
        raise ConfigError("need 0 <= sampling.ratio_min <= sampling.ratio_max")

    split = SplitConfig(
        seed=values.get("split.seed", 0),
        counts=_parse_counts(values["split.counts"]) if "split.counts" in values else None,
    )

    model_kwargs = {}
    for f in fields(ModelConfig):
        key = f"model.{f.name}"
        if key in values:
            model_kwargs[f.name] = values[key]
    if "tim_modalities" in model_kwargs:
        model_kwargs["tim_modalities"] = canonical_modalities(model_kwargs["tim_modalities"])
    model = ModelConfig(**model_kwargs)

    inference = InferenceConfig(
        tile=values.get("inference.tile", 64),
        overlap=values.get("inference.overlap", 0),
        threshold=values.get("inference.threshold", 0.5),
    )
    if inference.tile <= inference.overlap or inference.overlap < 0:
        raise ConfigError("need inference.tile > inference.overlap >= 0")
    if not 0 < inference.threshold < 1:
        raise ConfigError("inference.threshold must be in (0, 1)")

    policy = values.get("labels.policy", RP100_ONLY)
    if policy not in LABEL_POLICIES:
        raise ConfigError(
            f"labels.policy must be one of {', '.join(LABEL_POLICIES)}, got {policy!r}"
        )

    return PipelineConfig(
        paths=paths,
        sampling=sampling,
        split=split,
        model=model,
        inference=inference,
        fsm_label_policy=policy,
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text(encoding="utf-8")
    try:
        return parse_config_text(text, path.parent)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}")
