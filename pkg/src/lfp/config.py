"""Application configuration: presets, TOML files, and CLI overrides.

Precedence: dataclass defaults < preset < config file < --set flags. Keys
are validated strictly; unknown keys are rejected with their full path.
The fully-resolved configuration is echoed as JSON beside any command
output so every run is reproducible from its artifacts.
"""

from __future__ import annotations

import ast
import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .datagen import AugmentConfig
from .errors import ConfigError
from .inference import InferenceConfig
from .losses import LossConfig
from .matting import MattingConfig
from .propagating import PropagatingConfig
from .training import TrainConfig


@dataclass
class CoreConfig:
    """Reserved; the core module has no tunables."""


@dataclass
class AnalysisConfig:
    threshold: float = 0.5
    percentiles: tuple[int, ...] = (25, 50, 75, 90)
    erf_marker_px: int = 75

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("analysis.threshold must be in (0, 1)")


@dataclass
class AppConfig:
    preset: str = "tiny"
    seed: int = 0
    core: CoreConfig = field(default_factory=CoreConfig)
    datagen: AugmentConfig = field(default_factory=AugmentConfig)
    propagating: PropagatingConfig = field(default_factory=PropagatingConfig)
    matting: MattingConfig = field(default_factory=MattingConfig)
    losses: LossConfig = field(default_factory=LossConfig)
    inference: InferenceConfig = field(default_factory=InferenceConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)


_SECTIONS = {
    "core": CoreConfig,
    "datagen": AugmentConfig,
    "propagating": PropagatingConfig,
    "matting": MattingConfig,
    "losses": LossConfig,
    "inference": InferenceConfig,
    "training": TrainConfig,
    "analysis": AnalysisConfig,
}

# Named model scales. "tiny" is the CI-speed preset; "paper" records the
# full-scale geometry without claiming desk-scale trainability.
PRESETS: dict[str, dict] = {
    "tiny": {
        "datagen": {"crop_sizes": (64,), "trimap_kernel_range": (3, 9)},
        "propagating": {
            "stem_width": 16,
            "stage_widths": (16, 32, 64, 64),
            "blocks_per_stage": (1, 1, 1, 1),
            "bottleneck": {"variant": "cspp", "grids": (1, 2, 3, 6),
                           "aspp_rates": (1, 2, 3, 4), "fuse_channels": 64},
            "decoder_widths": (64, 32, 32, 16),
        },
        "matting": {
            "stem_widths": (16, 16, 32),
            "stage_widths": (32, 64, 64, 64),
            "blocks_per_stage": (1, 1, 1, 1),
            "ppm_grids": (1, 2, 3, 6),
            "decoder_widths": (64, 32, 32, 16),
            "head_width": 16,
            "context_channels": 32,
        },
        "inference": {"inner_side": 64},
    },
    "small": {
        "datagen": {"crop_sizes": (256,), "trimap_kernel_range": (3, 35)},
        "propagating": {
            "stem_width": 32,
            "stage_widths": (32, 64, 128, 128),
            "blocks_per_stage": (2, 2, 2, 2),
            "bottleneck": {"variant": "cspp", "grids": (1, 2, 3, 6),
                           "aspp_rates": (3, 7, 12, 18), "fuse_channels": 128},
            "decoder_widths": (128, 64, 32, 32),
        },
        "matting": {
            "stem_widths": (32, 32, 64),
            "stage_widths": (64, 128, 128, 128),
            "blocks_per_stage": (2, 2, 2, 2),
            "ppm_grids": (1, 2, 3, 6),
            "decoder_widths": (128, 64, 32, 32),
            "head_width": 32,
            "context_channels": 64,
        },
        "inference": {"inner_side": 256},
    },
    "paper": {
        "datagen": {"crop_sizes": (768, 640, 512, 448, 320),
                    "trimap_kernel_range": (3, 35)},
        "propagating": {
            "stem_width": 64,
            "stage_widths": (256, 512, 1024, 2048),
            "blocks_per_stage": (3, 4, 6, 3),
            "bottleneck": {"variant": "cspp", "grids": (1, 2, 3, 6),
                           "aspp_rates": (3, 7, 12, 18), "fuse_channels": 256},
            "decoder_widths": (256, 128, 64, 64),
        },
        "matting": {
            "stem_widths": (64, 64, 128),
            "stage_widths": (256, 512, 1024, 2048),
            "blocks_per_stage": (3, 4, 6, 3),
            "ppm_grids": (1, 2, 3, 6),
            "decoder_widths": (256, 128, 64, 64),
            "head_width": 64,
            "context_channels": 256,
        },
        "inference": {"inner_side": 1024},
    },
}


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    if isinstance(value, dict):
        return {k: _tupleize(v) for k, v in value.items()}
    return value


def _deep_merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _build_section(cls, data: dict, path: str):
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"unknown configuration key {path}.{key}")
        if isinstance(value, dict) and key != "bottleneck":
            raise ConfigError(f"{path}.{key} must be a value, not a table")
        kwargs[key] = _tupleize(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {path} configuration: {exc}") from exc


def build_config(raw: dict) -> AppConfig:
    """Strictly build an AppConfig from a plain merged dict."""
    raw = dict(raw)
    preset = raw.pop("preset", "tiny")
    seed = raw.pop("seed", 0)
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    sections = {}
    for key, value in raw.items():
        if key not in _SECTIONS:
            raise ConfigError(f"unknown configuration section {key!r}")
        if not isinstance(value, dict):
            raise ConfigError(f"section {key!r} must be a table")
        sections[key] = value
    cfg_kwargs = {"preset": preset, "seed": seed}
    for name, cls in _SECTIONS.items():
        cfg_kwargs[name] = _build_section(cls, sections.get(name, {}), name)
    return AppConfig(**cfg_kwargs)


def _parse_override(item: str) -> tuple[list[str], object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, _, text = item.partition("=")
    path = key.strip().split(".")
    if not all(path):
        raise ConfigError(f"override {item!r} has an empty key component")
    text = text.strip()
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        lowered = text.lower()
        if lowered in ("true", "false"):
            value = lowered == "true"
        else:
            value = text
    return path, value


def parse_config(path=None, preset: str | None = None,
                 overrides: tuple[str, ...] = (), seed: int | None = None) -> AppConfig:
    """Merge defaults <- preset <- file <- --set overrides <- --seed."""
    file_raw = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            file_raw = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: invalid TOML: {exc}") from exc
    chosen = preset or file_raw.get("preset", "tiny")
    if chosen not in PRESETS:
        raise ConfigError(f"unknown preset {chosen!r}; choose from {sorted(PRESETS)}")
    merged = _deep_merge(PRESETS[chosen], {k: v for k, v in file_raw.items() if k != "preset"})
    merged["preset"] = chosen
    for item in overrides:
        keypath, value = _parse_override(item)
        node = merged
        for part in keypath[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-table")
        node[keypath[-1]] = value
    if seed is not None:
        merged["seed"] = seed
    return build_config(merged)


def resolved_dict(cfg: AppConfig) -> dict:
    def clean(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: clean(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
        if isinstance(obj, (list, tuple)):
            return [clean(v) for v in obj]
        return obj

    return clean(cfg)


def write_config_echo(cfg: AppConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.resolved.json"
    path.write_text(json.dumps(resolved_dict(cfg), indent=2, sort_keys=True) + "\n")
    return path
