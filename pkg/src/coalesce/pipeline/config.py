"""Run configuration: dataclass defaults, a TOML file on top, then environment overrides.

Environment variables look like ``COALESCE_<SECTION>__<KEY>=value``, e.g.
``COALESCE_REFINE__ITERATIONS=10``. Values are parsed as TOML scalars when
possible and otherwise kept as strings.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..encoders import ENCODER_A, ENCODER_B, ENCODER_C, SAConfig, shrink
from .synthetic import CATEGORIES

ENV_PREFIX = "COALESCE_"


@dataclass
class CategoryConfig:
    name: str = "chairlike"
    part_labels: tuple[str, ...] = CATEGORIES["chairlike"]
    tau: float = 0.05

    def __post_init__(self):
        self.part_labels = tuple(self.part_labels)
        if len(self.part_labels) < 2 or len(set(self.part_labels)) != len(self.part_labels):
            raise ValueError(f"need at least two unique part labels, got {self.part_labels}")


@dataclass
class PreprocessConfig:
    shape_samples: int = 16384
    sampling: str = "poisson_disk"
    part_points: int = 2048
    near_points: int = 512
    grid_resolution: int = 64
    grid_half_extent: float = 0.55
    dilation_steps: int = 5
    train_samples: int = 16384
    band_cells: int = 2
    boundary_points: int = 1024


@dataclass
class EncoderConfig:
    max_patches: int = 0  # 0 keeps the full configurations
    max_samples: int = 0

    def configs(self) -> tuple[tuple[SAConfig, ...], tuple[SAConfig, ...], tuple[SAConfig, ...]]:
        if self.max_patches <= 0:
            return ENCODER_A, ENCODER_B, ENCODER_C
        return tuple(shrink(c, self.max_patches, self.max_samples or self.max_patches)
                     for c in (ENCODER_A, ENCODER_B, ENCODER_C))


@dataclass
class AlignConfig:
    epochs: int = 50
    lr: float = 1e-3
    batch: int = 8
    emd_points: int = 256
    train_encoder: bool = True


@dataclass
class PretrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    halve_every: int = 20
    lr_floor: float = 1.25e-4
    n_points: int = 512


@dataclass
class JointConfig:
    stage2_epochs: int = 80
    stage3_epochs: int = 80
    lr: float = 1e-4
    start_samples: int = 2048
    double_every: int = 20
    sample_cap: int = 32768
    point_batch: int = 2048
    duplication: int = 1
    alpha: float = 0.2
    lam: float = 0.005
    stage2_lr: float = 0.0  # 0 keeps stage 2 at lr
    stage2_halve_every: int = 0
    code_kappa: float = 0.0  # 0 feeds raw codes to the decoder
    decoder_hidden: tuple[int, ...] = (1024, 512, 256, 128)

    def __post_init__(self):
        self.decoder_hidden = tuple(int(h) for h in self.decoder_hidden)


@dataclass
class RefineSection:
    enabled: bool = True
    iterations: int = 25
    lr_transform: float = 0.002
    lr_decoder: float = 1e-4
    boundary_points: int = 1024


@dataclass
class SurfacingConfig:
    grid_resolution: int = 64
    grid_half_extent: float = 0.55
    mask_margin_cells: int = 4
    iso: float = 0.5
    weld_rel: float = 1e-6


@dataclass
class PipelineConfig:
    category: CategoryConfig = field(default_factory=CategoryConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    encoders: EncoderConfig = field(default_factory=EncoderConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    joint: JointConfig = field(default_factory=JointConfig)
    refine: RefineSection = field(default_factory=RefineSection)
    surfacing: SurfacingConfig = field(default_factory=SurfacingConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def for_category(cls, name: str) -> PipelineConfig:
        if name not in CATEGORIES:
            raise ValueError(f"unknown category {name!r}; choose from {sorted(CATEGORIES)}")
        return cls(category=CategoryConfig(name, CATEGORIES[name]))


def _coerce(value, current):
    """Convert a file or environment value to the type of the default."""
    if isinstance(current, bool):
        if isinstance(value, str):
            return value.strip().lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        items = list(value)
        if current and isinstance(current[0], int):
            items = [int(v) for v in items]
        return tuple(items)
    return str(value)


def _merge(cfg, values: dict, where: str):
    for key, val in values.items():
        if not hasattr(cfg, key):
            raise KeyError(f"unknown config key {where}{key}")
        cur = getattr(cfg, key)
        if dataclasses.is_dataclass(cur):
            if not isinstance(val, dict):
                raise TypeError(f"config section {where}{key} must be a table")
            _merge(cur, val, f"{where}{key}.")
        else:
            setattr(cfg, key, _coerce(val, cur))
    if hasattr(cfg, "__post_init__"):
        cfg.__post_init__()


def _parse_scalar(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX):].lower().split("__")
        node = out
        for p in path[:-1]:
            node = node.setdefault(p, {})
        node[path[-1]] = _parse_scalar(raw)
    return out


def load_config(path=None, category: str | None = None, environ=None, overrides: dict | None = None,
                base: PipelineConfig | None = None) -> PipelineConfig:
    """Defaults (or ``base``), then the TOML file, then env, then ``overrides``."""
    if base is not None:
        cfg = PipelineConfig.for_category(base.category.name)
        _merge(cfg, base.to_dict(), "")
    else:
        cfg = PipelineConfig.for_category(category) if category else PipelineConfig()
    if path is not None:
        data = tomllib.loads(Path(path).read_text())
        cat = data.get("category", {}).get("name")
        if cat and not category and base is None and "part_labels" not in data.get("category", {}):
            cfg = PipelineConfig.for_category(cat)
        _merge(cfg, data, "")
    _merge(cfg, env_overrides(environ), "")
    if overrides:
        _merge(cfg, overrides, "")
    return cfg


def desk_config(category: str = "chairlike") -> PipelineConfig:
    """Small sizes that keep an eight-shape end-to-end run within minutes."""
    cfg = PipelineConfig.for_category(category)
    cfg.preprocess.shape_samples = 8192
    cfg.preprocess.part_points = 1024
    cfg.preprocess.near_points = 256
    cfg.preprocess.train_samples = 8192
    cfg.encoders = EncoderConfig(max_patches=64, max_samples=32)
    cfg.pretrain.epochs = 20
    cfg.joint.stage2_epochs = 20
    cfg.joint.stage3_epochs = 20
    # eight near-identical training shapes: a narrower decoder, a short
    # warm start and standardized codes let stage 2 separate them in time
    cfg.joint.decoder_hidden = (256, 256, 128, 64)
    cfg.joint.start_samples = 8192
    cfg.joint.point_batch = 512
    cfg.joint.stage2_lr = 1e-3
    cfg.joint.stage2_halve_every = 5
    cfg.joint.code_kappa = 0.01
    return cfg
