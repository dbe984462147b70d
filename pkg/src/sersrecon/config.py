"""Pipeline configuration: one JSON document, every field defaulted."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import TypeAdapter, ValidationError

from .neuralnet import NetworkConfig, TrainConfig, default_config, propagate_shapes
from .scanner import PhantomLayout, ScanPlan, SpotModel, default_layout
from .spectral_core import PreprocessConfig
from .synthgen import MaterialSpec, default_materials, mineral_materials


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AxisConfig:
    start_nm: float = 810.0
    stop_nm: float = 920.0
    n_points: int = 1101

    def __post_init__(self):
        if not self.start_nm < self.stop_nm:
            raise ValueError("start_nm must be < stop_nm")
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")

    def values(self) -> np.ndarray:
        return np.round(np.linspace(self.start_nm, self.stop_nm, self.n_points), 10)


@dataclass(frozen=True)
class Seeds:
    pretrain_data: int = 1
    pretrain_init: int = 2
    finetune_data: int = 4
    test_data: int = 5
    head_init: int = 6
    scan: int = 8

    @classmethod
    def from_base(cls, base: int) -> "Seeds":
        names = [f.name for f in dataclasses.fields(cls)]
        return cls(**{n: 16 * base + k for k, n in enumerate(names)})


@dataclass(frozen=True)
class PipelineConfig:
    materials: tuple[MaterialSpec, ...] = field(default_factory=lambda: tuple(default_materials()))
    pretrain_materials: tuple[MaterialSpec, ...] = field(default_factory=lambda: tuple(mineral_materials()))
    # fine-tuning classes, in label order: 0 = control, 1 = Cy 7.5
    finetune_classes: tuple[str, ...] = ("control_agarose", "cy75_agarose")
    layout: PhantomLayout = field(default_factory=default_layout)
    plan: ScanPlan = field(default_factory=ScanPlan)
    spot: SpotModel = field(default_factory=SpotModel)
    axis: AxisConfig = field(default_factory=AxisConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    network: NetworkConfig = field(default_factory=lambda: default_config(4))
    pretrain: TrainConfig = field(default_factory=lambda: TrainConfig(seed=3))
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(seed=7, target_val_accuracy=1.0))
    n_pretrain_per_class: int = 100
    n_finetune_per_class: int = 100
    n_test_per_class: int = 20
    boundary_tol_cells: int = 1
    seeds: Seeds = field(default_factory=Seeds)
    output_dir: str = "out"

    def material_map(self) -> dict[str, MaterialSpec]:
        return {m.label: m for m in self.materials}

    def with_seed(self, base: int) -> "PipelineConfig":
        s = Seeds.from_base(base)
        return dataclasses.replace(
            self,
            seeds=s,
            pretrain=dataclasses.replace(self.pretrain, seed=16 * base + 14),
            finetune=dataclasses.replace(self.finetune, seed=16 * base + 15),
        )


_ADAPTER = TypeAdapter(PipelineConfig)


def _unknown_keys(given, known, path="") -> list[str]:
    out = []
    if isinstance(given, dict) and isinstance(known, dict):
        for k, v in given.items():
            p = f"{path}.{k}" if path else k
            if k not in known:
                out.append(p)
            else:
                out += _unknown_keys(v, known[k], p)
    elif isinstance(given, list) and isinstance(known, list):
        for i, (g, k) in enumerate(zip(given, known)):
            out += _unknown_keys(g, k, f"{path}[{i}]")
    return out


def _check(cfg: PipelineConfig) -> None:
    labels = [m.label for m in cfg.materials]
    if len(set(labels)) != len(labels):
        raise ConfigError("materials: duplicate labels")
    missing = sorted(cfg.layout.labels() - set(labels))
    if missing:
        raise ConfigError(f"layout: unknown material label(s) {missing}")
    for lab in cfg.finetune_classes:
        if lab not in labels:
            raise ConfigError(f"finetune_classes: unknown material {lab!r}")
    if len(cfg.finetune_classes) != 2:
        raise ConfigError("finetune_classes: exactly two classes (control, positive) required")
    if cfg.network.input_length != cfg.preprocess.n_features:
        raise ConfigError("network.input_length: must equal preprocess.n_features")
    if cfg.network.n_classes != len(cfg.pretrain_materials):
        raise ConfigError("network.n_classes: must equal the number of pretrain_materials")
    try:
        propagate_shapes(cfg.network)
    except ValueError as exc:
        raise ConfigError(f"network: {exc}") from exc
    for name in ("n_pretrain_per_class", "n_finetune_per_class", "n_test_per_class"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name}: must be >= 1")
    if cfg.boundary_tol_cells < 0:
        raise ConfigError("boundary_tol_cells: must be >= 0")


def config_from_dict(data: dict) -> PipelineConfig:
    try:
        cfg = _ADAPTER.validate_python(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise ConfigError(f"{where}: {first['msg']}") from exc
    bad = _unknown_keys(data, config_to_dict(cfg, exclude_none=False))
    if bad:
        raise ConfigError(f"{bad[0]}: unknown field")
    _check(cfg)
    return cfg


def config_to_dict(cfg: PipelineConfig, exclude_none: bool = True) -> dict:
    return _ADAPTER.dump_python(cfg, mode="json", exclude_none=exclude_none)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(data)


def default_config_json() -> str:
    return json.dumps(config_to_dict(PipelineConfig()), indent=2, sort_keys=True) + "\n"
