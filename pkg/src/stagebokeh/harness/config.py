"""Experiment configuration: strict JSON -> dataclasses.

Every section is optional and falls back to its defaults. Unknown keys
and wrongly typed values raise :class:`ConfigError` naming the dotted key.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, get_args, get_origin, get_type_hints

from ..conditioning import NULL, StagePlan
from ..metrics import Roi
from ..sampler import SamplerConfig
from ..schedule import NoiseSchedule, make_linear_schedule
from ..toymodel.scenes import SIDES, vocabulary
from ..toymodel.training import TrainConfig
from ..toymodel.unet import ModelConfig


class ConfigError(ValueError):
    pass


@dataclass
class ScheduleSection:
    T: int = 1000
    beta_start: float = 0.00085
    beta_end: float = 0.012


@dataclass
class SamplerSection:
    num_steps: int = 50
    eta: float = 0.0
    guidance_scale: float = 3.0
    batch: int = 4


@dataclass
class PlanSection:
    sigma: float = 0.8
    alpha: float = 1.0
    global_prompt: list[str] = field(
        default_factory=lambda: ["left", "left_circle", "left_red", "right", "right_square", "right_blue"]
    )
    local_prompt: list[str] = field(default_factory=lambda: ["left", "left_circle", "left_red"])


@dataclass
class ModelSection:
    channels: list[int] = field(default_factory=lambda: [24, 48, 64])
    time_dim: int = 128
    embed_dim: int = 64


@dataclass
class TrainSection:
    dataset_size: int = 4000
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    lr_min: float = 1e-5
    warmup_steps: int = 20
    cfg_dropout: float = 0.1
    grad_clip: float = 1.0
    eval_items: int = 512


@dataclass
class SweepSection:
    sigmas: list[float] = field(default_factory=lambda: [0.9, 0.8, 0.7, 0.6, 0.5])
    # None: one row per object of the global prompt
    local_prompts: list[list[str]] | None = None
    probe_sigmas: list[float] = field(default_factory=list)


@dataclass
class CompareSection:
    num_seeds: int = 16


@dataclass
class Img2ImgSection:
    strength: float = 0.5


@dataclass
class ExperimentConfig:
    seed: int = 42
    out_dir: str = "runs/default"
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    plan: PlanSection = field(default_factory=PlanSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    compare: CompareSection = field(default_factory=CompareSection)
    img2img: Img2ImgSection = field(default_factory=Img2ImgSection)
    rois: Any = "auto"

    # --- derived runtime objects -------------------------------------------------

    def noise_schedule(self) -> NoiseSchedule:
        s = self.schedule
        return make_linear_schedule(s.T, s.beta_start, s.beta_end)

    def sampler_config(self, seed: int | None = None, batch: int | None = None) -> SamplerConfig:
        s = self.sampler
        return SamplerConfig(
            s.num_steps, s.eta, s.guidance_scale,
            self.seed if seed is None else seed,
            s.batch if batch is None else batch,
        )

    def stage_plan(self, sigma: float | None = None, local_prompt=None) -> StagePlan:
        p = self.plan
        return StagePlan(
            p.sigma if sigma is None else sigma,
            p.alpha,
            tuple(p.global_prompt),
            tuple(p.local_prompt if local_prompt is None else local_prompt),
            self.sampler.num_steps,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(**dataclasses.asdict(self.train), seed=self.seed)

    def model_config(self) -> ModelConfig:
        m = self.model
        return ModelConfig(channels=tuple(m.channels), time_dim=m.time_dim, embed_dim=m.embed_dim, vocabulary=vocabulary())

    def explicit_rois(self) -> dict[str, Roi] | None:
        if self.rois == "auto":
            return None
        return {name: Roi(*box) for name, box in self.rois.items()}

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _check_type(value, tp, key: str):
    origin = get_origin(tp)
    if tp is Any:
        return value
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {type(value).__name__}")
        (inner,) = get_args(tp)
        return [_check_type(v, inner, f"{key}[{i}]") for i, v in enumerate(value)]
    if origin is not None and type(None) in get_args(tp):
        if value is None:
            return None
        (inner,) = [a for a in get_args(tp) if a is not type(None)]
        return _check_type(value, inner, key)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, key)
    raise ConfigError(f"{key}: unsupported type {tp}")


def _build(cls, data, prefix: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected an object, got {type(data).__name__}")
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            where = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"unknown key '{where}'")
    kwargs = {k: _check_type(v, hints[k], f"{prefix}.{k}" if prefix else k) for k, v in data.items()}
    return cls(**kwargs)


def _validate(cfg: ExperimentConfig) -> None:
    vocab = set(vocabulary()) | {NULL}

    def tokens(toks, key):
        if not toks:
            raise ConfigError(f"{key}: prompt must not be empty")
        bad = [t for t in toks if t not in vocab]
        if bad:
            raise ConfigError(f"{key}: unknown tokens {bad}")

    tokens(cfg.plan.global_prompt, "plan.global_prompt")
    tokens(cfg.plan.local_prompt, "plan.local_prompt")
    for i, p in enumerate(cfg.sweep.local_prompts or []):
        tokens(p, f"sweep.local_prompts[{i}]")
    if len(cfg.model.channels) != 3:
        raise ConfigError("model.channels: need exactly three resolutions")
    if not cfg.sweep.sigmas:
        raise ConfigError("sweep.sigmas: empty sigma list")
    for i, s in enumerate(cfg.sweep.sigmas + cfg.sweep.probe_sigmas):
        if not 0.0 < s <= 1.0:
            raise ConfigError(f"sweep sigma {s} outside (0, 1]")
    if cfg.compare.num_seeds < 2:
        raise ConfigError("compare.num_seeds: need at least 2 seeds")
    if not 0.0 < cfg.img2img.strength <= 1.0:
        raise ConfigError("img2img.strength: must lie in (0, 1]")
    if cfg.rois != "auto":
        if not isinstance(cfg.rois, dict):
            raise ConfigError("rois: expected \"auto\" or an object of name -> [x0, y0, width, height]")
        for name, box in cfg.rois.items():
            if not (isinstance(box, list) and len(box) == 4 and all(isinstance(v, int) and not isinstance(v, bool) for v in box)):
                raise ConfigError(f"rois.{name}: expected [x0, y0, width, height] integers")
    try:
        cfg.noise_schedule()
        cfg.sampler_config()
        cfg.stage_plan()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(data: dict) -> ExperimentConfig:
    cfg = _build(ExperimentConfig, data)
    _validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return parse_config({})
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(data)


def focus_side(prompt) -> str:
    """The single scene side a local prompt refers to."""
    sides = [s for s in SIDES if any(t == s or t.startswith(f"{s}_") for t in prompt)]
    if len(sides) != 1:
        raise ConfigError(f"local prompt {list(prompt)} must refer to exactly one side")
    return sides[0]
