"""Checkpoint persistence: ``manifest.json`` plus raw little-endian float32 blobs.

A checkpoint is a directory::

    manifest.json   format/architecture versions, vocabulary, model and
                    schedule hyperparameters, training metadata, tensor index
    tensors.bin     concatenated ``<f4`` tensors in manifest order
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..schedule import NoiseSchedule
from .unet import ARCH_NAME, ARCH_VERSION, ModelConfig, ToyDenoiser

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
BLOBS = "tensors.bin"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model_config: ModelConfig
    schedule: dict
    tensors: dict[str, np.ndarray]
    training: dict = field(default_factory=dict)

    @property
    def vocabulary(self) -> list[str]:
        return self.model_config.vocabulary

    @classmethod
    def from_model(cls, model: ToyDenoiser, schedule: NoiseSchedule, training: dict | None = None) -> "Checkpoint":
        tensors = {k: v.detach().cpu().to(torch.float32).numpy().copy() for k, v in model.state_dict().items()}
        return cls(model.cfg, schedule.to_dict(), tensors, dict(training or {}))

    def to_model(self) -> ToyDenoiser:
        model = ToyDenoiser(self.model_config, self.noise_schedule())
        state = {k: torch.from_numpy(v.copy()) for k, v in self.tensors.items()}
        missing, unexpected = model.load_state_dict(state, strict=False)
        if missing or unexpected:
            raise CheckpointError(f"tensor names do not match architecture: missing={missing}, unexpected={unexpected}")
        return model.eval()

    def noise_schedule(self) -> NoiseSchedule:
        return NoiseSchedule.from_dict(self.schedule)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = []
    offset = 0
    with open(path / BLOBS, "wb") as f:
        for name, arr in ckpt.tensors.items():
            raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            f.write(raw)
            index.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": {"name": ARCH_NAME, "version": ARCH_VERSION, "config": ckpt.model_config.to_dict()},
        "vocabulary": ckpt.vocabulary,
        "embed_dim": ckpt.model_config.embed_dim,
        "schedule": ckpt.schedule,
        "training": ckpt.training,
        "tensors": index,
    }
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt manifest in {path}: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {manifest.get('format_version')!r}")
    arch = manifest.get("architecture", {})
    if arch.get("name") != ARCH_NAME or arch.get("version") != ARCH_VERSION:
        raise CheckpointError(
            f"unknown architecture {arch.get('name')!r} version {arch.get('version')!r}; "
            f"this build reads {ARCH_NAME!r} version {ARCH_VERSION}"
        )
    cfg = ModelConfig.from_dict(arch["config"])
    if manifest.get("vocabulary") != cfg.vocabulary:
        raise CheckpointError("manifest vocabulary disagrees with architecture config")

    blob = (path / BLOBS).read_bytes()
    tensors = {}
    end = 0
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * 4
        if entry["nbytes"] != nbytes:
            raise CheckpointError(f"tensor {entry['name']}: shape {shape} needs {nbytes} bytes, manifest says {entry['nbytes']}")
        lo, hi = entry["offset"], entry["offset"] + nbytes
        if hi > len(blob):
            raise CheckpointError(f"tensor {entry['name']} truncated: needs bytes [{lo}, {hi}), blob has {len(blob)}")
        tensors[entry["name"]] = np.frombuffer(blob, dtype="<f4", count=nbytes // 4, offset=lo).reshape(shape).astype(np.float32)
        end = max(end, hi)
    if end != len(blob):
        raise CheckpointError(f"blob has {len(blob)} bytes, manifest accounts for {end}")
    return Checkpoint(cfg, manifest["schedule"], tensors, manifest.get("training", {}))
