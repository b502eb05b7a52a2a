"""Training loop for the toy denoiser."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..conditioning import NULL
from ..diffusion import training_loss
from ..schedule import NoiseSchedule, make_linear_schedule
from .checkpoint import Checkpoint, save_checkpoint
from .scenes import make_dataset, vocabulary
from .unet import ModelConfig, ToyDenoiser, num_parameters

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    dataset_size: int = 4000
    epochs: int = 11
    batch_size: int = 64
    lr: float = 1e-3
    lr_min: float = 1e-5
    warmup_steps: int = 20
    cfg_dropout: float = 0.1
    grad_clip: float = 1.0
    eval_items: int = 512
    seed: int = 0


def _cosine_lr(step: int, total: int, cfg: TrainConfig) -> float:
    if step < cfg.warmup_steps:
        return cfg.lr * (step + 1) / cfg.warmup_steps
    frac = (step - cfg.warmup_steps) / max(1, total - cfg.warmup_steps)
    return cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + math.cos(math.pi * min(1.0, frac)))


def _encode_batch(model: ToyDenoiser, prompts, drop: np.ndarray):
    null = (NULL,)
    return model.table([null if d else p for p, d in zip(prompts, drop)])


@torch.no_grad()
def evaluate_loss(model: ToyDenoiser, images: np.ndarray, prompts, schedule: NoiseSchedule, seed: int, batch_size: int = 64) -> float:
    """Mean epsilon-MSE over ``images`` with a fixed noise/timestep draw."""
    g = torch.Generator().manual_seed(seed)
    total, count = 0.0, 0
    model.eval()
    for lo in range(0, len(images), batch_size):
        x0 = torch.from_numpy(images[lo:lo + batch_size]).permute(0, 3, 1, 2) * 2.0 - 1.0
        e = model.table(prompts[lo:lo + batch_size])
        loss = training_loss(model, x0, e, schedule, g)
        total += float(loss) * len(x0)
        count += len(x0)
    return total / count


def train(
    cfg: TrainConfig,
    model_cfg: ModelConfig | None = None,
    schedule: NoiseSchedule | None = None,
    out_dir: str | Path | None = None,
) -> Checkpoint:
    """Fit the denoiser on freshly rendered scenes.

    Writes ``checkpoint/`` and ``loss.csv`` under ``out_dir`` when given.
    Raises :class:`TrainingDiverged` on a non-finite loss.
    """
    schedule = schedule or make_linear_schedule()
    model_cfg = model_cfg or ModelConfig()
    if not model_cfg.vocabulary:
        model_cfg.vocabulary = vocabulary()

    start = time.perf_counter()
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    g = torch.Generator().manual_seed(cfg.seed)

    images, prompts = make_dataset(cfg.dataset_size, cfg.seed, model_cfg.height, model_cfg.width)
    eval_images, eval_prompts = make_dataset(cfg.eval_items, cfg.seed + 1, model_cfg.height, model_cfg.width)

    model = ToyDenoiser(model_cfg, schedule)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    steps_per_epoch = math.ceil(cfg.dataset_size / cfg.batch_size)
    total = steps_per_epoch * cfg.epochs
    log.info("training %d params for %d steps", num_parameters(model), total)
    initial_eval = evaluate_loss(model, eval_images, eval_prompts, schedule, cfg.seed + 2)

    history: list[tuple[int, float]] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(cfg.dataset_size)
        model.train()
        for lo in range(0, cfg.dataset_size, cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            x0 = torch.from_numpy(images[idx]).permute(0, 3, 1, 2) * 2.0 - 1.0
            drop = rng.random(len(idx)) < cfg.cfg_dropout
            e = _encode_batch(model, [prompts[i] for i in idx], drop)

            for group in opt.param_groups:
                group["lr"] = _cosine_lr(step, total, cfg)
            loss = training_loss(model, x0, e, schedule, g)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {float(loss)} at step {step} (epoch {epoch}, lr {opt.param_groups[0]['lr']:.2e})"
                )
            opt.zero_grad(set_to_none=True)
            loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            history.append((step, loss.item()))
            step += 1
        recent = np.mean([l for _, l in history[-steps_per_epoch:]])
        log.info("epoch %d  step %d  mean loss %.4f  %.0fs", epoch, step, recent, time.perf_counter() - start)

    eval_loss = evaluate_loss(model, eval_images, eval_prompts, schedule, cfg.seed + 2)
    wall = time.perf_counter() - start  # data generation, both evaluations and the optimizer loop
    tail = max(1, min(len(history), steps_per_epoch))
    meta = {
        "steps": step,
        "initial_loss": history[0][1],
        "initial_eval_loss": initial_eval,
        "final_epoch_loss": float(np.mean([l for _, l in history[-tail:]])),
        "eval_loss": eval_loss,
        "wall_seconds": wall,
        "num_parameters": num_parameters(model),
        "config": vars(cfg).copy(),
    }
    ckpt = Checkpoint.from_model(model.eval(), schedule, meta)
    if out_dir is not None:
        out = Path(out_dir)
        save_checkpoint(ckpt, out / "checkpoint")
        write_loss_csv(history, out / "loss.csv")
    return ckpt


def write_loss_csv(history, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "loss"])
        for step, loss in history:
            w.writerow([step, repr(float(loss))])
