"""Forward noising, epsilon-prediction loss, the DDIM update and guidance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import torch
from torch import Tensor

from .schedule import NoiseSchedule


class Denoiser(Protocol):
    """Anything that predicts the added noise: ``eps_hat = f(z_t, t, e)``.

    ``z_t`` is ``(B, C, H, W)``, ``t`` a python int or a ``(B,)`` long tensor,
    ``e`` a ``(B, d)`` conditioning batch. The output has the shape of ``z_t``.
    """

    def __call__(self, z_t: Tensor, t: int | Tensor, e: Tensor) -> Tensor: ...


@dataclass
class LatentState:
    data: Tensor
    timestep: int


def _coef(values, like: Tensor) -> Tensor:
    """Per-item coefficients broadcast against a batched ``like``."""
    c = torch.as_tensor(values, dtype=like.dtype, device=like.device)
    if c.ndim == 1:
        c = c.view(-1, *([1] * (like.ndim - 1)))
    return c


def _check_t(t, schedule: NoiseSchedule) -> None:
    if isinstance(t, Tensor):
        bad = (t < 0) | (t > schedule.T)
        if bool(bad.any()):
            raise ValueError(f"timesteps outside [0, {schedule.T}]")
    elif not 0 <= t <= schedule.T:
        raise ValueError(f"timestep {t} outside [0, {schedule.T}]")


def _alpha_bar(t, schedule: NoiseSchedule):
    if isinstance(t, Tensor):
        return schedule.alpha_bars[t.cpu().numpy()]
    return schedule.alpha_bars[t]


def q_sample(x0: Tensor, t: int | Tensor, eps: Tensor, schedule: NoiseSchedule) -> Tensor:
    """``sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps``; ``t`` may be per item."""
    if eps.shape != x0.shape:
        raise ValueError(f"eps shape {tuple(eps.shape)} != x0 shape {tuple(x0.shape)}")
    _check_t(t, schedule)
    if not isinstance(t, Tensor) and t == 0:
        return x0.clone()
    ab = _alpha_bar(t, schedule)
    return _coef(ab ** 0.5, x0) * x0 + _coef((1.0 - ab) ** 0.5, x0) * eps


def predict_x0(z_t: Tensor, t: int, eps_hat: Tensor, schedule: NoiseSchedule) -> Tensor:
    if t < 1:
        raise ValueError("predict_x0 needs t >= 1")
    _check_t(t, schedule)
    ab = float(schedule.alpha_bars[t])
    return (z_t - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)


def ddim_step(
    z_t: Tensor,
    t: int,
    t_prev: int,
    eps_hat: Tensor,
    schedule: NoiseSchedule,
    eta: float = 0.0,
    noise: Tensor | None = None,
) -> Tensor:
    """One DDIM update from timestep ``t`` down to ``t_prev``.

    With ``eta == 0`` the update is deterministic and ``noise`` is ignored.
    """
    if not t > t_prev >= 0:
        raise ValueError(f"need t > t_prev >= 0, got t={t}, t_prev={t_prev}")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must lie in [0, 1], got {eta}")
    ab_t = float(schedule.alpha_bars[t])
    ab_prev = float(schedule.alpha_bars[t_prev])
    x0_hat = predict_x0(z_t, t, eps_hat, schedule)
    sigma = eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)
    radicand = 1.0 - ab_prev - sigma**2
    if radicand < -1e-12:
        raise ValueError(f"negative radicand {radicand}: inconsistent schedule")
    out = math.sqrt(ab_prev) * x0_hat
    if radicand > 0.0:
        out = out + math.sqrt(radicand) * eps_hat
    if sigma > 0.0:
        if noise is None or noise.shape != z_t.shape:
            raise ValueError("eta > 0 needs a noise tensor shaped like z_t")
        out = out + sigma * noise
    return out


def cfg_eps(eps_uncond: Tensor, eps_cond: Tensor, scale: float) -> Tensor:
    """``eps_uncond + scale * (eps_cond - eps_uncond)``."""
    if eps_uncond.shape != eps_cond.shape:
        raise ValueError(f"shape mismatch {tuple(eps_uncond.shape)} vs {tuple(eps_cond.shape)}")
    # lerp returns its endpoints exactly at scale 0 and 1
    return torch.lerp(eps_uncond, eps_cond, float(scale))


def training_loss(
    denoiser: Denoiser,
    x0: Tensor,
    embeddings: Tensor,
    schedule: NoiseSchedule,
    generator: torch.Generator | None = None,
) -> Tensor:
    """Epsilon-prediction MSE with ``t ~ U{1..T}`` and ``eps ~ N(0, 1)`` per item."""
    if x0.shape[0] == 0:
        raise ValueError("empty batch")
    if embeddings.shape[0] != x0.shape[0]:
        raise ValueError("embeddings not aligned with batch")
    b = x0.shape[0]
    t = torch.randint(1, schedule.T + 1, (b,), generator=generator)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    z_t = q_sample(x0, t, eps, schedule)
    return ((eps - denoiser(z_t, t, embeddings)) ** 2).mean()
