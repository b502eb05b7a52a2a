"""Two-stage generation: global layout steps, then focus steps.

Images cross the codec boundary as ``(B, H, W, C)`` arrays in ``[0, 1]``;
latents are ``(B, C, H, W)`` float32 tensors in roughly ``[-1, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
import torch
from torch import Tensor

from .conditioning import NULL, StagePlan, TokenTable, encode_prompt, stage_embeddings
from .diffusion import Denoiser, LatentState, cfg_eps, ddim_step, q_sample
from .schedule import NoiseSchedule, ddim_timesteps


@dataclass(frozen=True)
class SamplerConfig:
    num_steps: int = 50
    eta: float = 0.0
    guidance_scale: float = 3.0
    seed: int = 42
    batch: int = 4

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if self.guidance_scale < 0:
            raise ValueError("guidance_scale must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")


class PerceptualCodec(Protocol):
    def encode(self, images: np.ndarray) -> Tensor: ...

    def decode(self, latents: Tensor) -> np.ndarray: ...


class IdentityCodec:
    """Pixel space is latent space, up to the ``[0, 1] <-> [-1, 1]`` range map."""

    def encode(self, images: np.ndarray) -> Tensor:
        x = torch.as_tensor(np.asarray(images, dtype=np.float32))
        if x.ndim == 3:
            x = x.unsqueeze(0)
        return (x * 2.0 - 1.0).permute(0, 3, 1, 2).contiguous()

    def decode(self, latents: Tensor) -> np.ndarray:
        x = ((latents + 1.0) * 0.5).clamp(0.0, 1.0)
        return x.permute(0, 2, 3, 1).contiguous().numpy()


def _table(denoiser, table: TokenTable | None) -> TokenTable:
    if table is not None:
        return table
    try:
        return denoiser.table
    except AttributeError:
        raise TypeError("pass table= or use a denoiser exposing .table") from None


def _timeline(num_steps: int, schedule: NoiseSchedule) -> list[int]:
    """DDIM timesteps followed by the terminal 0."""
    return ddim_timesteps(schedule.T, num_steps) + [0]


def guided_eps(denoiser: Denoiser, z: Tensor, t: int, e_cond: Tensor, e_null: Tensor, scale: float) -> Tensor:
    """Conditional and NULL branches evaluated as one doubled batch."""
    b = z.shape[0]
    emb = torch.cat([e_cond.expand(b, -1), e_null.expand(b, -1)])
    eps = denoiser(torch.cat([z, z]), t, emb)
    return cfg_eps(eps[b:], eps[:b], scale)


@torch.no_grad()
def _run_steps(
    denoiser: Denoiser,
    z: Tensor,
    steps: range,
    embedding_for: Callable[[int], Tensor],
    e_null: Tensor,
    config: SamplerConfig,
    schedule: NoiseSchedule,
    generator: torch.Generator | None,
) -> Tensor:
    ts = _timeline(config.num_steps, schedule)
    for i in steps:
        eps = guided_eps(denoiser, z, ts[i], embedding_for(i), e_null, config.guidance_scale)
        noise = None
        if config.eta > 0:
            noise = torch.randn(z.shape, generator=generator, dtype=z.dtype)
        z = ddim_step(z, ts[i], ts[i + 1], eps, schedule, eta=config.eta, noise=noise)
    return z


def _check_plan(plan: StagePlan, config: SamplerConfig) -> None:
    if plan.num_steps != config.num_steps:
        raise ValueError(f"plan has {plan.num_steps} steps but sampler config has {config.num_steps}")


def run_global_stage(
    denoiser: Denoiser,
    plan: StagePlan,
    z_T: LatentState,
    config: SamplerConfig,
    schedule: NoiseSchedule,
    table: TokenTable | None = None,
    generator: torch.Generator | None = None,
) -> LatentState:
    """Steps ``0 .. boundary - 1`` under the global embedding."""
    _check_plan(plan, config)
    if z_T.timestep != schedule.T:
        raise ValueError(f"global stage starts at T={schedule.T}, got timestep {z_T.timestep}")
    table = _table(denoiser, table)
    e_global, _ = stage_embeddings(plan, table)
    e_null = encode_prompt(table, (NULL,)).detach()
    b = plan.boundary
    z = _run_steps(denoiser, z_T.data, range(0, b), lambda i: e_global, e_null, config, schedule, generator)
    return LatentState(z, _timeline(config.num_steps, schedule)[b])


def run_focus_stage(
    denoiser: Denoiser,
    plan: StagePlan,
    z_mid: LatentState,
    config: SamplerConfig,
    schedule: NoiseSchedule,
    table: TokenTable | None = None,
    generator: torch.Generator | None = None,
) -> LatentState:
    """Steps ``boundary .. N - 1`` under the interpolated embedding."""
    _check_plan(plan, config)
    ts = _timeline(config.num_steps, schedule)
    b = plan.boundary
    if z_mid.timestep != ts[b]:
        raise ValueError(f"focus stage expects timestep {ts[b]} at boundary {b}, got {z_mid.timestep}")
    table = _table(denoiser, table)
    _, e_focus = stage_embeddings(plan, table)
    e_null = encode_prompt(table, (NULL,)).detach()
    z = _run_steps(denoiser, z_mid.data, range(b, config.num_steps), lambda i: e_focus, e_null, config, schedule, generator)
    return LatentState(z, 0)


def initial_noise(config: SamplerConfig, shape: tuple[int, int, int]) -> tuple[Tensor, torch.Generator]:
    g = torch.Generator().manual_seed(config.seed)
    return torch.randn((config.batch, *shape), generator=g), g


def generate_text_to_image(
    denoiser: Denoiser,
    plan: StagePlan,
    config: SamplerConfig,
    schedule: NoiseSchedule,
    codec: PerceptualCodec | None = None,
    shape: tuple[int, int, int] | None = None,
    table: TokenTable | None = None,
) -> np.ndarray:
    """Seeded batch of ``config.batch`` images, ``(B, H, W, C)`` in ``[0, 1]``."""
    codec = codec or IdentityCodec()
    shape = shape or denoiser.sample_shape
    z, g = initial_noise(config, shape)
    mid = run_global_stage(denoiser, plan, LatentState(z, schedule.T), config, schedule, table, g)
    out = run_focus_stage(denoiser, plan, mid, config, schedule, table, g)
    return codec.decode(out.data)


def sample_single_stage(
    denoiser: Denoiser,
    prompt,
    config: SamplerConfig,
    schedule: NoiseSchedule,
    codec: PerceptualCodec | None = None,
    shape: tuple[int, int, int] | None = None,
    table: TokenTable | None = None,
) -> np.ndarray:
    """Plain guided DDIM sampling with one prompt; the baseline for comparisons."""
    codec = codec or IdentityCodec()
    shape = shape or denoiser.sample_shape
    table = _table(denoiser, table)
    with torch.no_grad():
        e = encode_prompt(table, tuple(prompt))
        e_null = encode_prompt(table, (NULL,))
    z, g = initial_noise(config, shape)
    ts = _timeline(config.num_steps, schedule)
    with torch.no_grad():
        for i in range(config.num_steps):
            eps = guided_eps(denoiser, z, ts[i], e, e_null, config.guidance_scale)
            noise = torch.randn(z.shape, generator=g, dtype=z.dtype) if config.eta > 0 else None
            z = ddim_step(z, ts[i], ts[i + 1], eps, schedule, eta=config.eta, noise=noise)
    return codec.decode(z)


def img2img_start_index(strength: float, num_steps: int) -> int:
    """First sampler step executed: ``N - floor(strength * N)``."""
    if not 0.0 < strength <= 1.0:
        raise ValueError(f"strength must lie in (0, 1], got {strength}")
    return num_steps - int(math.floor(strength * num_steps + 1e-9))


def generate_image_to_image(
    denoiser: Denoiser,
    input_image: np.ndarray,
    strength: float,
    plan: StagePlan,
    config: SamplerConfig,
    schedule: NoiseSchedule,
    codec: PerceptualCodec | None = None,
    table: TokenTable | None = None,
) -> np.ndarray:
    """Noise ``input_image`` part-way and denoise the remaining steps.

    The stage boundary stays where it falls on the full ``N``-step schedule,
    so only focus steps run when ``strength`` is at most ``1 - sigma``.
    Returns ``(B, H, W, C)`` with ``B == config.batch``.
    """
    _check_plan(plan, config)
    codec = codec or IdentityCodec()
    img = np.asarray(input_image, dtype=np.float32)
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("input image must lie in [0, 1]")
    k = img2img_start_index(strength, config.num_steps)
    table = _table(denoiser, table)
    ts = _timeline(config.num_steps, schedule)

    x0 = codec.encode(img)
    x0 = x0.expand(config.batch, *x0.shape[1:]).contiguous()
    g = torch.Generator().manual_seed(config.seed)
    eps = torch.randn(x0.shape, generator=g)
    z = q_sample(x0, ts[k], eps, schedule)

    e_global, e_focus = stage_embeddings(plan, table)
    e_null = encode_prompt(table, (NULL,)).detach()
    b = plan.boundary
    z = _run_steps(
        denoiser, z, range(k, config.num_steps),
        lambda i: e_global if i < b else e_focus,
        e_null, config, schedule, g,
    )
    return codec.decode(z)
