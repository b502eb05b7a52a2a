"""Small conditional U-Net noise predictor."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import Tensor, nn
import torch.nn.functional as F

from ..conditioning import TokenTable
from ..schedule import NoiseSchedule, make_linear_schedule

ARCH_NAME = "tiny-unet"
ARCH_VERSION = 1


@dataclass
class ModelConfig:
    channels: tuple[int, ...] = (24, 48, 64)
    time_dim: int = 128
    embed_dim: int = 64
    image_channels: int = 3
    height: int = 64
    width: int = 64
    max_groups: int = 8
    vocabulary: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


def timestep_embedding(t: Tensor, dim: int, max_period: float = 10000.0) -> Tensor:
    """Sinusoidal features of integer timesteps, ``(B,) -> (B, dim)``."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / max(half, 1))
    args = t.to(torch.float64)[:, None] * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


def _groups(c: int, max_groups: int) -> int:
    return math.gcd(c, max_groups)


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int, emb_dim: int, max_groups: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(cin, max_groups), cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.emb = nn.Linear(emb_dim, cout)
        self.norm2 = nn.GroupNorm(_groups(cout, max_groups), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x: Tensor, emb: Tensor) -> Tensor:
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class ToyDenoiser(nn.Module):
    """Encoder-decoder over three resolutions with skip connections.

    The timestep enters through a sinusoidal embedding and an MLP; the prompt
    embedding is mapped linearly and added to it. The token table lives
    inside the module so it trains and checkpoints with the denoiser.

    The network body ``F`` is combined with its input as
    ``eps_hat = sqrt(1 - abar_t) * z_t + sqrt(abar_t) * F``. Near ``t = T`` the
    noise is then ``z_t`` itself up to a small correction, and the implied
    clean-image estimate ``sqrt(abar_t) * z_t - sqrt(1 - abar_t) * F`` stays
    bounded instead of scaling with ``1 / sqrt(abar_T)``.
    """

    def __init__(self, cfg: ModelConfig, schedule: NoiseSchedule | None = None):
        super().__init__()
        schedule = schedule or make_linear_schedule()
        ab = torch.tensor(np.array(schedule.alpha_bars), dtype=torch.float64)
        self.register_buffer("skip_coef", (1.0 - ab).sqrt(), persistent=False)
        self.register_buffer("out_coef", ab.sqrt(), persistent=False)
        if len(cfg.channels) != 3:
            raise ValueError("the denoiser uses exactly three resolutions")
        self.cfg = cfg
        c0, c1, c2 = cfg.channels
        td, g = cfg.time_dim, cfg.max_groups
        self.table = TokenTable(cfg.vocabulary, cfg.embed_dim)
        self.time_mlp = nn.Sequential(nn.Linear(c0, td), nn.SiLU(), nn.Linear(td, td))
        self.cond_proj = nn.Linear(cfg.embed_dim, td)

        self.conv_in = nn.Conv2d(cfg.image_channels, c0, 3, padding=1)
        self.down0 = ResBlock(c0, c0, td, g)
        self.pool0 = nn.Conv2d(c0, c0, 3, stride=2, padding=1)
        self.down1 = ResBlock(c0, c1, td, g)
        self.pool1 = nn.Conv2d(c1, c1, 3, stride=2, padding=1)
        self.down2 = ResBlock(c1, c2, td, g)
        self.mid = ResBlock(c2, c2, td, g)
        self.up2 = ResBlock(c2 + c2, c2, td, g)
        self.unpool1 = nn.Conv2d(c2, c2, 3, padding=1)
        self.up1 = ResBlock(c2 + c1, c1, td, g)
        self.unpool0 = nn.Conv2d(c1, c1, 3, padding=1)
        self.up0 = ResBlock(c1 + c0, c0, td, g)
        self.norm_out = nn.GroupNorm(_groups(c0, g), c0)
        self.conv_out = nn.Conv2d(c0, cfg.image_channels, 3, padding=1)

    @property
    def sample_shape(self) -> tuple[int, int, int]:
        return (self.cfg.image_channels, self.cfg.height, self.cfg.width)

    def forward(self, z_t: Tensor, t, e: Tensor) -> Tensor:
        if z_t.ndim != 4 or tuple(z_t.shape[1:]) != self.sample_shape:
            raise ValueError(f"expected (B, {self.sample_shape}), got {tuple(z_t.shape)}")
        b = z_t.shape[0]
        if e.ndim == 1:
            e = e.expand(b, -1)
        if e.shape != (b, self.cfg.embed_dim):
            raise ValueError(f"conditioning must be (B, {self.cfg.embed_dim}), got {tuple(e.shape)}")
        if not isinstance(t, Tensor):
            t = torch.full((b,), int(t), dtype=torch.long)
        elif t.ndim == 0:
            t = t.expand(b)

        temb = timestep_embedding(t, self.cfg.channels[0]).to(z_t.dtype)
        emb = self.time_mlp(temb) + self.cond_proj(e)

        h0 = self.down0(self.conv_in(z_t), emb)
        h1 = self.down1(self.pool0(h0), emb)
        h2 = self.down2(self.pool1(h1), emb)
        h = self.mid(h2, emb)
        h = self.up2(torch.cat([h, h2], 1), emb)
        h = self.unpool1(F.interpolate(h, scale_factor=2, mode="nearest"))
        h = self.up1(torch.cat([h, h1], 1), emb)
        h = self.unpool0(F.interpolate(h, scale_factor=2, mode="nearest"))
        h = self.up0(torch.cat([h, h0], 1), emb)
        body = self.conv_out(F.silu(self.norm_out(h)))
        c_skip = self.skip_coef[t].to(z_t.dtype).view(-1, 1, 1, 1)
        c_out = self.out_coef[t].to(z_t.dtype).view(-1, 1, 1, 1)
        return c_skip * z_t + c_out * body


def denoiser_forward(model: ToyDenoiser, z_t: Tensor, t, e: Tensor) -> Tensor:
    return model(z_t, t, e)


def num_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
