"""Noise schedule and DDIM timestep subsequence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear-beta forward process of length ``T``.

    ``betas``, ``alphas`` and ``alpha_bars`` are indexed by timestep
    ``t`` in ``0..T``. Index 0 is the clean image: ``alpha_bars[0] == 1``
    and ``betas[0] == 0``; the real process lives in ``1..T``.
    """

    T: int
    beta_start: float
    beta_end: float
    betas: np.ndarray = field(repr=False)
    alphas: np.ndarray = field(repr=False)
    alpha_bars: np.ndarray = field(repr=False)

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return float(self.alpha_bars[t])

    def to_dict(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return make_linear_schedule(int(d["T"]), float(d["beta_start"]), float(d["beta_end"]))


def make_linear_schedule(T: int = 1000, beta_start: float = 0.00085, beta_end: float = 0.012) -> NoiseSchedule:
    """Betas linearly spaced from ``beta_start`` to ``beta_end`` inclusive."""
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.zeros(T + 1, dtype=np.float64)
    betas[1:] = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    for a in (betas, alphas, alpha_bars):
        a.setflags(write=False)
    return NoiseSchedule(T, beta_start, beta_end, betas, alphas, alpha_bars)


def ddim_timesteps(T: int, num_steps: int) -> list[int]:
    """Strictly descending timesteps ``T, T - s, ...`` with ``s = T // num_steps``.

    The sampler pairs consecutive entries and finishes with a step to 0.
    """
    if not 1 <= num_steps <= T:
        raise ValueError(f"need 1 <= num_steps <= T, got num_steps={num_steps}, T={T}")
    stride = T // num_steps
    return [T - i * stride for i in range(num_steps)]
