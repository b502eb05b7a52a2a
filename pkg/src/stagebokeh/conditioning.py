"""Prompt embeddings and the per-step conditioning of the two-stage sampler.

Prompts are bags of token names from a closed vocabulary. A prompt is
embedded as the sum of its token rows. Sampling steps before the stage
boundary see the global prompt; the rest see the blend

    e_bar = (e_local + alpha * e_global) / (1 + alpha)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import Tensor, nn

NULL = "<null>"

Prompt = tuple[str, ...]


class TokenTable(nn.Module):
    """Learned embedding row per vocabulary token. Row 0 is always ``NULL``."""

    def __init__(self, vocabulary: Sequence[str], dim: int = 64):
        super().__init__()
        vocab = list(vocabulary)
        if NULL in vocab:
            vocab.remove(NULL)
        self.vocabulary: list[str] = [NULL, *vocab]
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValueError("duplicate tokens in vocabulary")
        self.index = {tok: i for i, tok in enumerate(self.vocabulary)}
        self.dim = dim
        self.weight = nn.Parameter(torch.randn(len(self.vocabulary), dim) * dim**-0.5)

    def ids(self, prompt: Sequence[str]) -> list[int]:
        unknown = [tok for tok in prompt if tok not in self.index]
        if unknown:
            raise KeyError(f"unknown tokens {unknown}; vocabulary is {self.vocabulary}")
        return [self.index[tok] for tok in prompt]

    def forward(self, prompts: Sequence[Sequence[str]]) -> Tensor:
        """Differentiable batch encoding used during training."""
        return torch.stack([encode_prompt(self, p) for p in prompts])


def encode_prompt(table: TokenTable, prompt: Sequence[str]) -> Tensor:
    """Sum of token rows. Summation runs in sorted id order, so it ignores token order."""
    if len(prompt) == 0:
        raise ValueError("empty prompt; use (NULL,) for the unconditional embedding")
    ids = sorted(table.ids(prompt))
    out = table.weight[ids[0]]
    for i in ids[1:]:
        out = out + table.weight[i]
    return out


def interpolate_embeddings(e_local: Tensor, e_global: Tensor, alpha: float) -> Tensor:
    """Blend toward ``e_global`` with weight ``alpha / (1 + alpha)``.

    Written in lerp form so equal inputs and ``alpha == 0`` return
    ``e_local`` bit-exactly; the clamp absorbs last-ulp overshoot.
    """
    if e_local.shape != e_global.shape:
        raise ValueError(f"dimension mismatch {tuple(e_local.shape)} vs {tuple(e_global.shape)}")
    if not alpha >= 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    if alpha == 0.0:
        return e_local.clone()
    w = alpha / (1.0 + alpha)
    out = e_local + w * (e_global - e_local)
    return torch.clamp(out, torch.minimum(e_local, e_global), torch.maximum(e_local, e_global))


@dataclass(frozen=True)
class StagePlan:
    sigma: float
    alpha: float
    global_prompt: Prompt
    local_prompt: Prompt
    num_steps: int

    def __post_init__(self):
        if not 0.0 < self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in (0, 1], got {self.sigma}")
        if not self.alpha >= 0.0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        object.__setattr__(self, "global_prompt", tuple(self.global_prompt))
        object.__setattr__(self, "local_prompt", tuple(self.local_prompt))

    @property
    def boundary(self) -> int:
        """``round(sigma * N)`` with ties rounded up."""
        return min(self.num_steps, int(math.floor(self.sigma * self.num_steps + 0.5 + 1e-9)))

    @classmethod
    def single_stage(cls, prompt: Sequence[str], num_steps: int) -> "StagePlan":
        return cls(1.0, 0.0, tuple(prompt), tuple(prompt), num_steps)


@torch.no_grad()
def stage_embeddings(plan: StagePlan, table: TokenTable) -> tuple[Tensor, Tensor]:
    """(global embedding, focus-stage embedding) for ``plan``."""
    e_global = encode_prompt(table, plan.global_prompt)
    e_focus = interpolate_embeddings(encode_prompt(table, plan.local_prompt), e_global, plan.alpha)
    return e_global, e_focus


def conditioning_for_step(plan: StagePlan, step_index: int, table: TokenTable) -> Tensor:
    if not 0 <= step_index < plan.num_steps:
        raise IndexError(f"step_index {step_index} outside [0, {plan.num_steps})")
    e_global, e_focus = stage_embeddings(plan, table)
    return e_global if step_index < plan.boundary else e_focus
