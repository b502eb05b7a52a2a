import math
from pathlib import Path

import numpy as np
import pytest
import torch

from stagebokeh.conditioning import TokenTable
from stagebokeh.schedule import make_linear_schedule
from stagebokeh.toymodel.scenes import vocabulary

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_CHECKPOINT = ROOT / "checkpoints" / "default"


class PointMassDenoiser:
    """Optimal noise predictor when all data is the single image ``x_star``."""

    def __init__(self, x_star: torch.Tensor, schedule, dim: int = 8):
        self.x_star = x_star
        self.schedule = schedule
        self.table = TokenTable(vocabulary(), dim)
        self.sample_shape = tuple(x_star.shape)
        self.calls = []

    def __call__(self, z, t, e):
        self.calls.append((int(t), e.detach().clone()))
        ab = float(self.schedule.alpha_bars[int(t)])
        return (z - math.sqrt(ab) * self.x_star) / math.sqrt(1.0 - ab)


class RecordingDenoiser:
    """Deterministic conditioning-sensitive stand-in that logs its inputs."""

    def __init__(self, shape=(3, 8, 8), dim: int = 8, seed: int = 0):
        g = torch.Generator().manual_seed(seed)
        self.table = TokenTable(vocabulary(), dim)
        with torch.no_grad():
            self.table.weight.copy_(torch.randn(self.table.weight.shape, generator=g))
        self.proj = torch.randn(dim, shape[0], generator=g) * 0.1
        self.sample_shape = shape
        self.calls = []

    def __call__(self, z, t, e):
        self.calls.append((int(t), e.detach().clone()))
        bias = (e @ self.proj)[:, :, None, None]
        return 0.5 * torch.tanh(z) + bias


@pytest.fixture(scope="session")
def schedule():
    return make_linear_schedule()


@pytest.fixture
def point_mass(schedule):
    g = torch.Generator().manual_seed(1234)
    x_star = torch.rand((3, 16, 16), generator=g) * 2 - 1
    return PointMassDenoiser(x_star, schedule)


@pytest.fixture(scope="session")
def trained_checkpoint():
    """The committed default checkpoint; trains and saves it when missing."""
    from stagebokeh.harness.config import load_config
    from stagebokeh.toymodel.checkpoint import load_checkpoint
    from stagebokeh.toymodel.training import train

    if not (DEFAULT_CHECKPOINT / "manifest.json").exists():
        cfg = load_config(ROOT / "configs" / "default.json")
        out = DEFAULT_CHECKPOINT.parent / "default_run"
        train(cfg.train_config(), cfg.model_config(), cfg.noise_schedule(), out)
        (out / "checkpoint").rename(DEFAULT_CHECKPOINT)
    return load_checkpoint(DEFAULT_CHECKPOINT)


_acceptance_lines: list[tuple[int, str]] = []


def record_acceptance(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {name} -- {detail}"
    _acceptance_lines.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_acceptance_lines):
        terminalreporter.write_line(line)
