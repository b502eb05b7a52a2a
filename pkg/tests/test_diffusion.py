import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from stagebokeh.diffusion import cfg_eps, ddim_step, predict_x0, q_sample, training_loss
from stagebokeh.sampler import SamplerConfig, sample_single_stage
from stagebokeh.schedule import ddim_timesteps


def _randn(*shape, seed=0, dtype=torch.float32):
    return torch.randn(shape, generator=torch.Generator().manual_seed(seed), dtype=dtype)


def test_q_sample_t0_is_identity(schedule):
    x0, eps = _randn(2, 3, 4, 4), _randn(2, 3, 4, 4, seed=1)
    assert torch.equal(q_sample(x0, 0, eps, schedule), x0)


def test_q_sample_zero_signal(schedule):
    eps = _randn(3, 4, 4)
    out = q_sample(torch.zeros_like(eps), 400, eps, schedule)
    torch.testing.assert_close(out, math.sqrt(1 - schedule.alpha_bars[400]) * eps)


def test_q_sample_monte_carlo_variance(schedule):
    t = schedule.T // 2
    x0 = _randn(1, 3, 4, 4, seed=5).expand(10_000, -1, -1, -1)
    eps = _randn(10_000, 3, 4, 4, seed=6, dtype=torch.float64).float()
    var = q_sample(x0, t, eps, schedule).var(dim=0)
    expected = 1 - schedule.alpha_bars[t]
    assert torch.all((var - expected).abs() / expected < 0.05)


def test_q_sample_rejects(schedule):
    x = torch.zeros(3, 4, 4)
    with pytest.raises(ValueError):
        q_sample(x, 1, torch.zeros(3, 4, 5), schedule)
    with pytest.raises(ValueError):
        q_sample(x, schedule.T + 1, x, schedule)
    with pytest.raises(ValueError):
        q_sample(x[None], torch.tensor([-1]), x[None], schedule)


def test_q_sample_per_item_timesteps(schedule):
    x0, eps = _randn(3, 2, 2, 2), _randn(3, 2, 2, 2, seed=1)
    t = torch.tensor([0, 10, 900])
    out = q_sample(x0, t, eps, schedule)
    for i, ti in enumerate(t.tolist()):
        torch.testing.assert_close(out[i], q_sample(x0[i], ti, eps[i], schedule))


@settings(max_examples=60, deadline=None)
@given(t=st.integers(1, 1000), seed=st.integers(0, 2**16))
def test_round_trip(schedule, t, seed):
    x0, eps = _randn(3, 8, 8, seed=seed), _randn(3, 8, 8, seed=seed + 1)
    back = predict_x0(q_sample(x0, t, eps, schedule), t, eps, schedule)
    assert (back - x0).abs().max() <= 1e-5 * max(1.0, 1 / math.sqrt(schedule.alpha_bars[t]))


def test_round_trip_all_timesteps_f32(schedule):
    x0, eps = _randn(3, 8, 8, seed=7), _randn(3, 8, 8, seed=8)
    worst = max(
        float((predict_x0(q_sample(x0, t, eps, schedule), t, eps, schedule) - x0).abs().max())
        for t in range(1, schedule.T + 1)
    )
    assert worst <= 1e-5


def test_predict_x0_zero_eps(schedule):
    z = _randn(3, 4, 4)
    torch.testing.assert_close(predict_x0(z, 300, torch.zeros_like(z), schedule), z / math.sqrt(schedule.alpha_bars[300]))


def test_predict_x0_scalar_oracle(schedule):
    z, e = _randn(2, 3, 3, dtype=torch.float64), _randn(2, 3, 3, seed=3, dtype=torch.float64)
    t = 637
    out = predict_x0(z, t, e, schedule)
    ab = schedule.alpha_bars[t]
    for idx in np.ndindex(*z.shape):
        expected = (z[idx].item() - (1 - ab) ** 0.5 * e[idx].item()) / ab**0.5
        assert out[idx].item() == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_predict_x0_rejects_t0(schedule):
    with pytest.raises(ValueError):
        predict_x0(torch.zeros(1), 0, torch.zeros(1), schedule)


def test_ddim_last_step_returns_x0_hat(schedule):
    z, e = _randn(3, 4, 4), _randn(3, 4, 4, seed=1)
    assert torch.equal(ddim_step(z, 20, 0, e, schedule), predict_x0(z, 20, e, schedule))


def test_ddim_step_scalar_oracle_with_eta(schedule):
    z, e, n = (_randn(2, 2, 2, seed=s, dtype=torch.float64) for s in (1, 2, 3))
    t, tp, eta = 500, 480, 0.7
    out = ddim_step(z, t, tp, e, schedule, eta=eta, noise=n)
    ab, abp = schedule.alpha_bars[t], schedule.alpha_bars[tp]
    sig = eta * math.sqrt((1 - abp) / (1 - ab)) * math.sqrt(1 - ab / abp)
    for idx in np.ndindex(*z.shape):
        x0 = (z[idx].item() - math.sqrt(1 - ab) * e[idx].item()) / math.sqrt(ab)
        exp = math.sqrt(abp) * x0 + math.sqrt(1 - abp - sig**2) * e[idx].item() + sig * n[idx].item()
        assert out[idx].item() == pytest.approx(exp, rel=1e-12)


def test_ddim_step_deterministic(schedule):
    z, e = _randn(3, 8, 8), _randn(3, 8, 8, seed=2)
    a = ddim_step(z, 980, 960, e, schedule)
    b = ddim_step(z.clone(), 980, 960, e.clone(), schedule)
    assert torch.equal(a, b)


@pytest.mark.parametrize("kw", [dict(t=10, t_prev=10), dict(t=10, t_prev=11), dict(t=10, t_prev=0, eta=1.5)])
def test_ddim_step_rejects(schedule, kw):
    z = torch.zeros(3)
    with pytest.raises(ValueError):
        ddim_step(z, kw["t"], kw["t_prev"], z, schedule, eta=kw.get("eta", 0.0))


def _point_mass_run(denoiser, schedule, num_steps, seed):
    z = _randn(1, *denoiser.sample_shape, seed=seed)
    ts = ddim_timesteps(schedule.T, num_steps) + [0]
    for t, tp in zip(ts, ts[1:]):
        z = ddim_step(z, t, tp, denoiser(z, t, torch.zeros(1, 8)), schedule)
    return z[0]


@pytest.mark.parametrize("num_steps", [1, 5, 50])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_point_mass_converges(point_mass, schedule, num_steps, seed):
    out = _point_mass_run(point_mass, schedule, num_steps, seed)
    assert (out - point_mass.x_star).abs().max() < 1e-4


def test_cfg_examples():
    u, c = _randn(5), _randn(5, seed=1)
    assert torch.equal(cfg_eps(u, c, 1.0), c)
    assert torch.equal(cfg_eps(u, c, 0.0), u)
    torch.testing.assert_close(cfg_eps(torch.zeros(5), c, 15.0), 15.0 * c)
    with pytest.raises(ValueError):
        cfg_eps(u, torch.zeros(4), 2.0)


@given(st.floats(0, 30), st.integers(0, 1000))
def test_cfg_affine(scale, seed):
    u, c = _randn(6, seed=seed, dtype=torch.float64), _randn(6, seed=seed + 1, dtype=torch.float64)
    torch.testing.assert_close(cfg_eps(u, c, scale), (1 - scale) * u + scale * c, rtol=1e-12, atol=1e-12)


class _OracleEps:
    """Recovers the exact noise from z_t given the clean batch."""

    def __init__(self, x0, schedule):
        self.x0, self.schedule = x0, schedule

    def __call__(self, z, t, e):
        ab = torch.as_tensor(self.schedule.alpha_bars[t.numpy()], dtype=z.dtype).view(-1, 1, 1, 1)
        return (z - ab.sqrt() * self.x0) / (1 - ab).sqrt()


def test_loss_zero_for_true_noise(schedule):
    x0 = _randn(16, 3, 4, 4, dtype=torch.float64)
    loss = training_loss(_OracleEps(x0, schedule), x0, torch.zeros(16, 4, dtype=torch.float64), schedule,
                         torch.Generator().manual_seed(0))
    assert float(loss) < 1e-20


def test_loss_of_zero_predictor_is_one(schedule):
    x0 = _randn(4096, 3, 4, 4)
    loss = training_loss(lambda z, t, e: torch.zeros_like(z), x0, torch.zeros(4096, 4), schedule,
                         torch.Generator().manual_seed(1))
    assert abs(float(loss) - 1.0) < 0.05


def test_loss_non_negative_random_denoisers(schedule):
    g = torch.Generator().manual_seed(2)
    x0 = _randn(4, 3, 4, 4)
    for trial in range(100):
        w = torch.randn(1, generator=g)
        loss = training_loss(lambda z, t, e: w * z, x0, torch.zeros(4, 2), schedule, g)
        assert float(loss) >= 0


def test_loss_rejects_empty(schedule):
    with pytest.raises(ValueError):
        training_loss(lambda z, t, e: z, torch.zeros(0, 3, 4, 4), torch.zeros(0, 2), schedule)


def test_training_loss_gradient_matches_finite_difference(schedule):
    from gradcheck_util import fd_vs_autograd, tiny_denoiser

    model = tiny_denoiser()
    rel = fd_vs_autograd(model, schedule, param_names=["conv_out.weight"], per_param=1)
    assert max(rel) <= 1e-3
