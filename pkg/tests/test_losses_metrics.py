import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mcunet.errors import NonFiniteLossError, ValidationError
from mcunet.losses import LossWeights, composite_loss, gamma1_schedule
from mcunet.metrics import magnitude, psnr, ssim, ssim_t
from oracles import ssim_oracle

# ----------------------------------------------------------------- schedule


def test_gamma1_examples():
    g = gamma1_schedule(10)
    assert g[0] == 0.1
    assert g[-1] == 1.0
    assert g[4] == pytest.approx(0.27825594022071243, rel=1e-15)
    assert list(gamma1_schedule(1)) == [1.0]
    assert gamma1_schedule(2).tolist() == [0.1, 1.0]


@given(st.integers(2, 60))
def test_gamma1_increasing(K):
    g = gamma1_schedule(K)
    assert len(g) == K and g[-1] == 1.0
    assert np.all(np.diff(g) > 0)
    np.testing.assert_allclose(g, [10 ** ((k - K) / (K - 1)) for k in range(1, K + 1)], rtol=1e-14)


def test_gamma1_errors():
    for K in (0, -3):
        with pytest.raises(ValidationError):
            gamma1_schedule(K)
    with pytest.raises(ValidationError):
        LossWeights([0.5, 0.2, 1.0])
    with pytest.raises(ValidationError):
        LossWeights([0.5, 0.9])
    assert LossWeights.default(4, intermediate=False).final_only


# ----------------------------------------------------------------- composite loss


def _imgs(seed, K=3, H=16, W=16):
    g = torch.Generator().manual_seed(seed)
    x_g = torch.randn(1, 2, H, W, generator=g)
    xs = [x_g + 0.1 * torch.randn(1, 2, H, W, generator=g) for _ in range(K)]
    sym = [torch.rand((), generator=g) for _ in range(K)]
    return x_g, xs, sym


def test_loss_zero_at_perfect_point():
    x_g, _, _ = _imgs(0)
    terms = composite_loss([x_g.clone() for _ in range(3)], x_g, [torch.zeros(())] * 3, LossWeights.default(3))
    assert float(terms.total) == 0.0


def test_loss_k1_mse_only():
    x_g = torch.zeros(1, 2, 4, 4)
    x = torch.ones(1, 2, 4, 4)
    terms = composite_loss([x], x_g, [torch.zeros(())], LossWeights([1.0], include_ssim=False))
    assert float(terms.total) == 1.0


def test_loss_term_by_term_oracle():
    x_g, xs, sym = _imgs(1, K=4)
    w = LossWeights.default(4, gamma2=0.05)
    got = float(composite_loss(xs, x_g, sym, w).total)
    ref_mag = np.hypot(x_g[0, 0].numpy(), x_g[0, 1].numpy())
    expected = 0.0
    for k in range(4):
        d = (xs[k] - x_g).numpy()
        mse = (d**2).sum() / d.size
        mag = np.hypot(xs[k][0, 0].numpy(), xs[k][0, 1].numpy())
        expected += w.gamma1[k] * mse + w.gamma1[k] * (1 - ssim_oracle(mag, ref_mag, ref_mag.max())) + 0.05 * float(sym[k])
    assert got == pytest.approx(expected, rel=1e-10)


def test_loss_without_ssim():
    x_g, xs, sym = _imgs(2)
    got = float(composite_loss(xs, x_g, sym, LossWeights.default(3, include_ssim=False)).total)
    g = gamma1_schedule(3)
    expected = sum(g[k] * float(((xs[k] - x_g) ** 2).mean()) + 0.01 * float(sym[k]) for k in range(3))
    assert got == pytest.approx(expected, rel=1e-12)


def test_loss_length_mismatch_and_nonfinite():
    x_g, xs, sym = _imgs(3)
    with pytest.raises(ValidationError):
        composite_loss(xs, x_g, sym[:2], LossWeights.default(3))
    with pytest.raises(ValidationError):
        composite_loss(xs, x_g, sym, LossWeights.default(4))
    xs[1] = xs[1].clone()
    xs[1][0, 0, 0, 0] = float("nan")
    with pytest.raises(NonFiniteLossError) as info:
        composite_loss(xs, x_g, sym, LossWeights.default(3))
    assert "mse" in str(info.value) and "2" in str(info.value)


def test_loss_nonnegative():
    for seed in range(5):
        x_g, xs, sym = _imgs(10 + seed)
        assert float(composite_loss(xs, x_g, sym, LossWeights.default(3)).total) >= 0


# ----------------------------------------------------------------- PSNR


def test_psnr_examples():
    rng = np.random.default_rng(0)
    a = rng.random((8, 8))
    assert psnr(a, a) == math.inf
    ref = np.zeros((10, 10))
    ref[0, 0] = 1.0
    x = ref + 0.1
    assert psnr(x, ref, 1.0) == pytest.approx(20.0, abs=1e-12)


def test_psnr_oracle():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a, b = rng.random((12, 9)), rng.random((12, 9))
        mse = sum((u - v) ** 2 for u, v in zip(a.ravel(), b.ravel())) / a.size
        assert abs(psnr(a, b) - 10 * math.log10(b.max() ** 2 / mse)) <= 1e-10


def test_psnr_errors():
    with pytest.raises(ValidationError):
        psnr(np.ones(4), np.ones(4), 0.0)
    with pytest.raises(ValidationError):
        psnr(np.ones(4), np.ones(5))


# ----------------------------------------------------------------- SSIM


def test_ssim_identical():
    a = np.random.default_rng(2).random((20, 24))
    assert ssim(a, a) == 1.0


@pytest.mark.parametrize("a,b", [(0.3, 0.5), (1.0, 0.0), (0.9, 0.9), (0.2, 1.0)])
def test_ssim_constant_closed_form(a, b):
    # all local variances vanish, so only the luminance factor survives
    L = 1.0
    c1 = (0.01 * L) ** 2
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    got = ssim(np.full((16, 16), a), np.full((16, 16), b), L)
    assert got == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_ssim_symmetric_and_window_oracle():
    rng = np.random.default_rng(3)
    for _ in range(4):
        a, b = rng.random((18, 15)), rng.random((18, 15))
        assert abs(ssim(a, b, 1.0) - ssim(b, a, 1.0)) <= 1e-12
        assert ssim(a, b, 1.0) == pytest.approx(ssim_oracle(a, b, 1.0), abs=1e-12)
        assert -1 <= ssim(a, b) <= 1


def test_ssim_too_small():
    with pytest.raises(ValidationError):
        ssim(np.ones((10, 20)), np.ones((10, 20)))


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 2 * math.pi), st.integers(0, 2**31 - 1))
def test_metrics_phase_invariant(theta, seed):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(2, 12, 12, generator=g)
    ref = torch.randn(2, 12, 12, generator=g)
    c, s = math.cos(theta), math.sin(theta)
    rot = torch.stack((c * x[0] - s * x[1], s * x[0] + c * x[1]))
    m, mr, mref = magnitude(x), magnitude(rot), magnitude(ref)
    assert abs(psnr(mr, mref) - psnr(m, mref)) <= 1e-10
    assert abs(float(ssim_t(mr, mref)) - float(ssim_t(m, mref))) <= 1e-12


def test_metrics_phase_invariant_exact_quarter_turns():
    x = torch.randn(2, 12, 12)
    ref = torch.randn(2, 12, 12).abs()[0]
    quarter = torch.stack((-x[1], x[0]))
    half = -x
    for r in (quarter, half):
        assert torch.equal(magnitude(r), magnitude(x))
        assert psnr(magnitude(r), ref) == psnr(magnitude(x), ref)
        assert ssim(magnitude(r), ref) == ssim(magnitude(x), ref)
