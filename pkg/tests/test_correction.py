import numpy as np
import pytest
import torch

from mcunet.correction import Correction, dc_project, oc_blend
from mcunet.errors import ValidationError
from oracles import adjoint_oracle, dft2_oracle, forward_oracle, from_np, gradcheck_module, idft2_oracle, normalized_csm, rand_complex, randomize_, to_np


def setup(seed, H=8, W=8, C=3):
    rng = np.random.default_rng(seed)
    S = normalized_csm(rng, C, H, W)
    mask = (rng.random((H, W)) < 0.5).astype(np.float64)
    mask[0, 0] = 1
    x = rand_complex(rng, H, W)
    y = forward_oracle(rand_complex(rng, H, W), S, mask)
    return x, y, S, mask


def T(x, y, S, mask):
    return from_np(x)[None], torch.as_tensor(y)[None], torch.as_tensor(S)[None], torch.as_tensor(mask)[None]


def test_correct_identity_at_init():
    net = Correction()
    x = torch.randn(2, 2, 8, 8)
    assert torch.equal(net.correct(x), x)
    assert torch.equal(net(x), x)


def test_correct_zero_input_zero_bias():
    net = randomize_(Correction(), 0)
    with torch.no_grad():
        for name, p in net.named_parameters():
            if name.endswith("bias"):
                p.zero_()
    assert torch.count_nonzero(net.correct(torch.zeros(1, 2, 8, 8))) == 0


def test_channel_plan_and_mu():
    net = Correction()
    assert [b.layers[0].out_channels for b in net.unet.down] == [4, 8, 16, 32]
    assert net.mu.item() == pytest.approx(1.0, rel=1e-12)


def test_correct_gradcheck():
    torch.manual_seed(1)
    net = randomize_(Correction(), 1, scale=0.2)
    x = torch.randn(1, 2, 8, 8)
    w = torch.randn(1, 2, 8, 8)
    params = {k: p for k, p in net.named_parameters() if k.startswith("unet")}
    report = gradcheck_module(lambda: (net.correct(x) * w).sum(), params, per_tensor=4)
    assert report <= 1e-3
    assert report.skipped <= 0.1 * report.checked


def test_oc_blend_cases():
    g = torch.Generator().manual_seed(2)
    x_a, x_r = torch.randn(1, 2, 5, 5, generator=g), torch.randn(1, 2, 5, 5, generator=g)
    assert torch.equal(oc_blend(x_a, x_r, torch.ones(1, 1, 5, 5)), x_a)
    assert torch.equal(oc_blend(x_a, x_r, torch.zeros(1, 1, 5, 5)), x_r)
    m = torch.rand(1, 1, 5, 5, generator=g)
    assert torch.equal(oc_blend(x_a, x_a.clone(), m), x_a)
    out = oc_blend(x_a, x_r, m)
    assert torch.all(out >= torch.minimum(x_a, x_r)) and torch.all(out <= torch.maximum(x_a, x_r))


def test_oc_blend_errors():
    x = torch.zeros(1, 2, 4, 4)
    with pytest.raises(ValidationError):
        oc_blend(x, x, torch.full((1, 1, 4, 4), -0.01))
    with pytest.raises(ValidationError):
        oc_blend(x, x[..., :3], torch.full((1, 1, 4, 4), 0.5))


def test_dc_project_mu_zero_identity():
    x, y, S, m = T(*setup(3))
    assert torch.linalg.norm(dc_project(x, y, S, m, 0.0) - x) <= 1e-6 * torch.linalg.norm(x)


def test_dc_project_consistent_input_unchanged():
    x, _, S, mask = setup(4)
    y = forward_oracle(x, S, mask)
    X, Y, Sx, M = T(x, y, S, mask)
    for mu in (0.3, 1.0, 7.0):
        assert torch.linalg.norm(dc_project(X, Y, Sx, M, mu) - X) <= 1e-6 * torch.linalg.norm(X)


def test_dc_project_step_by_step_oracle():
    x, y, S, mask = setup(5)
    mu = 0.7
    k = np.stack([dft2_oracle(s * x) for s in S])
    k = np.where(mask > 0, (k + mu * y) / (1 + mu), k)
    expected = sum(np.conj(s) * idft2_oracle(kc) for s, kc in zip(S, k))
    got = to_np(dc_project(*T(x, y, S, mask), mu)[0])
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_dc_project_linear():
    x1, y1, S, mask = setup(6)
    x2, y2, _, _ = setup(7)
    y2 = forward_oracle(rand_complex(np.random.default_rng(8), 8, 8), S, mask)
    a, b = 0.6, -1.4
    lhs = dc_project(*T(a * x1 + b * x2, a * y1 + b * y2, S, mask), 0.9)
    rhs = a * dc_project(*T(x1, y1, S, mask), 0.9) + b * dc_project(*T(x2, y2, S, mask), 0.9)
    torch.testing.assert_close(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_dc_project_mu_gradient():
    torch.manual_seed(9)
    net = Correction(mu_init=0.8)
    x, y, S, m = T(*setup(9))
    w = torch.randn_like(x)
    assert gradcheck_module(lambda: (dc_project(x, y, S, m, net.mu) * w).sum(), {"mu_raw": net.mu_raw}) <= 1e-3
