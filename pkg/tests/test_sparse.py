import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mcunet.errors import ValidationError
from mcunet.mri_ops import to_channels
from mcunet.sparse import SparseSubnet, gradient_step, inverse_softplus, soft_threshold, symmetry_penalty
from oracles import adjoint_oracle, forward_oracle, from_np, gradcheck_module, normalized_csm, rand_complex, to_np


def problem(rng, H=8, W=8, C=2):
    S = normalized_csm(rng, C, H, W)
    mask = (rng.random((H, W)) < 0.5).astype(np.float64)
    mask[H // 2, W // 2] = 1
    x = rand_complex(rng, H, W)
    y = forward_oracle(rand_complex(rng, H, W), S, mask)
    return x, y, S, mask


def tens(x, y, S, mask):
    return from_np(x)[None], torch.as_tensor(y)[None], torch.as_tensor(S)[None], torch.as_tensor(mask)[None]


def identity_transforms(net: SparseSubnet) -> SparseSubnet:
    """Set G / G_tilde so that G_tilde(G(v)) == v, using +/- channels through the ReLU."""
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
        g1, g2 = net.G[0], net.G[2]
        t1, t2 = net.G_tilde[0], net.G_tilde[2]
        for c in range(2):
            g1.weight[2 * c, c, 1, 1] = 1.0
            g1.weight[2 * c + 1, c, 1, 1] = -1.0
            t2.weight[c, 2 * c, 1, 1] = 1.0
            t2.weight[c, 2 * c + 1, 1, 1] = -1.0
        for f in range(g2.weight.shape[0]):
            g2.weight[f, f, 1, 1] = 1.0
            t1.weight[f, f, 1, 1] = 1.0
        net.lambda_raw.fill_(-math.inf)
        net.alpha.fill_(0.5)
    return net


@pytest.mark.parametrize("v,lam,out", [(2.0, 0.5, 1.5), (0.3, 0.5, 0.0), (-1.2, 0.2, -1.0)])
def test_soft_threshold_examples(v, lam, out):
    assert soft_threshold(torch.tensor(v), lam).item() == pytest.approx(out, abs=1e-15)


def test_soft_threshold_negative_lambda():
    with pytest.raises(ValidationError):
        soft_threshold(torch.ones(3), -0.1)
    with pytest.raises(ValidationError):
        soft_threshold(torch.ones(3), torch.tensor(-0.1))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(0, 5), st.floats(-10, 10))
def test_soft_threshold_odd_lipschitz_sign(vals, lam, shift):
    v = torch.tensor(vals)
    out = soft_threshold(v, lam)
    assert torch.equal(soft_threshold(-v, lam), -out)
    w = v + shift
    assert torch.all((soft_threshold(w, lam) - out).abs() <= (w - v).abs() + 1e-12)
    assert torch.all((out == 0) | (torch.sign(out) == torch.sign(v)))


def test_gradient_step_examples():
    rng = np.random.default_rng(0)
    x, _, S, mask = problem(rng, C=1)
    y = forward_oracle(x, S, mask)
    X, Y, Sx, M = tens(x, y, S, mask)
    torch.testing.assert_close(gradient_step(X, Y, Sx, M, 0.7), X, rtol=0, atol=1e-13)
    x2 = rand_complex(rng, 8, 8)
    assert torch.equal(gradient_step(from_np(x2)[None], Y, Sx, M, 0.0), from_np(x2)[None])


def test_gradient_step_matches_hand_composition():
    rng = np.random.default_rng(1)
    x, y, S, mask = problem(rng, C=1)
    r = gradient_step(*tens(x, y, S, mask), 0.35)
    expected = x - 0.35 * adjoint_oracle(forward_oracle(x, S, mask) - y, S, mask)
    np.testing.assert_allclose(to_np(r[0]), expected, atol=1e-12)


def test_identity_transforms_reduce_to_gradient_step():
    rng = np.random.default_rng(2)
    net = identity_transforms(SparseSubnet())
    X, Y, S, M = tens(*problem(rng))
    assert net.lambda_1.item() == 0.0
    x_s, r = net(X, Y, S, M)
    torch.testing.assert_close(x_s, gradient_step(X, Y, S, M, 0.5), rtol=0, atol=1e-12)
    assert net.symmetry_penalty(r).item() == pytest.approx(0.0, abs=1e-20)


def test_zero_network_outputs_zero():
    rng = np.random.default_rng(3)
    net = SparseSubnet()
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
    X, Y, S, M = tens(*problem(rng))
    x_s, r = net(X, Y, S, M)
    assert torch.count_nonzero(x_s) == 0
    # G_tilde(G(r)) = 0, so the penalty is ||r||^2
    assert net.symmetry_penalty(r).item() == pytest.approx(float((r.detach() ** 2).sum()), rel=1e-14)


def test_symmetry_penalty_direct_norm():
    rng = np.random.default_rng(4)
    torch.manual_seed(0)
    net = SparseSubnet(features=4)
    r = torch.as_tensor(rng.standard_normal((1, 2, 5, 5)))
    d = (net.G_tilde(net.G(r)) - r).detach().numpy()
    expected = sum(float(v) ** 2 for v in d.ravel())
    assert symmetry_penalty(r, net.G, net.G_tilde).item() == pytest.approx(expected, rel=1e-12)


def test_shape_preserved():
    rng = np.random.default_rng(5)
    net = SparseSubnet()
    for H, W in [(8, 8), (7, 10)]:
        X, Y, S, M = tens(*problem(rng, H, W))
        assert net(X, Y, S, M)[0].shape == X.shape


def test_lambda_init():
    net = SparseSubnet()
    assert net.lambda_1.item() == pytest.approx(1e-3, rel=1e-9)
    assert inverse_softplus(0.25) == pytest.approx(math.log(math.expm1(0.25)), rel=1e-12)


def sparse_gradcheck_setup(seed=6):
    rng = np.random.default_rng(seed)
    torch.manual_seed(seed)
    net = SparseSubnet()
    x, y, S, M = problem(rng)
    # a large signal spreads the feature values so a wide gap exists for the threshold
    X, Y, S, M = tens(30 * x, 30 * y, S, M)
    with torch.no_grad():
        v = net.G(gradient_step(X, Y, S, M, net.alpha)).abs().flatten().sort().values
        lo, hi = int(0.5 * v.numel()), int(0.99 * v.numel())
        gaps = v[lo + 1 : hi] - v[lo : hi - 1]
        k = int(gaps.argmax())
        lam = float(v[lo + k] + v[lo + k + 1]) / 2
        net.lambda_raw.fill_(inverse_softplus(lam))
    margin = float(gaps.max()) / 2
    return net, (X, Y, S, M), margin


def test_sparse_gradcheck():
    net, (X, Y, S, M), margin = sparse_gradcheck_setup()
    assert margin >= 1e-2  # every feature sits at least this far from the shrinkage kink

    def loss():
        return net(X, Y, S, M)[0].pow(2).sum()

    assert gradcheck_module(loss, dict(net.named_parameters())) <= 1e-3


def test_symmetry_penalty_gradcheck():
    rng = np.random.default_rng(7)
    torch.manual_seed(7)
    net = SparseSubnet()
    r = torch.as_tensor(rng.standard_normal((1, 2, 6, 6)))
    params = {k: p for k, p in net.named_parameters() if k.startswith("G")}
    assert gradcheck_module(lambda: net.symmetry_penalty(r), params) <= 1e-3
