"""Shift-modulated sine network: forward, gradients, checkpoints."""

import numpy as np
import pytest

from conftest import central_fd
from ninfem import neural_field as nf

CFG = nf.SirenConfig(input_dim=2, output_dim=2, hidden=(8, 8), latent_dim=4)


def _setup(seed=0, n=7):
    rng = np.random.default_rng(seed)
    params = nf.init_params(CFG, seed=seed)
    latent = rng.standard_normal(CFG.latent_dim)
    coords = rng.uniform(-1, 1, size=(n, CFG.input_dim))
    return params, latent, coords


def test_init_is_deterministic_and_respects_bounds():
    p1 = nf.init_params(CFG, seed=3)
    p2 = nf.init_params(CFG, seed=3)
    for a, b in zip(p1.W, p2.W):
        assert np.array_equal(a, b)
    # first layer: U(-1/d, 1/d); later layers: U(-sqrt(6/d)/w0, sqrt(6/d)/w0)
    assert np.abs(p1.W[0]).max() <= 1.0 / CFG.input_dim
    bound = np.sqrt(6.0 / 8) / 30.0
    assert np.abs(p1.W[1]).max() <= bound
    # latent shifts start inactive
    for c in p1.c:
        assert np.allclose(c, 0.0)


def test_forward_zero_latent_equals_plain_siren():
    params, _, coords = _setup()
    zero = np.zeros(CFG.latent_dim)
    out = nf.forward(params, zero, coords)
    # manual forward without any modulation
    eta = coords
    for W, b in zip(params.W[:-1], params.b[:-1]):
        eta = np.sin(30.0 * (eta @ W.T + b))
    ref = eta @ params.W[-1].T + params.b[-1]
    assert np.allclose(out, ref, atol=1e-14)


def test_latent_shifts_enter_additively():
    params, latent, coords = _setup()
    rng = np.random.default_rng(4)
    for i, V in enumerate(params.V):
        params.V[i] = 0.1 * rng.standard_normal(V.shape)
    out = nf.forward(params, latent, coords)
    eta = coords
    for W, b, V, c in zip(params.W[:-1], params.b[:-1], params.V, params.c):
        eta = np.sin(30.0 * (eta @ W.T + b + (V @ latent + c)))
    ref = eta @ params.W[-1].T + params.b[-1]
    assert np.allclose(out, ref, atol=1e-13)


def _loss_and_grads(params, latent, coords, w):
    out, cache = nf.forward_with_cache(params, latent, coords)
    loss = float(np.sum(w * out))
    grads, g_latent = nf.backward(params, latent, coords, w, cache=cache)
    return loss, grads, g_latent


@pytest.mark.parametrize("group", ["W", "b", "V", "c"])
def test_parameter_gradients_match_fd(group):
    params, latent, coords = _setup(seed=5)
    rng = np.random.default_rng(6)
    for i, V in enumerate(params.V):
        params.V[i] = 0.1 * rng.standard_normal(V.shape)
    w = rng.standard_normal((coords.shape[0], CFG.output_dim))
    _, grads, _ = _loss_and_grads(params, latent, coords, w)
    arrays = getattr(params, group)
    grad_arrays = getattr(grads, group)
    for i, (arr, g_an) in enumerate(zip(arrays, grad_arrays)):

        def f(flat, i=i, arr=arr):
            p2 = params.copy()
            getattr(p2, group)[i] = flat.reshape(arr.shape)
            return float(np.sum(w * nf.forward(p2, latent, coords)))

        g_fd = central_fd(f, arr.ravel(), eps=1e-6).reshape(arr.shape)
        denom = max(np.abs(g_fd).max(), 1e-12)
        assert np.abs(g_an - g_fd).max() / denom < 1e-6


def test_latent_gradient_matches_fd():
    params, latent, coords = _setup(seed=7)
    rng = np.random.default_rng(8)
    for i, V in enumerate(params.V):
        params.V[i] = 0.1 * rng.standard_normal(V.shape)
    w = rng.standard_normal((coords.shape[0], CFG.output_dim))
    _, _, g_latent = _loss_and_grads(params, latent, coords, w)

    def f(l):
        return float(np.sum(w * nf.forward(params, l, coords)))

    g_fd = central_fd(f, latent, eps=1e-6)
    assert np.abs(g_latent - g_fd).max() / np.abs(g_fd).max() < 1e-6


def test_latent_only_backward_skips_parameter_grads():
    params, latent, coords = _setup(seed=9)
    w = np.ones((coords.shape[0], CFG.output_dim))
    grads, g_full = nf.backward(params, latent, coords, w)
    none_grads, g_only = nf.backward(params, latent, coords, w, latent_only=True)
    assert none_grads is None
    assert np.array_equal(g_full, g_only)


def test_batched_latent_gradients_sum_per_sample():
    params, _, coords = _setup(seed=10)
    rng = np.random.default_rng(11)
    latents = rng.standard_normal((3, CFG.latent_dim))
    w = rng.standard_normal((3, coords.shape[0], CFG.output_dim))
    grads, g_lat = nf.backward(params, latents, coords, w)
    assert g_lat.shape == latents.shape
    acc = nf.zeros_like_params(params)
    for k in range(3):
        gk, glk = nf.backward(params, latents[k], coords, w[k])
        assert np.allclose(glk, g_lat[k], atol=1e-12)
        for name in ("W", "b", "V", "c"):
            for i, arr in enumerate(getattr(gk, name)):
                getattr(acc, name)[i] += arr
    for name in ("W", "b", "V", "c"):
        for a, b in zip(getattr(acc, name), getattr(grads, name)):
            assert np.allclose(a, b, atol=1e-12)


def test_checkpoint_round_trip(tmp_path):
    params, latent, coords = _setup(seed=12)
    path = tmp_path / "model.ckpt"
    nf.save_checkpoint(path, CFG, params)
    cfg2, params2 = nf.load_checkpoint(path)
    assert cfg2 == CFG
    out1 = nf.forward(params, latent, coords)
    out2 = nf.forward(params2, latent, coords)
    assert np.array_equal(out1, out2)


def test_reduced_precision_trig_scope():
    params, latent, coords = _setup(seed=13)
    exact = nf.forward(params, latent, coords)
    with nf.reduced_precision_trig():
        approx = nf.forward(params, latent, coords)
    # back to full precision outside the context
    assert np.array_equal(nf.forward(params, latent, coords), exact)
    assert not np.array_equal(approx, exact)
    assert np.abs(approx - exact).max() < 1e-4
