"""Operator-learning loop: physics loss, encoding, training mechanics."""

import csv

import numpy as np
import pytest

from conftest import central_fd
from ninfem import ifol
from ninfem import neural_field as nf
from ninfem.assembly import build_dirichlet
from ninfem.material import PhaseField
from ninfem.mesh import build_box_mesh

CFG = nf.SirenConfig(input_dim=2, output_dim=2, hidden=(8, 8), latent_dim=4)


def _batch(n_samples=3, n=5, seed=0):
    mesh = build_box_mesh(2, (1.0, 1.0), (n, n))
    mask, values = build_dirichlet(
        mesh, 2, [(0, 0, 0, 0.0), (0, 0, 1, 0.0), (0, 1, 0, 0.2), (0, 1, 1, 0.0)]
    )
    rng = np.random.default_rng(seed)
    phases = [
        PhaseField(values=rng.uniform(0.1, 1.0, mesh.n_nodes))
        for _ in range(n_samples)
    ]
    return ifol.hyperelastic_batch(mesh, phases, mask, values)


def test_normalized_coords_cover_unit_cube():
    mesh = build_box_mesh(2, (2.0, 3.0), (5, 5))
    x = ifol.normalized_coords(mesh)
    assert np.allclose(x.min(axis=0), -1.0, atol=1e-14)
    assert np.allclose(x.max(axis=0), 1.0, atol=1e-14)


def test_loss_gradient_equals_residual_in_detached_mode():
    """The detached loss gradient is exactly the assembled residual."""
    batch = _batch()
    sample = batch.sample(0)
    rng = np.random.default_rng(1)
    U = sample.apply_bc(0.05 * rng.standard_normal(sample.n_dof))
    params = nf.init_params(CFG, seed=0)
    latent = np.zeros(CFG.latent_dim)
    _, grad = ifol.pde_loss(params, latent, sample, detach_residual=True, U=U)
    r = sample.raw_residual(U, clamp_j=ifol.TRAIN_CLAMP_J)
    assert np.max(np.abs(grad - r)) == 0.0


def test_full_loss_gradient_matches_fd():
    """With residual differentiation on, the gradient is d(U.r)/dU."""
    batch = _batch()
    sample = batch.sample(0)
    rng = np.random.default_rng(2)
    U = 0.02 * rng.standard_normal(sample.n_dof)

    def f(u):
        loss, _ = ifol.pde_loss(
            None, None, sample, detach_residual=True, U=u
        )
        return float(loss)

    _, grad = ifol.pde_loss(None, None, sample, detach_residual=False, U=U)
    g_fd = central_fd(f, U, eps=1e-7)
    assert np.abs(grad - g_fd).max() / np.abs(g_fd).max() < 1e-6


def test_apply_bc_overwrites_constrained_dofs():
    batch = _batch()
    sample = batch.sample(0)
    U = np.full(sample.n_dof, 7.0)
    out = sample.apply_bc(U)
    mask = sample.dirichlet_mask
    assert np.array_equal(out[mask], sample.dirichlet_values[mask])
    assert np.all(out[~mask] == 7.0)


def test_encode_zero_steps_returns_zero_latent():
    batch = _batch()
    params = nf.init_params(CFG, seed=0)
    latent = ifol.encode(params, batch.sample(0), k_encode=0)
    assert latent.shape == (CFG.latent_dim,)
    assert np.all(latent == 0.0)


def test_encode_is_deterministic_and_batched_consistent():
    batch = _batch(n_samples=3)
    params = nf.init_params(CFG, seed=1)
    l1 = ifol.encode(params, batch, k_encode=3, alpha=1e-2)
    l2 = ifol.encode(params, batch, k_encode=3, alpha=1e-2)
    assert np.array_equal(l1, l2)
    assert l1.shape == (3, CFG.latent_dim)
    for i in range(3):
        li = ifol.encode(params, batch.sample(i), k_encode=3, alpha=1e-2)
        assert np.allclose(li, l1[i], atol=1e-12)


def test_encode_rejects_nonfinite_gradients():
    batch = _batch()
    params = nf.init_params(CFG, seed=2)
    huge = batch.sample(0)
    huge.dirichlet_values = huge.dirichlet_values + np.inf
    with pytest.raises(FloatingPointError):
        ifol.encode(params, huge, k_encode=1)


def test_supervised_loss_zero_at_reference():
    batch = _batch()
    sample = batch.sample(0)
    params = nf.init_params(CFG, seed=6)
    latent = np.zeros(CFG.latent_dim)
    U, _ = ifol.predict_nodal_field(params, latent, sample)
    loss, grad = ifol.supervised_loss(params, latent, sample, U)
    assert loss == 0.0
    assert np.all(grad == 0.0)
    # gradient is the scaled pointwise error
    loss2, grad2 = ifol.supervised_loss(params, latent, sample, U + 1.0)
    assert np.isclose(loss2, 1.0, atol=1e-14)
    assert np.allclose(grad2, -2.0 / U.size, atol=1e-14)


def test_training_runs_and_logs(tmp_path):
    batch = _batch(n_samples=4, seed=4)
    params = nf.init_params(CFG, seed=3)
    config = ifol.TrainConfig(epochs=3, batch_size=2, seed=0, fast_trig=False)
    trained, log = ifol.train(config, params, batch)
    assert len(log) == 3
    assert all(np.isfinite(row.mean_loss) for row in log)
    # the input parameters are not mutated
    assert np.array_equal(params.W[0], nf.init_params(CFG, seed=3).W[0])
    assert not np.array_equal(trained.W[0], params.W[0])
    path = tmp_path / "train.csv"
    ifol.write_training_log(path, log)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "mean_loss", "grad_norm", "seconds"]
    assert len(rows) == 4


def test_training_is_seeded():
    batch = _batch(n_samples=4, seed=5)
    params = nf.init_params(CFG, seed=4)
    config = ifol.TrainConfig(epochs=2, batch_size=2, seed=0, fast_trig=False)
    t1, _ = ifol.train(config, params, batch)
    t2, _ = ifol.train(config, params, batch)
    for a, b in zip(t1.W, t2.W):
        assert np.array_equal(a, b)


def test_infer_applies_dirichlet_exactly():
    batch = _batch()
    sample = batch.sample(0)
    params = nf.init_params(CFG, seed=5)
    U = ifol.infer(params, sample)
    mask = sample.dirichlet_mask
    assert np.array_equal(U[mask], sample.dirichlet_values[mask])
    assert U.shape == (sample.n_dof,)
