"""Fourier microstructure sampler: presets, symmetry, remapping, I/O."""

import numpy as np
import pytest

from ninfem import sampler
from ninfem.mesh import ConfigurationError, build_box_mesh


def test_2d_preset_parameters():
    spec = sampler.PRESET_2D
    assert spec.dim == 2
    assert spec.frequencies == (0, 1, 2, 3)
    assert spec.beta == 20.0
    assert spec.phi_min == 0.1
    assert spec.phi_max == 1.0
    assert spec.positive_frequencies == (1, 2, 3)
    assert spec.n_terms == 3**2 + 1  # cos products plus the constant


def test_3d_presets_parameters():
    freq_sets = [tuple(s.frequencies) for s in sampler.PRESETS_3D]
    assert (1, 2, 3) in freq_sets
    for spec in sampler.PRESETS_3D:
        assert spec.dim == 3
        assert spec.beta == 10.0
        assert spec.phi_min == 0.3
        assert spec.phi_max == 1.0


def test_raw_field_reflection_symmetry():
    """cos-only terms are invariant under reflection about the box center."""
    spec = sampler.PRESET_2D
    mesh = build_box_mesh(2, (1.0, 1.0), (9, 9))
    rng = np.random.default_rng(20)
    coefs = sampler.draw_coefficients(spec, rng)
    raw = sampler.raw_fourier_field(spec, coefs, mesh.node_coords, mesh.extents)
    for axis in range(2):
        mirrored = mesh.node_coords.copy()
        mirrored[:, axis] = mesh.extents[axis] - mirrored[:, axis]
        raw_m = sampler.raw_fourier_field(spec, coefs, mirrored, mesh.extents)
        assert np.max(np.abs(raw - raw_m)) < 1e-12


def test_projection_respects_bounds():
    spec = sampler.PRESET_2D
    mesh = build_box_mesh(2, (1.0, 1.0), (21, 21))
    fields = sampler.generate_batch(spec, mesh, 10, seed=0)
    for f in fields:
        assert f.values.min() > spec.phi_min - 1e-12
        assert f.values.max() < spec.phi_max + 1e-12


def test_phase_contrast_remap_exact_ratio():
    spec = sampler.PRESET_2D
    mesh = build_box_mesh(2, (1.0, 1.0), (21, 21))
    f = sampler.generate(spec, mesh, np.random.default_rng(1))
    for pc in (2.0, 10.0, 100.0):
        g = sampler.remap_phase_contrast(f, pc)
        assert abs(g.values.max() / g.values.min() / pc - 1.0) < 1e-12
        assert abs(g.values.max() - 1.0) < 1e-12  # maximum pinned


def test_phase_contrast_remap_rejects_bad_ratio():
    mesh = build_box_mesh(2, (1.0, 1.0), (5, 5))
    f = sampler.generate(sampler.PRESET_2D, mesh, np.random.default_rng(2))
    with pytest.raises(ConfigurationError):
        sampler.remap_phase_contrast(f, 1.0)


def test_coefficients_transfer_across_resolutions():
    """The same drawn coefficients evaluate consistently on finer meshes."""
    spec = sampler.PRESET_2D
    coarse = build_box_mesh(2, (1.0, 1.0), (11, 11))
    fine = build_box_mesh(2, (1.0, 1.0), (21, 21))
    coefs = sampler.draw_coefficients(spec, np.random.default_rng(3))
    f_c = sampler.evaluate(spec, coefs, coarse)
    f_f = sampler.evaluate(spec, coefs, fine)
    # coarse nodes are a subset of fine nodes (every other one)
    idx = [np.flatnonzero(np.all(np.isclose(fine.node_coords, x), axis=1))[0]
           for x in coarse.node_coords]
    assert np.allclose(f_c.values, f_f.values[idx], atol=1e-14)


def test_generation_is_seeded():
    spec = sampler.PRESET_2D
    mesh = build_box_mesh(2, (1.0, 1.0), (11, 11))
    a = sampler.generate_batch(spec, mesh, 3, seed=7)
    b = sampler.generate_batch(spec, mesh, 3, seed=7)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.values, fb.values)


def test_save_load_round_trip(tmp_path):
    spec = sampler.PRESET_2D
    mesh = build_box_mesh(2, (1.0, 1.0), (11, 11))
    fields = sampler.generate_batch(spec, mesh, 4, seed=9)
    path = tmp_path / "samples.bin"
    sampler.save_samples(path, fields, spec, seed=9)
    loaded = sampler.load_samples(path)
    assert len(loaded) == 4
    for f, g in zip(fields, loaded):
        assert np.array_equal(f.values, g.values)
