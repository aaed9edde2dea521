"""Residual assembly, consistent tangents, and patch tests."""

import numpy as np
import pytest

from conftest import central_fd_jacobian
from ninfem import newton
from ninfem.assembly import (
    HyperelasticProblem,
    ThermalProblem,
    ThermoMechProblem,
    build_dirichlet,
)
from ninfem.material import ThermoMechParams, first_pk_stress, second_pk_stress
from ninfem.mesh import build_box_mesh, element_geometry, gauss_rule


def _gp_field(mesh, value=1.0):
    n_gp = 2**mesh.dim
    return np.full((mesh.n_elements, n_gp), value)


def _hyper_problem(mesh, mu=1.0, kappa=2.0):
    mask = np.zeros(mesh.n_nodes * mesh.dim, dtype=bool)
    values = np.zeros_like(mask, dtype=float)
    return HyperelasticProblem(
        mesh=mesh,
        mu_gp=_gp_field(mesh, mu),
        kappa_gp=_gp_field(mesh, kappa),
        dirichlet_mask=mask,
        dirichlet_values=values,
    )


@pytest.mark.parametrize("dim", [2, 3])
def test_hyperelastic_tangent_matches_fd(dim):
    """Global stiffness equals a dense finite difference of the residual."""
    n = (3,) * dim  # 2x2(x2) elements
    mesh = build_box_mesh(dim, (1.0,) * dim, n)
    problem = _hyper_problem(mesh)
    rng = np.random.default_rng(7)
    U = 0.05 * rng.standard_normal(problem.n_dof)
    K = problem.tangent(U).toarray()
    K_fd = central_fd_jacobian(problem.raw_residual, U, eps=1e-7)
    rel = np.linalg.norm(K - K_fd) / np.linalg.norm(K_fd)
    assert rel < 1e-5


@pytest.mark.parametrize("dim", [2, 3])
def test_thermal_tangent_matches_fd(dim):
    mesh = build_box_mesh(dim, (1.0,) * dim, (3,) * dim)
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    problem = ThermalProblem(
        mesh=mesh,
        k0_gp=_gp_field(mesh),
        b=2.0,
        c=2.0,
        dirichlet_mask=mask,
        dirichlet_values=np.zeros(mesh.n_nodes),
    )
    rng = np.random.default_rng(8)
    T = 0.3 + 0.1 * rng.standard_normal(problem.n_dof)
    K = problem.tangent(T).toarray()
    K_fd = central_fd_jacobian(problem.raw_residual, T, eps=1e-7)
    rel = np.linalg.norm(K - K_fd) / np.linalg.norm(K_fd)
    assert rel < 1e-5


@pytest.mark.parametrize("dim", [2, 3])
def test_thermomech_tangent_matches_fd(dim):
    mesh = build_box_mesh(dim, (1.0,) * dim, (3,) * dim)
    d = dim + 1
    problem = ThermoMechProblem(
        mesh=mesh,
        phi_gp=_gp_field(mesh),
        params=ThermoMechParams(nu=0.3, alpha=1.0, b=2.0, c=2.0, T0=0.0),
        dirichlet_mask=np.zeros(mesh.n_nodes * d, dtype=bool),
        dirichlet_values=np.zeros(mesh.n_nodes * d),
    )
    rng = np.random.default_rng(9)
    X = 0.1 * rng.standard_normal(problem.n_dof)
    K = problem.tangent(X).toarray()
    K_fd = central_fd_jacobian(problem.raw_residual, X, eps=1e-7)
    rel = np.linalg.norm(K - K_fd) / np.linalg.norm(K_fd)
    assert rel < 1e-5


def _affine_patch(dim):
    """Solve with affine boundary data; return mesh, solution, exact field."""
    mesh = build_box_mesh(dim, (1.0,) * dim, (4,) * dim)
    rng = np.random.default_rng(10)
    A = 0.05 * rng.standard_normal((dim, dim))
    exact = (mesh.node_coords @ A.T).ravel()
    mask = np.zeros(mesh.n_nodes * dim, dtype=bool)
    for node in mesh.boundary_nodes():
        mask[node * dim : node * dim + dim] = True
    values = np.where(mask, exact, 0.0)
    problem = HyperelasticProblem(
        mesh=mesh,
        mu_gp=_gp_field(mesh, 1.0),
        kappa_gp=_gp_field(mesh, 2.0),
        dirichlet_mask=mask,
        dirichlet_values=values,
    )
    state, report = newton.solve(problem, newton.NewtonConfig(tol=1e-13))
    return mesh, state.U, exact, A


@pytest.mark.parametrize("dim", [2, 3])
def test_hyperelastic_patch_affine_solution(dim):
    """Affine Dirichlet data on homogeneous material gives the affine field."""
    mesh, U, exact, A = _affine_patch(dim)
    assert np.max(np.abs(U - exact)) < 1e-10


@pytest.mark.parametrize("dim", [2, 3])
def test_hyperelastic_patch_constant_stress(dim):
    mesh, U, exact, A = _affine_patch(dim)
    F = np.eye(dim) + A
    P_exact = first_pk_stress(F, 1.0, 2.0)
    # recompute P at every Gauss point of every element from the solution
    geom = element_geometry(mesh, 0, gauss_rule(dim))
    Ue = U.reshape(mesh.n_nodes, dim)[mesh.elements]  # (n_el, n_a, dim)
    grad = np.einsum("eai,gaj->egij", Ue, geom.dN_dX)
    P = first_pk_stress(np.eye(dim) + grad, 1.0, 2.0)
    assert np.max(np.abs(P - P_exact)) < 1e-10


@pytest.mark.parametrize("dim", [2, 3])
def test_thermal_patch_constant_flux(dim):
    """Linear temperature with constant conductivity (b=0): exact solution."""
    mesh = build_box_mesh(dim, (1.0,) * dim, (4,) * dim)
    g = np.arange(1, dim + 1, dtype=float)  # exact T = g . x
    exact = mesh.node_coords @ g
    mask = np.zeros(mesh.n_nodes, dtype=bool)
    mask[mesh.boundary_nodes()] = True
    problem = ThermalProblem(
        mesh=mesh,
        k0_gp=_gp_field(mesh, 1.5),
        b=0.0,
        c=2.0,
        dirichlet_mask=mask,
        dirichlet_values=np.where(mask, exact, 0.0),
    )
    state, report = newton.solve(problem, newton.NewtonConfig(tol=1e-13))
    assert np.max(np.abs(state.U - exact)) < 1e-10
    # constant flux: -k grad T at every Gauss point
    geom = element_geometry(mesh, 0, gauss_rule(dim))
    Te = state.U[mesh.elements]
    grad = np.einsum("ea,gaj->egj", Te, geom.dN_dX)
    assert np.max(np.abs(grad - g)) < 1e-10


def test_build_dirichlet_faces_and_overlap():
    mesh = build_box_mesh(2, (1.0, 1.0), (3, 3))
    mask, values = build_dirichlet(
        mesh, 2, [(0, 0, 0, 0.0), (0, 0, 1, 0.0), (0, 1, 0, 0.2)]
    )
    left = mesh.nodes_on_face(0, 0)
    right = mesh.nodes_on_face(0, 1)
    assert mask[left * 2].all() and mask[left * 2 + 1].all()
    assert mask[right * 2].all() and not mask[right * 2 + 1].any()
    assert np.allclose(values[right * 2], 0.2)
    # later entries win on overlap
    mask2, values2 = build_dirichlet(mesh, 2, [(0, 0, 0, 1.0), (0, 0, 0, 3.0)])
    assert np.allclose(values2[left * 2], 3.0)


def test_dirichlet_rows_in_constrained_residual():
    mesh = build_box_mesh(2, (1.0, 1.0), (3, 3))
    problem = _hyper_problem(mesh)
    mask, values = build_dirichlet(mesh, 2, [(0, 1, 0, 0.1)])
    problem.dirichlet_mask = mask
    problem.dirichlet_values = values
    U = np.zeros(problem.n_dof)
    r = problem.residual(U, load_scale=1.0)
    # constrained rows read U - g, free rows the raw internal force
    assert np.allclose(r[mask], -values[mask])
    assert np.allclose(r[~mask], problem.raw_residual(U)[~mask])
