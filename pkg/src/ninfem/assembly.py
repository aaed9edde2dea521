"""Element and global residual/tangent assembly.

Two physics are supported: compressible neo-Hookean hyperelasticity (total
Lagrangian, B^nl formulation) and one-way coupled steady thermomechanics
(nonlinear conduction feeding linear thermoelasticity).

The core kernels are vectorized over all elements of a structured mesh and
accept an optional leading batch axis on the state vector, which the
training loop uses to evaluate residuals for many samples at once.
Scattering uses ``np.add.at`` and is therefore deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ninfem import material
from ninfem.mesh import (
    ConfigurationError,
    ElementGeometry,
    QuadratureRule,
    StructuredMesh,
    element_geometry,
    gauss_rule,
)


@dataclass
class DofState:
    """Global solution vector with Dirichlet metadata."""

    U: np.ndarray
    dirichlet_mask: np.ndarray  # bool per DOF
    dirichlet_values: np.ndarray  # prescribed values at full load
    load_scale: float = 1.0

    def copy(self) -> "DofState":
        return DofState(
            U=self.U.copy(),
            dirichlet_mask=self.dirichlet_mask.copy(),
            dirichlet_values=self.dirichlet_values.copy(),
            load_scale=self.load_scale,
        )


def apply_dirichlet(
    U: np.ndarray,
    mask: np.ndarray,
    values: np.ndarray,
    load_scale: float = 1.0,
) -> np.ndarray:
    """Overwrite constrained DOFs with load_scale * prescribed values."""
    out = np.array(U, dtype=float, copy=True)
    out[..., mask] = load_scale * values[mask]
    return out


def dof_indices(conn: np.ndarray, dofs_per_node: int) -> np.ndarray:
    """Interleaved element DOF indices, shape (n_el, n_a * dofs_per_node)."""
    n_el, n_a = conn.shape
    idx = conn[:, :, None] * dofs_per_node + np.arange(dofs_per_node)
    return idx.reshape(n_el, n_a * dofs_per_node)


def gather(U: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Element-local DOF vectors; U may carry leading batch axes."""
    return U[..., idx]


def scatter_vector(values: np.ndarray, idx: np.ndarray, n_dof: int) -> np.ndarray:
    """Sum element vectors (..., n_el, n_edof) into a global vector."""
    batch = values.shape[:-2]
    r = np.zeros(batch + (n_dof,))
    if batch:
        flat = values.reshape(-1, *values.shape[-2:])
        rf = r.reshape(-1, n_dof)
        for b in range(flat.shape[0]):
            np.add.at(rf[b], idx.ravel(), flat[b].ravel())
    else:
        np.add.at(r, idx.ravel(), values.ravel())
    return r


def scatter_matrix(
    K_e: np.ndarray, idx: np.ndarray, n_dof: int
) -> sp.csr_matrix:
    """Sum element matrices (n_el, n_edof, n_edof) into a CSR matrix."""
    n_el, n_edof, _ = K_e.shape
    rows = np.repeat(idx, n_edof, axis=1).ravel()
    cols = np.tile(idx, (1, n_edof)).ravel()
    K = sp.coo_matrix(
        (K_e.ravel(), (rows, cols)), shape=(n_dof, n_dof)
    )
    return K.tocsr()


# ---------------------------------------------------------------------------
# Hyperelastic kernels


def displacement_gradients(dN_dX: np.ndarray, U_e: np.ndarray, dim: int) -> np.ndarray:
    """grad(u) at Gauss points: (..., n_el, n_gp, dim, dim)."""
    n_a = dN_dX.shape[1]
    Umat = U_e.reshape(U_e.shape[:-1] + (n_a, dim))
    return np.einsum("...eai,gaj->...egij", Umat, dN_dX)


def nonlinear_b_matrix(dN_dX: np.ndarray, F: np.ndarray) -> np.ndarray:
    """B^nl mapping nodal displacement variations to Green-Lagrange
    strain variations (engineering shear rows), shape (..., n_el, n_gp, nv, n_a*dim)."""
    dim = F.shape[-1]
    n_gp, n_a, _ = dN_dX.shape
    pairs = material.voigt_pairs(dim)
    nv = len(pairs)
    batch = F.shape[:-4]
    B = np.empty(batch + F.shape[-4:-2] + (nv, n_a * dim))
    for row, (p, q) in enumerate(pairs):
        # column (a, i): F_ip dN_a/dX_q (+ F_iq dN_a/dX_p for shear rows)
        # broadcast (..., e, g, 1, i) * (g, a, 1) -> (..., e, g, a, i)
        term = F[..., None, :, p] * dN_dX[:, :, q, None]
        if p != q:
            term = term + F[..., None, :, q] * dN_dX[:, :, p, None]
        B[..., row, :] = term.reshape(term.shape[:-2] + (n_a * dim,))
    return B


def hyperelastic_internal_force(
    geom: ElementGeometry,
    conn: np.ndarray,
    U: np.ndarray,
    mu_gp: np.ndarray,
    kappa_gp: np.ndarray,
    dim: int,
    clamp_j: float | None = None,
) -> np.ndarray:
    """Assembled internal force A[ sum_k W_k B^nl^T S_voigt ] (raw, no BC rows)."""
    n_dof = U.shape[-1]
    idx = dof_indices(conn, dim)
    U_e = gather(U, idx)
    grad_u = displacement_gradients(geom.dN_dX, U_e, dim)
    F = material.deformation_gradient(grad_u)
    S = material.second_pk_stress(F, mu_gp, kappa_gp, clamp_j=clamp_j)
    S_v = material.stress_to_voigt(S)
    B = nonlinear_b_matrix(geom.dN_dX, F)
    W = geom.gauss_factors
    r_e = np.einsum("g,...egvc,...egv->...ec", W, B, S_v)
    return scatter_vector(r_e, idx, n_dof)


def hyperelastic_element_tangents(
    geom: ElementGeometry,
    conn: np.ndarray,
    U: np.ndarray,
    mu_gp: np.ndarray,
    kappa_gp: np.ndarray,
    dim: int,
) -> np.ndarray:
    """Element tangents K_e = material + geometric stiffness, (n_el, n_edof, n_edof)."""
    idx = dof_indices(conn, dim)
    U_e = gather(U, idx)
    grad_u = displacement_gradients(geom.dN_dX, U_e, dim)
    F = material.deformation_gradient(grad_u)
    S = material.second_pk_stress(F, mu_gp, kappa_gp)
    D = material.material_tangent(F, mu_gp, kappa_gp)
    B = nonlinear_b_matrix(geom.dN_dX, F)
    W = geom.gauss_factors
    K_mat = np.einsum("g,egvc,egvw,egwd->ecd", W, B, D, B)
    # Geometric part: (grad N_a . S . grad N_b) delta_ij
    G = np.einsum("g,gai,egij,gbj->eab", W, geom.dN_dX, S, geom.dN_dX)
    n_el, n_a = conn.shape
    K_geo = np.einsum("eab,ij->eaibj", G, np.eye(dim)).reshape(
        n_el, n_a * dim, n_a * dim
    )
    return K_mat + K_geo


def element_residual_hyperelastic(
    geom: ElementGeometry,
    U_e: np.ndarray,
    mu_gp: np.ndarray,
    kappa_gp: np.ndarray,
    dim: int,
) -> np.ndarray:
    """Single-element internal force vector (length n_a * dim)."""
    grad_u = displacement_gradients(
        geom.dN_dX, U_e[None, :], dim
    )  # treat as 1-element batch
    F = material.deformation_gradient(grad_u)
    S_v = material.stress_to_voigt(
        material.second_pk_stress(F, mu_gp[None], kappa_gp[None])
    )
    B = nonlinear_b_matrix(geom.dN_dX, F)
    return np.einsum("g,egvc,egv->ec", geom.gauss_factors, B, S_v)[0]


def element_tangent_hyperelastic(
    geom: ElementGeometry,
    U_e: np.ndarray,
    mu_gp: np.ndarray,
    kappa_gp: np.ndarray,
    dim: int,
) -> np.ndarray:
    """Single-element consistent tangent dr_e/dU_e."""
    conn = np.arange(geom.N.shape[1], dtype=np.int64)[None, :]
    return hyperelastic_element_tangents(
        geom, conn, U_e, mu_gp[None], kappa_gp[None], dim
    )[0]


# ---------------------------------------------------------------------------
# Thermal / thermomechanical kernels


def thermal_internal_force(
    geom: ElementGeometry,
    conn: np.ndarray,
    T: np.ndarray,
    k0_gp: np.ndarray,
    b: float,
    c: float,
) -> np.ndarray:
    """Assembled conduction residual A[ sum_k W_k B_t^T k(T) B_t T_e ]."""
    n_dof = T.shape[-1]
    T_e = gather(T, conn)
    T_gp = np.einsum("ga,...ea->...eg", geom.N, T_e)
    grad_T = np.einsum("gaj,...ea->...egj", geom.dN_dX, T_e)
    k = material.conductivity(k0_gp, b, c, T_gp)
    W = geom.gauss_factors
    r_e = np.einsum("g,gaj,...eg,...egj->...ea", W, geom.dN_dX, k, grad_T)
    return scatter_vector(r_e, conn, n_dof)


def thermal_element_tangents(
    geom: ElementGeometry,
    conn: np.ndarray,
    T: np.ndarray,
    k0_gp: np.ndarray,
    b: float,
    c: float,
) -> np.ndarray:
    """Exact conduction tangents including the dk/dT term (nonsymmetric)."""
    T_e = gather(T, conn)
    T_gp = np.einsum("ga,ea->eg", geom.N, T_e)
    grad_T = np.einsum("gaj,ea->egj", geom.dN_dX, T_e)
    k = material.conductivity(k0_gp, b, c, T_gp)
    W = geom.gauss_factors
    K_lin = np.einsum("g,gaj,eg,gbj->eab", W, geom.dN_dX, k, geom.dN_dX)
    if b == 0.0 or c == 0.0:
        return K_lin
    dk_dT = k0_gp * b * c * np.power(T_gp, c - 1.0)
    K_nl = np.einsum(
        "g,gaj,egj,eg,gb->eab", W, geom.dN_dX, grad_T, dk_dT, geom.N
    )
    return K_lin + K_nl


def small_strain_b_matrix(dN_dX: np.ndarray, dim: int) -> np.ndarray:
    """Small-strain B_u (engineering shear), shape (n_gp, nv, n_a*dim)."""
    return _bu(dN_dX, dim)


def _bu(dN_dX: np.ndarray, dim: int) -> np.ndarray:
    n_gp, n_a, _ = dN_dX.shape
    pairs = material.voigt_pairs(dim)
    B = np.zeros((n_gp, len(pairs), n_a * dim))
    for row, (p, q) in enumerate(pairs):
        if p == q:
            B[:, row, p::dim] = dN_dX[:, :, p]
        else:
            B[:, row, p::dim] = dN_dX[:, :, q]
            B[:, row, q::dim] = dN_dX[:, :, p]
    return B


def thermomech_mechanical_force(
    geom: ElementGeometry,
    conn: np.ndarray,
    U: np.ndarray,
    T: np.ndarray,
    E0_gp: np.ndarray,
    params: material.ThermoMechParams,
    dim: int,
) -> np.ndarray:
    """Mechanical residual with thermal strain:
    A[ sum_k W_k B_u^T D(T) (B_u U_e - alpha (T - T0) s) ]."""
    n_dof = U.shape[-1]
    idx = dof_indices(conn, dim)
    U_e = gather(U, idx)
    T_e = gather(T, conn)
    T_gp = np.einsum("ga,...ea->...eg", geom.N, T_e)
    E_gp = material.youngs_modulus(E0_gp, params.b, params.c, T_gp)
    D = material.elasticity_tensor(E_gp, params.nu, dim)
    B = _bu(geom.dN_dX, dim)
    eps = np.einsum("gvc,...ec->...egv", B, U_e)
    s = material.identity_selector(dim)
    eps_t = params.alpha * (T_gp - params.T0)[..., None] * s
    sig = np.einsum("...egvw,...egw->...egv", D, eps - eps_t)
    W = geom.gauss_factors
    r_e = np.einsum("g,gvc,...egv->...ec", W, B, sig)
    return scatter_vector(r_e, idx, n_dof)


def thermomech_element_tangents(
    geom: ElementGeometry,
    conn: np.ndarray,
    T: np.ndarray,
    E0_gp: np.ndarray,
    params: material.ThermoMechParams,
    dim: int,
) -> np.ndarray:
    """Mechanical stiffness at fixed temperature (residual is linear in U)."""
    T_e = gather(T, conn)
    T_gp = np.einsum("ga,ea->eg", geom.N, T_e)
    E_gp = material.youngs_modulus(E0_gp, params.b, params.c, T_gp)
    D = material.elasticity_tensor(E_gp, params.nu, dim)
    B = _bu(geom.dN_dX, dim)
    W = geom.gauss_factors
    return np.einsum("g,gvc,egvw,gwd->ecd", W, B, D, B)


def element_residual_thermal(
    geom: ElementGeometry,
    T_e: np.ndarray,
    k0_gp: np.ndarray,
    b: float,
    c: float,
) -> np.ndarray:
    """Single-element conduction residual."""
    T_gp = geom.N @ T_e
    grad_T = np.einsum("gaj,a->gj", geom.dN_dX, T_e)
    k = material.conductivity(k0_gp, b, c, T_gp)
    return np.einsum("g,gaj,g,gj->a", geom.gauss_factors, geom.dN_dX, k, grad_T)


def element_residual_thermomech(
    geom: ElementGeometry,
    U_e: np.ndarray,
    T_e: np.ndarray,
    E0_gp: np.ndarray,
    params: material.ThermoMechParams,
    dim: int,
) -> np.ndarray:
    """Single-element mechanical residual with thermal strain."""
    T_gp = geom.N @ T_e
    E_gp = material.youngs_modulus(E0_gp, params.b, params.c, T_gp)
    D = material.elasticity_tensor(E_gp, params.nu, dim)
    B = _bu(geom.dN_dX, dim)
    eps = np.einsum("gvc,c->gv", B, U_e)
    s = material.identity_selector(dim)
    eps_t = params.alpha * (T_gp - params.T0)[:, None] * s
    sig = np.einsum("gvw,gw->gv", D, eps - eps_t)
    return np.einsum("g,gvc,gv->c", geom.gauss_factors, B, sig)


# ---------------------------------------------------------------------------
# Dirichlet treatment and generic assembly


def constrain_system(
    K: sp.csr_matrix,
    r: np.ndarray,
    mask: np.ndarray,
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Row/column elimination for the Newton update K dU = -r.

    The Dirichlet rows of ``r`` must already hold U_i - s*ubar_i, so the
    implied update on constrained DOFs is dU_c = -r_c.  Column contributions
    K_fc dU_c are moved to the right-hand side and constrained rows/columns
    are replaced by the identity.
    """
    n = r.shape[0]
    dU_c = np.where(mask, -r, 0.0)
    rhs = -r - K @ dU_c
    rhs[mask] = dU_c[mask]
    free = (~mask).astype(float)
    D_free = sp.diags(free)
    D_fix = sp.diags(mask.astype(float))
    K_mod = D_free @ K @ D_free + D_fix
    return K_mod.tocsr(), rhs


def assemble_global(
    mesh: StructuredMesh,
    state: DofState,
    per_element_fn,
    dofs_per_node: int,
    with_tangent: bool = False,
):
    """Generic assembly r = A[r_e] (and K = A[K_e]) with Dirichlet rows.

    ``per_element_fn(element_id, U_e)`` returns ``r_e`` or ``(r_e, K_e)``.
    Dirichlet rows of the residual are replaced by U_i - load_scale*ubar_i;
    the tangent keeps its raw entries (constraint handling happens in
    :func:`constrain_system`).
    """
    n_dof = mesh.n_nodes * dofs_per_node
    if state.U.shape[-1] != n_dof:
        raise ConfigurationError("state size does not match mesh")
    idx = dof_indices(mesh.elements, dofs_per_node)
    r = np.zeros(n_dof)
    triplets = []
    for e in range(mesh.n_elements):
        out = per_element_fn(e, state.U[idx[e]])
        if with_tangent:
            r_e, K_e = out
            triplets.append((idx[e], K_e))
        else:
            r_e = out
        np.add.at(r, idx[e], r_e)
    mask = state.dirichlet_mask
    r[mask] = state.U[mask] - state.load_scale * state.dirichlet_values[mask]
    if not with_tangent:
        return r, None
    rows = np.concatenate([np.repeat(i, len(i)) for i, _ in triplets])
    cols = np.concatenate([np.tile(i, len(i)) for i, _ in triplets])
    vals = np.concatenate([K.ravel() for _, K in triplets])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n_dof, n_dof)).tocsr()
    return r, K


def build_dirichlet(
    mesh: StructuredMesh,
    dofs_per_node: int,
    entries: list[tuple[int, int, int, float]],
) -> tuple[np.ndarray, np.ndarray]:
    """Dirichlet mask/values from (axis, side, component, value) face entries.

    ``side`` is 0 for the face at coordinate 0 and 1 for the face at the
    extent; ``component`` indexes the nodal DOF (for thermomechanics the
    temperature is component ``dim``).  Later entries win on overlap.
    """
    n_dof = mesh.n_nodes * dofs_per_node
    mask = np.zeros(n_dof, dtype=bool)
    values = np.zeros(n_dof)
    for axis, side, component, value in entries:
        nodes = mesh.nodes_on_face(axis, side)
        dofs = nodes * dofs_per_node + component
        mask[dofs] = True
        values[dofs] = value
    return mask, values


# ---------------------------------------------------------------------------
# Problem objects consumed by the Newton solver and the training loss


@dataclass
class HyperelasticProblem:
    """Neo-Hookean boundary-value problem on a structured mesh."""

    mesh: StructuredMesh
    mu_gp: np.ndarray  # (n_el, n_gp)
    kappa_gp: np.ndarray
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    f_ext: np.ndarray | None = None  # Neumann nodal loads at full load
    geom: ElementGeometry = None

    def __post_init__(self):
        if self.geom is None:
            rule = gauss_rule(self.mesh.dim)
            # Uniform grid: all elements share the same isoparametric data.
            self.geom = element_geometry(self.mesh, 0, rule)
        if self.f_ext is None:
            self.f_ext = np.zeros(self.n_dof)

    @property
    def dofs_per_node(self) -> int:
        return self.mesh.dim

    @property
    def n_dof(self) -> int:
        return self.mesh.n_nodes * self.dofs_per_node

    def raw_residual(
        self, U: np.ndarray, load_scale: float = 1.0, clamp_j: float | None = None
    ) -> np.ndarray:
        r = hyperelastic_internal_force(
            self.geom,
            self.mesh.elements,
            U,
            self.mu_gp,
            self.kappa_gp,
            self.mesh.dim,
            clamp_j=clamp_j,
        )
        return r - load_scale * self.f_ext

    def residual(self, U: np.ndarray, load_scale: float = 1.0) -> np.ndarray:
        r = self.raw_residual(U, load_scale)
        mask = self.dirichlet_mask
        r[mask] = U[mask] - load_scale * self.dirichlet_values[mask]
        return r

    def tangent(self, U: np.ndarray, load_scale: float = 1.0) -> sp.csr_matrix:
        K_e = hyperelastic_element_tangents(
            self.geom, self.mesh.elements, U, self.mu_gp, self.kappa_gp, self.mesh.dim
        )
        idx = dof_indices(self.mesh.elements, self.dofs_per_node)
        return scatter_matrix(K_e, idx, self.n_dof)

    def make_state(self, load_scale: float = 1.0) -> DofState:
        U = apply_dirichlet(
            np.zeros(self.n_dof), self.dirichlet_mask, self.dirichlet_values, load_scale
        )
        return DofState(U, self.dirichlet_mask, self.dirichlet_values, load_scale)


@dataclass
class ThermalProblem:
    """Steady conduction with k = k0(X) (1 + b T^c)."""

    mesh: StructuredMesh
    k0_gp: np.ndarray
    b: float
    c: float
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    f_ext: np.ndarray | None = None
    geom: ElementGeometry = None

    def __post_init__(self):
        if self.geom is None:
            self.geom = element_geometry(self.mesh, 0, gauss_rule(self.mesh.dim))
        if self.f_ext is None:
            self.f_ext = np.zeros(self.n_dof)

    @property
    def dofs_per_node(self) -> int:
        return 1

    @property
    def n_dof(self) -> int:
        return self.mesh.n_nodes

    def raw_residual(
        self, T: np.ndarray, load_scale: float = 1.0, clamp_j: float | None = None
    ) -> np.ndarray:
        r = thermal_internal_force(
            self.geom, self.mesh.elements, T, self.k0_gp, self.b, self.c
        )
        return r - load_scale * self.f_ext

    def residual(self, T: np.ndarray, load_scale: float = 1.0) -> np.ndarray:
        r = self.raw_residual(T, load_scale)
        mask = self.dirichlet_mask
        r[mask] = T[mask] - load_scale * self.dirichlet_values[mask]
        return r

    def tangent(self, T: np.ndarray, load_scale: float = 1.0) -> sp.csr_matrix:
        K_e = thermal_element_tangents(
            self.geom, self.mesh.elements, T, self.k0_gp, self.b, self.c
        )
        return scatter_matrix(K_e, self.mesh.elements, self.n_dof)

    def make_state(self, load_scale: float = 1.0) -> DofState:
        T = apply_dirichlet(
            np.zeros(self.n_dof), self.dirichlet_mask, self.dirichlet_values, load_scale
        )
        return DofState(T, self.dirichlet_mask, self.dirichlet_values, load_scale)


@dataclass
class ThermoMechProblem:
    """One-way coupled thermomechanics with interleaved (u_x, u_y[, u_z], T) DOFs.

    Conduction is independent of displacement; the mechanical residual is
    linear in U at fixed T.  The combined residual/tangent interface exposes
    the full monolithic system so generic Newton can run on it, while
    :func:`ninfem.newton.solve_thermomech` exploits the staggered structure.
    """

    mesh: StructuredMesh
    phi_gp: np.ndarray  # E0 = k0 = phi at Gauss points
    params: material.ThermoMechParams
    dirichlet_mask: np.ndarray  # combined layout
    dirichlet_values: np.ndarray
    geom: ElementGeometry = None

    def __post_init__(self):
        if self.geom is None:
            self.geom = element_geometry(self.mesh, 0, gauss_rule(self.mesh.dim))

    @property
    def dofs_per_node(self) -> int:
        return self.mesh.dim + 1

    @property
    def n_dof(self) -> int:
        return self.mesh.n_nodes * self.dofs_per_node

    def split(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Combined vector -> (mechanical U, temperature T)."""
        d = self.dofs_per_node
        Xn = X.reshape(X.shape[:-1] + (self.mesh.n_nodes, d))
        U = Xn[..., : self.mesh.dim].reshape(X.shape[:-1] + (-1,))
        T = Xn[..., self.mesh.dim]
        return U, T

    def merge(self, U: np.ndarray, T: np.ndarray) -> np.ndarray:
        d = self.dofs_per_node
        Xn = np.empty(T.shape[:-1] + (self.mesh.n_nodes, d))
        Xn[..., : self.mesh.dim] = U.reshape(U.shape[:-1] + (self.mesh.n_nodes, self.mesh.dim))
        Xn[..., self.mesh.dim] = T
        return Xn.reshape(T.shape[:-1] + (-1,))

    def raw_residual(
        self, X: np.ndarray, load_scale: float = 1.0, clamp_j: float | None = None
    ) -> np.ndarray:
        U, T = self.split(X)
        r_t = thermal_internal_force(
            self.geom, self.mesh.elements, T, self.phi_gp, self.params.b, self.params.c
        )
        r_u = thermomech_mechanical_force(
            self.geom,
            self.mesh.elements,
            U,
            T,
            self.phi_gp,
            self.params,
            self.mesh.dim,
        )
        return self.merge(r_u, r_t)

    def residual(self, X: np.ndarray, load_scale: float = 1.0) -> np.ndarray:
        r = self.raw_residual(X, load_scale)
        mask = self.dirichlet_mask
        r[mask] = X[mask] - load_scale * self.dirichlet_values[mask]
        return r

    def tangent(self, X: np.ndarray, load_scale: float = 1.0) -> sp.csr_matrix:
        """Monolithic tangent d(r_u, r_t)/d(U, T); lower-triangular coupling."""
        U, T = self.split(X)
        d = self.dofs_per_node
        dim = self.mesh.dim
        conn = self.mesh.elements
        K_t = thermal_element_tangents(
            self.geom, conn, T, self.phi_gp, self.params.b, self.params.c
        )
        K_u = thermomech_element_tangents(
            self.geom, conn, T, self.phi_gp, self.params, dim
        )
        K_ut = self._mech_thermal_coupling(U, T)
        n_el, n_a = conn.shape
        n_edof = n_a * d
        K_e = np.zeros((n_el, n_edof, n_edof))
        mech_cols = (np.arange(n_a)[:, None] * d + np.arange(dim)).ravel()
        therm_cols = np.arange(n_a) * d + dim
        K_e[:, mech_cols[:, None], mech_cols[None, :]] = K_u
        K_e[:, therm_cols[:, None], therm_cols[None, :]] = K_t
        K_e[:, mech_cols[:, None], therm_cols[None, :]] = K_ut
        idx = dof_indices(conn, d)
        return scatter_matrix(K_e, idx, self.n_dof)

    def _mech_thermal_coupling(self, U: np.ndarray, T: np.ndarray) -> np.ndarray:
        """d r_u / d T_e per element (thermal strain + E(T) dependence)."""
        geom = self.geom
        dim = self.mesh.dim
        p = self.params
        conn = self.mesh.elements
        idx = dof_indices(conn, dim)
        U_e = gather(U, idx)
        T_e = gather(T, conn)
        T_gp = np.einsum("ga,ea->eg", geom.N, T_e)
        E_gp = material.youngs_modulus(self.phi_gp, p.b, p.c, T_gp)
        D = material.elasticity_tensor(E_gp, p.nu, dim)
        B = _bu(geom.dN_dX, dim)
        s = material.identity_selector(dim)
        eps = np.einsum("gvc,ec->egv", B, U_e)
        eps_el = eps - p.alpha * (T_gp - p.T0)[..., None] * s
        W = geom.gauss_factors
        # thermal-strain part: -alpha B^T D s N
        K1 = -p.alpha * np.einsum("g,gvc,egvw,w,gb->ecb", W, B, D, s, geom.N)
        # stiffness-variation part: B^T (dD/dT) eps_el N
        if p.b != 0.0 and p.c != 0.0:
            dE = self.phi_gp * p.b * p.c * np.power(T_gp, p.c - 1.0)
            dD = material.elasticity_tensor(dE, p.nu, dim)
            K2 = np.einsum("g,gvc,egvw,egw,gb->ecb", W, B, dD, eps_el, geom.N)
        else:
            K2 = 0.0
        return K1 + K2

    def make_state(self, load_scale: float = 1.0) -> DofState:
        X = apply_dirichlet(
            np.zeros(self.n_dof), self.dirichlet_mask, self.dirichlet_values, load_scale
        )
        return DofState(X, self.dirichlet_mask, self.dirichlet_values, load_scale)
