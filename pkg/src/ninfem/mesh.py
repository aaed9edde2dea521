"""Structured quad/hex meshes on axis-aligned boxes.

Nodes are ordered lexicographically with x running fastest.  Elements are
bilinear quadrilaterals (2D) or trilinear hexahedra (3D) with the usual
counterclockwise / right-handed local node ordering.  Because the grids are
uniform, the Jacobian is diagonal and constant over each element; the API
does not assume this, but callers may exploit it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Invalid mesh or problem configuration."""


class DegenerateElementError(RuntimeError):
    """Element mapping with non-positive Jacobian determinant."""


# Parent-element corner coordinates, matching the element connectivity
# ordering produced by build_box_mesh.
_CORNERS_2D = np.array(
    [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
)
_CORNERS_3D = np.array(
    [
        [-1.0, -1.0, -1.0],
        [1.0, -1.0, -1.0],
        [1.0, 1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [1.0, -1.0, 1.0],
        [1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0],
    ]
)


def parent_corners(dim: int) -> np.ndarray:
    return _CORNERS_2D if dim == 2 else _CORNERS_3D


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product Gauss-Legendre rule on [-1, 1]^dim."""

    points: np.ndarray  # (n_gp, dim)
    weights: np.ndarray  # (n_gp,)

    @property
    def n_points(self) -> int:
        return len(self.weights)


def gauss_rule(dim: int, order: int = 2) -> QuadratureRule:
    """Tensor-product Gauss-Legendre quadrature with `order` points per axis."""
    if dim not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {dim}")
    pts_1d, wts_1d = np.polynomial.legendre.leggauss(order)
    points = np.array(list(itertools.product(pts_1d, repeat=dim)))
    weights = np.array(
        [np.prod(c) for c in itertools.product(wts_1d, repeat=dim)]
    )
    return QuadratureRule(points=points, weights=weights)


def shape_functions(dim: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear/trilinear shape functions and parent-space gradients.

    Parameters
    ----------
    dim : 2 or 3
    xi : (dim,) or (n, dim) parent coordinates in [-1, 1]^dim

    Returns
    -------
    N : (..., 2**dim) shape function values
    dN : (..., 2**dim, dim) gradients d N_a / d xi_j
    """
    xi = np.asarray(xi, dtype=float)
    squeeze = xi.ndim == 1
    xi = np.atleast_2d(xi)
    corners = parent_corners(dim)  # (n_a, dim)
    # N_a = prod_j (1 + xi_j * corner_aj) / 2
    terms = 1.0 + xi[:, None, :] * corners[None, :, :]  # (n, n_a, dim)
    N = np.prod(terms, axis=2) / 2.0**dim
    dN = np.empty((xi.shape[0], corners.shape[0], dim))
    for j in range(dim):
        others = [k for k in range(dim) if k != j]
        prod = np.prod(terms[:, :, others], axis=2)
        dN[:, :, j] = corners[None, :, j] * prod / 2.0**dim
    if squeeze:
        return N[0], dN[0]
    return N, dN


@dataclass(frozen=True)
class StructuredMesh:
    """Uniform grid of quads/hexes covering an axis-aligned box exactly."""

    dim: int
    extents: tuple[float, ...]
    nodes_per_axis: tuple[int, ...]
    node_coords: np.ndarray  # (n_nodes, dim)
    elements: np.ndarray  # (n_elements, 2**dim)

    @property
    def n_nodes(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def spacing(self) -> np.ndarray:
        return np.array(
            [L / (n - 1) for L, n in zip(self.extents, self.nodes_per_axis)]
        )

    def nodes_on_face(self, axis: int, side: int) -> np.ndarray:
        """Node indices on the box face {x_axis = 0} (side=0) or {x_axis = L} (side=1)."""
        coord = self.node_coords[:, axis]
        target = 0.0 if side == 0 else self.extents[axis]
        tol = 1e-12 * max(self.extents)
        return np.nonzero(np.abs(coord - target) <= tol)[0]

    def boundary_nodes(self) -> np.ndarray:
        idx = [
            self.nodes_on_face(a, s) for a in range(self.dim) for s in (0, 1)
        ]
        return np.unique(np.concatenate(idx))


def build_box_mesh(
    dim: int,
    extents: tuple[float, ...],
    nodes_per_axis: tuple[int, ...],
) -> StructuredMesh:
    """Build a structured box mesh with lexicographic node ordering (x fastest)."""
    if dim not in (2, 3):
        raise ConfigurationError(f"dim must be 2 or 3, got {dim}")
    if len(extents) != dim or len(nodes_per_axis) != dim:
        raise ConfigurationError("extents/nodes_per_axis length must equal dim")
    if any(n < 2 for n in nodes_per_axis):
        raise ConfigurationError("need at least 2 nodes per axis")
    if any(L <= 0 for L in extents):
        raise ConfigurationError("extents must be positive")

    axes = [np.linspace(0.0, L, n) for L, n in zip(extents, nodes_per_axis)]
    if dim == 2:
        X, Y = np.meshgrid(axes[0], axes[1], indexing="xy")
        coords = np.column_stack([X.ravel(), Y.ravel()])
    else:
        # z slowest, then y, x fastest
        Z, Y, X = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
        coords = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    nx = nodes_per_axis[0]
    ny = nodes_per_axis[1]
    if dim == 2:
        ex, ey = np.meshgrid(
            np.arange(nx - 1), np.arange(ny - 1), indexing="xy"
        )
        base = ey.ravel() * nx + ex.ravel()
        elements = np.column_stack(
            [base, base + 1, base + 1 + nx, base + nx]
        )
    else:
        nz = nodes_per_axis[2]
        ez, ey, ex = np.meshgrid(
            np.arange(nz - 1),
            np.arange(ny - 1),
            np.arange(nx - 1),
            indexing="ij",
        )
        base = (ez * ny + ey) * nx + ex
        base = base.ravel()
        layer = nx * ny
        elements = np.column_stack(
            [
                base,
                base + 1,
                base + 1 + nx,
                base + nx,
                base + layer,
                base + layer + 1,
                base + layer + 1 + nx,
                base + layer + nx,
            ]
        )

    return StructuredMesh(
        dim=dim,
        extents=tuple(float(L) for L in extents),
        nodes_per_axis=tuple(int(n) for n in nodes_per_axis),
        node_coords=coords.astype(float),
        elements=elements.astype(np.int64),
    )


@dataclass(frozen=True)
class ElementGeometry:
    """Per-Gauss-point isoparametric data for one element."""

    N: np.ndarray  # (n_gp, n_a)
    dN_dxi: np.ndarray  # (n_gp, n_a, dim)
    jacobian: np.ndarray  # (n_gp, dim, dim)
    det_j: np.ndarray  # (n_gp,)
    dN_dX: np.ndarray  # (n_gp, n_a, dim)
    weights: np.ndarray  # (n_gp,) quadrature weights w_k

    @property
    def gauss_factors(self) -> np.ndarray:
        """Weighting factors W_k = w_k * det(J)."""
        return self.weights * self.det_j


def element_geometry(
    mesh: StructuredMesh, element_id: int, rule: QuadratureRule
) -> ElementGeometry:
    """Shape data, Jacobians and physical gradients at the rule's points."""
    conn = mesh.elements[element_id]
    Xe = mesh.node_coords[conn]  # (n_a, dim)
    N, dN_dxi = shape_functions(mesh.dim, rule.points)
    # J_ij = d x_j / d xi_i (rows parent, columns physical)
    J = np.einsum("gai,aj->gij", dN_dxi, Xe).transpose(0, 2, 1)
    det_j = np.linalg.det(J)
    if np.any(det_j <= 0):
        raise DegenerateElementError(
            f"element {element_id} has non-positive Jacobian determinant"
        )
    Jinv = np.linalg.inv(J)
    # dN/dX_j = dN/dxi_k * (J^-1)_kj with J = dX/dxi
    dN_dX = np.einsum("gak,gkj->gaj", dN_dxi, Jinv)
    return ElementGeometry(
        N=N,
        dN_dxi=dN_dxi,
        jacobian=J,
        det_j=det_j,
        dN_dX=dN_dX,
        weights=rule.weights.copy(),
    )
