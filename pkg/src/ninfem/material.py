"""Constitutive laws.

Compressible neo-Hookean hyperelasticity with the split

    W = mu/2 (Ibar1 - 3) + kappa/4 (J^2 - 1 - 2 ln J),

plus linear thermoelasticity with thermal strain and temperature-dependent
conductivity/stiffness k = k0 (1 + b T^c), E = E0 (1 + b T^c).

All stress operations accept either a single deformation gradient or an
array with leading batch dimensions; 2D gradients are treated as the
in-plane block of a 3x3 F with F33 = 1 (plane strain).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ninfem.mesh import ConfigurationError

# Voigt index pairs; shear entries carry engineering strain.
VOIGT_2D = [(0, 0), (1, 1), (0, 1)]
VOIGT_3D = [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)]


class InvertedElementError(RuntimeError):
    """det(F) <= 0: the deformation state is inadmissible."""


def voigt_pairs(dim: int) -> list[tuple[int, int]]:
    return VOIGT_2D if dim == 2 else VOIGT_3D


@dataclass
class PhaseField:
    """Scalar parametric field phi at mesh nodes.

    Material properties are linear in phi: mu = a_mu * phi + b_mu and
    kappa = a_kappa * phi + b_kappa (defaults a=1, b=0).
    """

    values: np.ndarray  # (n_nodes,)
    a_mu: float = 1.0
    b_mu: float = 0.0
    a_kappa: float = 1.0
    b_kappa: float = 0.0

    def mu(self, phi: np.ndarray | None = None) -> np.ndarray:
        phi = self.values if phi is None else phi
        return self.a_mu * phi + self.b_mu

    def kappa(self, phi: np.ndarray | None = None) -> np.ndarray:
        phi = self.values if phi is None else phi
        return self.a_kappa * phi + self.b_kappa

    def at_gauss_points(self, elements: np.ndarray, N: np.ndarray) -> np.ndarray:
        """Interpolate nodal phi to Gauss points: (n_el, n_gp)."""
        nodal = self.values[elements]  # (n_el, n_a)
        return np.einsum("ea,ga->eg", nodal, N)


@dataclass
class ThermoMechParams:
    """Coupled thermomechanics material data."""

    E0: np.ndarray | float = 1.0  # nodal field or constant
    nu: float = 0.3
    alpha: float = 1.0
    k0: np.ndarray | float = 1.0
    b: float = 2.0
    c: float = 2.0
    T0: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.nu < 0.5):
            raise ConfigurationError("Poisson ratio must satisfy 0 <= nu < 0.5")
        if self.b < 0 or self.c < 0:
            raise ConfigurationError("b and c must be non-negative")


def deformation_gradient(grad_u: np.ndarray) -> np.ndarray:
    """F = I + grad(u); accepts (..., d, d)."""
    grad_u = np.asarray(grad_u, dtype=float)
    d = grad_u.shape[-1]
    F = grad_u.copy()
    for i in range(d):
        F[..., i, i] += 1.0
    return F


def _det(A: np.ndarray) -> np.ndarray:
    """Batched determinant, closed form for 2x2/3x3 (hot path)."""
    d = A.shape[-1]
    if d == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if d == 3:
        return (
            A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
            - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
            + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0])
        )
    return np.linalg.det(A)


def _inv(A: np.ndarray, det: np.ndarray | None = None) -> np.ndarray:
    """Batched inverse, closed form for 2x2/3x3 (hot path)."""
    d = A.shape[-1]
    if det is None:
        det = _det(A)
    if d == 2:
        out = np.empty_like(A)
        out[..., 0, 0] = A[..., 1, 1]
        out[..., 0, 1] = -A[..., 0, 1]
        out[..., 1, 0] = -A[..., 1, 0]
        out[..., 1, 1] = A[..., 0, 0]
        return out / det[..., None, None]
    if d == 3:
        out = np.empty_like(A)
        for i in range(3):
            for j in range(3):
                r = [(j + 1) % 3, (j + 2) % 3]
                c = [(i + 1) % 3, (i + 2) % 3]
                out[..., i, j] = (
                    A[..., r[0], c[0]] * A[..., r[1], c[1]]
                    - A[..., r[0], c[1]] * A[..., r[1], c[0]]
                )
        return out / det[..., None, None]
    return np.linalg.inv(A)


def _invariants(F: np.ndarray):
    """J, I1 and inverse of the in-plane C for embedded-F conventions."""
    d = F.shape[-1]
    C = np.einsum("...ki,...kj->...ij", F, F)
    J = _det(F)
    I1 = np.trace(C, axis1=-2, axis2=-1)
    if d == 2:
        I1 = I1 + 1.0  # C33 = 1
    return C, J, I1


def neo_hookean_energy(
    F: np.ndarray, mu: np.ndarray | float, kappa: np.ndarray | float
) -> np.ndarray:
    """Strain energy density W(F)."""
    _, J, I1 = _invariants(np.asarray(F, dtype=float))
    if np.any(J <= 0):
        raise InvertedElementError("det(F) <= 0 in energy evaluation")
    Ibar1 = J ** (-2.0 / 3.0) * I1
    return 0.5 * mu * (Ibar1 - 3.0) + 0.25 * kappa * (J**2 - 1.0 - 2.0 * np.log(J))


def _guarded_coefficients(J, I1, mu, kappa, clamp_j):
    """Coefficients (a, b) of the guarded stress S = a I + b C^-1.

    For J >= clamp_j this reproduces the exact neo-Hookean stress
    (a = mu J^(-2/3), b = -mu/3 J^(-2/3) I1 + kappa/2 (J^2 - 1)).  Below the
    threshold the scalar functions J^(-2/3) and ln J in the energy are
    replaced by C^1 linear extensions, so the guarded energy keeps a
    monotone restoring force on inverted states (no spurious equilibria at
    negative J) while its gradient stays bounded.
    """
    eps = clamp_j
    below = J < eps
    Js = np.maximum(J, eps)
    g1 = Js ** (-2.0 / 3.0)
    g1p = -(2.0 / 3.0) * Js ** (-5.0 / 3.0)
    g2p = 1.0 / Js
    if np.any(below):
        g1 = np.where(below, g1 + g1p * (J - eps), g1)
    a = mu * g1
    b = 0.5 * mu * J * I1 * g1p + 0.5 * kappa * (J - g2p) * J
    return a, b


def first_pk_stress(
    F: np.ndarray,
    mu: np.ndarray | float,
    kappa: np.ndarray | float,
    clamp_j: float | None = None,
) -> np.ndarray:
    """First Piola-Kirchhoff stress P = dW/dF.

    The isochoric part is mu J^(-2/3) (F - I1/3 F^-T).  The volumetric part
    is derived from the energy, kappa/2 (J^2 - 1) F^-T.  With clamp_j set,
    the energy's J-dependence is extended below that threshold (C^1 linear
    extension) so inverted training states see a bounded restoring stress
    instead of raising.
    """
    F = np.asarray(F, dtype=float)
    if clamp_j is not None:
        S = second_pk_stress(F, mu, kappa, clamp_j=clamp_j)
        return np.einsum("...ik,...kj->...ij", F, S)
    C, J, I1 = _invariants(F)
    if np.any(J <= 0):
        raise InvertedElementError("det(F) <= 0 in stress evaluation")
    FinvT = _inv(F, det=J).swapaxes(-1, -2)
    mu = np.asarray(mu)[..., None, None]
    kappa = np.asarray(kappa)[..., None, None]
    Jn = J[..., None, None]
    I1n = I1[..., None, None]
    return mu * Jn ** (-2.0 / 3.0) * (F - I1n / 3.0 * FinvT) + 0.5 * kappa * (
        Jn**2 - 1.0
    ) * FinvT


def second_pk_stress(
    F: np.ndarray,
    mu: np.ndarray | float,
    kappa: np.ndarray | float,
    clamp_j: float | None = None,
) -> np.ndarray:
    """Second Piola-Kirchhoff stress S = F^-1 P = 2 dW/dC (in-plane block in 2D)."""
    F = np.asarray(F, dtype=float)
    if F.shape[-1] == 2:
        return _second_pk_stress_2d(F, mu, kappa, clamp_j)
    C, J, I1 = _invariants(F)
    detC = J * J
    d = F.shape[-1]
    if clamp_j is None:
        if np.any(J <= 0):
            raise InvertedElementError("det(F) <= 0 in stress evaluation")
        Cinv = _inv(C, det=detC)
        mu = np.asarray(mu)[..., None, None]
        kappa = np.asarray(kappa)[..., None, None]
        Jn = J[..., None, None]
        I1n = I1[..., None, None]
        return mu * Jn ** (-2.0 / 3.0) * (
            np.eye(d) - I1n / 3.0 * Cinv
        ) + 0.5 * kappa * (Jn**2 - 1.0) * Cinv
    # floor det C so the inverse stays bounded through J = 0 states
    detC = np.maximum(detC, clamp_j * clamp_j)
    Cinv = _inv(C, det=detC)
    a, b = _guarded_coefficients(J, I1, np.asarray(mu), np.asarray(kappa), clamp_j)
    return a[..., None, None] * np.eye(d) + b[..., None, None] * Cinv


def _second_pk_stress_2d(F, mu, kappa, clamp_j):
    """Elementwise 2D specialization of the S formula (training hot path)."""
    F00, F01 = F[..., 0, 0], F[..., 0, 1]
    F10, F11 = F[..., 1, 0], F[..., 1, 1]
    C00 = F00 * F00 + F10 * F10
    C01 = F00 * F01 + F10 * F11
    C11 = F01 * F01 + F11 * F11
    J = F00 * F11 - F01 * F10
    I1 = C00 + C11 + 1.0  # C33 = 1 in the embedded convention
    detC = C00 * C11 - C01 * C01
    if clamp_j is None:
        if np.any(J <= 0):
            raise InvertedElementError("det(F) <= 0 in stress evaluation")
        iso = np.asarray(mu) * J ** (-2.0 / 3.0)
        coeff = 0.5 * np.asarray(kappa) * (J * J - 1.0) - iso * (I1 / 3.0)
    else:
        # floor keeps the inverse bounded through J = 0 training states
        detC = np.maximum(detC, clamp_j * clamp_j)
        iso, coeff = _guarded_coefficients(
            J, I1, np.asarray(mu), np.asarray(kappa), clamp_j
        )
    Ci00 = C11 / detC
    Ci01 = -C01 / detC
    Ci11 = C00 / detC
    S = np.empty(J.shape + (2, 2))
    S[..., 0, 0] = iso + coeff * Ci00
    S[..., 0, 1] = coeff * Ci01
    S[..., 1, 0] = S[..., 0, 1]
    S[..., 1, 1] = iso + coeff * Ci11
    return S


def stress_to_voigt(S: np.ndarray) -> np.ndarray:
    """Symmetric tensor (..., d, d) to Voigt vector (11, 22, [33,] 12[, 23, 13])."""
    d = S.shape[-1]
    pairs = voigt_pairs(d)
    return np.stack([S[..., i, j] for (i, j) in pairs], axis=-1)


def material_tangent(
    F: np.ndarray,
    mu: np.ndarray | float,
    kappa: np.ndarray | float,
) -> np.ndarray:
    """Consistent tangent dS_voigt/dE_voigt (engineering shear), shape (..., nv, nv).

    Analytic 2 dS/dC for the neo-Hookean split; validated against finite
    differences in the test suite (material_tangent_fd is the oracle).
    """
    F = np.asarray(F, dtype=float)
    C, J, I1 = _invariants(F)
    detC = J * J
    if np.any(J <= 0):
        raise InvertedElementError("det(F) <= 0 in tangent evaluation")
    Cinv = _inv(C, det=detC)
    d = F.shape[-1]
    I_d = np.eye(d)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), J.shape)
    kappa = np.broadcast_to(np.asarray(kappa, dtype=float), J.shape)

    Jm23 = J ** (-2.0 / 3.0)
    # Outer and symmetrized-inverse products
    CiCi = np.einsum("...ij,...kl->...ijkl", Cinv, Cinv)
    CiI = np.einsum("...ij,kl->...ijkl", Cinv, I_d)
    ICi = np.einsum("ij,...kl->...ijkl", I_d, Cinv)
    CiSym = np.einsum("...ik,...jl->...ijkl", Cinv, Cinv) + np.einsum(
        "...il,...jk->...ijkl", Cinv, Cinv
    )

    def s(x):
        return x[..., None, None, None, None]

    tangent = (
        s(2.0 * mu / 9.0 * I1 * Jm23) * CiCi
        - s(2.0 * mu / 3.0 * Jm23) * (CiI + ICi)
        + s(mu / 3.0 * I1 * Jm23) * CiSym
        + s(kappa * J**2) * CiCi
        - s(0.5 * kappa * (J**2 - 1.0)) * CiSym
    )

    pairs = voigt_pairs(d)
    nv = len(pairs)
    out = np.empty(J.shape + (nv, nv))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            out[..., a, b] = tangent[..., i, j, k, l]
    return out


def material_tangent_fd(
    F: np.ndarray,
    mu: float,
    kappa: float,
    h: float = 1e-7,
) -> np.ndarray:
    """Central-difference tangent dS_voigt/dE_voigt for a single F (fallback/oracle)."""
    F = np.asarray(F, dtype=float)
    d = F.shape[-1]
    pairs = voigt_pairs(d)
    nv = len(pairs)
    C0 = F.T @ F
    out = np.empty((nv, nv))

    def s_of_C(C):
        # Reuse the closed form of S in terms of C via a synthetic F = C^(1/2).
        w, V = np.linalg.eigh(C)
        Fs = V @ np.diag(np.sqrt(w)) @ V.T
        return second_pk_stress(Fs, mu, kappa)

    for b, (k, l) in enumerate(pairs):
        dC = np.zeros((d, d))
        # E_voigt perturbation: normal comps give dC = 2 dE e_kk; shear
        # (engineering) gives dC_kl = dC_lk = dE.
        if k == l:
            dC[k, k] = 2.0 * h
        else:
            dC[k, l] = h
            dC[l, k] = h
        Sp = s_of_C(C0 + 0.5 * dC)
        Sm = s_of_C(C0 - 0.5 * dC)
        dS = (Sp - Sm) / h
        for a, (i, j) in enumerate(pairs):
            out[a, b] = dS[i, j]
    return out


def conductivity(
    k0: np.ndarray | float, b: float, c: float, T: np.ndarray | float
) -> np.ndarray:
    """k = k0 (1 + b T^c)."""
    return _temperature_scaling(k0, b, c, T)


def youngs_modulus(
    E0: np.ndarray | float, b: float, c: float, T: np.ndarray | float
) -> np.ndarray:
    """E = E0 (1 + b T^c)."""
    return _temperature_scaling(E0, b, c, T)


def _temperature_scaling(base, b, c, T):
    T = np.asarray(T, dtype=float)
    if c != int(c) and np.any(T < 0):
        raise ConfigurationError(
            "non-integer temperature exponent c requires T >= 0"
        )
    return np.asarray(base) * (1.0 + b * np.power(T, c))


def elasticity_tensor(E: np.ndarray | float, nu: float, dim: int) -> np.ndarray:
    """Isotropic stiffness in Voigt form (engineering shear), shape (..., nv, nv).

    Built from C_ijkl = E/(1+nu) (d_ik d_jl + d_il d_jk)
                       + E nu / ((1+nu)(1-2nu)) d_ij d_kl.
    2D is plane strain (the in-plane restriction of the 3D tensor).
    """
    if nu >= 0.5:
        raise ConfigurationError("nu -> 0.5 is incompressible; not supported")
    E = np.asarray(E, dtype=float)
    a = E / (1.0 + nu)
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    pairs = voigt_pairs(dim)
    nv = len(pairs)
    out = np.zeros(E.shape + (nv, nv))
    eye = np.eye(3)
    for p, (i, j) in enumerate(pairs):
        for q, (k, l) in enumerate(pairs):
            cijkl = (eye[i, k] * eye[j, l] + eye[i, l] * eye[j, k])
            out[..., p, q] = a * cijkl + lam * eye[i, j] * eye[k, l]
    return out


def thermal_strain(alpha: float, T: np.ndarray | float, T0: float, dim: int) -> np.ndarray:
    """Voigt thermal strain alpha (T - T0) for the identity selector."""
    T = np.asarray(T, dtype=float)
    s = identity_selector(dim)
    return alpha * (T - T0)[..., None] * s


def identity_selector(dim: int) -> np.ndarray:
    """Voigt vector of the identity (stress coupling selector)."""
    nv = len(voigt_pairs(dim))
    s = np.zeros(nv)
    s[:dim] = 1.0
    return s


def hooke_stress(
    E: np.ndarray | float,
    nu: float,
    eps_voigt: np.ndarray,
    eps_thermal_voigt: np.ndarray,
    dim: int,
) -> np.ndarray:
    """sigma = C : (eps - eps_t), all in Voigt form with engineering shear."""
    D = elasticity_tensor(E, nu, dim)
    return np.einsum("...ab,...b->...a", D, eps_voigt - eps_thermal_voigt)
