"""Fourier-based microstructure generation and phase-contrast remapping.

A raw field is built from a random constant plus cos*cos products over a
small set of integer frequencies (interpreted as multiples of 2*pi/L so the
fields are periodic over the box), then pushed through a sharp sigmoid to
produce two-phase patterns bounded by (phi_min, phi_max).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ninfem.material import PhaseField
from ninfem.mesh import ConfigurationError, StructuredMesh

SAMPLE_MAGIC = b"NINS1"


@dataclass(frozen=True)
class FourierSampleSpec:
    """Parameters for two-phase Fourier sample generation.

    ``frequencies`` lists the integer modes per axis; 0 stands for the
    constant term, and every all-positive combination contributes one
    cos*cos(*cos) product.  Coefficients are drawn uniformly from [-1, 1].
    """

    dim: int = 2
    frequencies: tuple[int, ...] = (0, 1, 2, 3)
    beta: float = 20.0
    phi_min: float = 0.1
    phi_max: float = 1.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigurationError("beta must be positive")
        if not (self.phi_max > self.phi_min > 0):
            raise ConfigurationError("need phi_max > phi_min > 0")

    @property
    def positive_frequencies(self) -> tuple[int, ...]:
        return tuple(f for f in self.frequencies if f > 0)

    @property
    def n_terms(self) -> int:
        return len(self.positive_frequencies) ** self.dim + 1


# Default generation presets for the 2D and 3D benchmark families.
PRESET_2D = FourierSampleSpec(
    dim=2, frequencies=(0, 1, 2, 3), beta=20.0, phi_min=0.1, phi_max=1.0
)
PRESETS_3D = [
    FourierSampleSpec(dim=3, frequencies=f, beta=10.0, phi_min=0.3, phi_max=1.0)
    for f in [(1, 2, 3), (1, 2), (1, 2, 4, 8), (2, 4, 6), (1, 3, 5, 7)]
]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class FourierCoefficients:
    """One drawn sample: constant term plus per-mode cos*cos amplitudes."""

    constant: float
    amplitudes: np.ndarray  # (n_f,)*dim


def draw_coefficients(
    spec: FourierSampleSpec, rng: np.random.Generator
) -> FourierCoefficients:
    n_f = len(spec.positive_frequencies)
    constant = rng.uniform(-1.0, 1.0)
    amplitudes = rng.uniform(-1.0, 1.0, size=(n_f,) * spec.dim)
    return FourierCoefficients(constant=constant, amplitudes=amplitudes)


def raw_fourier_field(
    spec: FourierSampleSpec,
    coefs: FourierCoefficients,
    coords: np.ndarray,
    extents: tuple[float, ...],
) -> np.ndarray:
    """Constant + sum of cos*cos products at the given coordinates."""
    freqs = spec.positive_frequencies
    phase = coefs.constant * np.ones(coords.shape[0])
    if not freqs:
        return phase
    # Angular arguments 2*pi*f*x/L per axis, so integer modes are L-periodic
    cosines = []
    for axis in range(spec.dim):
        args = (
            2.0
            * np.pi
            * np.array(freqs)[None, :]
            * coords[:, axis : axis + 1]
            / extents[axis]
        )
        cosines.append(np.cos(args))  # (n, n_f)

    if spec.dim == 2:
        phase = phase + np.einsum(
            "ni,nj,ij->n", cosines[0], cosines[1], coefs.amplitudes
        )
    else:
        phase = phase + np.einsum(
            "ni,nj,nk,ijk->n", cosines[0], cosines[1], cosines[2], coefs.amplitudes
        )
    return phase


def evaluate(
    spec: FourierSampleSpec, coefs: FourierCoefficients, mesh: StructuredMesh
) -> PhaseField:
    """Evaluate a drawn sample on any mesh (basis for super-resolution tests)."""
    raw = raw_fourier_field(spec, coefs, mesh.node_coords, mesh.extents)
    return PhaseField(values=project(spec, raw))


def project(spec: FourierSampleSpec, raw: np.ndarray) -> np.ndarray:
    """Sigmoidal projection of a raw field into (phi_min, phi_max)."""
    return (spec.phi_max - spec.phi_min) * _sigmoid(
        spec.beta * (raw - 0.5)
    ) + spec.phi_min


def generate(
    spec: FourierSampleSpec,
    mesh: StructuredMesh,
    rng: np.random.Generator | int,
) -> PhaseField:
    """One nodal phase field: sigmoid projection of the raw Fourier field."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if spec.dim != mesh.dim:
        raise ConfigurationError("spec and mesh dimensions differ")
    return evaluate(spec, draw_coefficients(spec, rng), mesh)


def generate_batch(
    spec: FourierSampleSpec, mesh: StructuredMesh, n: int, seed: int
) -> list[PhaseField]:
    rng = np.random.default_rng(seed)
    return [generate(spec, mesh, rng) for _ in range(n)]


def remap_phase_contrast(f: PhaseField, new_pc: float) -> PhaseField:
    """Affine remap so max/min equals new_pc with the maximum pinned at 1.0."""
    if new_pc <= 1.0:
        raise ConfigurationError("phase contrast must exceed 1")
    lo = float(f.values.min())
    hi = float(f.values.max())
    if hi <= lo:
        raise ConfigurationError("degenerate field: no contrast to remap")
    a = (1.0 - 1.0 / new_pc) / (hi - lo)
    b = 1.0 - a * hi
    return PhaseField(
        values=a * f.values + b,
        a_mu=f.a_mu,
        b_mu=f.b_mu,
        a_kappa=f.a_kappa,
        b_kappa=f.b_kappa,
    )


def generate_bc_samples(
    n: int, value_range: tuple[float, float], n_components: int, seed: int
) -> np.ndarray:
    """Uniform random Dirichlet boundary value tuples, shape (n, n_components)."""
    lo, hi = value_range
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ConfigurationError("BC range bounds must be finite")
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(n, n_components))


# ---------------------------------------------------------------------------
# Sample file format: magic | uint32 n_records | per record
# (uint32 id | uint32 n_values | float64 LE values); a sidecar .manifest.json
# echoes the spec.


def save_samples(
    path, samples: list[PhaseField], spec: FourierSampleSpec, seed: int
) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(SAMPLE_MAGIC)
        fh.write(struct.pack("<I", len(samples)))
        for i, s in enumerate(samples):
            fh.write(struct.pack("<II", i, len(s.values)))
            fh.write(s.values.astype("<f8").tobytes())
    manifest = {
        "n_samples": len(samples),
        "seed": seed,
        "spec": asdict(spec),
    }
    path.with_suffix(path.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n"
    )


def load_samples(path) -> list[PhaseField]:
    with open(path, "rb") as fh:
        if fh.read(5) != SAMPLE_MAGIC:
            raise ConfigurationError("not a sample file: bad magic")
        (n,) = struct.unpack("<I", fh.read(4))
        out = []
        for _ in range(n):
            _, nv = struct.unpack("<II", fh.read(8))
            vals = np.frombuffer(fh.read(8 * nv), dtype="<f8").copy()
            out.append(PhaseField(values=vals))
    return out
