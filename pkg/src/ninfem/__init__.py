"""Nonlinear finite elements with neural-field warm starts.

The library couples a structured-grid nonlinear FEM solver (compressible
neo-Hookean hyperelasticity and coupled thermomechanics) with a
shift-modulated sinusoidal neural field trained directly on the discrete
FEM residuals.  The trained field provides initial guesses that let the
Newton solver converge in a single load step.
"""

from ninfem.mesh import StructuredMesh, build_box_mesh, gauss_rule
from ninfem.material import PhaseField, ThermoMechParams
from ninfem.newton import NewtonConfig, NewtonReport, solve, solve_thermomech
from ninfem.neural_field import SirenConfig, init_params
from ninfem.ifol import TrainConfig, train, encode, infer
from ninfem.nin import nin_solve, compare_metrics

__all__ = [
    "StructuredMesh",
    "build_box_mesh",
    "gauss_rule",
    "PhaseField",
    "ThermoMechParams",
    "NewtonConfig",
    "NewtonReport",
    "solve",
    "solve_thermomech",
    "SirenConfig",
    "init_params",
    "TrainConfig",
    "train",
    "encode",
    "infer",
    "nin_solve",
    "compare_metrics",
]

__version__ = "0.1.0"
