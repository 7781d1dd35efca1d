"""neutralflow: a numerical laboratory for a hyperbolic flow with one neutral orbit.

Submodules
----------
model           vector-field parameters and closed-form derived constants
local_dynamics  semi-analytic neutral-passage solver + Runge-Kutta oracle
flow_sim        hybrid section map, induced returns, SRB sampling, Birkhoff sums
stats           tail estimation, stable laws, normalizers, limit experiments
transfer        Ulam discretization, twisted operators, eigen-curves, pressure
config          flat key-value experiment configs and shipped presets
cli             experiment runner
"""

__version__ = "0.1.0"

from .model import (
    DerivedConstants,
    FlowParams,
    HomogeneousSpec,
    InfiniteMeasureError,
    ParameterError,
    PotentialSpec,
    derive_constants,
    first_integral,
    homogeneous_eval,
    vector_field,
)

__all__ = [
    "__version__",
    "DerivedConstants",
    "FlowParams",
    "HomogeneousSpec",
    "InfiniteMeasureError",
    "ParameterError",
    "PotentialSpec",
    "derive_constants",
    "first_integral",
    "homogeneous_eval",
    "vector_field",
]
