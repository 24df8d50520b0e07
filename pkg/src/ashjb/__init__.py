"""Single-contract adverse-selection toolkit.

Core pipeline: model (quadratic two-type cost family) -> credible band ->
boundary data -> interior HJB field -> principal's values (conditional /
unconditional / screening) -> Monte Carlo validation. The `cli` module
wires the stages into subcommands that emit deterministic CSV/JSON.
"""

from .band import CredibleBand, build as build_band, extremal_gaps
from .errors import (
    CflError,
    CheckError,
    ConfigError,
    DegenerateModelError,
    DomainError,
    SolverError,
)
from .model import (
    ModelSpec,
    StructuralConstants,
    cost,
    dominated_spec,
    gap_function,
    hamiltonian,
    nondominated_spec,
    optimal_action,
    saturation_threshold,
    structural_constants,
)

__version__ = "0.1.0"

__all__ = [
    "CredibleBand",
    "ModelSpec",
    "StructuralConstants",
    "build_band",
    "extremal_gaps",
    "cost",
    "dominated_spec",
    "nondominated_spec",
    "gap_function",
    "hamiltonian",
    "optimal_action",
    "saturation_threshold",
    "structural_constants",
    "ConfigError",
    "DomainError",
    "DegenerateModelError",
    "SolverError",
    "CflError",
    "CheckError",
    "__version__",
]
