"""Solvers and verifiers for Schrodinger equations with measure data.

Three pipelines compute the same solutions through independent machinery:
a deterministic kernel solve (``fredholm``), a quadratic-energy
minimization (``variational``), and path simulation (``stochastic``).
The ``verify`` module cross-checks them through the identity and
inequality battery, and ``cli`` exposes everything as subcommands.
"""

from .fredholm import SolveReport, resolvent_identity_residual, solve_duality
from .geometry import Domain, Grid, GridFunction, build_grid
from .green import GreenKernel, apply_R, evaluate_R_at
from .measures import (
    Classification,
    Curve,
    MeasureSpec,
    PotentialMeasure,
    classify_singular_set,
    decompose,
    reduce_measure,
    total_variation,
    truncate,
)
from .stochastic import (
    FunctionSpec,
    MCEstimate,
    PathConfig,
    estimate_batch,
    estimate_green,
)
from .variational import (
    EnergyReport,
    QuadraticForm,
    assemble_form,
    minimize,
    mollify_and_solve,
)
from .verify import RunReport, Scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "Classification",
    "Curve",
    "Domain",
    "EnergyReport",
    "FunctionSpec",
    "GreenKernel",
    "Grid",
    "GridFunction",
    "MCEstimate",
    "MeasureSpec",
    "PathConfig",
    "PotentialMeasure",
    "QuadraticForm",
    "RunReport",
    "Scenario",
    "SolveReport",
    "apply_R",
    "assemble_form",
    "build_grid",
    "classify_singular_set",
    "decompose",
    "estimate_batch",
    "estimate_green",
    "evaluate_R_at",
    "minimize",
    "mollify_and_solve",
    "reduce_measure",
    "resolvent_identity_residual",
    "run_scenario",
    "solve_duality",
    "total_variation",
    "truncate",
    "__version__",
]
