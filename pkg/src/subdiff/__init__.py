"""Time-fractional subdiffusion: forward solver and reaction-coefficient recovery."""

from importlib.metadata import PackageNotFoundError, version

from .errors import (
    AdmissibilityError,
    AliasingError,
    ConfigError,
    ConvergenceError,
    DomainError,
    GridMismatchError,
    ResourceError,
    SingularSystemError,
    SubdiffError,
)
from .forward import (
    AssumptionReport,
    FieldSolution,
    ProblemSpec,
    decompose_data,
    residual_check,
    solve_forward,
    validate_assumption1,
)
from .frackernel import TimeGrid, build_weights, caputo_l1, convolve
from .inverse import (
    ConditionReport,
    InverseResult,
    InverseSpec,
    apply_L,
    compute_q0,
    estimate_CT,
    recover_q,
    synthesize_data,
    validate_theorem43,
)
from .mlf import MlfParams, eval_mlf, kernel, kernel_mass, relaxation
from .mode_solver import ModeProblem, ModeSolution, solve_mode
from .oracle import FdWorkspace, solve_fd
from .profiles import (
    Profile,
    affine,
    constant,
    from_callable,
    named_profile,
    power,
    sinusoidal_offset,
)
from .spectral import (
    ModeSet,
    SpaceGrid,
    eigenvalue,
    eigenvalues,
    flux_at_left,
    sine_coefficients,
    third_trace_at_left,
)

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"
