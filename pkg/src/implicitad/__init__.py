"""Automatic differentiation of implicit functions.

Tape-based forward/reverse AD over scalar programs, plus derivative
propagation through implicitly defined maps: algebraic systems, difference
equations, optimization problems, ODEs and semi-explicit index-1 DAEs.
"""

from . import backend
from .algebraic import (
    ConstraintSystem,
    ImplicitSolution,
    NewtonConfig,
    adjoint_reverse,
    ift_forward,
    ift_reverse,
    newton_solve,
    trace_reverse,
)
from .dae import (
    DaeSystem,
    DaeTrajectory,
    consistent_initialize,
    dae_adjoint_reverse,
    dae_integrate,
    reduce_to_ode,
)
from .difference import DifferenceSystem, DiscreteTrajectory, reverse_adjoint, reverse_ift, simulate
from .errors import (
    ConvergenceError,
    DivergedTrajectoryError,
    ImplicitAdError,
    ImplicitFunctionUndefinedError,
    InconsistentInitializationError,
    IndefiniteHessianWarning,
    IntegrationError,
    NonFiniteError,
    SingularSystemError,
    StructureError,
    UnknownProblemError,
)
from .linalg import LuFactors, block_bidiagonal_solve, lu_factor, lu_solve
from .ode import (
    DenseTrajectory,
    IntegratorConfig,
    OdeSystem,
    forward_sensitivity,
    integrate,
    trace_reverse_ode,
)
from .ode import adjoint_reverse as ode_adjoint_reverse
from .optimize import (
    ConstrainedProblem,
    ObjectiveProblem,
    OptimumSolution,
    maximize,
    maximize_constrained,
    reverse_constrained,
    reverse_unconstrained,
)
from .tape import (
    OpKind,
    Scalar,
    Tape,
    TapeNode,
    cos,
    exp,
    forward_sweep,
    gradient_and_hessian,
    hessian_matrix,
    hessian_vector,
    jacobian,
    log,
    record,
    record_program,
    reverse_sweep,
    reverse_sweep_dual,
    sin,
    sweep_counts,
)

__version__ = "0.1.0"
