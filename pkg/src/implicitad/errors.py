"""Exception and warning types shared across the package."""


class ImplicitAdError(Exception):
    """Base class for all errors raised by this package."""


class StructureError(ImplicitAdError, ValueError):
    """Malformed inputs: bad operand ids, dimension mismatches, non-square
    matrices, non-scalar programs where a scalar is required."""


class NonFiniteError(ImplicitAdError, ArithmeticError):
    """An elementary operation produced NaN/Inf; carries the tape node index."""

    def __init__(self, node_index, detail="elementary operation produced a non-finite value"):
        self.node_index = node_index
        super().__init__(f"{detail} at tape node {node_index}")


class SingularSystemError(ImplicitAdError, ArithmeticError):
    """A linear system's matrix is numerically singular."""


class ImplicitFunctionUndefinedError(SingularSystemError):
    """The constraint Jacobian with respect to the outputs is singular, so no
    implicit function exists at this point."""


class ConvergenceError(ImplicitAdError, RuntimeError):
    """An iterative solver failed to reach its tolerance; carries the last
    residual norm."""

    def __init__(self, message, residual_norm=None, iterations=None):
        self.residual_norm = residual_norm
        self.iterations = iterations
        if residual_norm is not None:
            message = f"{message} (last residual {residual_norm:.3e} after {iterations} iterations)"
        super().__init__(message)


class DivergedTrajectoryError(ImplicitAdError, ArithmeticError):
    """A simulated trajectory produced a non-finite state; carries the step."""

    def __init__(self, step, message="trajectory diverged"):
        self.step = step
        super().__init__(f"{message} at step {step}")


class IntegrationError(ImplicitAdError, RuntimeError):
    """Time integration failed (step-size underflow or step budget exhausted)."""


class InconsistentInitializationError(ConvergenceError):
    """The algebraic states of a DAE could not be solved at t=0."""


class UnknownProblemError(ImplicitAdError, KeyError):
    """Registry lookup failed; message lists the available problem names."""


class IndefiniteHessianWarning(UserWarning):
    """A stationary point was differentiated whose Hessian is not negative
    definite: it may be a minimum or saddle rather than a maximum."""
