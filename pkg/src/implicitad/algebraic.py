"""Differentiable solving of algebraic systems c(x, y) = 0.

A damped Newton solver produces y*(x); three routes then propagate
derivatives of the summarized solution map:

* ``ift_forward`` / ``ift_reverse``: contract the implicit-function
  derivative −(∂c/∂y)⁻¹ ∂c/∂x against a tangent or cotangent, using one
  sweep for each outer contraction and a dense solve in the middle.
* ``adjoint_reverse``: solves the adjoint system (∂c/∂y)ᵀλ = −α for the
  multipliers and contracts them against the x-partials of c; numerically
  identical to the reverse implicit-function route with identity summary.
* ``trace_reverse``: records every damped Newton update (the linear solve
  differentiated w.r.t. its residual argument via the adjoint rule for
  solves, per-iterate matrix factors and damping factors held as constants)
  on one tape spanning all iterations, then reverse-sweeps it.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import (
    ConvergenceError,
    ImplicitFunctionUndefinedError,
    StructureError,
)
from .tape import Scalar, Tape, forward_sweep, record_program, reverse_sweep

SINGULAR_MESSAGE = "constraint Jacobian singular: implicit function undefined here"


@dataclass
class ConstraintSystem:
    """Constraint program c: (x[I], y[J]) → z[J] plus an optional summary
    g: y[J] → k[K] (identity when None)."""

    constraint: callable
    input_dim: int
    output_dim: int
    summary: callable = None
    summary_dim: int = None

    def __post_init__(self):
        if self.summary_dim is None:
            self.summary_dim = self.output_dim
        if self.summary is None and self.summary_dim != self.output_dim:
            raise StructureError("identity summary requires summary_dim == output_dim")


@dataclass
class NewtonConfig:
    residual_tolerance: float = 1e-12
    max_iterations: int = 100
    damping: float = 1.0

    def __post_init__(self):
        if self.residual_tolerance <= 0:
            raise StructureError("residual_tolerance must be positive")
        if self.max_iterations < 1:
            raise StructureError("max_iterations must be at least 1")
        if not 0 < self.damping <= 1:
            raise StructureError("damping must lie in (0, 1]")


@dataclass
class ImplicitSolution:
    y_star: np.ndarray
    residual_norm: float
    iterations: int
    iterate_trace: list = None
    damping_trace: list = field(default=None, repr=False)


def _record_constraint(sys, x, y):
    tape = record_program(sys.constraint, x, y)
    if tape.n_outputs != sys.output_dim:
        raise StructureError(
            f"constraint returned {tape.n_outputs} outputs, expected {sys.output_dim}")
    return tape


def _eval_constraint(sys, x, y):
    """Constraint values on plain floats (no tape); +inf norm on blow-up."""
    try:
        out = sys.constraint([float(v) for v in x], [float(v) for v in y])
    except (OverflowError, ValueError, ZeroDivisionError):
        return None
    vals = np.atleast_1d(np.asarray(out, dtype=float))
    return vals if np.all(np.isfinite(vals)) else None


def constraint_jacobian_y(sys, tape):
    """∂c/∂y at the recorded point, one sweep per row or column."""
    j = sys.output_dim
    y_slice = tape.input_slices[1]
    cy = np.empty((j, j))
    if j <= sys.input_dim:
        e = np.zeros(j)
        for r in range(j):
            e[r] = 1.0
            cy[r, :] = reverse_sweep(tape, e)[y_slice]
            e[r] = 0.0
    else:
        seed = np.zeros(tape.n_inputs)
        for cidx in range(j):
            seed[y_slice.start + cidx] = 1.0
            cy[:, cidx] = forward_sweep(tape, seed)
            seed[y_slice.start + cidx] = 0.0
    return cy


def _factor_cy(sys, tape):
    factors = linalg.lu_factor(constraint_jacobian_y(sys, tape))
    if factors.singular:
        raise ImplicitFunctionUndefinedError(SINGULAR_MESSAGE)
    return factors


def newton_solve(sys, x, y0, cfg=None, keep_trace=False):
    """Damped Newton iteration on ‖c(x, ·)‖∞ from the starting point y0."""
    cfg = cfg or NewtonConfig()
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y0, dtype=float).ravel().copy()
    if x.shape[0] != sys.input_dim or y.shape[0] != sys.output_dim:
        raise StructureError("input/starting-point dimensions do not match the system")
    trace = [y.copy()] if keep_trace else None
    damps = [] if keep_trace else None
    tape = _record_constraint(sys, x, y)
    resid = tape.output_values()
    rnorm = float(np.max(np.abs(resid))) if resid.size else 0.0
    iterations = 0
    while rnorm > cfg.residual_tolerance:
        if iterations >= cfg.max_iterations:
            raise ConvergenceError("Newton iteration did not converge",
                                   residual_norm=rnorm, iterations=iterations)
        factors = _factor_cy(sys, tape)
        step = linalg.lu_solve(factors, resid)
        scale = cfg.damping
        while True:
            y_try = y - scale * step
            r_try = _eval_constraint(sys, x, y_try)
            if r_try is not None:
                rn_try = float(np.max(np.abs(r_try))) if r_try.size else 0.0
                if rn_try < rnorm:
                    break
            scale *= 0.5
            if scale < 1e-12:
                raise ConvergenceError("Newton line search stalled",
                                       residual_norm=rnorm, iterations=iterations)
        y = y_try
        iterations += 1
        if keep_trace:
            trace.append(y.copy())
            damps.append(scale)
        tape = _record_constraint(sys, x, y)
        resid = tape.output_values()
        rnorm = float(np.max(np.abs(resid)))
    return ImplicitSolution(y_star=y, residual_norm=rnorm, iterations=iterations,
                            iterate_trace=trace, damping_trace=damps)


def _record_summary(sys, y_star):
    tape = record_program(sys.summary, y_star)
    if tape.n_outputs != sys.summary_dim:
        raise StructureError(
            f"summary returned {tape.n_outputs} outputs, expected {sys.summary_dim}")
    return tape


def ift_forward(sys, x, y_star, v):
    """Tangent of the summarized solution map: J_{g∘f}·v.

    One forward sweep for (∂c/∂x)·v, a dense solve against ∂c/∂y, and one
    forward sweep through the summary.
    """
    x = np.asarray(x, dtype=float).ravel()
    y_star = np.asarray(y_star, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != sys.input_dim:
        raise StructureError("tangent length must equal the input dimension")
    tape_c = _record_constraint(sys, x, y_star)
    u = forward_sweep(tape_c, np.concatenate([v, np.zeros(sys.output_dim)]))
    factors = _factor_cy(sys, tape_c)
    t = linalg.lu_solve(factors, u)
    if sys.summary is None:
        return -t
    return -forward_sweep(_record_summary(sys, y_star), t)


def ift_reverse(sys, x, y_star, alpha):
    """Cotangent pull-back of the summarized solution map: J_{g∘f}ᵀ·α.

    One reverse sweep through the summary, a transposed dense solve against
    ∂c/∂y, and one reverse sweep through the constraint seeded with the
    solve result.
    """
    x = np.asarray(x, dtype=float).ravel()
    y_star = np.asarray(y_star, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != sys.summary_dim:
        raise StructureError("cotangent length must equal the summary dimension")
    if sys.summary is None:
        beta = alpha
    else:
        beta = reverse_sweep(_record_summary(sys, y_star), alpha)
    tape_c = _record_constraint(sys, x, y_star)
    factors = _factor_cy(sys, tape_c)
    gamma = linalg.lu_solve(factors, beta, transposed=True)
    bars = reverse_sweep(tape_c, gamma)
    return -bars[tape_c.input_slices[0]]


def adjoint_reverse(sys, x, y_star, alpha, return_multiplier=False):
    """Reverse derivative via the adjoint system (∂c/∂y)ᵀλ = −α.

    Identity summary only; the contraction (∂c/∂x)ᵀλ is one reverse sweep
    seeded with the multipliers.
    """
    if sys.summary is not None:
        raise StructureError("the adjoint route requires the identity summary")
    x = np.asarray(x, dtype=float).ravel()
    y_star = np.asarray(y_star, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != sys.output_dim:
        raise StructureError("cotangent length must equal the output dimension")
    tape_c = _record_constraint(sys, x, y_star)
    factors = _factor_cy(sys, tape_c)
    lam = -linalg.lu_solve(factors, alpha, transposed=True)
    grad = reverse_sweep(tape_c, lam)[tape_c.input_slices[0]]
    if return_multiplier:
        return grad, lam
    return grad


@dataclass
class TraceResult:
    gradient: np.ndarray
    tape_nodes: int
    iterations: int


def _linear_combination(scalars, weights):
    """Σ_k weights[k]·scalars[k] recorded with arity-1 scaled products."""
    acc = None
    for s, w in zip(scalars, weights):
        term = s * float(w)
        acc = term if acc is None else acc + term
    return acc


def trace_reverse(sys, x, y0, cfg, alpha):
    """Reverse derivative through the recorded Newton trace.

    Replays the damped updates actually taken on a single tape; each linear
    solve enters as the residual contracted against the frozen inverse
    matrix rows, so the reverse sweep applies the adjoint solve rule while
    per-iterate factors and damping scales stay constant data.
    """
    cfg = cfg or NewtonConfig()
    x = np.asarray(x, dtype=float).ravel()
    y0 = np.asarray(y0, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != sys.summary_dim:
        raise StructureError("cotangent length must equal the summary dimension")
    sol = newton_solve(sys, x, y0, cfg, keep_trace=True)
    j = sys.output_dim
    big = Tape()
    xs = big.add_inputs(x)
    ys = [big.constant(v) for v in y0]
    eye = np.eye(j)
    for n in range(sol.iterations):
        y_n = sol.iterate_trace[n]
        scale = sol.damping_trace[n]
        c_scalars = sys.constraint(xs, ys)
        if isinstance(c_scalars, Scalar):
            c_scalars = [c_scalars]
        small = _record_constraint(sys, x, y_n)
        factors = _factor_cy(sys, small)
        inv_rows = np.column_stack(
            [linalg.lu_solve(factors, eye[k]) for k in range(j)])
        ys = [ys[r] - scale * _linear_combination(c_scalars, inv_rows[r])
              for r in range(j)]
    out = ys if sys.summary is None else sys.summary(ys)
    big.mark_outputs(out)
    grad = reverse_sweep(big, alpha)
    return TraceResult(gradient=grad, tape_nodes=len(big), iterations=sol.iterations)
