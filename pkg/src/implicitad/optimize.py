"""Differentiation of argmax-defined implicit functions.

A maximizer y*(x) is pinned by the stationarity system ∂F/∂y = 0 (or, with
equality constraints, by the stationarity of the multiplier-augmented
objective over the stacked unknowns (y, mu)).  Differentiating that system
needs second derivatives of the objective, which come from forward-over-
reverse sweeps: the stationarity Hessian is assembled column by column from
Hessian-vector products, and the final input-block contraction is a single
extra Hessian-vector product, so the cross-derivative block is never
materialized.

Maximization convention throughout; minimize by negating the objective.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import (
    ConvergenceError,
    ImplicitFunctionUndefinedError,
    IndefiniteHessianWarning,
    SingularSystemError,
    StructureError,
)
from .tape import jacobian, record_program, reverse_sweep, reverse_sweep_dual

NEGATIVE_DEFINITE = "negative_definite"
INDEFINITE = "indefinite"
UNKNOWN = "unknown"


@dataclass
class ObjectiveProblem:
    """Twice-differentiable objective F: (x[I], y[J]) → scalar."""

    objective: callable
    input_dim: int
    output_dim: int
    convexity_region_hint: np.ndarray = None


@dataclass
class ConstrainedProblem:
    """Objective plus equality constraints k: (x[I], y[J]) → r[K], K ≤ J."""

    objective: callable
    equality_constraints: callable
    input_dim: int
    output_dim: int
    constraint_dim: int
    convexity_region_hint: np.ndarray = None

    def __post_init__(self):
        if self.constraint_dim > self.output_dim:
            raise StructureError("more equality constraints than unknowns")


@dataclass
class OptimumSolution:
    y_star: np.ndarray
    multipliers: np.ndarray
    gradient_norm: float
    hessian_definiteness: str
    iterations: int
    warning: str = None


def _augmented_objective(problem):
    """Program for F, or F + mu·k over the stacked unknowns (y, mu)."""
    j = problem.output_dim
    constrained = isinstance(problem, ConstrainedProblem)

    def phi(xs, zs):
        ys = zs[:j]
        val = problem.objective(xs, ys)
        if constrained:
            ks = problem.equality_constraints(xs, ys)
            for mu, k in zip(zs[j:], ks):
                val = val + mu * k
        return val

    return phi, (j + problem.constraint_dim) if constrained else j


def _grad_and_hessian(phi, x_vals, z):
    """Gradient and Hessian of phi(x, ·) at z, with x held as plain data."""
    n = z.shape[0]
    xf = [float(v) for v in x_vals]
    hess = np.empty((n, n))
    grad = None
    seed = np.zeros(n)
    for col in range(n):
        seed[col] = 1.0
        tape = record_program(lambda zs: phi(xf, zs), z, tangents=(seed,))
        if tape.n_outputs != 1:
            raise StructureError("objective must produce a single scalar")
        g, hv = reverse_sweep_dual(tape, (1.0,))
        hess[:, col] = hv
        if grad is None:
            grad = g
        seed[col] = 0.0
    return grad, hess


def _grad_only(phi, x_vals, z):
    xf = [float(v) for v in x_vals]
    tape = record_program(lambda zs: phi(xf, zs), z)
    return reverse_sweep(tape, (1.0,))


def _classify(hess):
    if hess.shape[0] == 0:
        return NEGATIVE_DEFINITE
    eigs = np.linalg.eigvalsh(0.5 * (hess + hess.T))
    tol = 1e-9 * max(1.0, float(np.max(np.abs(eigs))))
    if np.all(eigs < -tol):
        return NEGATIVE_DEFINITE
    if np.any(eigs > tol):
        return INDEFINITE
    return UNKNOWN


def _definiteness(problem, x, z, hess):
    """Definiteness of the y-block Hessian, projected onto the constraint
    tangent space for constrained problems."""
    j = problem.output_dim
    hyy = hess[:j, :j]
    if not isinstance(problem, ConstrainedProblem) or problem.constraint_dim == 0:
        return _classify(hyy)
    tape_k = record_program(
        lambda xs, ys: problem.equality_constraints(xs, ys), x, z[:j])
    kj = jacobian(tape_k)[:, tape_k.input_slices[1]]
    _, sv, vt = np.linalg.svd(kj)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0] if sv.size else 1.0)))
    basis = vt[rank:].T
    if basis.shape[1] == 0:
        return NEGATIVE_DEFINITE
    return _classify(basis.T @ hyy @ basis)


def _solve_stationarity(problem, x, z0, cfg):
    from .algebraic import NewtonConfig
    cfg = cfg or NewtonConfig()
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z0, dtype=float).ravel().copy()
    phi, dim = _augmented_objective(problem)
    if z.shape[0] != dim:
        raise StructureError(f"starting point has length {z.shape[0]}, expected {dim}")
    grad, hess = _grad_and_hessian(phi, x, z)
    gnorm = float(np.max(np.abs(grad)))
    iterations = 0
    while gnorm > cfg.residual_tolerance:
        if iterations >= cfg.max_iterations:
            raise ConvergenceError("stationarity iteration did not converge",
                                   residual_norm=gnorm, iterations=iterations)
        factors = linalg.lu_factor(hess)
        if factors.singular:
            raise SingularSystemError("stationarity Hessian is singular")
        step = linalg.lu_solve(factors, grad)
        scale = cfg.damping
        while True:
            z_try = z - scale * step
            g_try = _grad_only(phi, x, z_try)
            gn_try = float(np.max(np.abs(g_try)))
            if np.isfinite(gn_try) and gn_try < gnorm:
                break
            scale *= 0.5
            if scale < 1e-12:
                raise ConvergenceError("stationarity line search stalled",
                                       residual_norm=gnorm, iterations=iterations)
        z = z_try
        iterations += 1
        grad, hess = _grad_and_hessian(phi, x, z)
        gnorm = float(np.max(np.abs(grad)))
    definiteness = _definiteness(problem, x, z, hess)
    warning = None
    if definiteness != NEGATIVE_DEFINITE:
        warning = (f"stationary point has a {definiteness} Hessian and may not "
                   "be a maximum")
        warnings.warn(warning, IndefiniteHessianWarning, stacklevel=3)
    j = problem.output_dim
    multipliers = z[j:].copy() if isinstance(problem, ConstrainedProblem) else None
    return OptimumSolution(y_star=z[:j].copy(), multipliers=multipliers,
                           gradient_norm=gnorm, hessian_definiteness=definiteness,
                           iterations=iterations, warning=warning)


def maximize(problem, x, y0, cfg=None):
    """Newton search for a stationary point of F(x, ·) from y0."""
    return _solve_stationarity(problem, x, y0, cfg)


def maximize_constrained(problem, x, y0, mu0=None, cfg=None):
    """Newton search for a stationary point of the augmented objective over
    the stacked unknowns (y, mu); multipliers start at zero by default."""
    y0 = np.asarray(y0, dtype=float).ravel()
    if mu0 is None:
        mu0 = np.zeros(problem.constraint_dim)
    z0 = np.concatenate([y0, np.asarray(mu0, dtype=float).ravel()])
    return _solve_stationarity(problem, x, z0, cfg)


def _reverse_stationarity(problem, x, solution, alpha):
    x = np.asarray(x, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    j = problem.output_dim
    if alpha.shape[0] != j:
        raise StructureError("cotangent length must equal the solution dimension")
    phi, dim = _augmented_objective(problem)
    if isinstance(problem, ConstrainedProblem):
        if solution.multipliers is None:
            raise StructureError("constrained solutions must carry multipliers")
        z = np.concatenate([solution.y_star, solution.multipliers])
    else:
        z = np.asarray(solution.y_star, dtype=float).ravel()
    beta = np.concatenate([alpha, np.zeros(dim - j)])

    def joint_hvp(seed):
        tape = record_program(phi, x, z,
                              tangents=(np.zeros(x.shape[0]), seed))
        if tape.n_outputs != 1:
            raise StructureError("objective must produce a single scalar")
        _, hv = reverse_sweep_dual(tape, (1.0,))
        return hv[tape.input_slices[0]], hv[tape.input_slices[1]]

    hzz = np.empty((dim, dim))
    seed = np.zeros(dim)
    for col in range(dim):
        seed[col] = 1.0
        _, hz = joint_hvp(seed)
        hzz[:, col] = hz
        seed[col] = 0.0
    factors = linalg.lu_factor(hzz)
    if factors.singular:
        raise ImplicitFunctionUndefinedError(
            "stationarity Hessian singular: implicit function undefined here")
    gamma = linalg.lu_solve(factors, beta, transposed=True)
    hx, _ = joint_hvp(gamma)
    return -hx


def reverse_unconstrained(problem, x, solution, alpha):
    """Jᵀ·α for the unconstrained maximizer map x ↦ y*(x)."""
    return _reverse_stationarity(problem, x, solution, alpha)


def reverse_constrained(problem, x, solution, alpha):
    """Jᵀ·α for the constrained maximizer map; α addresses only the y block,
    multiplier cotangents enter as zeros."""
    return _reverse_stationarity(problem, x, solution, alpha)
