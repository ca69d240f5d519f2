"""Differentiable simulation of discrete dynamical systems.

States follow y_{i+1} = y_i + delta(y_i, x, i) from y_0 = initial(x); the
gradient of the final state is computed two ways that must agree:

* ``reverse_ift``: backward elimination of the triangular constraint
  system: gamma_I = alpha, gamma_i = (I + ∂delta_i/∂y_i)ᵀ gamma_{i+1}.
* ``reverse_adjoint``: backward multiplier recursion lambda_I = 0,
  lambda_i = lambda_{i+1} − (∂delta_i/∂y_i)ᵀ(alpha − lambda_{i+1}), whose
  states bridge to the elimination route via gamma_i = alpha − lambda_i.

Per-step Jacobians are never materialized: one reverse sweep through the
recorded step program yields both the state and the input contractions, so
either pass costs O(steps) sweeps regardless of dimensions.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivergedTrajectoryError, StructureError
from .tape import record_program, reverse_sweep


@dataclass
class DifferenceSystem:
    """delta: (y[N], x[I], i) → increment[N]; initial: x[I] → y_0[N]."""

    delta: callable
    initial: callable
    steps: int
    state_dim: int
    input_dim: int

    def __post_init__(self):
        if self.steps < 1:
            raise StructureError("at least one step is required")


@dataclass
class DiscreteTrajectory:
    states: list

    def __len__(self):
        return len(self.states)


def _eval_vector(fn_out, n, what):
    vals = np.atleast_1d(np.asarray(fn_out, dtype=float))
    if vals.shape != (n,):
        raise StructureError(f"{what} returned shape {vals.shape}, expected ({n},)")
    return vals


def simulate(sys, x):
    """Run the recursion on plain floats; summary output is the final state."""
    xf = [float(v) for v in np.asarray(x, dtype=float).ravel()]
    if len(xf) != sys.input_dim:
        raise StructureError("input length does not match the system")
    y = _eval_vector(sys.initial(xf), sys.state_dim, "initial")
    states = [y]
    for i in range(sys.steps):
        inc = _eval_vector(sys.delta([float(v) for v in y], xf, i),
                           sys.state_dim, "delta")
        y = states[i] + inc
        if not np.all(np.isfinite(y)):
            raise DivergedTrajectoryError(i)
        states.append(y)
    return DiscreteTrajectory(states=states)


def _step_vjp(sys, y, x, i, w):
    """One reverse sweep through delta at (y, x, i) seeded with w.

    Returns ((∂delta/∂y)ᵀw, (∂delta/∂x)ᵀw).
    """
    tape = record_program(lambda ys, xs: sys.delta(ys, xs, i), y, x)
    if tape.n_outputs != sys.state_dim:
        raise StructureError("delta output dimension must equal the state dimension")
    bars = reverse_sweep(tape, w)
    return bars[tape.input_slices[0]], bars[tape.input_slices[1]]


def _initial_vjp(sys, x, w):
    tape = record_program(sys.initial, x)
    if tape.n_outputs != sys.state_dim:
        raise StructureError("initial output dimension must equal the state dimension")
    return reverse_sweep(tape, w)


def reverse_ift(sys, x, trajectory, alpha, keep_multipliers=False):
    """Gradient of the final state by backward elimination.

    With ``keep_multipliers`` also returns the (steps, N) array whose row
    i-1 holds gamma_i.
    """
    x = np.asarray(x, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != sys.state_dim:
        raise StructureError("cotangent length must equal the state dimension")
    states = trajectory.states
    if len(states) != sys.steps + 1:
        raise StructureError("trajectory length does not match the system's step count")
    gamma = alpha.copy()
    grad = np.zeros(sys.input_dim)
    gammas = np.empty((sys.steps, sys.state_dim)) if keep_multipliers else None
    for i in range(sys.steps, 0, -1):
        if keep_multipliers:
            gammas[i - 1] = gamma
        ybar, xbar = _step_vjp(sys, states[i - 1], x, i - 1, gamma)
        grad += xbar
        gamma = gamma + ybar
    grad += _initial_vjp(sys, x, gamma)
    if keep_multipliers:
        return grad, gammas
    return grad


def reverse_adjoint(sys, x, trajectory, alpha, keep_multipliers=False):
    """Gradient of the final state by the backward multiplier recursion.

    With ``keep_multipliers`` also returns the (steps, N) array whose row
    i-1 holds lambda_i (the last row is the zero terminal condition).
    """
    x = np.asarray(x, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != sys.state_dim:
        raise StructureError("cotangent length must equal the state dimension")
    states = trajectory.states
    if len(states) != sys.steps + 1:
        raise StructureError("trajectory length does not match the system's step count")
    lam = np.zeros(sys.state_dim)
    grad = np.zeros(sys.input_dim)
    lambdas = np.empty((sys.steps, sys.state_dim)) if keep_multipliers else None
    if keep_multipliers:
        lambdas[sys.steps - 1] = lam
    for i in range(sys.steps - 1, 0, -1):
        w = alpha - lam
        ybar, xbar = _step_vjp(sys, states[i], x, i, w)
        grad += xbar
        lam = lam - ybar
        if keep_multipliers:
            lambdas[i - 1] = lam
    w = alpha - lam
    ybar, xbar = _step_vjp(sys, states[0], x, 0, w)
    grad += xbar
    grad += _initial_vjp(sys, x, w + ybar)
    if keep_multipliers:
        return grad, lambdas
    return grad
