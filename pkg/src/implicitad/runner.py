"""Uniform execution of derivative methods over registry problems.

Bridges the per-kind module APIs behind one vocabulary (solve the problem,
report its summarized value, produce the full Jacobian of the summarized
map by the chosen method) for the CLI and the verification suites.

Reported Jacobians are K×I matrices of the summarized solution map;
reverse methods fill them row-by-row with unit cotangents, forward methods
column-by-column with unit tangents.
"""

from dataclasses import dataclass

import numpy as np

from . import algebraic, dae, difference, fd, ode, optimize, registry
from .errors import StructureError

METHOD_AVAILABILITY = {
    registry.ALGEBRAIC: ("adjoint", "fd", "ift-forward", "ift-reverse", "trace"),
    registry.DIFFERENCE: ("adjoint", "fd", "ift-reverse"),
    registry.OPTIMIZATION: ("fd", "ift-reverse"),
    registry.CONSTRAINED: ("fd", "ift-reverse"),
    registry.ODE: ("adjoint", "fd", "forward-sens", "trace"),
    registry.DAE: ("adjoint", "fd"),
}

FD_THRESHOLDS = {
    registry.ALGEBRAIC: 1e-5,
    registry.DIFFERENCE: 1e-5,
    registry.OPTIMIZATION: 1e-5,
    registry.CONSTRAINED: 1e-5,
    registry.ODE: 1e-4,
    registry.DAE: 1e-4,
}


@dataclass
class MethodRun:
    value: np.ndarray
    jacobian: np.ndarray
    iterations: int


def methods_for(problem):
    return METHOD_AVAILABILITY[problem.kind]


def fd_threshold(problem):
    return FD_THRESHOLDS[problem.kind]


def _trace_config(problem):
    cfg = problem.integrator
    if cfg is not None and cfg.method == ode.RK4_FIXED:
        return cfg
    return ode.IntegratorConfig(method=ode.RK4_FIXED,
                                step_size=problem.system.horizon / 1000.0)


def _solve_algebraic(problem, x):
    return algebraic.newton_solve(problem.system, x, problem.starting_point(x))


def _solve_optimum(problem, x):
    if problem.kind == registry.CONSTRAINED:
        return optimize.maximize_constrained(problem.system, x,
                                             problem.starting_point(x),
                                             problem.default_mu0)
    return optimize.maximize(problem.system, x, problem.starting_point(x))


def value_map(problem):
    """Callable x -> summarized solution value, solving from scratch."""
    kind = problem.kind
    if kind == registry.ALGEBRAIC:
        return lambda x: _solve_algebraic(problem, x).y_star
    if kind == registry.DIFFERENCE:
        return lambda x: difference.simulate(problem.system, x).states[-1]
    if kind in (registry.OPTIMIZATION, registry.CONSTRAINED):
        return lambda x: _solve_optimum(problem, x).y_star
    if kind == registry.ODE:
        return lambda x: ode.integrate(problem.system, x, problem.integrator).final_state
    if kind == registry.DAE:
        return lambda x: dae.dae_integrate(problem.system, x, problem.integrator).final_state
    raise StructureError(f"unknown problem kind {kind!r}")


def fd_jacobian(problem, x, base_step=None):
    """Finite-difference Jacobian of the summarized map, fresh solves at
    every perturbed point."""
    return fd.central_jacobian(value_map(problem), x, base_step)


def _rows_from(fn, k, i):
    jac = np.empty((k, i))
    e = np.zeros(k)
    for r in range(k):
        e[r] = 1.0
        jac[r] = fn(e)
        e[r] = 0.0
    return jac


def run_method(problem, method, x, fd_step=None):
    """Solve the problem at x and produce the method's K×I Jacobian."""
    if method not in methods_for(problem):
        raise StructureError(
            f"method {method!r} does not apply to kind {problem.kind!r}")
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != problem.input_dim:
        raise StructureError(
            f"x has length {x.shape[0]}, expected {problem.input_dim}")
    k = problem.summary_dim
    kind = problem.kind
    sys = problem.system

    if method == "fd":
        value = value_map(problem)(x)
        jac = fd_jacobian(problem, x, fd_step)
        return MethodRun(value=value, jacobian=jac, iterations=0)

    if kind == registry.ALGEBRAIC:
        sol = _solve_algebraic(problem, x)
        if method == "ift-forward":
            jac = np.empty((k, problem.input_dim))
            e = np.zeros(problem.input_dim)
            for c in range(problem.input_dim):
                e[c] = 1.0
                jac[:, c] = algebraic.ift_forward(sys, x, sol.y_star, e)
                e[c] = 0.0
        elif method == "ift-reverse":
            jac = _rows_from(lambda a: algebraic.ift_reverse(sys, x, sol.y_star, a),
                             k, problem.input_dim)
        elif method == "adjoint":
            jac = _rows_from(lambda a: algebraic.adjoint_reverse(sys, x, sol.y_star, a),
                             k, problem.input_dim)
        else:  # trace
            y0 = problem.starting_point(x)
            jac = _rows_from(
                lambda a: algebraic.trace_reverse(sys, x, y0, None, a).gradient,
                k, problem.input_dim)
        return MethodRun(value=sol.y_star, jacobian=jac, iterations=sol.iterations)

    if kind == registry.DIFFERENCE:
        traj = difference.simulate(sys, x)
        route = (difference.reverse_ift if method == "ift-reverse"
                 else difference.reverse_adjoint)
        jac = _rows_from(lambda a: route(sys, x, traj, a), k, problem.input_dim)
        return MethodRun(value=traj.states[-1], jacobian=jac, iterations=sys.steps)

    if kind in (registry.OPTIMIZATION, registry.CONSTRAINED):
        sol = _solve_optimum(problem, x)
        route = (optimize.reverse_constrained if kind == registry.CONSTRAINED
                 else optimize.reverse_unconstrained)
        jac = _rows_from(lambda a: route(sys, x, sol, a), k, problem.input_dim)
        return MethodRun(value=sol.y_star, jacobian=jac, iterations=sol.iterations)

    if kind == registry.ODE:
        if method == "forward-sens":
            traj = ode.integrate(sys, x, problem.integrator)
            jac = ode.forward_sensitivity(sys, x, problem.integrator)
            return MethodRun(value=traj.final_state, jacobian=jac,
                             iterations=traj.steps)
        if method == "trace":
            cfg = _trace_config(problem)
            traj = ode.integrate(sys, x, cfg)
            jac = _rows_from(
                lambda a: ode.trace_reverse_ode(sys, x, cfg, a).gradient,
                k, problem.input_dim)
            return MethodRun(value=traj.final_state, jacobian=jac,
                             iterations=traj.steps)
        traj = ode.integrate(sys, x, problem.integrator)
        jac = _rows_from(
            lambda a: ode.adjoint_reverse(sys, x, traj, a, problem.integrator),
            k, problem.input_dim)
        return MethodRun(value=traj.final_state, jacobian=jac, iterations=traj.steps)

    if kind == registry.DAE:
        traj = dae.dae_integrate(sys, x, problem.integrator)
        jac = _rows_from(
            lambda a: dae.dae_adjoint_reverse(sys, x, traj, a, problem.integrator),
            k, problem.input_dim)
        return MethodRun(value=traj.final_state, jacobian=jac, iterations=traj.steps)

    raise StructureError(f"unknown problem kind {kind!r}")


def bridge_gap(problem, x):
    """max_i |gamma_i - (alpha - lambda_i)| over unit cotangents, the
    elimination/multiplier correspondence for difference problems."""
    if problem.kind != registry.DIFFERENCE:
        raise StructureError("the bridge check applies to difference problems")
    x = np.asarray(x, dtype=float).ravel()
    sys = problem.system
    traj = difference.simulate(sys, x)
    worst = 0.0
    e = np.zeros(sys.state_dim)
    for r in range(sys.state_dim):
        e[r] = 1.0
        _, gammas = difference.reverse_ift(sys, x, traj, e, keep_multipliers=True)
        _, lams = difference.reverse_adjoint(sys, x, traj, e, keep_multipliers=True)
        worst = max(worst, float(np.max(np.abs(gammas - (e - lams)))))
        e[r] = 0.0
    return worst


def pair_tolerance(kind, method_a, method_b):
    """Documented agreement tolerance for a method pair on one problem kind."""
    pair = {method_a, method_b}
    if "fd" in pair:
        return FD_THRESHOLDS[kind]
    if "trace" in pair or "forward-sens" in pair:
        return 1e-6
    return 1e-10
