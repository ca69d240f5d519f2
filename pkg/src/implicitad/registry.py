"""Named test problems with defaults and analytic oracles.

Problems are code-defined.  Each entry binds the programs of one implicit
system to its dimensions, default input, default starting values, and an
analytic Jacobian of the summarized solution map where a closed form
exists.  ``ode-linear-nd`` accepts dimension overrides (state_dim,
input_dim, seed) for scaling studies.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .algebraic import ConstraintSystem
from .dae import DaeSystem
from .difference import DifferenceSystem
from .errors import UnknownProblemError
from .ode import IntegratorConfig, OdeSystem
from .optimize import ConstrainedProblem, ObjectiveProblem
from .tape import exp

ALGEBRAIC = "algebraic"
DIFFERENCE = "difference"
OPTIMIZATION = "optimization"
CONSTRAINED = "constrained_optimization"
ODE = "ode"
DAE = "dae"


@dataclass
class Problem:
    name: str
    kind: str
    description: str
    system: object
    default_x: np.ndarray
    input_dim: int
    summary_dim: int
    default_y0: object = None  # array, or callable(x) -> array
    default_mu0: np.ndarray = None
    analytic_jacobian: object = None
    integrator: IntegratorConfig = field(default=None, repr=False)

    def starting_point(self, x):
        if callable(self.default_y0):
            return np.asarray(self.default_y0(np.asarray(x, dtype=float)), dtype=float)
        if self.default_y0 is None:
            return None
        return np.asarray(self.default_y0, dtype=float).copy()


def _sqrt_problem(**_):
    system = ConstraintSystem(lambda xs, ys: [ys[0] * ys[0] - xs[0]],
                              input_dim=1, output_dim=1)
    return Problem(
        name="algebraic-sqrt", kind=ALGEBRAIC,
        description="square root as the positive solution of y^2 - x = 0",
        system=system, default_x=np.array([4.0]),
        default_y0=lambda x: np.array([float(x[0])]),
        input_dim=1, summary_dim=1,
        analytic_jacobian=lambda x: np.array([[1.0 / (2.0 * math.sqrt(x[0]))]]))


_LIN_A = np.array([[2.0, 0.0], [0.0, 4.0]])


def _linear_problem(**_):
    system = ConstraintSystem(
        lambda xs, ys: [2.0 * ys[0] - xs[0], 4.0 * ys[1] - xs[1]],
        input_dim=2, output_dim=2)
    inv = np.linalg.inv(_LIN_A)
    return Problem(
        name="algebraic-linear", kind=ALGEBRAIC,
        description="diagonal linear system A y = x",
        system=system, default_x=np.array([2.0, 4.0]),
        default_y0=np.zeros(2), input_dim=2, summary_dim=2,
        analytic_jacobian=lambda x: inv.copy())


def _diffeq_constant(**_):
    steps = 5
    system = DifferenceSystem(delta=lambda ys, xs, i: [xs[0]],
                              initial=lambda xs: [0.0],
                              steps=steps, state_dim=1, input_dim=1)
    return Problem(
        name="diffeq-constant", kind=DIFFERENCE,
        description="constant increment per step: y_I = I*x",
        system=system, default_x=np.array([1.7]), input_dim=1, summary_dim=1,
        analytic_jacobian=lambda x: np.array([[float(steps)]]))


def _diffeq_geometric(**_):
    steps = 3
    system = DifferenceSystem(delta=lambda ys, xs, i: [xs[0] * ys[0]],
                              initial=lambda xs: [1.0],
                              steps=steps, state_dim=1, input_dim=1)
    return Problem(
        name="diffeq-geometric", kind=DIFFERENCE,
        description="geometric growth: y_I = (1+a)^I from y_0 = 1",
        system=system, default_x=np.array([0.5]), input_dim=1, summary_dim=1,
        analytic_jacobian=lambda x: np.array(
            [[steps * (1.0 + x[0]) ** (steps - 1)]]))


def _opt_quadratic(**_):
    system = ObjectiveProblem(
        lambda xs, ys: -(ys[0] * ys[0] + 2.0 * ys[1] * ys[1]) / 2.0 + xs[0] * ys[0],
        input_dim=1, output_dim=2)
    return Problem(
        name="opt-quadratic", kind=OPTIMIZATION,
        description="concave quadratic with maximizer (x, 0)",
        system=system, default_x=np.array([1.5]), default_y0=np.zeros(2),
        input_dim=1, summary_dim=2,
        analytic_jacobian=lambda x: np.array([[1.0], [0.0]]))


def _opt_exp(**_):
    system = ObjectiveProblem(lambda xs, ys: xs[0] * ys[0] - exp(ys[0]),
                              input_dim=1, output_dim=1)
    return Problem(
        name="opt-exp", kind=OPTIMIZATION,
        description="maximizer log(x) of x*y - e^y",
        system=system, default_x=np.array([2.0]), default_y0=np.array([0.0]),
        input_dim=1, summary_dim=1,
        analytic_jacobian=lambda x: np.array([[1.0 / x[0]]]))


def _opt_constrained_sum(**_):
    system = ConstrainedProblem(
        lambda xs, ys: -(ys[0] * ys[0] + ys[1] * ys[1]) / 2.0,
        lambda xs, ys: [ys[0] + ys[1] - xs[0]],
        input_dim=1, output_dim=2, constraint_dim=1)
    return Problem(
        name="opt-constrained-sum", kind=CONSTRAINED,
        description="closest point to the origin on y1 + y2 = x",
        system=system, default_x=np.array([3.0]), default_y0=np.zeros(2),
        default_mu0=np.zeros(1), input_dim=1, summary_dim=2,
        analytic_jacobian=lambda x: np.array([[0.5], [0.5]]))


def _ode_decay(**_):
    system = OdeSystem(rhs=lambda xs, ys, t: [-(xs[0] * ys[0])],
                       initial=lambda xs: [xs[1]],
                       horizon=1.0, state_dim=1, input_dim=2)

    def jac(x):
        tau = system.horizon
        e = math.exp(-x[0] * tau)
        return np.array([[-tau * x[1] * e, e]])

    return Problem(
        name="ode-decay", kind=ODE,
        description="exponential decay y' = -x1*y from y(0) = x2",
        system=system, default_x=np.array([0.5, 2.0]), input_dim=2,
        summary_dim=1, analytic_jacobian=jac)


def _ode_harmonic(**_):
    system = OdeSystem(rhs=lambda xs, ys, t: [ys[1], -(xs[0] * ys[0])],
                       initial=lambda xs: [1.0, 0.0],
                       horizon=1.0, state_dim=2, input_dim=1)

    def jac(x):
        tau = system.horizon
        w = math.sqrt(x[0])
        s, c = math.sin(w * tau), math.cos(w * tau)
        return np.array([[-tau * s / (2.0 * w)],
                         [-(s / w + tau * c) / 2.0]])

    return Problem(
        name="ode-harmonic", kind=ODE,
        description="harmonic oscillator with stiffness x; conserves x*y1^2 + y2^2",
        system=system, default_x=np.array([2.0]), input_dim=1,
        summary_dim=2, analytic_jacobian=jac)


def _ode_linear_nd(state_dim=4, input_dim=2, seed=0, **_):
    n, m = int(state_dim), int(input_dim)
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) / math.sqrt(n)
    a -= (np.max(np.linalg.eigvals(a).real) + 0.5) * np.eye(n)
    b = rng.normal(size=(n, m))
    y0 = rng.normal(size=n)

    def rhs(xs, ys, t):
        out = []
        for r in range(n):
            acc = a[r, 0] * ys[0]
            for c in range(1, n):
                acc = acc + a[r, c] * ys[c]
            for c in range(m):
                acc = acc + b[r, c] * xs[c]
            out.append(acc)
        return out

    system = OdeSystem(rhs=rhs, initial=lambda xs: [float(v) for v in y0],
                       horizon=1.0, state_dim=n, input_dim=m)
    return Problem(
        name="ode-linear-nd", kind=ODE,
        description="stable random linear system y' = A y + B x (dims overridable)",
        system=system, default_x=np.zeros(m), input_dim=m, summary_dim=n,
        integrator=IntegratorConfig(rel_tol=1e-8, abs_tol=1e-10))


def _dae_conserved_sum(**_):
    system = DaeSystem(
        rhs_differential=lambda xs, ys, t: [-(xs[0] * ys[0])],
        algebraic_constraint=lambda xs, ys, t: [ys[0] + ys[1] - 1.0],
        initial_differential=lambda xs: [0.5],
        horizon=1.0, diff_dim=1, alg_dim=1, input_dim=1)

    def jac(x):
        tau = system.horizon
        d = -tau * 0.5 * math.exp(-x[0] * tau)
        return np.array([[d], [-d]])

    return Problem(
        name="dae-conserved-sum", kind=DAE,
        description="decay with the complement pinned by y1 + y2 = 1",
        system=system, default_x=np.array([1.0]), input_dim=1,
        summary_dim=2, analytic_jacobian=jac,
        integrator=IntegratorConfig(method="rk4_fixed", step_size=1e-3))


SUPPORTS_OVERRIDES = frozenset({"ode-linear-nd"})

_FACTORIES = {
    "algebraic-sqrt": _sqrt_problem,
    "algebraic-linear": _linear_problem,
    "diffeq-constant": _diffeq_constant,
    "diffeq-geometric": _diffeq_geometric,
    "opt-quadratic": _opt_quadratic,
    "opt-exp": _opt_exp,
    "opt-constrained-sum": _opt_constrained_sum,
    "ode-decay": _ode_decay,
    "ode-harmonic": _ode_harmonic,
    "ode-linear-nd": _ode_linear_nd,
    "dae-conserved-sum": _dae_conserved_sum,
}


def lookup(name, **overrides):
    """Instantiate a named problem; overrides apply where supported."""
    factory = _FACTORIES.get(name)
    if factory is None:
        names = ", ".join(sorted(_FACTORIES))
        raise UnknownProblemError(f"unknown problem {name!r}; available: {names}")
    return factory(**overrides)


def enumerate_problems():
    """(name, kind, description) triples in alphabetical order."""
    out = []
    for name in sorted(_FACTORIES):
        p = lookup(name)
        out.append((p.name, p.kind, p.description))
    return out


def self_check(name, tolerance=1e-6):
    """Verify the analytic Jacobian against finite differences at default_x.

    Returns the observed maximum relative error, or None when the problem
    carries no analytic form.
    """
    from . import runner
    from .fd import max_relative_error

    problem = lookup(name)
    if problem.analytic_jacobian is None:
        return None
    want = np.asarray(problem.analytic_jacobian(problem.default_x), dtype=float)
    got = runner.fd_jacobian(problem, problem.default_x)
    err = max_relative_error(got.ravel(), want.ravel())
    if err > tolerance:
        raise AssertionError(
            f"self-check failed for {name}: analytic vs FD error {err:.3e}")
    return err


def self_check_all(tolerance=1e-6):
    """Run every registered self-check; returns {name: error-or-None}."""
    return {name: self_check(name, tolerance) for name in sorted(_FACTORIES)}
