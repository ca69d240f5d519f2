"""ODE integration with three sensitivity routes.

* ``adjoint_reverse``: integrates the shifted adjoint equation
  dλ/dt = (∂r/∂y)ᵀ(α − λ) backwards from λ(τ) = 0 (so a(t) = α − λ(t) is
  the classical adjoint with a(τ) = α), accumulating the input quadrature
  q̇ = (∂r/∂x)ᵀ(α − λ) as extra states of the same backward solve, and
  finishes with the initial-condition pull-back (∂u/∂x)ᵀ(α − λ(0)).
* ``forward_sensitivity``: integrates the augmented system
  S' = ∂r/∂x + (∂r/∂y)·S, S(0) = ∂u/∂x alongside the state and reads S(τ).
* ``trace_reverse_ode``: records every stage of a fixed-step RK4 solve on
  one tape and reverse-sweeps the whole discrete integrator.

The backward pass reads y(t) by cubic Hermite interpolation over the stored
(t, y, ẏ) knots; the forward trajectory is never re-integrated and adaptive
step decisions are treated as fixed data.  Jacobian products are reverse or
forward sweeps through a tape of the right-hand side, recorded once and
re-evaluated at each point (or re-recorded per point under ``retape``).

Integrators: classic fixed-step RK4, or an adaptive embedded Dormand-Prince
5(4) pair with PI step-size control.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError, StructureError
from .tape import forward_sweep, jacobian, record_program, reverse_sweep

RK4_FIXED = "rk4_fixed"
RK45_ADAPTIVE = "rk45_adaptive"


@dataclass
class OdeSystem:
    """rhs r: (x[I], y[N], t) → ẏ[N]; initial u: x[I] → y(0)[N].

    By default the integrators record the rhs program once and re-evaluate
    the tape at new points, which assumes the program's structure does not
    depend on input values.  Set ``value_dependent_structure`` (or
    ``IntegratorConfig.retape``) for programs that branch on values.
    """

    rhs: callable
    initial: callable
    horizon: float
    state_dim: int
    input_dim: int
    value_dependent_structure: bool = False

    def __post_init__(self):
        if self.horizon <= 0:
            raise StructureError("horizon must be positive")


@dataclass
class IntegratorConfig:
    method: str = RK45_ADAPTIVE
    step_size: float = None
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_steps: int = 10_000_000
    max_step: float = None
    retape: bool = False

    def __post_init__(self):
        if self.method not in (RK4_FIXED, RK45_ADAPTIVE):
            raise StructureError(f"unknown integrator method {self.method!r}")
        if self.step_size is not None and self.step_size <= 0:
            raise StructureError("step_size must be positive")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise StructureError("tolerances must be positive")
        if self.max_steps < 1:
            raise StructureError("max_steps must be at least 1")


class DenseTrajectory:
    """Sorted (t, y, ẏ) knots over [t0, t1] with cubic Hermite interpolation."""

    def __init__(self, ts, ys, fs):
        self.ts = np.asarray(ts, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        self.fs = np.asarray(fs, dtype=float)

    @property
    def steps(self):
        return self.ts.shape[0] - 1

    @property
    def final_state(self):
        return self.ys[-1]

    def knot(self, k):
        return self.ts[k], self.ys[k], self.fs[k]

    def interpolate(self, t):
        ts = self.ts
        slack = 1e-9 * max(1.0, abs(ts[-1] - ts[0]))
        if t < ts[0] - slack or t > ts[-1] + slack:
            raise StructureError(f"time {t} lies outside the stored trajectory")
        t = min(max(t, ts[0]), ts[-1])
        k = int(np.searchsorted(ts, t, side="right")) - 1
        k = min(max(k, 0), ts.shape[0] - 2)
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        s2 = s * s
        s3 = s2 * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        return (h00 * self.ys[k] + (h10 * h) * self.fs[k]
                + h01 * self.ys[k + 1] + (h11 * h) * self.fs[k + 1])


def _rk4_step(f, t, y, h):
    """One classic RK4 step; returns (y_next, k1)."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = _DP_B5 - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                           -92097 / 339200, 187 / 2100, 1 / 40])


def _initial_step(f, t0, y0, f0, t1, cfg):
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean((y0 / scale) ** 2))) if y0.size else 0.0
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2))) if y0.size else 0.0
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t1 - t0)
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0 if y0.size else 0.0
    if max(d1, d2) < 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t1 - t0)


def solve_ivp(f, t0, t1, y0, cfg, record_knots=True):
    """Integrate y' = f(t, y) over [t0, t1]; returns a DenseTrajectory.

    Raises IntegrationError on step-size underflow or step-budget
    exhaustion.
    """
    y = np.asarray(y0, dtype=float).copy()
    if not np.all(np.isfinite(y)):
        raise IntegrationError("initial state is not finite")
    span = t1 - t0
    if span <= 0:
        raise StructureError("integration span must be positive")
    max_step = cfg.max_step if cfg.max_step is not None else span / 20.0
    ts, ys, fs = [t0], [y.copy()], None

    if cfg.method == RK4_FIXED:
        h = cfg.step_size if cfg.step_size is not None else span / 1000.0
        n = max(1, int(math.ceil(span / h - 1e-12)))
        if n > cfg.max_steps:
            raise IntegrationError("fixed-step grid exceeds max_steps")
        h = span / n
        fs = [f(t0, y)]
        t = t0
        for k in range(n):
            y, _ = _rk4_step(f, t, y, h)
            if not np.all(np.isfinite(y)):
                raise IntegrationError(f"state became non-finite at t={t + h}")
            t = t0 + (k + 1) * span / n
            if record_knots or k == n - 1:
                ts.append(t)
                ys.append(y.copy())
                fs.append(f(t, y))
        if not record_knots:
            ts, ys, fs = [t0, t1], [ys[0], y], [fs[0], fs[-1]]
        return DenseTrajectory(ts, ys, fs)

    f0 = f(t0, y)
    fs = [f0.copy()]
    h = min(_initial_step(f, t0, y, f0, t1, cfg), max_step)
    t = t0
    k1 = f0
    facold = 1e-4
    nsteps = 0
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        if nsteps >= cfg.max_steps:
            raise IntegrationError("adaptive integration exceeded max_steps")
        h = min(h, max_step, t1 - t)
        if h < 1e-14 * max(1.0, abs(t)):
            raise IntegrationError(f"step size underflow at t={t}")
        ks = [k1]
        for s in range(1, 7):
            acc = y + h * sum(a * k for a, k in zip(_DP_A[s], ks))
            ks.append(f(t + _DP_C[s] * h, acc))
        y_new = y + h * sum(b * k for b, k in zip(_DP_B5, ks) if b != 0.0)
        err_vec = h * sum(e * k for e, k in zip(_DP_E, ks) if e != 0.0)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        nsteps += 1
        if not math.isfinite(err):
            h *= 0.25
            continue
        if err <= 1.0:
            t = t1 if t1 - (t + h) < 1e-14 * max(1.0, abs(t1)) else t + h
            y = y_new
            k1 = ks[6]  # FSAL: stage 7 sits at the accepted point
            if record_knots or t >= t1:
                ts.append(t)
                ys.append(y.copy())
                fs.append(k1.copy())
            err = max(err, 1e-10)
            fac = 0.9 * err ** -0.17 * facold ** 0.04
            h *= min(5.0, max(0.2, fac))
            facold = err
        else:
            h *= max(0.2, 0.9 * err ** -0.2)
    if not record_knots:
        ts = [ts[0], t]
        ys = [ys[0], y]
        fs = [fs[0], k1]
    elif ts[-1] < t1:
        ts.append(t)
        ys.append(y.copy())
        fs.append(k1.copy())
    return DenseTrajectory(ts, ys, fs)


def _eval_initial(sys, x):
    out = sys.initial([float(v) for v in x])
    vals = np.atleast_1d(np.asarray(out, dtype=float))
    if vals.shape != (sys.state_dim,):
        raise StructureError("initial condition has the wrong dimension")
    return vals


class _RhsPoint:
    """The rhs prepared at one evaluation point: values plus sweep access."""

    __slots__ = ("out", "_push", "_pull", "_x_slice", "_y_slice", "_n_in")

    def __init__(self, out, push, pull, x_slice, y_slice, n_in):
        self.out = out
        self._push = push
        self._pull = pull
        self._x_slice = x_slice
        self._y_slice = y_slice
        self._n_in = n_in

    def pull(self, w):
        """Reverse sweep: ((∂r/∂x)ᵀw, (∂r/∂y)ᵀw); the time cotangent is dropped."""
        bars = self._pull(w)
        return bars[self._x_slice], bars[self._y_slice]

    def push(self, x_seed, y_seed):
        """Forward sweep: (∂r/∂x)·x_seed + (∂r/∂y)·y_seed at frozen time."""
        seed = np.zeros(self._n_in)
        seed[self._x_slice] = x_seed
        seed[self._y_slice] = y_seed
        return self._push(seed)


class _RhsHandle:
    """Evaluate and differentiate the rhs at varying (y, t).

    Records the program once and refreshes the tape at new points unless
    the system or config demands re-recording.  Input layout: [x | y | t].
    """

    def __init__(self, sys, x, cfg):
        self.sys = sys
        self.x = np.asarray(x, dtype=float).ravel()
        if self.x.shape[0] != sys.input_dim:
            raise StructureError("input length does not match the system")
        self.retape = cfg.retape or sys.value_dependent_structure
        self._cache = None

    def _record(self, y, t):
        tape = record_program(
            lambda xs, ys, ts: self.sys.rhs(xs, ys, ts[0]), self.x, y, [t])
        if tape.n_outputs != self.sys.state_dim:
            raise StructureError("rhs output dimension must equal the state dimension")
        return tape

    def at(self, t, y):
        if self.retape:
            tape = self._record(y, t)
            return _RhsPoint(tape.output_values(),
                             lambda seed: forward_sweep(tape, seed),
                             lambda w: reverse_sweep(tape, w),
                             tape.input_slices[0], tape.input_slices[1],
                             tape.n_inputs)
        from .tape import CachedTape
        if self._cache is None:
            self._cache = CachedTape(self._record(y, t))
        cache = self._cache
        out = cache.refresh(np.concatenate([self.x, y, [t]]))
        return _RhsPoint(out, cache.forward, cache.reverse,
                         cache.input_slices[0], cache.input_slices[1],
                         int(cache.input_ids.shape[0]))


def integrate(sys, x, cfg=None):
    """Solve the initial value problem; returns the dense trajectory."""
    cfg = cfg or IntegratorConfig()
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != sys.input_dim:
        raise StructureError("input length does not match the system")
    y0 = _eval_initial(sys, x)
    handle = _RhsHandle(sys, x, cfg)
    return solve_ivp(lambda t, y: handle.at(t, y).out, 0.0, sys.horizon, y0, cfg)


def _initial_vjp(sys, x, w):
    tape = record_program(sys.initial, x)
    if tape.n_outputs != sys.state_dim:
        raise StructureError("initial output dimension must equal the state dimension")
    return reverse_sweep(tape, w)


@dataclass
class BackwardResult:
    gradient: np.ndarray
    lambda_initial: np.ndarray
    quadrature: np.ndarray
    trajectory: DenseTrajectory


def backward_pass(vjp, tau, alpha_eff, n_inputs, cfg, keep_trajectory=False):
    """Integrate the shifted adjoint plus its input quadrature backwards.

    ``vjp(t, w)`` must return ((∂rhs/∂state)ᵀw, (∂rhs/∂input)ᵀw) at time t.
    Returns λ(0) and the accumulated quadrature; the optional trajectory
    presents λ(t) in forward time.
    """
    alpha_eff = np.asarray(alpha_eff, dtype=float).ravel()
    n_state = alpha_eff.shape[0]

    def f(s, z):
        lam = z[:n_state]
        ybar, xbar = vjp(tau - s, alpha_eff - lam)
        return np.concatenate([-ybar, xbar])

    z0 = np.zeros(n_state + n_inputs)
    back = solve_ivp(f, 0.0, tau, z0, cfg, record_knots=keep_trajectory)
    lam0 = back.final_state[:n_state].copy()
    quad = back.final_state[n_state:].copy()
    traj = None
    if keep_trajectory:
        ts = tau - back.ts[::-1]
        lams = back.ys[::-1, :n_state]
        # dλ/dt = -dλ̃/ds at mirrored times
        lders = -back.fs[::-1, :n_state]
        traj = DenseTrajectory(ts, lams, lders)
    return lam0, quad, traj


def adjoint_reverse(sys, x, trajectory, alpha, cfg=None, details=False):
    """Jᵀ·α of the terminal-state map x ↦ y(τ) via the backward adjoint.

    Each backward evaluation interpolates the stored trajectory, brings the
    right-hand-side tape to that point, and pulls the shifted cotangent
    back through it with one reverse sweep.
    """
    cfg = cfg or IntegratorConfig()
    x = np.asarray(x, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != sys.state_dim:
        raise StructureError("cotangent length must equal the state dimension")
    handle = _RhsHandle(sys, x, cfg)

    def vjp(t, w):
        point = handle.at(t, trajectory.interpolate(t))
        xbar, ybar = point.pull(w)
        return ybar, xbar

    lam0, quad, back = backward_pass(vjp, sys.horizon, alpha, sys.input_dim,
                                     cfg, keep_trajectory=details)
    gradient = _initial_vjp(sys, x, alpha - lam0) + quad
    if details:
        return BackwardResult(gradient=gradient, lambda_initial=lam0,
                              quadrature=quad, trajectory=back)
    return gradient


def forward_sensitivity(sys, x, cfg=None):
    """dy(τ)/dx by integrating the augmented sensitivity system.

    The sensitivity columns ride along the state with the same error
    control; each evaluation is one tape record plus I forward sweeps.
    """
    cfg = cfg or IntegratorConfig()
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != sys.input_dim:
        raise StructureError("input length does not match the system")
    n, m = sys.state_dim, sys.input_dim
    tape0 = record_program(sys.initial, x)
    if tape0.n_outputs != n:
        raise StructureError("initial output dimension must equal the state dimension")
    s0 = jacobian(tape0)
    y0 = tape0.output_values()
    z0 = np.concatenate([y0, s0.ravel()])
    eye = np.eye(m)
    handle = _RhsHandle(sys, x, cfg)

    def f(t, z):
        y = z[:n]
        s = z[n:].reshape(n, m)
        point = handle.at(t, y)
        sdot = np.empty((n, m))
        for i in range(m):
            sdot[:, i] = point.push(eye[i], s[:, i])
        return np.concatenate([point.out, sdot.ravel()])

    out = solve_ivp(f, 0.0, sys.horizon, z0, cfg, record_knots=False)
    return out.final_state[n:].reshape(n, m).copy()


@dataclass
class TraceOdeResult:
    gradient: np.ndarray
    tape_nodes: int
    steps: int


def trace_reverse_ode(sys, x, cfg, alpha):
    """Jᵀ·α by recording the whole fixed-step RK4 solve on one tape.

    Deterministic step sequences only, so the method insists on rk4_fixed.
    """
    if cfg is None or cfg.method != RK4_FIXED:
        raise StructureError("the trace route requires a fixed-step RK4 config")
    x = np.asarray(x, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float).ravel()
    if alpha.shape[0] != sys.state_dim:
        raise StructureError("cotangent length must equal the state dimension")
    span = sys.horizon
    h = cfg.step_size if cfg.step_size is not None else span / 1000.0
    n = max(1, int(math.ceil(span / h - 1e-12)))
    if n > cfg.max_steps:
        raise IntegrationError("fixed-step grid exceeds max_steps")
    h = span / n

    from .tape import Tape
    big = Tape()
    xs = big.add_inputs(x)
    ys = list(sys.initial(xs))

    def stage(t, state):
        out = sys.rhs(xs, list(state), t)
        return list(out) if isinstance(out, (list, tuple)) else [out]

    for k in range(n):
        t = k * span / n
        k1 = stage(t, ys)
        k2 = stage(t + 0.5 * h, [y + (0.5 * h) * d for y, d in zip(ys, k1)])
        k3 = stage(t + 0.5 * h, [y + (0.5 * h) * d for y, d in zip(ys, k2)])
        k4 = stage(t + h, [y + h * d for y, d in zip(ys, k3)])
        ys = [y + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
              for y, a, b, c, d in zip(ys, k1, k2, k3, k4)]
    big.mark_outputs(ys)
    gradient = reverse_sweep(big, alpha)
    return TraceOdeResult(gradient=gradient, tape_nodes=len(big), steps=n)
