import numpy as np
import pytest

from implicitad import (
    ConstraintSystem,
    ConvergenceError,
    ImplicitFunctionUndefinedError,
    NewtonConfig,
    StructureError,
    adjoint_reverse,
    ift_forward,
    ift_reverse,
    newton_solve,
    trace_reverse,
)
from implicitad.fd import central_jacobian

from conftest import random_polynomial_system

SQRT = ConstraintSystem(lambda xs, ys: [ys[0] * ys[0] - xs[0]],
                        input_dim=1, output_dim=1)
LINEAR = ConstraintSystem(lambda xs, ys: [2.0 * ys[0] - xs[0], 4.0 * ys[1] - xs[1]],
                          input_dim=2, output_dim=2)
IDENTITY = ConstraintSystem(lambda xs, ys: [ys[0] - xs[0]],
                            input_dim=1, output_dim=1)


def solve_map(sys, y0):
    def fn(x):
        return newton_solve(sys, x, y0).y_star
    return fn


class TestNewton:
    def test_identity_single_iteration(self):
        sol = newton_solve(IDENTITY, [3.0], [17.0])
        assert sol.iterations == 1
        np.testing.assert_allclose(sol.y_star, [3.0], atol=1e-14)

    def test_sqrt(self):
        sol = newton_solve(SQRT, [4.0], [1.0])
        np.testing.assert_allclose(sol.y_star, [2.0], rtol=1e-12)
        assert sol.residual_norm <= 1e-12

    def test_diagonal_linear(self):
        sol = newton_solve(LINEAR, [2.0, 4.0], [0.0, 0.0])
        np.testing.assert_allclose(sol.y_star, [1.0, 1.0], atol=1e-14)

    def test_trace_recorded_on_request(self):
        sol = newton_solve(SQRT, [4.0], [1.0], keep_trace=True)
        assert len(sol.iterate_trace) == sol.iterations + 1
        assert len(sol.damping_trace) == sol.iterations
        np.testing.assert_array_equal(sol.iterate_trace[0], [1.0])

    def test_nonconvergence_carries_residual(self):
        cfg = NewtonConfig(residual_tolerance=1e-12, max_iterations=3)
        with pytest.raises(ConvergenceError) as err:
            newton_solve(SQRT, [4.0], [100.0], cfg)
        assert err.value.residual_norm is not None

    def test_singular_jacobian_at_iterate(self):
        with pytest.raises(ImplicitFunctionUndefinedError):
            newton_solve(SQRT, [4.0], [0.0])


class TestIftForward:
    def test_identity_constraint(self):
        np.testing.assert_allclose(
            ift_forward(IDENTITY, [3.0], [3.0], [1.0]), [1.0], atol=1e-14)

    def test_sqrt_derivative(self):
        got = ift_forward(SQRT, [4.0], [2.0], [1.0])
        np.testing.assert_allclose(got, [0.25], rtol=1e-12)
        fd = central_jacobian(solve_map(SQRT, [1.0]), np.array([4.0]))
        np.testing.assert_allclose(got, fd[:, 0], rtol=1e-6)

    def test_linear_analytic(self):
        got = ift_forward(LINEAR, [2.0, 4.0], [1.0, 1.0], [1.0, 0.0])
        np.testing.assert_allclose(got, [0.5, 0.0], atol=1e-14)

    def test_singular_raises(self):
        with pytest.raises(ImplicitFunctionUndefinedError):
            ift_forward(SQRT, [0.0], [0.0], [1.0])


class TestIftReverse:
    def test_identity_constraint(self):
        np.testing.assert_allclose(
            ift_reverse(IDENTITY, [3.0], [3.0], [1.0]), [1.0], atol=1e-14)

    def test_sqrt_derivative(self):
        np.testing.assert_allclose(
            ift_reverse(SQRT, [4.0], [2.0], [1.0]), [0.25], rtol=1e-12)

    def test_linear_analytic(self):
        got = ift_reverse(LINEAR, [2.0, 4.0], [1.0, 1.0], [1.0, 1.0])
        np.testing.assert_allclose(got, [0.5, 0.25], atol=1e-14)

    def test_summary_composition(self):
        sys = ConstraintSystem(
            lambda xs, ys: [2.0 * ys[0] - xs[0], 4.0 * ys[1] - xs[1]],
            input_dim=2, output_dim=2,
            summary=lambda ys: [ys[0] + ys[1]], summary_dim=1)
        got = ift_reverse(sys, [2.0, 4.0], [1.0, 1.0], [1.0])
        np.testing.assert_allclose(got, [0.5, 0.25], atol=1e-14)

    def test_singular_raises(self):
        with pytest.raises(ImplicitFunctionUndefinedError):
            ift_reverse(SQRT, [0.0], [0.0], [1.0])


class TestAdjointReverse:
    def test_identity_constraint(self):
        np.testing.assert_allclose(
            adjoint_reverse(IDENTITY, [3.0], [3.0], [1.0]), [1.0], atol=1e-14)

    def test_sqrt_with_multiplier(self):
        grad, lam = adjoint_reverse(SQRT, [4.0], [2.0], [1.0],
                                    return_multiplier=True)
        np.testing.assert_allclose(grad, [0.25], rtol=1e-12)
        np.testing.assert_allclose(lam, [-0.25], rtol=1e-12)

    def test_equals_ift_reverse_on_random_systems(self, rng):
        for _ in range(4):
            constraint, x, _, y_start = random_polynomial_system(rng, 3, 4)
            sys = ConstraintSystem(constraint, input_dim=3, output_dim=4)
            sol = newton_solve(sys, x, y_start)
            for _ in range(3):
                alpha = rng.normal(size=4)
                a = adjoint_reverse(sys, x, sol.y_star, alpha)
                b = ift_reverse(sys, x, sol.y_star, alpha)
                assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(b)))

    def test_requires_identity_summary(self):
        sys = ConstraintSystem(lambda xs, ys: [ys[0] - xs[0]], 1, 1,
                               summary=lambda ys: [ys[0]], summary_dim=1)
        with pytest.raises(StructureError):
            adjoint_reverse(sys, [1.0], [1.0], [1.0])


class TestTraceReverse:
    def test_identity_exact_in_one_step(self):
        res = trace_reverse(IDENTITY, [3.0], [10.0], None, [1.0])
        np.testing.assert_array_equal(res.gradient, [1.0])
        assert res.iterations == 1

    def test_sqrt_close_to_ift(self):
        res = trace_reverse(SQRT, [4.0], [1.0], None, [1.0])
        want = ift_reverse(SQRT, [4.0], [2.0], [1.0])
        assert abs(res.gradient[0] - want[0]) <= 1e-6

    def test_tape_grows_linearly_with_iterations(self):
        runs = []
        for y0 in (2.0, 2.5, 10.0, 200.0):
            res = trace_reverse(SQRT, [4.0], [y0], None, [1.0])
            runs.append((res.iterations, res.tape_nodes))
        slopes = set()
        for (i1, n1), (i2, n2) in zip(runs, runs[1:]):
            if i2 != i1:
                slope = (n2 - n1) / (i2 - i1)
                assert slope == int(slope)
                slopes.add(slope)
        assert len(slopes) == 1

    def test_damped_updates_replayed(self):
        # cube root from a tiny start makes the first Newton step overshoot,
        # so the halving line search engages and the trace must replay the
        # damped updates actually taken
        cube = ConstraintSystem(lambda xs, ys: [ys[0] ** 3 - xs[0]], 1, 1)
        sol = newton_solve(cube, [8.0], [0.3], keep_trace=True)
        assert any(s < 1.0 for s in sol.damping_trace)
        res = trace_reverse(cube, [8.0], [0.3], None, [1.0])
        want = ift_reverse(cube, [8.0], sol.y_star, [1.0])
        assert abs(res.gradient[0] - want[0]) <= 1e-6
        np.testing.assert_allclose(want, [1.0 / 12.0], rtol=1e-10)

    def test_summary_composed_on_tape(self):
        sys = ConstraintSystem(
            lambda xs, ys: [ys[0] * ys[0] - xs[0]], 1, 1,
            summary=lambda ys: [3.0 * ys[0]], summary_dim=1)
        res = trace_reverse(sys, [4.0], [1.0], None, [1.0])
        assert abs(res.gradient[0] - 0.75) <= 1e-6


class TestMethodAgreement:
    def test_forward_reverse_duality(self, rng):
        for _ in range(4):
            constraint, x, _, y_start = random_polynomial_system(rng, 4, 3)
            sys = ConstraintSystem(constraint, input_dim=4, output_dim=3)
            sol = newton_solve(sys, x, y_start)
            v = rng.normal(size=4)
            alpha = rng.normal(size=3)
            lhs = float(alpha @ ift_forward(sys, x, sol.y_star, v))
            rhs = float(ift_reverse(sys, x, sol.y_star, alpha) @ v)
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs), abs(rhs))

    def test_all_methods_match_finite_differences(self, rng):
        constraint, x, _, y0 = random_polynomial_system(rng, 2, 3)
        sys = ConstraintSystem(constraint, input_dim=2, output_dim=3)
        sol = newton_solve(sys, x, y0)
        fd = central_jacobian(solve_map(sys, y0), x)
        for r in range(3):
            alpha = np.zeros(3)
            alpha[r] = 1.0
            for got in (ift_reverse(sys, x, sol.y_star, alpha),
                        adjoint_reverse(sys, x, sol.y_star, alpha),
                        trace_reverse(sys, x, y0, None, alpha).gradient):
                np.testing.assert_allclose(got, fd[r], rtol=1e-5, atol=1e-7)

    def test_trace_matches_ift_at_tight_tolerance(self, rng):
        constraint, x, _, y0 = random_polynomial_system(rng, 2, 2)
        sys = ConstraintSystem(constraint, input_dim=2, output_dim=2)
        sol = newton_solve(sys, x, y0)
        alpha = rng.normal(size=2)
        res = trace_reverse(sys, x, y0, None, alpha)
        want = ift_reverse(sys, x, sol.y_star, alpha)
        assert np.max(np.abs(res.gradient - want)) <= 1e-6
