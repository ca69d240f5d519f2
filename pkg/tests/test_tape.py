import math

import numpy as np
import pytest

from implicitad import (
    NonFiniteError,
    OpKind,
    StructureError,
    Tape,
    cos,
    exp,
    forward_sweep,
    gradient_and_hessian,
    hessian_vector,
    jacobian,
    log,
    record,
    record_program,
    reverse_sweep,
    sin,
)
from implicitad.fd import central_jacobian
from implicitad.tape import CachedTape

from conftest import random_program


def figure_program(x):
    z1 = x[0] + x[1]
    z2 = x[1] * x[2]
    return z1 / z2


FIGURE_POINT = np.array([1.0, 2.0, 3.0])
FIGURE_GRADIENT = np.array([1.0 / 6.0, -1.0 / 12.0, -1.0 / 6.0])


class TestRecord:
    def test_add_node(self):
        tape = Tape()
        a, b = tape.add_inputs([1.0, 2.0])
        nid = record(tape, OpKind.ADD, [a.idx, b.idx], 3.0, [1.0, 1.0])
        node = tape.node(nid)
        assert node.value == 3.0
        assert node.op_kind is OpKind.ADD
        assert node.operand_ids == (a.idx, b.idx)

    def test_mul_node_product_rule_partials(self):
        tape = Tape()
        b, c = tape.add_inputs([2.0, 3.0])
        nid = record(tape, "mul", [b.idx, c.idx], 6.0, [3.0, 2.0])
        assert tape.node(nid).local_partials == (3.0, 2.0)

    def test_div_node_hand_partials(self):
        # d(u/v) = (1/v, -u/v^2) at u=3, v=6
        tape = Tape()
        z1, z2 = tape.add_inputs([3.0, 6.0])
        nid = record(tape, OpKind.DIV, [z1.idx, z2.idx], 0.5,
                     [1.0 / 6.0, -1.0 / 12.0])
        tape.output_ids.append(nid)
        grad = reverse_sweep(tape, [1.0])
        fd = central_jacobian(lambda z: np.array([z[0] / z[1]]),
                              np.array([3.0, 6.0]))[0]
        np.testing.assert_allclose(grad, fd, rtol=1e-8)

    def test_unknown_operand_rejected(self):
        tape = Tape()
        tape.add_inputs([1.0])
        with pytest.raises(StructureError):
            record(tape, OpKind.ADD, [0, 5], 1.0, [1.0, 1.0])

    def test_arity_mismatch_rejected(self):
        tape = Tape()
        tape.add_inputs([1.0])
        with pytest.raises(StructureError):
            record(tape, OpKind.ADD, [0], 1.0, [1.0, 1.0])

    def test_nonfinite_value_names_node(self):
        tape = Tape()
        tape.add_inputs([1.0])
        with pytest.raises(NonFiniteError) as err:
            record(tape, OpKind.EXP, [0], float("inf"), [1.0])
        assert err.value.node_index == 1

    def test_operands_precede_node(self):
        tape = record_program(figure_program, FIGURE_POINT)
        for i in range(len(tape)):
            assert all(j < i for j in tape.node(i).operand_ids)

    def test_partials_match_operand_count(self):
        tape = record_program(figure_program, FIGURE_POINT)
        for i in range(len(tape)):
            node = tape.node(i)
            assert len(node.local_partials) == len(node.operand_ids)


class TestForwardSweep:
    def test_identity_program(self):
        tape = record_program(lambda x: [x[0], x[1]], [3.0, 4.0])
        np.testing.assert_array_equal(forward_sweep(tape, [1.0, 0.0]), [1.0, 0.0])

    def test_figure_program_first_direction(self):
        tape = record_program(figure_program, FIGURE_POINT)
        got = forward_sweep(tape, [1.0, 0.0, 0.0])
        fd = central_jacobian(lambda x: np.array([(x[0] + x[1]) / (x[1] * x[2])]),
                              FIGURE_POINT)
        np.testing.assert_allclose(got, fd[:, 0], rtol=1e-8)
        np.testing.assert_allclose(got, [1.0 / 6.0], rtol=1e-14)

    def test_figure_program_third_direction(self):
        tape = record_program(figure_program, FIGURE_POINT)
        np.testing.assert_allclose(forward_sweep(tape, [0.0, 0.0, 1.0]),
                                   [-1.0 / 6.0], rtol=1e-14)

    def test_dimension_mismatch(self):
        tape = record_program(figure_program, FIGURE_POINT)
        with pytest.raises(StructureError):
            forward_sweep(tape, [1.0, 0.0])


class TestReverseSweep:
    def test_identity_program(self):
        tape = record_program(lambda x: [x[0], x[1]], [3.0, 4.0])
        np.testing.assert_array_equal(reverse_sweep(tape, [0.0, 1.0]), [0.0, 1.0])

    def test_figure_program(self):
        tape = record_program(figure_program, FIGURE_POINT)
        np.testing.assert_allclose(reverse_sweep(tape, [1.0]),
                                   FIGURE_GRADIENT, rtol=1e-14)

    def test_linear_program(self):
        tape = record_program(lambda x: 2.0 * x[0], [5.0])
        np.testing.assert_array_equal(reverse_sweep(tape, [1.0]), [2.0])

    def test_dimension_mismatch(self):
        tape = record_program(figure_program, FIGURE_POINT)
        with pytest.raises(StructureError):
            reverse_sweep(tape, [1.0, 1.0])


class TestJacobian:
    def test_identity(self):
        tape = record_program(lambda x: [x[0], x[1]], [1.0, 2.0])
        np.testing.assert_array_equal(jacobian(tape), np.eye(2))

    def test_figure_program(self):
        tape = record_program(figure_program, FIGURE_POINT)
        np.testing.assert_allclose(jacobian(tape), [FIGURE_GRADIENT], rtol=1e-14)

    def test_two_by_two(self):
        tape = record_program(lambda x: [x[0] + x[1], x[0] * x[1]], [3.0, 4.0])
        np.testing.assert_allclose(jacobian(tape), [[1.0, 1.0], [4.0, 3.0]])

    def test_matches_unit_sweeps_exactly(self, rng):
        fn = random_program(rng, 3, 2, 20)
        x = rng.normal(size=3)
        tape = record_program(fn, x)
        jac = jacobian(tape)
        for j in range(2):
            e = np.zeros(2)
            e[j] = 1.0
            np.testing.assert_array_equal(jac[j], reverse_sweep(tape, e))


class TestHessian:
    def test_quadratic(self):
        assert hessian_vector(lambda x: x[0] * x[0], [3.0], [1.0]) == pytest.approx(2.0)

    def test_cross_term(self):
        hv = hessian_vector(lambda z: z[0] * z[0] * z[1], [2.0, 3.0], [1.0, 0.0])
        np.testing.assert_allclose(hv, [6.0, 4.0], rtol=1e-14)

    def test_linear_program_zero(self):
        hv = hessian_vector(lambda z: 2.0 * z[0] - z[1], [1.0, 1.0], [1.0, 2.0])
        np.testing.assert_array_equal(hv, [0.0, 0.0])

    def test_matches_fd_hessian(self, rng):
        def f(z):
            return exp(sin(z[0]) * 0.5) * z[1] + cos(z[0] * z[1]) + log(z[1] * z[1] + 2.0)

        x = np.array([0.7, -1.2])
        _, grad, hess = gradient_and_hessian(f, x)
        fd_hess = central_jacobian(
            lambda z: central_jacobian(
                lambda w: np.array([math.exp(math.sin(w[0]) * 0.5) * w[1]
                                    + math.cos(w[0] * w[1])
                                    + math.log(w[1] * w[1] + 2.0)]), z, 1e-5)[0],
            x, 1e-5)
        np.testing.assert_allclose(hess, fd_hess, rtol=1e-4, atol=1e-6)
        np.testing.assert_allclose(hess, hess.T, atol=1e-12)

    def test_scalar_output_required(self):
        with pytest.raises(StructureError):
            hessian_vector(lambda z: [z[0], z[1]], [1.0, 2.0], [1.0, 0.0])


class TestProperties:
    def test_dot_product_identity(self, rng):
        for _ in range(10):
            n_in = int(rng.integers(2, 6))
            n_out = int(rng.integers(1, 4))
            fn = random_program(rng, n_in, n_out, int(rng.integers(10, 50)))
            x = rng.normal(size=n_in)
            tape = record_program(fn, x)
            v = rng.normal(size=n_in)
            alpha = rng.normal(size=n_out)
            lhs = float(alpha @ forward_sweep(tape, v))
            rhs = float(reverse_sweep(tape, alpha) @ v)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs), abs(rhs))

    def test_sweep_linearity(self, rng):
        fn = random_program(rng, 4, 3, 30)
        x = rng.normal(size=4)
        tape = record_program(fn, x)
        v1, v2 = rng.normal(size=4), rng.normal(size=4)
        a, b = 0.3, -1.7
        lhs = forward_sweep(tape, a * v1 + b * v2)
        rhs = a * forward_sweep(tape, v1) + b * forward_sweep(tape, v2)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
        a1, a2 = rng.normal(size=3), rng.normal(size=3)
        lhs = reverse_sweep(tape, a * a1 + b * a2)
        rhs = a * reverse_sweep(tape, a1) + b * reverse_sweep(tape, a2)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_sweeps_match_finite_differences(self, rng):
        for _ in range(5):
            n_in = int(rng.integers(2, 5))
            fn = random_program(rng, n_in, 2, 25)
            x = rng.normal(size=n_in)
            tape = record_program(fn, x)
            fd_jac = central_jacobian(
                lambda z: np.array([s for s in fn(list(z))]), x)
            np.testing.assert_allclose(jacobian(tape), fd_jac,
                                       rtol=1e-5, atol=1e-7)

    def test_nonfinite_sweep_aborts_with_node(self):
        with pytest.raises(NonFiniteError) as err:
            record_program(lambda x: log(-1.0 * x[0]), [2.0])
        assert err.value.node_index >= 0

    def test_division_by_zero_aborts(self):
        with pytest.raises(NonFiniteError):
            record_program(lambda x: x[0] / (x[0] - 2.0), [2.0])


class TestNodeViews:
    def test_public_kinds_for_folded_variants(self):
        def program(x):
            a = x[0] + 2.0      # constant-folded add
            b = 2.0 - a         # reflected sub
            c = a * 0.5         # constant scale
            d = 3.0 / b         # reflected div
            e = c ** 2          # constant exponent
            f = 2.0 ** d        # constant base
            out = exp(e) + sin(f) - cos(a) + log(b * b + 1.0) - (-d)
            return [out, 7.5]  # the numeric output lifts to a constant node

        tape = record_program(program, [0.3])
        kinds = [tape.node(i).op_kind for i in range(len(tape))]
        for want in (OpKind.INPUT, OpKind.ADD, OpKind.SUB, OpKind.MUL,
                     OpKind.DIV, OpKind.POW, OpKind.EXP, OpKind.SIN,
                     OpKind.COS, OpKind.LOG, OpKind.NEG, OpKind.CONSTANT):
            assert want in kinds, want

    def test_node_values_match_stored(self):
        tape = record_program(figure_program, FIGURE_POINT)
        assert tape.node(len(tape) - 1).value == pytest.approx(0.5)


class TestDualNesting:
    def test_tangent_present_only_in_dual_mode(self):
        plain = record_program(lambda x: x[0] * x[0], [2.0])
        assert plain.node(0).op_kind is OpKind.INPUT
        tape = record_program(lambda x: x[0] * x[0], [2.0], tangents=([1.0],))
        assert tape.dual
        assert tape.output_tangents()[0] == pytest.approx(4.0)

    def test_plain_tape_has_no_tangent(self):
        tape = record_program(lambda x: x[0] + 1.0, [2.0])
        from implicitad import Scalar
        assert Scalar(tape, 0).tangent is None


class TestCachedTape:
    def test_refresh_matches_fresh_recording(self, rng):
        fn = random_program(rng, 3, 2, 40)
        x0 = rng.normal(size=3)
        cached = CachedTape(record_program(fn, x0))
        for _ in range(5):
            x = rng.normal(size=3)
            out = cached.refresh(x)
            fresh = record_program(fn, x)
            np.testing.assert_array_equal(out, fresh.output_values())
            a = rng.normal(size=2)
            np.testing.assert_array_equal(cached.reverse(a),
                                          reverse_sweep(fresh, a))
            v = rng.normal(size=3)
            np.testing.assert_array_equal(cached.forward(v),
                                          forward_sweep(fresh, v))

    def test_raw_nodes_rejected(self):
        tape = Tape()
        a, = tape.add_inputs([1.0])
        nid = record(tape, OpKind.MUL, [a.idx], 2.0, [2.0])
        tape.output_ids.append(nid)
        with pytest.raises(StructureError):
            CachedTape(tape)

    def test_dual_tapes_rejected(self):
        tape = record_program(lambda x: x[0] * x[0], [2.0], tangents=([1.0],))
        with pytest.raises(StructureError):
            CachedTape(tape)

    def test_refresh_nonfinite_aborts(self):
        cached = CachedTape(record_program(lambda x: log(x[0]), [2.0]))
        with pytest.raises(NonFiniteError):
            cached.refresh([-1.0])
