"""Tape-based elementary automatic differentiation.

Programs are ordinary Python callables over :class:`Scalar` values; every
elementary operation appends one node (value + local partials w.r.t. its
operands) to a :class:`Tape`.  Because nodes are appended as the program
executes, the tape is always a valid topological order of the expression
graph and no sort pass is ever needed.  Only per-expression partials are
stored; identity/buffer bookkeeping never materializes.

A tape recorded with tangent seeds carries a dual (first-order) component on
every value and partial, which is what one level of forward-over-reverse
nesting needs: a reverse sweep over such a tape propagates the directional
derivative of the gradient, i.e. a Hessian-vector product.

Tapes are single-writer while recording and immutable afterwards; sweeps
allocate their own work buffers, so a recorded tape can be swept from
concurrent callers.

Besides the node's public operation kind, recording stores an internal
opcode (kind plus a constant-folding variant) and one auxiliary constant.
Those give every elementary node re-evaluation semantics, so a
:class:`CachedTape` can push new input values through an existing tape in
one compiled pass instead of re-recording it; integrators lean on this for
their inner loops.
"""

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import backend
from .errors import NonFiniteError, StructureError


class OpKind(IntEnum):
    ADD = 0
    SUB = 1
    MUL = 2
    DIV = 3
    NEG = 4
    EXP = 5
    LOG = 6
    SIN = 7
    COS = 8
    POW = 9
    CONSTANT = 10
    INPUT = 11


# Internal opcodes: (variant << 4) | kind.  Variant 0 is the plain form,
# 1 folds a constant through ``aux`` (u op aux), 2 is the reflected
# constant form (aux op u), 15 marks raw nodes without refresh semantics.
_V1 = 1 << 4
_V2 = 2 << 4
_VRAW = 15 << 4
_ADD2 = int(OpKind.ADD)
_ADD1 = _ADD2 | _V1
_SUB2 = int(OpKind.SUB)
_SUB1 = _SUB2 | _V1
_RSUB1 = _SUB2 | _V2
_MUL2 = int(OpKind.MUL)
_MUL1 = _MUL2 | _V1
_DIV2 = int(OpKind.DIV)
_RDIV1 = _DIV2 | _V2
_NEG = int(OpKind.NEG)
_EXP = int(OpKind.EXP)
_LOG = int(OpKind.LOG)
_SIN = int(OpKind.SIN)
_COS = int(OpKind.COS)
_POW2 = int(OpKind.POW)
_POW1 = _POW2 | _V1
_RPOW1 = _POW2 | _V2  # aux holds log(base)
_CONST = int(OpKind.CONSTANT)
_INPUT = int(OpKind.INPUT)

_NUMBER = (int, float, np.integer, np.floating)

# Module-wide sweep counters (cost diagnostics for the O(steps) assertions).
_SWEEPS = {"forward": 0, "reverse": 0, "refresh": 0}


def sweep_counts():
    """Snapshot of the global forward/reverse/refresh counters."""
    return dict(_SWEEPS)


@dataclass(frozen=True)
class TapeNode:
    """Read-only view of one recorded expression."""

    op_kind: OpKind
    operand_ids: tuple
    value: float
    local_partials: tuple


class Tape:
    """Recorded expression graph in topological (append) order."""

    __slots__ = (
        "op_codes", "values", "values_tan", "aux",
        "arg_offsets", "arg_ids", "arg_partials", "arg_partials_tan",
        "input_ids", "output_ids", "input_slices",
        "dual", "_const_cache", "_frozen", "_frozen_n",
    )

    def __init__(self, dual=False):
        self.op_codes = []
        self.values = []
        self.aux = []
        self.arg_offsets = [0]
        self.arg_ids = []
        self.arg_partials = []
        self.dual = dual
        self.values_tan = [] if dual else None
        self.arg_partials_tan = [] if dual else None
        self.input_ids = []
        self.output_ids = []
        self.input_slices = []
        self._const_cache = {}
        self._frozen = None
        self._frozen_n = -1

    def __len__(self):
        return len(self.values)

    @property
    def n_inputs(self):
        return len(self.input_ids)

    @property
    def n_outputs(self):
        return len(self.output_ids)

    def node(self, i):
        lo, hi = self.arg_offsets[i], self.arg_offsets[i + 1]
        return TapeNode(
            op_kind=OpKind(self.op_codes[i] & 15),
            operand_ids=tuple(self.arg_ids[lo:hi]),
            value=self.values[i],
            local_partials=tuple(self.arg_partials[lo:hi]),
        )

    # -- recording ---------------------------------------------------------

    def _append(self, code, ids, value, partials, aux=0.0,
                value_tan=0.0, partials_tan=None):
        idx = len(self.values)
        ok = math.isfinite(value)
        for p in partials:
            ok = ok and math.isfinite(p)
        if not ok:
            raise NonFiniteError(idx)
        self.op_codes.append(code)
        self.values.append(value)
        self.aux.append(aux)
        self.arg_ids.extend(ids)
        self.arg_partials.extend(partials)
        self.arg_offsets.append(len(self.arg_ids))
        if self.dual:
            if not math.isfinite(value_tan):
                raise NonFiniteError(idx)
            self.values_tan.append(value_tan)
            if partials_tan is None:
                partials_tan = (0.0,) * len(partials)
            else:
                for p in partials_tan:
                    if not math.isfinite(p):
                        raise NonFiniteError(idx)
            self.arg_partials_tan.extend(partials_tan)
        return idx

    def constant(self, value):
        """Scalar holding a constant; cached so repeats share one node."""
        value = float(value)
        idx = self._const_cache.get(value)
        if idx is None:
            idx = self._append(_CONST, (), value, ())
            self._const_cache[value] = idx
        return Scalar(self, idx)

    def add_inputs(self, values, tangents=None):
        """Append one group of input nodes; returns their Scalars."""
        values = np.asarray(values, dtype=float).ravel()
        if tangents is not None:
            if not self.dual:
                raise StructureError("tangent seeds require a dual-mode tape")
            tangents = np.asarray(tangents, dtype=float).ravel()
            if tangents.shape != values.shape:
                raise StructureError("tangent seeds must match input shape")
        start = len(self.input_ids)
        out = []
        for k, v in enumerate(values):
            tan = float(tangents[k]) if tangents is not None else 0.0
            idx = self._append(_INPUT, (), float(v), (), value_tan=tan)
            self.input_ids.append(idx)
            out.append(Scalar(self, idx))
        self.input_slices.append(slice(start, len(self.input_ids)))
        return out

    def mark_outputs(self, out):
        if isinstance(out, (Scalar,) + _NUMBER):
            out = [out]
        for s in out:
            if isinstance(s, _NUMBER):
                s = self.constant(s)
            if not isinstance(s, Scalar) or s.tape is not self:
                raise StructureError("program outputs must be Scalars on this tape")
            self.output_ids.append(s.idx)

    def output_values(self):
        return np.array([self.values[i] for i in self.output_ids])

    def output_tangents(self):
        if not self.dual:
            raise StructureError("tape was not recorded in dual mode")
        return np.array([self.values_tan[i] for i in self.output_ids])

    def _arrays(self):
        n = len(self.values)
        if self._frozen is None or self._frozen_n != n:
            self._frozen = (
                np.asarray(self.arg_offsets, dtype=np.intp),
                np.asarray(self.arg_ids, dtype=np.intp),
                np.asarray(self.arg_partials, dtype=np.float64),
                np.asarray(self.arg_partials_tan, dtype=np.float64) if self.dual else None,
                np.asarray(self.input_ids, dtype=np.intp),
                np.asarray(self.output_ids, dtype=np.intp),
            )
            self._frozen_n = n
        return self._frozen


def record(tape, op_kind, operand_ids, value, local_partials):
    """Append a node explicitly; the raw form of what the Scalar ops do.

    Raises StructureError for unknown operand ids or arity mismatch and
    NonFiniteError when the value or a partial is not finite.  Raw nodes
    carry no re-evaluation semantics, so tapes holding them cannot back a
    CachedTape.
    """
    if isinstance(op_kind, str):
        op_kind = OpKind[op_kind.upper()]
    op_kind = OpKind(op_kind)
    operand_ids = tuple(int(i) for i in operand_ids)
    n = len(tape)
    for i in operand_ids:
        if not 0 <= i < n:
            raise StructureError(f"operand id {i} does not exist on this tape")
    local_partials = tuple(float(p) for p in local_partials)
    if len(local_partials) != len(operand_ids):
        raise StructureError("one local partial per operand is required")
    code = int(op_kind) if op_kind in (OpKind.CONSTANT, OpKind.INPUT) \
        else int(op_kind) | _VRAW
    return tape._append(code, operand_ids, float(value), local_partials)


class Scalar:
    """A value on a tape; arithmetic on it records nodes.

    In dual mode the scalar also carries a tangent (the directional
    derivative of its value along the recording's tangent seed).
    """

    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape.values[self.idx]

    @property
    def tangent(self):
        return self.tape.values_tan[self.idx] if self.tape.dual else None

    def __repr__(self):
        if self.tape.dual:
            return f"Scalar({self.value!r}, tangent={self.tangent!r})"
        return f"Scalar({self.value!r})"

    def _peer(self, other):
        if isinstance(other, Scalar):
            if other.tape is not self.tape:
                raise StructureError("operands live on different tapes")
            return other
        return None

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        t = self.tape
        o = self._peer(other)
        if o is not None:
            if t.dual:
                i = t._append(_ADD2, (self.idx, o.idx), self.value + o.value,
                              (1.0, 1.0), 0.0, self.tangent + o.tangent, (0.0, 0.0))
            else:
                i = t._append(_ADD2, (self.idx, o.idx), self.value + o.value, (1.0, 1.0))
        elif isinstance(other, _NUMBER):
            c = float(other)
            if t.dual:
                i = t._append(_ADD1, (self.idx,), self.value + c, (1.0,), c,
                              self.tangent, (0.0,))
            else:
                i = t._append(_ADD1, (self.idx,), self.value + c, (1.0,), c)
        else:
            return NotImplemented
        return Scalar(t, i)

    __radd__ = __add__

    def __sub__(self, other):
        t = self.tape
        o = self._peer(other)
        if o is not None:
            if t.dual:
                i = t._append(_SUB2, (self.idx, o.idx), self.value - o.value,
                              (1.0, -1.0), 0.0, self.tangent - o.tangent, (0.0, 0.0))
            else:
                i = t._append(_SUB2, (self.idx, o.idx), self.value - o.value, (1.0, -1.0))
        elif isinstance(other, _NUMBER):
            c = float(other)
            if t.dual:
                i = t._append(_SUB1, (self.idx,), self.value - c, (1.0,), c,
                              self.tangent, (0.0,))
            else:
                i = t._append(_SUB1, (self.idx,), self.value - c, (1.0,), c)
        else:
            return NotImplemented
        return Scalar(t, i)

    def __rsub__(self, other):
        if not isinstance(other, _NUMBER):
            return NotImplemented
        t = self.tape
        c = float(other)
        if t.dual:
            i = t._append(_RSUB1, (self.idx,), c - self.value, (-1.0,), c,
                          -self.tangent, (0.0,))
        else:
            i = t._append(_RSUB1, (self.idx,), c - self.value, (-1.0,), c)
        return Scalar(t, i)

    def __mul__(self, other):
        t = self.tape
        o = self._peer(other)
        if o is not None:
            av, bv = self.value, o.value
            if t.dual:
                at, bt = self.tangent, o.tangent
                i = t._append(_MUL2, (self.idx, o.idx), av * bv, (bv, av), 0.0,
                              at * bv + av * bt, (bt, at))
            else:
                i = t._append(_MUL2, (self.idx, o.idx), av * bv, (bv, av))
        elif isinstance(other, _NUMBER):
            c = float(other)
            if t.dual:
                i = t._append(_MUL1, (self.idx,), self.value * c, (c,), c,
                              self.tangent * c, (0.0,))
            else:
                i = t._append(_MUL1, (self.idx,), self.value * c, (c,), c)
        else:
            return NotImplemented
        return Scalar(t, i)

    __rmul__ = __mul__

    def __truediv__(self, other):
        t = self.tape
        o = self._peer(other)
        if o is not None:
            av, bv = self.value, o.value
            try:
                v = av / bv
                p1 = 1.0 / bv
                p2 = -av / (bv * bv)
            except ZeroDivisionError:
                raise NonFiniteError(len(t)) from None
            if t.dual:
                at, bt = self.tangent, o.tangent
                vt = at * p1 + p2 * bt
                p1t = -bt / (bv * bv)
                p2t = -at / (bv * bv) + 2.0 * av * bt / (bv * bv * bv)
                i = t._append(_DIV2, (self.idx, o.idx), v, (p1, p2), 0.0, vt, (p1t, p2t))
            else:
                i = t._append(_DIV2, (self.idx, o.idx), v, (p1, p2))
        elif isinstance(other, _NUMBER):
            try:
                c = 1.0 / float(other)
            except ZeroDivisionError:
                raise NonFiniteError(len(t)) from None
            if t.dual:
                i = t._append(_MUL1, (self.idx,), self.value * c, (c,), c,
                              self.tangent * c, (0.0,))
            else:
                i = t._append(_MUL1, (self.idx,), self.value * c, (c,), c)
        else:
            return NotImplemented
        return Scalar(t, i)

    def __rtruediv__(self, other):
        if not isinstance(other, _NUMBER):
            return NotImplemented
        t = self.tape
        av = self.value
        c = float(other)
        try:
            v = c / av
            p = -c / (av * av)
        except ZeroDivisionError:
            raise NonFiniteError(len(t)) from None
        if t.dual:
            at = self.tangent
            i = t._append(_RDIV1, (self.idx,), v, (p,), c,
                          p * at, (2.0 * c * at / (av * av * av),))
        else:
            i = t._append(_RDIV1, (self.idx,), v, (p,), c)
        return Scalar(t, i)

    def __neg__(self):
        t = self.tape
        if t.dual:
            i = t._append(_NEG, (self.idx,), -self.value, (-1.0,), 0.0,
                          -self.tangent, (0.0,))
        else:
            i = t._append(_NEG, (self.idx,), -self.value, (-1.0,))
        return Scalar(t, i)

    def __pow__(self, other):
        t = self.tape
        o = self._peer(other)
        av = self.value
        if o is not None:
            bv = o.value
            try:
                v = av ** bv
                lg = math.log(av)
                p1 = bv * av ** (bv - 1.0)
                p2 = v * lg
            except (ValueError, OverflowError, ZeroDivisionError):
                raise NonFiniteError(len(t)) from None
            if t.dual:
                at, bt = self.tangent, o.tangent
                vt = p1 * at + p2 * bt
                p1t = bt * av ** (bv - 1.0) + p1 * (bt * lg + (bv - 1.0) * at / av)
                p2t = vt * lg + av ** (bv - 1.0) * at
                i = t._append(_POW2, (self.idx, o.idx), v, (p1, p2), 0.0, vt, (p1t, p2t))
            else:
                i = t._append(_POW2, (self.idx, o.idx), v, (p1, p2))
        elif isinstance(other, _NUMBER):
            p = float(other)
            try:
                v = av ** p
                d = p * av ** (p - 1.0) if p != 0.0 else 0.0
            except (ValueError, OverflowError, ZeroDivisionError):
                raise NonFiniteError(len(t)) from None
            if t.dual:
                at = self.tangent
                try:
                    dd = p * (p - 1.0) * av ** (p - 2.0) if p not in (0.0, 1.0) else 0.0
                except (ValueError, OverflowError, ZeroDivisionError):
                    raise NonFiniteError(len(t)) from None
                i = t._append(_POW1, (self.idx,), v, (d,), p, d * at, (dd * at,))
            else:
                i = t._append(_POW1, (self.idx,), v, (d,), p)
        else:
            return NotImplemented
        return Scalar(t, i)

    def __rpow__(self, other):
        if not isinstance(other, _NUMBER):
            return NotImplemented
        t = self.tape
        c = float(other)
        wv = self.value
        try:
            lg = math.log(c)
            v = c ** wv
            p = v * lg
        except (ValueError, OverflowError, ZeroDivisionError):
            raise NonFiniteError(len(t)) from None
        if t.dual:
            wt = self.tangent
            i = t._append(_RPOW1, (self.idx,), v, (p,), lg, p * wt, (p * lg * wt,))
        else:
            i = t._append(_RPOW1, (self.idx,), v, (p,), lg)
        return Scalar(t, i)


def _unary(x, code, fv, fp, fpt):
    t = x.tape
    av = x.value
    try:
        v = fv(av)
        p = fp(av, v)
    except (ValueError, OverflowError, ZeroDivisionError):
        raise NonFiniteError(len(t)) from None
    if t.dual:
        at = x.tangent
        i = t._append(code, (x.idx,), v, (p,), 0.0, p * at, (fpt(av, v, at),))
    else:
        i = t._append(code, (x.idx,), v, (p,))
    return Scalar(t, i)


def exp(x):
    if isinstance(x, Scalar):
        return _unary(x, _EXP, math.exp, lambda a, v: v, lambda a, v, at: v * at)
    return math.exp(x)


def log(x):
    if isinstance(x, Scalar):
        return _unary(x, _LOG, math.log, lambda a, v: 1.0 / a,
                      lambda a, v, at: -at / (a * a))
    return math.log(x)


def sin(x):
    if isinstance(x, Scalar):
        return _unary(x, _SIN, math.sin, lambda a, v: math.cos(a),
                      lambda a, v, at: -v * at)
    return math.sin(x)


def cos(x):
    if isinstance(x, Scalar):
        return _unary(x, _COS, math.cos, lambda a, v: -math.sin(a),
                      lambda a, v, at: -v * at)
    return math.cos(x)


def record_program(fn, *arg_vectors, tangents=None):
    """Run ``fn`` over fresh Scalar inputs and return the recorded tape.

    ``fn`` receives one list of Scalars per argument vector and returns a
    Scalar or a sequence of Scalars (plain numbers are lifted to constants).
    Passing ``tangents`` (one seed vector per argument, or None entries)
    records in dual mode with those tangent seeds.
    """
    dual = tangents is not None
    tape = Tape(dual=dual)
    if tangents is None:
        tangents = (None,) * len(arg_vectors)
    if len(tangents) != len(arg_vectors):
        raise StructureError("one tangent seed group per argument group")
    groups = [tape.add_inputs(vec, tan if dual else None)
              for vec, tan in zip(arg_vectors, tangents)]
    tape.mark_outputs(fn(*groups))
    return tape


# -- sweeps ----------------------------------------------------------------

def forward_sweep(tape, input_tangents):
    """Propagate input tangents through the tape: returns J·v."""
    off, ids, par, _, in_ids, out_ids = tape._arrays()
    v = np.asarray(input_tangents, dtype=float).ravel()
    if v.shape[0] != in_ids.shape[0]:
        raise StructureError(f"expected {in_ids.shape[0]} input tangents, got {v.shape[0]}")
    state = np.zeros(len(tape))
    state[in_ids] = v
    _SWEEPS["forward"] += 1
    bad = backend.get_kernels().forward_real(off, ids, par, state)
    if bad >= 0:
        raise NonFiniteError(int(bad), "forward sweep produced a non-finite tangent")
    return state[out_ids].copy()


def reverse_sweep(tape, output_cotangents):
    """Propagate output cotangents back through the tape: returns Jᵀ·α."""
    off, ids, par, _, in_ids, out_ids = tape._arrays()
    a = np.asarray(output_cotangents, dtype=float).ravel()
    if a.shape[0] != out_ids.shape[0]:
        raise StructureError(f"expected {out_ids.shape[0]} output cotangents, got {a.shape[0]}")
    state = np.zeros(len(tape))
    np.add.at(state, out_ids, a)
    _SWEEPS["reverse"] += 1
    bad = backend.get_kernels().reverse_real(off, ids, par, state)
    if bad >= 0:
        raise NonFiniteError(int(bad), "reverse sweep produced a non-finite cotangent")
    return state[in_ids].copy()


def reverse_sweep_dual(tape, output_cotangents, output_cotangents_tan=None):
    """Reverse sweep over a dual tape; returns (Jᵀ·α, tangent of Jᵀ·α).

    The tangent component is the directional derivative of the cotangent
    result along the tape's recorded tangent seed, i.e. a Hessian-vector
    contraction for scalar outputs.
    """
    if not tape.dual:
        raise StructureError("tape was not recorded in dual mode")
    off, ids, par, par_t, in_ids, out_ids = tape._arrays()
    a = np.asarray(output_cotangents, dtype=float).ravel()
    if a.shape[0] != out_ids.shape[0]:
        raise StructureError(f"expected {out_ids.shape[0]} output cotangents, got {a.shape[0]}")
    state = np.zeros(len(tape))
    state_tan = np.zeros(len(tape))
    np.add.at(state, out_ids, a)
    if output_cotangents_tan is not None:
        at = np.asarray(output_cotangents_tan, dtype=float).ravel()
        np.add.at(state_tan, out_ids, at)
    _SWEEPS["reverse"] += 1
    bad = backend.get_kernels().reverse_dual(off, ids, par, par_t, state, state_tan)
    if bad >= 0:
        raise NonFiniteError(int(bad), "reverse sweep produced a non-finite cotangent")
    return state[in_ids].copy(), state_tan[in_ids].copy()


class CachedTape:
    """A recorded program re-evaluated at new inputs without re-recording.

    ``refresh`` writes fresh input values and recomputes every node value
    and local partial in one compiled pass; ``forward``/``reverse`` then
    sweep at the refreshed point.  Valid only for programs whose structure
    does not depend on input values (no data-dependent branching), which is
    the contract integrator right-hand sides opt into.
    """

    __slots__ = ("codes", "offsets", "ids", "aux", "values", "partials",
                 "input_ids", "output_ids", "input_slices", "n")

    def __init__(self, tape):
        if tape.dual:
            raise StructureError("dual tapes cannot back a CachedTape")
        self.codes = np.asarray(tape.op_codes, dtype=np.intp)
        if np.any((self.codes >> 4) == 15):
            raise StructureError("tape holds raw nodes without refresh semantics")
        self.offsets = np.asarray(tape.arg_offsets, dtype=np.intp)
        self.ids = np.asarray(tape.arg_ids, dtype=np.intp)
        self.aux = np.asarray(tape.aux, dtype=np.float64)
        self.values = np.asarray(tape.values, dtype=np.float64).copy()
        self.partials = np.asarray(tape.arg_partials, dtype=np.float64).copy()
        self.input_ids = np.asarray(tape.input_ids, dtype=np.intp)
        self.output_ids = np.asarray(tape.output_ids, dtype=np.intp)
        self.input_slices = list(tape.input_slices)
        self.n = len(tape)

    def refresh(self, input_values):
        """Re-evaluate at new inputs; returns the output values."""
        v = np.asarray(input_values, dtype=float).ravel()
        if v.shape[0] != self.input_ids.shape[0]:
            raise StructureError(
                f"expected {self.input_ids.shape[0]} input values, got {v.shape[0]}")
        self.values[self.input_ids] = v
        _SWEEPS["refresh"] += 1
        bad = backend.get_kernels().refresh_real(
            self.codes, self.offsets, self.ids, self.aux, self.values, self.partials)
        if bad >= 0:
            raise NonFiniteError(int(bad), "re-evaluation produced a non-finite value")
        return self.values[self.output_ids].copy()

    def forward(self, input_tangents):
        v = np.asarray(input_tangents, dtype=float).ravel()
        state = np.zeros(self.n)
        state[self.input_ids] = v
        _SWEEPS["forward"] += 1
        bad = backend.get_kernels().forward_real(self.offsets, self.ids,
                                                 self.partials, state)
        if bad >= 0:
            raise NonFiniteError(int(bad), "forward sweep produced a non-finite tangent")
        return state[self.output_ids].copy()

    def reverse(self, output_cotangents):
        a = np.asarray(output_cotangents, dtype=float).ravel()
        state = np.zeros(self.n)
        np.add.at(state, self.output_ids, a)
        _SWEEPS["reverse"] += 1
        bad = backend.get_kernels().reverse_real(self.offsets, self.ids,
                                                 self.partials, state)
        if bad >= 0:
            raise NonFiniteError(int(bad), "reverse sweep produced a non-finite cotangent")
        return state[self.input_ids].copy()


def jacobian(tape):
    """Full Jacobian of the recorded program, assembled with min(I, J) sweeps."""
    n_in, n_out = tape.n_inputs, tape.n_outputs
    out = np.empty((n_out, n_in))
    if n_in <= n_out:
        e = np.zeros(n_in)
        for i in range(n_in):
            e[i] = 1.0
            out[:, i] = forward_sweep(tape, e)
            e[i] = 0.0
    else:
        e = np.zeros(n_out)
        for j in range(n_out):
            e[j] = 1.0
            out[j, :] = reverse_sweep(tape, e)
            e[j] = 0.0
    return out


def hessian_vector(fn, x, v):
    """Hessian-vector product (∂²F/∂x²)·v of a scalar-output program."""
    x = np.asarray(x, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    tape = record_program(fn, x, tangents=(v,))
    if tape.n_outputs != 1:
        raise StructureError("hessian_vector requires a scalar-output program")
    _, hv = reverse_sweep_dual(tape, (1.0,))
    return hv


def gradient_and_hessian(fn, x):
    """(F(x), ∇F(x), ∂²F/∂x²) of a scalar-output program, column by column."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.shape[0]
    hess = np.empty((n, n))
    grad = None
    value = None
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        tape = record_program(fn, x, tangents=(e,))
        if tape.n_outputs != 1:
            raise StructureError("gradient_and_hessian requires a scalar-output program")
        g, hv = reverse_sweep_dual(tape, (1.0,))
        hess[:, j] = hv
        if grad is None:
            grad = g
            value = tape.output_values()[0]
        e[j] = 0.0
    if grad is None:  # zero-dimensional x
        tape = record_program(fn, x)
        value = tape.output_values()[0]
        grad = np.zeros(0)
    return value, grad, hess


def hessian_matrix(fn, x):
    return gradient_and_hessian(fn, x)[2]
