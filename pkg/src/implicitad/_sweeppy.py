"""Pure-Python sweep kernels.

Fallback twin of the compiled ``_sweepcore`` extension; identical signatures,
selected by :mod:`implicitad.backend` when the extension is unavailable.

All kernels operate in place on a flattened tape: ``offsets[i]:offsets[i+1]``
indexes the operands/partials of node ``i``, and ``state`` holds one scalar
per node (tangents for forward sweeps, adjoints for reverse sweeps).
Nodes without operands (inputs, constants) keep their pre-seeded values.

``refresh_real`` re-evaluates node values and local partials from the
internal opcodes after new input values were written, implementing the
CachedTape fast path.

Each kernel returns the index of the first node whose propagated value is
non-finite, or -1 when the sweep is clean.
"""

from math import cos, exp, isfinite, log, sin


def _first_nonfinite(values):
    for i, v in enumerate(values):
        if not isfinite(v):
            return i
    return -1


def forward_real(offsets, ids, partials, state):
    off = offsets.tolist()
    idl = ids.tolist()
    par = partials.tolist()
    st = state.tolist()
    for i in range(len(off) - 1):
        lo = off[i]
        hi = off[i + 1]
        if hi > lo:
            acc = 0.0
            for k in range(lo, hi):
                acc += par[k] * st[idl[k]]
            st[i] = acc
    state[:] = st
    return _first_nonfinite(st)


def reverse_real(offsets, ids, partials, state):
    off = offsets.tolist()
    idl = ids.tolist()
    par = partials.tolist()
    st = state.tolist()
    for i in range(len(off) - 2, -1, -1):
        a = st[i]
        if a != 0.0:
            for k in range(off[i], off[i + 1]):
                st[idl[k]] += par[k] * a
    state[:] = st
    return _first_nonfinite(st)


def forward_dual(offsets, ids, partials, partials_tan, state, state_tan):
    off = offsets.tolist()
    idl = ids.tolist()
    par = partials.tolist()
    ptn = partials_tan.tolist()
    st = state.tolist()
    tn = state_tan.tolist()
    for i in range(len(off) - 1):
        lo = off[i]
        hi = off[i + 1]
        if hi > lo:
            acc = 0.0
            acc_t = 0.0
            for k in range(lo, hi):
                j = idl[k]
                acc += par[k] * st[j]
                acc_t += par[k] * tn[j] + ptn[k] * st[j]
            st[i] = acc
            tn[i] = acc_t
    state[:] = st
    state_tan[:] = tn
    bad = _first_nonfinite(st)
    return bad if bad >= 0 else _first_nonfinite(tn)


def refresh_real(codes, offsets, ids, aux, values, partials):
    cd = codes.tolist()
    off = offsets.tolist()
    idl = ids.tolist()
    ax = aux.tolist()
    val = values.tolist()
    par = partials.tolist()
    for i in range(len(cd)):
        c = cd[i]
        if c == 10 or c == 11:  # constant, input
            continue
        lo = off[i]
        u = val[idl[lo]]
        if c == 0:  # add
            val[i] = u + val[idl[lo + 1]]
        elif c == 16:  # add constant
            val[i] = u + ax[i]
        elif c == 1:  # sub
            val[i] = u - val[idl[lo + 1]]
        elif c == 17:  # sub constant
            val[i] = u - ax[i]
        elif c == 33:  # constant minus node
            val[i] = ax[i] - u
        elif c == 2:  # mul
            w = val[idl[lo + 1]]
            val[i] = u * w
            par[lo] = w
            par[lo + 1] = u
        elif c == 18:  # scale by constant
            val[i] = u * ax[i]
        elif c == 3:  # div
            w = val[idl[lo + 1]]
            try:
                v = u / w
                par[lo] = 1.0 / w
            except ZeroDivisionError:
                return i
            val[i] = v
            par[lo + 1] = -v / w
        elif c == 35:  # constant over node
            try:
                v = ax[i] / u
                par[lo] = -v / u
            except ZeroDivisionError:
                return i
            val[i] = v
        elif c == 4:  # neg
            val[i] = -u
        elif c == 5:  # exp
            try:
                v = exp(u)
            except OverflowError:
                return i
            val[i] = v
            par[lo] = v
        elif c == 6:  # log
            try:
                val[i] = log(u)
                par[lo] = 1.0 / u
            except (ValueError, ZeroDivisionError):
                return i
        elif c == 7:  # sin
            val[i] = sin(u)
            par[lo] = cos(u)
        elif c == 8:  # cos
            val[i] = cos(u)
            par[lo] = -sin(u)
        elif c == 9:  # pow, node exponent
            w = val[idl[lo + 1]]
            try:
                v = u ** w
                lg = log(u)
                par[lo] = w * u ** (w - 1.0)
            except (ValueError, OverflowError, ZeroDivisionError):
                return i
            val[i] = v
            par[lo + 1] = v * lg
        elif c == 25:  # pow, constant exponent in aux
            p = ax[i]
            try:
                val[i] = u ** p
                par[lo] = p * u ** (p - 1.0) if p != 0.0 else 0.0
            except (ValueError, OverflowError, ZeroDivisionError):
                return i
        elif c == 41:  # constant base, aux holds log(base)
            try:
                v = exp(u * ax[i])
            except OverflowError:
                return i
            val[i] = v
            par[lo] = v * ax[i]
        else:
            return i  # raw or unknown node: no refresh semantics
        if not isfinite(val[i]):
            return i
    values[:] = val
    partials[:] = par
    return -1


def reverse_dual(offsets, ids, partials, partials_tan, state, state_tan):
    off = offsets.tolist()
    idl = ids.tolist()
    par = partials.tolist()
    ptn = partials_tan.tolist()
    st = state.tolist()
    tn = state_tan.tolist()
    for i in range(len(off) - 2, -1, -1):
        a = st[i]
        at = tn[i]
        if a != 0.0 or at != 0.0:
            for k in range(off[i], off[i + 1]):
                j = idl[k]
                st[j] += par[k] * a
                tn[j] += par[k] * at + ptn[k] * a
    state[:] = st
    state_tan[:] = tn
    bad = _first_nonfinite(st)
    return bad if bad >= 0 else _first_nonfinite(tn)
