# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sweep kernels; see _sweeppy.py for the contract they implement."""

from libc.math cimport cos, exp, isfinite, log, pow, sin


cdef inline Py_ssize_t _first_nonfinite(double[::1] values) nogil:
    cdef Py_ssize_t i
    for i in range(values.shape[0]):
        if not isfinite(values[i]):
            return i
    return -1


def forward_real(Py_ssize_t[::1] offsets, Py_ssize_t[::1] ids,
                 double[::1] partials, double[::1] state):
    cdef Py_ssize_t i, k, lo, hi
    cdef double acc
    with nogil:
        for i in range(offsets.shape[0] - 1):
            lo = offsets[i]
            hi = offsets[i + 1]
            if hi > lo:
                acc = 0.0
                for k in range(lo, hi):
                    acc += partials[k] * state[ids[k]]
                state[i] = acc
        i = _first_nonfinite(state)
    return i


def reverse_real(Py_ssize_t[::1] offsets, Py_ssize_t[::1] ids,
                 double[::1] partials, double[::1] state):
    cdef Py_ssize_t i, k
    cdef double a
    with nogil:
        for i in range(offsets.shape[0] - 2, -1, -1):
            a = state[i]
            if a != 0.0:
                for k in range(offsets[i], offsets[i + 1]):
                    state[ids[k]] += partials[k] * a
        i = _first_nonfinite(state)
    return i


def refresh_real(Py_ssize_t[::1] codes, Py_ssize_t[::1] offsets,
                 Py_ssize_t[::1] ids, double[::1] aux,
                 double[::1] values, double[::1] partials):
    cdef Py_ssize_t i, lo, c, bad
    cdef double u, w, v, lg, p
    bad = -1
    with nogil:
        for i in range(codes.shape[0]):
            c = codes[i]
            if c == 10 or c == 11:  # constant, input
                continue
            lo = offsets[i]
            u = values[ids[lo]]
            if c == 0:  # add
                values[i] = u + values[ids[lo + 1]]
            elif c == 16:  # add constant
                values[i] = u + aux[i]
            elif c == 1:  # sub
                values[i] = u - values[ids[lo + 1]]
            elif c == 17:  # sub constant
                values[i] = u - aux[i]
            elif c == 33:  # constant minus node
                values[i] = aux[i] - u
            elif c == 2:  # mul
                w = values[ids[lo + 1]]
                values[i] = u * w
                partials[lo] = w
                partials[lo + 1] = u
            elif c == 18:  # scale by constant
                values[i] = u * aux[i]
            elif c == 3:  # div
                w = values[ids[lo + 1]]
                v = u / w
                values[i] = v
                partials[lo] = 1.0 / w
                partials[lo + 1] = -v / w
            elif c == 35:  # constant over node
                v = aux[i] / u
                values[i] = v
                partials[lo] = -v / u
            elif c == 4:  # neg
                values[i] = -u
            elif c == 5:  # exp
                v = exp(u)
                values[i] = v
                partials[lo] = v
            elif c == 6:  # log
                values[i] = log(u)
                partials[lo] = 1.0 / u
            elif c == 7:  # sin
                values[i] = sin(u)
                partials[lo] = cos(u)
            elif c == 8:  # cos
                values[i] = cos(u)
                partials[lo] = -sin(u)
            elif c == 9:  # pow, node exponent
                w = values[ids[lo + 1]]
                v = pow(u, w)
                lg = log(u)
                values[i] = v
                partials[lo] = w * pow(u, w - 1.0)
                partials[lo + 1] = v * lg
            elif c == 25:  # pow, constant exponent in aux
                p = aux[i]
                values[i] = pow(u, p)
                partials[lo] = p * pow(u, p - 1.0) if p != 0.0 else 0.0
            elif c == 41:  # constant base, aux holds log(base)
                v = exp(u * aux[i])
                values[i] = v
                partials[lo] = v * aux[i]
            else:
                bad = i  # raw or unknown node: no refresh semantics
                break
            if not isfinite(values[i]):
                bad = i
                break
    return bad


def forward_dual(Py_ssize_t[::1] offsets, Py_ssize_t[::1] ids,
                 double[::1] partials, double[::1] partials_tan,
                 double[::1] state, double[::1] state_tan):
    cdef Py_ssize_t i, k, j, lo, hi
    cdef double acc, acc_t
    with nogil:
        for i in range(offsets.shape[0] - 1):
            lo = offsets[i]
            hi = offsets[i + 1]
            if hi > lo:
                acc = 0.0
                acc_t = 0.0
                for k in range(lo, hi):
                    j = ids[k]
                    acc += partials[k] * state[j]
                    acc_t += partials[k] * state_tan[j] + partials_tan[k] * state[j]
                state[i] = acc
                state_tan[i] = acc_t
        i = _first_nonfinite(state)
        if i < 0:
            i = _first_nonfinite(state_tan)
    return i


def reverse_dual(Py_ssize_t[::1] offsets, Py_ssize_t[::1] ids,
                 double[::1] partials, double[::1] partials_tan,
                 double[::1] state, double[::1] state_tan):
    cdef Py_ssize_t i, k, j
    cdef double a, at
    with nogil:
        for i in range(offsets.shape[0] - 2, -1, -1):
            a = state[i]
            at = state_tan[i]
            if a != 0.0 or at != 0.0:
                for k in range(offsets[i], offsets[i + 1]):
                    j = ids[k]
                    state[j] += partials[k] * a
                    state_tan[j] += partials[k] * at + partials_tan[k] * a
        i = _first_nonfinite(state)
        if i < 0:
            i = _first_nonfinite(state_tan)
    return i
