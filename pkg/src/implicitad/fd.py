"""Central finite-difference oracle.

Used by the CLI gradient checks and throughout the test suite as the
independent route every derivative method is certified against.
"""

import numpy as np

DEFAULT_BASE_STEP = 1e-6


def central_jacobian(fn, x, base_step=None):
    """Jacobian of ``fn`` at ``x`` by central differences.

    The step for component i is ``base_step * max(1, |x_i|)`` (base defaults
    to 1e-6).  ``fn`` maps a 1-d array to a 1-d array and is re-evaluated
    from scratch at every perturbed point.
    """
    x = np.asarray(x, dtype=float).ravel()
    base = DEFAULT_BASE_STEP if base_step is None else float(base_step)
    f0 = np.asarray(fn(x), dtype=float).ravel()
    jac = np.empty((f0.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        h = base * max(1.0, abs(x[i]))
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        fp = np.asarray(fn(xp), dtype=float).ravel()
        fm = np.asarray(fn(xm), dtype=float).ravel()
        jac[:, i] = (fp - fm) / (2.0 * h)
    return jac


def central_gradient(fn, x, base_step=None):
    """Gradient of a scalar-valued ``fn`` by central differences."""
    return central_jacobian(lambda z: np.atleast_1d(fn(z)), x, base_step)[0]


def max_relative_error(got, want):
    """max_i |got_i - want_i| / max(1, |want_i|), the gradcheck metric."""
    got = np.asarray(got, dtype=float).ravel()
    want = np.asarray(want, dtype=float).ravel()
    denom = np.maximum(1.0, np.abs(want))
    return float(np.max(np.abs(got - want) / denom)) if got.size else 0.0
