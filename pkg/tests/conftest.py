import numpy as np
import pytest

from implicitad import cos, exp, log, sin

# Bounded op pool for random program generation: values stay O(1) for any
# depth, denominators stay away from zero, log/pow arguments stay positive.
_OPS = (
    lambda a, b: (a + b) * 0.5,
    lambda a, b: (a - b) * 0.5,
    lambda a, b: sin(a) * cos(b),
    lambda a, b: a * 0.5 + sin(b),
    lambda a, b: a / (b * b + 1.5),
    lambda a, b: exp(sin(a) * 0.8),
    lambda a, b: cos(a) * 0.7 - b * 0.25,
    lambda a, b: (a * 0.4) ** 2 + b * 0.1,
    lambda a, b: log(a * a + 1.2),
    lambda a, b: 2.0 ** (sin(a) * 0.5) - b * 0.3,
)


def random_program(rng, n_in, n_out, depth):
    """A fixed-structure program over one input group, drawn from ``rng``."""
    plan = [(int(rng.integers(len(_OPS))),
             int(rng.integers(n_in + d)),
             int(rng.integers(n_in + d)))
            for d in range(depth)]

    def fn(xs):
        pool = list(xs)
        for op, i, j in plan:
            pool.append(_OPS[op](pool[i], pool[j]))
        return pool[-n_out:]

    return fn


def random_polynomial_system(rng, n_in, n_out, curvature=0.1):
    """Mildly nonlinear constraint c(x, y) = A·y + eps·q(y²) - B·x - b with a
    well-conditioned linear part, built around a known root.

    Returns (constraint, x, y_root, y_start): c(x, y_root) = 0 exactly and
    Newton converges from y_start.
    """
    a = np.eye(n_out) + 0.3 * rng.normal(size=(n_out, n_out))
    b = rng.normal(size=(n_out, n_in))
    quad = rng.normal(size=(n_out, n_out)) * curvature
    x = rng.normal(size=n_in)
    y_root = 0.5 * rng.normal(size=n_out)
    c0 = a @ y_root + quad @ (y_root * y_root) - b @ x

    def constraint(xs, ys):
        out = []
        for r in range(n_out):
            acc = a[r, 0] * ys[0]
            for k in range(1, n_out):
                acc = acc + a[r, k] * ys[k]
            for k in range(n_out):
                acc = acc + quad[r, k] * (ys[k] * ys[k])
            for k in range(n_in):
                acc = acc - b[r, k] * xs[k]
            out.append(acc - c0[r])
        return out

    return constraint, x, y_root, y_root + 0.2 * rng.normal(size=n_out)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
