"""Dense real linear algebra for the implicit methods.

Everything here targets small systems (the registry never exceeds a few
dozen unknowns): LU with partial pivoting, plain and transposed solves, and
the one structured solver the implicit machinery actually derives, a
block-bidiagonal backward substitution.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularSystemError, StructureError

SINGULARITY_RTOL = 1e-14


def as_matrix(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise StructureError(f"expected a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise StructureError("matrix entries must be finite")
    return m


@dataclass
class LuFactors:
    """Packed L\\U factors of a row-permuted square matrix.

    ``lu[perm] == original``-reconstructable: rows of ``lu`` hold U on and
    above the diagonal and the unit-lower multipliers below it, and ``perm``
    maps factor rows back to original rows (original[perm] = L @ U).
    """

    lu: np.ndarray
    perm: np.ndarray
    singular: bool

    @property
    def n(self):
        return self.lu.shape[0]

    def reconstruct(self):
        """Multiply the factors back into the original matrix."""
        n = self.n
        lower = np.tril(self.lu, -1) + np.eye(n)
        upper = np.triu(self.lu)
        out = np.empty_like(self.lu)
        out[self.perm] = lower @ upper
        return out


def lu_factor(m):
    """PA = LU with partial (row) pivoting.

    The singular flag is set when any pivot magnitude falls below
    1e-14 times the largest entry magnitude of the input.
    """
    a = as_matrix(m).copy()
    n, nc = a.shape
    if n != nc:
        raise StructureError(f"matrix must be square, got {n}x{nc}")
    perm = np.arange(n)
    absmax = np.max(np.abs(a)) if n else 0.0
    threshold = SINGULARITY_RTOL * absmax
    singular = n > 0 and absmax == 0.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if p != k:
            a[[k, p]] = a[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        pivot = a[k, k]
        if abs(pivot) <= threshold:
            singular = True
            continue
        a[k + 1:, k] /= pivot
        a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
    return LuFactors(lu=a, perm=perm, singular=singular)


def lu_solve(factors, b, transposed=False):
    """Solve A·x = b (or Aᵀ·x = b) from packed LU factors.

    Raises SingularSystemError when the factorization flagged a singular
    matrix; implicit-function callers translate this into an
    implicit-function-undefined condition.
    """
    if factors.singular:
        raise SingularSystemError("matrix is numerically singular")
    lu, perm = factors.lu, factors.perm
    n = factors.n
    b = np.asarray(b, dtype=float).ravel()
    if b.shape[0] != n:
        raise StructureError(f"right-hand side has length {b.shape[0]}, expected {n}")
    if not transposed:
        # Ly = Pb (unit lower), then Ux = y.
        x = b[perm].copy()
        for i in range(1, n):
            x[i] -= lu[i, :i] @ x[:i]
        for i in range(n - 1, -1, -1):
            x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
        return x
    # Aᵀ = Uᵀ Lᵀ P, so solve Uᵀz = b, Lᵀw = z, then scatter through P.
    z = b.copy()
    for i in range(n):
        z[i] = (z[i] - lu[:i, i] @ z[:i]) / lu[i, i]
    for i in range(n - 2, -1, -1):
        z[i] -= lu[i + 1:, i] @ z[i + 1:]
    x = np.empty(n)
    x[perm] = z
    return x


def solve(m, b, transposed=False):
    """Factor-and-solve convenience for one-shot systems."""
    return lu_solve(lu_factor(m), b, transposed=transposed)


def block_bidiagonal_solve(diag_blocks, off_blocks, rhs):
    """Backward substitution for x_i + O_i·x_{i+1} = b_i, x_I = b_I.

    ``off_blocks`` holds the I-1 superdiagonal N×N blocks O_i; the diagonal
    blocks must be identities (pass None, or explicit identity blocks).
    Runs in O(I·N²) and matches the dense solve of the assembled system.
    """
    rhs = np.asarray(rhs, dtype=float).ravel()
    off = [as_matrix(b) for b in off_blocks]
    count = len(off) + 1
    n = off[0].shape[0] if off else rhs.shape[0] // max(count, 1)
    if rhs.shape[0] != count * n:
        raise StructureError(
            f"right-hand side has length {rhs.shape[0]}, expected {count * n}")
    for b in off:
        if b.shape != (n, n):
            raise StructureError("all off-diagonal blocks must be N x N")
    if diag_blocks is not None:
        eye = np.eye(n)
        for d in diag_blocks:
            if not np.allclose(as_matrix(d), eye, rtol=0.0, atol=1e-12):
                raise StructureError("diagonal blocks must be identity")
    x = rhs.copy().reshape(count, n)
    for i in range(count - 2, -1, -1):
        x[i] -= off[i] @ x[i + 1]
    return x.ravel()
