"""Dense symmetric matrix container and SPD solves.

The accumulated curvature matrices are small (a few hundred rows at most),
dense, and symmetric positive definite whenever any data plus ridge has
been folded in, so solves go through an unpivoted Cholesky factorization.
A factorization failure is reported with the index of the offending pivot
rather than silently falling back to a pivoted method.
"""

import numpy as np
from scipy.linalg import lapack

__all__ = ["SymMatrix", "SingularMatrixError", "add_outer", "solve_spd"]

_SYM_RTOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    """Cholesky failed: the leading minor at `pivot` is not positive."""

    def __init__(self, pivot, dim):
        self.pivot = pivot
        self.dim = dim
        super().__init__(
            f"matrix of dimension {dim} is not positive definite: "
            f"factorization failed at pivot index {pivot}"
        )


class SymMatrix:
    """Symmetric accumulator over a full (dim, dim) float64 array.

    Values are only changed through the accumulation helpers, which keep
    the array exactly symmetric.  Accumulation is single writer; reads of
    a matrix that is not being accumulated into are safe from any thread.
    """

    __slots__ = ("a",)

    def __init__(self, a):
        a = np.array(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square array, got shape {a.shape}")
        scale = np.abs(a).max() if a.size else 0.0
        if scale > 0 and np.abs(a - a.T).max() > _SYM_RTOL * scale:
            raise ValueError("array is not symmetric")
        # Exact symmetry from here on, whatever rounding the caller had.
        self.a = 0.5 * (a + a.T)

    @classmethod
    def zeros(cls, dim):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        m = cls.__new__(cls)
        m.a = np.zeros((dim, dim))
        return m

    @property
    def dim(self):
        return self.a.shape[0]

    def copy(self):
        m = SymMatrix.__new__(SymMatrix)
        m.a = self.a.copy()
        return m

    def add_sym(self, other):
        """Accumulate another symmetric matrix (SymMatrix or ndarray)."""
        b = other.a if isinstance(other, SymMatrix) else np.asarray(other)
        if b.shape != self.a.shape:
            raise ValueError(
                f"shape mismatch: {b.shape} vs {self.a.shape}"
            )
        self.a += 0.5 * (b + b.T)
        return self

    def to_lower(self):
        """Row major lower triangle (diagonal included) as a flat list."""
        idx = np.tril_indices(self.dim)
        return self.a[idx].tolist()

    @classmethod
    def from_lower(cls, values, dim):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (dim * (dim + 1) // 2,):
            raise ValueError(
                f"expected {dim * (dim + 1) // 2} lower triangle values, "
                f"got {values.shape}"
            )
        m = cls.__new__(cls)
        a = np.zeros((dim, dim))
        a[np.tril_indices(dim)] = values
        m.a = a + np.tril(a, -1).T
        return m

    def __repr__(self):
        return f"SymMatrix(dim={self.dim})"


def add_outer(acc, v, weight=1.0):
    """Accumulate weight * v v^T into acc and return acc.

    The update is exactly symmetric because v[i] * v[j] is computed the
    same way on both sides of the diagonal.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] != acc.dim:
        raise ValueError(
            f"v must be 1-d of length {acc.dim}, got shape {v.shape}"
        )
    acc.a += weight * np.outer(v, v)
    return acc


def _as_array(a):
    return a.a if isinstance(a, SymMatrix) else np.asarray(a, dtype=np.float64)


def solve_spd(a, rhs):
    """Solve a x = rhs for symmetric positive definite a.

    Raises SingularMatrixError naming the pivot index when the Cholesky
    factorization breaks down; there is no pivoted fallback.
    """
    arr = _as_array(a)
    rhs = np.asarray(rhs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if rhs.shape[0] != arr.shape[0]:
        raise ValueError(
            f"rhs has length {rhs.shape[0]}, expected {arr.shape[0]}"
        )
    c, info = lapack.dpotrf(arr, lower=1, overwrite_a=0)
    if info > 0:
        raise SingularMatrixError(pivot=info - 1, dim=arr.shape[0])
    if info < 0:
        raise ValueError(f"illegal value in argument {-info} of dpotrf")
    x, info = lapack.dpotrs(c, rhs, lower=1)
    if info != 0:
        raise ValueError(f"dpotrs failed with info={info}")
    return x
