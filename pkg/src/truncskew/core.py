"""Dense symmetric-matrix algebra and index calculus shared by all modules.

Symmetric matrices are plain ``numpy`` arrays validated by the helpers here;
all functions are pure and never mutate their inputs.  Coordinate indices are
0-based throughout the library.
"""

from dataclasses import dataclass

import numpy as np

from .config import settings
from .errors import (
    DimensionMismatchError,
    IndexOutOfRangeError,
    NotPSDError,
    SingularBlockError,
)

__all__ = [
    "PartitionIndex",
    "as_vector",
    "as_sym_matrix",
    "symmetrize",
    "sym_sqrt",
    "sym_inv_sqrt",
    "delete_index",
    "delete_row_col",
    "row_without",
    "conditional_normal",
    "is_psd",
]


def as_vector(v, dim: int | None = None) -> np.ndarray:
    """Coerce to a float 1-d array, optionally checking its length."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"expected a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatchError(f"expected length {dim}, got {arr.shape[0]}")
    return arr


def as_sym_matrix(S, dim: int | None = None, *, tol: float = 1e-8) -> np.ndarray:
    """Coerce to a float symmetric 2-d array (scalars become 1x1).

    Raises if the input is not square or departs from symmetry by more
    than ``tol`` relative to its largest entry; small asymmetries are
    averaged away so downstream code sees exact symmetry.
    """
    arr = np.asarray(S, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {arr.shape[0]}")
    if arr.size == 0:
        return arr
    scale = max(1.0, float(np.max(np.abs(arr))))
    if np.max(np.abs(arr - arr.T)) > tol * scale:
        raise DimensionMismatchError("matrix is not symmetric")
    return symmetrize(arr)


def symmetrize(S: np.ndarray) -> np.ndarray:
    """Exactly symmetric copy, averaging with the transpose."""
    return 0.5 * (S + S.T)


@dataclass(frozen=True)
class PartitionIndex:
    """Complementary index lists splitting ``{0, ..., dim-1}``.

    ``kept`` are the coordinates that survive, ``removed`` the ones deleted
    or conditioned on.  Both are strictly increasing and disjoint.
    """

    kept: tuple[int, ...]
    removed: tuple[int, ...]

    def __post_init__(self):
        kept = tuple(int(i) for i in self.kept)
        removed = tuple(int(i) for i in self.removed)
        object.__setattr__(self, "kept", kept)
        object.__setattr__(self, "removed", removed)
        both = kept + removed
        if sorted(both) != list(range(len(both))):
            raise IndexOutOfRangeError(
                f"kept {kept} and removed {removed} do not partition a range"
            )
        if list(kept) != sorted(kept) or list(removed) != sorted(removed):
            raise IndexOutOfRangeError("partition lists must be strictly increasing")

    @property
    def dim(self) -> int:
        return len(self.kept) + len(self.removed)

    @classmethod
    def dropping(cls, dim: int, removed) -> "PartitionIndex":
        removed = tuple(sorted(int(i) for i in removed))
        for i in removed:
            if not 0 <= i < dim:
                raise IndexOutOfRangeError(f"index {i} out of range for dim {dim}")
        kept = tuple(i for i in range(dim) if i not in removed)
        return cls(kept=kept, removed=removed)


def _check_index(i: int, dim: int) -> int:
    i = int(i)
    if not 0 <= i < dim:
        raise IndexOutOfRangeError(f"index {i} out of range for dim {dim}")
    return i


def delete_index(v, i: int) -> np.ndarray:
    """Vector with entry ``i`` removed."""
    arr = as_vector(v)
    return np.delete(arr, _check_index(i, arr.shape[0]))


def delete_row_col(S, i: int, j: int) -> np.ndarray:
    """Matrix with row ``i`` and column ``j`` removed."""
    arr = np.asarray(S, dtype=float)
    i = _check_index(i, arr.shape[0])
    j = _check_index(j, arr.shape[1])
    return np.delete(np.delete(arr, i, axis=0), j, axis=1)


def row_without(S, i: int, j: int) -> np.ndarray:
    """Row ``i`` of the matrix with its ``j``-th entry removed."""
    arr = np.asarray(S, dtype=float)
    i = _check_index(i, arr.shape[0])
    j = _check_index(j, arr.shape[1])
    return np.delete(arr[i, :], j)


def is_psd(S: np.ndarray, rel_tol: float | None = None) -> bool:
    """True when the smallest eigenvalue is above ``-rel_tol * largest``."""
    rel_tol = settings.psd_rel_tol if rel_tol is None else rel_tol
    w = np.linalg.eigvalsh(symmetrize(np.asarray(S, dtype=float)))
    wmax = max(float(w[-1]), 0.0)
    return float(w[0]) >= -rel_tol * max(wmax, 1e-300)


def sym_sqrt(S) -> np.ndarray:
    """Unique symmetric PSD square root, by eigendecomposition.

    Eigenvalues within the PSD tolerance of zero are clamped to zero so that
    nearly singular scale matrices remain usable; a genuinely indefinite
    input raises :class:`NotPSDError`.
    """
    S = as_sym_matrix(S)
    w, V = np.linalg.eigh(S)
    wmax = max(float(w[-1]), 0.0)
    if float(w[0]) < -settings.psd_rel_tol * max(wmax, 1e-300):
        raise NotPSDError(f"matrix has eigenvalue {w[0]:.3e} (max {wmax:.3e})")
    w = np.clip(w, 0.0, None)
    return symmetrize((V * np.sqrt(w)) @ V.T)


def sym_inv_sqrt(S) -> np.ndarray:
    """Symmetric inverse square root of a positive definite matrix."""
    S = as_sym_matrix(S)
    w, V = np.linalg.eigh(S)
    if float(w[0]) <= 0.0:
        raise NotPSDError("matrix is not positive definite")
    return symmetrize((V / np.sqrt(w)) @ V.T)


def conditional_normal(mu, S, given: PartitionIndex, value) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the kept coordinates given the removed ones.

    For ``x ~ N(mu, S)`` partitioned by ``given``, returns the parameters of
    ``x[kept] | x[removed] = value``:

        mean = mu_1 + S_12 S_22^{-1} (value - mu_2)
        cov  = S_11 - S_12 S_22^{-1} S_21   (symmetrized)
    """
    mu = as_vector(mu)
    S = as_sym_matrix(S, dim=mu.shape[0])
    if given.dim != mu.shape[0]:
        raise DimensionMismatchError("partition does not match vector dimension")
    value = as_vector(value, dim=len(given.removed))
    k = list(given.kept)
    r = list(given.removed)
    if not r:
        return mu.copy(), S.copy()
    S22 = S[np.ix_(r, r)]
    if not k:
        return np.empty(0), np.empty((0, 0))
    if np.linalg.cond(S22) > settings.max_block_condition:
        raise SingularBlockError("conditioned-on block is numerically singular")
    S12 = S[np.ix_(k, r)]
    sol = np.linalg.solve(S22, np.column_stack([(value - mu[r]), S12.T.reshape(len(r), -1)]))
    mean = mu[k] + S12 @ sol[:, 0]
    cov = S[np.ix_(k, k)] - S12 @ sol[:, 1:]
    return mean, symmetrize(cov)
