"""Masked indexing, small SPD solves, eigenvalue extremes, subset enumeration.

Coordinate indices are 0-based internally.  All user-facing I/O (configs,
trace files) converts to 1-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

#: Hard default on the number of subsets any exact enumeration may visit.
DEFAULT_ENUMERATION_BUDGET = 2_000_000

SYMMETRY_RTOL = 1e-12


class InvalidSetError(ValueError):
    pass


class NotPositiveDefiniteError(ValueError):
    pass


class EnumerationTooLargeError(ValueError):
    """Raised when C(n, tau) exceeds the enumeration budget."""


@dataclass(frozen=True)
class CoordSet:
    """A non-empty, strictly increasing set of coordinate indices in [0, n)."""

    indices: tuple[int, ...]
    ambient_dim: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) == 0:
            raise InvalidSetError("coordinate set must be non-empty")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidSetError(f"indices must be strictly increasing: {idx}")
        if idx[0] < 0 or idx[-1] >= self.ambient_dim:
            raise InvalidSetError(
                f"indices {idx} out of range for dimension {self.ambient_dim}"
            )

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=np.intp)

    def is_full(self) -> bool:
        return len(self.indices) == self.ambient_dim

    @staticmethod
    def full(n: int) -> "CoordSet":
        return CoordSet(tuple(range(n)), n)

    def one_based(self) -> tuple[int, ...]:
        return tuple(i + 1 for i in self.indices)

    @staticmethod
    def from_one_based(indices, n: int) -> "CoordSet":
        return CoordSet(tuple(sorted(int(i) - 1 for i in indices)), n)


def check_symmetric(M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric to within tolerance")
    return M


def mask_vector(x: np.ndarray, S: CoordSet) -> np.ndarray:
    """Entries of x with indices in S, as a dense |S|-vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (S.ambient_dim,):
        raise InvalidSetError(
            f"vector of dim {x.shape} does not match ambient dim {S.ambient_dim}"
        )
    return x[S.array]


def embed_vector(u: np.ndarray, S: CoordSet, n: int) -> np.ndarray:
    """Scatter u onto the support S of an n-vector, zeros elsewhere."""
    u = np.asarray(u, dtype=float)
    if n != S.ambient_dim:
        raise InvalidSetError(f"dimension {n} does not match set ambient dim")
    if u.shape != (len(S),):
        raise InvalidSetError(f"payload of length {u.shape} does not match |S|={len(S)}")
    out = np.zeros(n)
    out[S.array] = u
    return out


def principal_submatrix(M: np.ndarray, S: CoordSet) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (S.ambient_dim, S.ambient_dim):
        raise InvalidSetError("matrix shape does not match set ambient dim")
    idx = S.array
    return M[np.ix_(idx, idx)]


def spd_factor(M: np.ndarray):
    """Cholesky-class factorization; failure means not positive definite."""
    try:
        return scipy.linalg.cho_factor(np.asarray(M, dtype=float), lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc


def solve_spd(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return scipy.linalg.cho_solve(spd_factor(M), np.asarray(rhs, dtype=float))


def is_spd(M: np.ndarray) -> bool:
    try:
        spd_factor(M)
        return True
    except NotPositiveDefiniteError:
        return False


def eig_extremes(M: np.ndarray) -> tuple[float, float]:
    """(lambda_min, lambda_max) of a symmetric matrix."""
    w = np.linalg.eigvalsh(check_symmetric(M))
    return float(w[0]), float(w[-1])


def subset_count(n: int, tau: int) -> int:
    return math.comb(n, tau)


def enumerate_subsets(n: int, tau: int, budget: int = DEFAULT_ENUMERATION_BUDGET):
    """Yield every cardinality-tau CoordSet in lexicographic order."""
    if not 1 <= tau <= n:
        raise InvalidSetError(f"need 1 <= tau <= n, got tau={tau}, n={n}")
    count = subset_count(n, tau)
    if count > budget:
        raise EnumerationTooLargeError(
            f"C({n},{tau}) = {count} exceeds enumeration budget {budget}"
        )
    for combo in itertools.combinations(range(n), tau):
        yield CoordSet(combo, n)
