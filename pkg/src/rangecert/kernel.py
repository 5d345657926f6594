"""Dense numerical primitives.

Every structured computation elsewhere in the package is cross-checked
against these routines.  They are thin, validated wrappers around LAPACK
(through :mod:`numpy.linalg`); the contract is the accuracy bound, not the
algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import tolerances
from .errors import DimensionMismatch, NonHermitian

EPS = np.finfo(float).eps


def as_dense(a) -> np.ndarray:
    """Validate ``a`` as a finite 2-D matrix and return it as complex128."""
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues in ascending order, optionally with orthonormal eigenvectors
    stored column-wise."""

    values: np.ndarray
    vectors: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.values)

    @property
    def min(self) -> float:
        return float(self.values[0])

    @property
    def max(self) -> float:
        return float(self.values[-1])


def hermitian_defect(h: np.ndarray) -> float:
    """Largest entry of ``|H - H*|`` relative to the largest entry of ``|H|``."""
    scale = np.max(np.abs(h)) if h.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(h - h.conj().T)) / scale)


def check_hermitian(h, rtol: Optional[float] = None) -> np.ndarray:
    h = as_dense(h)
    if h.shape[0] != h.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {h.shape}")
    if rtol is None:
        rtol = tolerances.tol(tolerances.HERMITIAN_RTOL)
    defect = hermitian_defect(h)
    if defect > rtol:
        raise NonHermitian(f"relative Hermitian defect {defect:.3e} exceeds {rtol:.1e}")
    return h


def eigh(h, vectors: bool = True) -> Spectrum:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    The input is symmetrized as ``(H + H*) / 2`` after the Hermitian check so
    that round-off asymmetry never leaks into the result.
    """
    h = check_hermitian(h)
    h = 0.5 * (h + h.conj().T)
    if h.shape[0] == 0:
        return Spectrum(np.zeros(0), np.zeros((0, 0), dtype=complex) if vectors else None)
    if vectors:
        w, v = np.linalg.eigh(h)
        return Spectrum(w, v)
    return Spectrum(np.linalg.eigvalsh(h))


def eigvalsh(h) -> np.ndarray:
    return eigh(h, vectors=False).values


def svd_values(a) -> np.ndarray:
    """Singular values in descending order (``min(rows, cols)`` of them)."""
    a = as_dense(a)
    if 0 in a.shape:
        return np.zeros(0)
    return np.linalg.svd(a, compute_uv=False)


def default_rank_tol(a: np.ndarray, sigma_max: Optional[float] = None) -> float:
    if sigma_max is None:
        s = svd_values(a)
        sigma_max = float(s[0]) if s.size else 0.0
    return tolerances.tol(max(a.shape) * EPS * sigma_max)


def numerical_rank(a, tol: Optional[float] = None) -> int:
    """Count of singular values strictly greater than ``tol``.

    The default tolerance is ``max(rows, cols) * eps * sigma_max``.
    """
    a = as_dense(a)
    if tol is not None and tol < 0:
        raise ValueError("rank tolerance must be nonnegative")
    s = svd_values(a)
    if s.size == 0:
        return 0
    if tol is None:
        tol = default_rank_tol(a, float(s[0]))
    return int(np.count_nonzero(s > tol))


def spectral_norm(a) -> float:
    s = svd_values(a)
    return float(s[0]) if s.size else 0.0


def row_space_basis(a, tol: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis (columns) of ``Ker(A)``'s orthogonal complement."""
    a = as_dense(a)
    if 0 in a.shape:
        return np.zeros((a.shape[1], 0), dtype=complex)
    _, s, vh = np.linalg.svd(a)
    if tol is None:
        tol = default_rank_tol(a, float(s[0]))
    r = int(np.count_nonzero(s > tol))
    return vh[:r].conj().T
