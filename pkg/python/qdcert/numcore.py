"""
Small dense complex-matrix helpers used by every other module.

Matrices are plain two-dimensional numpy arrays of dtype complex128. A "hermitian" matrix is one whose entries
satisfy ``m[j, k] == conj(m[k, j])`` within :data:`HERMITIAN_TOLERANCE` relative to its largest entry. All
verdicts use the relative PSD rule: a hermitian matrix is PSD when its smallest eigenvalue is at least
``-tol * max(1, spectral radius)``.
"""

import logging
from typing import NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg

from qdcert import NumericalError

__all__ = [
    "DEFAULT_TOLERANCE",
    "EigReport",
    "as_hermitian",
    "as_matrix",
    "generalized_scale_bound",
    "herm_min_eig",
    "hermitize",
    "psd_inverse",
    "psd_sqrt",
    "psd_threshold",
    "spectral_norm",
]

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
HERMITIAN_TOLERANCE = 1e-12

# Scale bounds larger than this are reported as NONE.
_SCALE_BOUND_CAP = 1e14
_BISECTION_STEPS = 200


class EigReport(NamedTuple):
    """Spectrum of a hermitized matrix and its PSD verdict."""

    # Eigenvalues of (m + m*)/2 in ascending order.
    eigenvalues: np.ndarray

    min_eig: float

    psd: bool

    # The tolerance the verdict was computed with (before scaling by the spectral radius).
    tolerance: float

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))


def as_matrix(m) -> np.ndarray:
    """
    Convert ``m`` to a complex two-dimensional array.

    :raises NumericalError: if the matrix is empty or has non-finite entries.
    """
    a = np.array(m, dtype=np.complex128)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.size == 0:
        raise NumericalError(f"expected a non-empty matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericalError("matrix has non-finite entries")
    return a


def hermitize(m) -> np.ndarray:
    a = as_matrix(m)
    return (a + a.conj().T) / 2


def as_hermitian(m, rel_tol: float = HERMITIAN_TOLERANCE) -> np.ndarray:
    """
    Validate hermitian symmetry of a square matrix and return its hermitized copy.

    :raises NumericalError: if ``m`` is not square or not hermitian within ``rel_tol``.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise NumericalError(f"expected a square matrix, got shape {a.shape}")
    asymmetry = float(np.max(np.abs(a - a.conj().T)))
    scale = max(1.0, float(np.max(np.abs(a))))
    if asymmetry > rel_tol * scale:
        raise NumericalError(f"matrix is not hermitian: asymmetry {asymmetry:.3e} exceeds {rel_tol * scale:.3e}")
    return (a + a.conj().T) / 2


def psd_threshold(eigenvalues: np.ndarray, tol: float) -> float:
    radius = float(np.max(np.abs(eigenvalues))) if len(eigenvalues) else 0.0
    return tol * max(1.0, radius)


def herm_min_eig(m, tol: float = DEFAULT_TOLERANCE) -> EigReport:
    h = as_hermitian(m)
    eigenvalues = scipy.linalg.eigh(h, eigvals_only=True)
    min_eig = float(eigenvalues[0])
    return EigReport(
        eigenvalues=eigenvalues, min_eig=min_eig, psd=min_eig >= -psd_threshold(eigenvalues, tol), tolerance=tol
    )


def psd_sqrt(m, tol: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """
    Hermitian PSD square root of ``m``. Eigenvalues below the PSD threshold are clamped to 0.

    :raises NumericalError: if ``m`` is not PSD. The matrix chain turns this into a failure mode.
    """
    h = as_hermitian(m)
    eigenvalues, vectors = scipy.linalg.eigh(h)
    threshold = psd_threshold(eigenvalues, tol)
    if eigenvalues[0] < -threshold:
        raise NumericalError(f"matrix is not PSD: min eigenvalue {eigenvalues[0]:.3e}")
    roots = np.sqrt(np.where(eigenvalues > threshold, eigenvalues, 0.0))
    s = (vectors * roots) @ vectors.conj().T
    return (s + s.conj().T) / 2


def psd_inverse(m, cond_max: float, tol: float = DEFAULT_TOLERANCE) -> Tuple[np.ndarray, float]:
    """
    Inverse of a hermitian positive definite matrix through its eigendecomposition.

    :returns: the inverse and the condition number.
    :raises NumericalError: if the condition number exceeds ``cond_max`` or an eigenvalue is not positive.
    """
    h = as_hermitian(m)
    eigenvalues, vectors = scipy.linalg.eigh(h)
    largest = float(eigenvalues[-1])
    smallest = float(eigenvalues[0])
    if smallest <= 0 or largest <= 0:
        raise NumericalError(f"matrix is singular: min eigenvalue {smallest:.3e}")
    cond = largest / smallest
    if cond > cond_max:
        raise NumericalError(f"condition number {cond:.3e} exceeds {cond_max:.3e}")
    inverse = (vectors / eigenvalues) @ vectors.conj().T
    return (inverse + inverse.conj().T) / 2, cond


def spectral_norm(m) -> float:
    return float(np.linalg.norm(as_matrix(m), 2))


def generalized_scale_bound(g_num, g_den, tol: float = DEFAULT_TOLERANCE) -> Optional[float]:
    """
    Smallest C >= 0 with ``C * g_den - g_num`` PSD in the sense of :func:`herm_min_eig`, i.e. up to ``tol`` times
    the spectral radius of ``C * g_den - g_num``.

    The search starts from the generalized eigenvalues of the pencil restricted to the numerical range of
    ``g_den`` and is finished by bisection on the minimum eigenvalue, which is concave and non-decreasing in C.

    :returns: the bound, or None when ``g_num`` has a component outside the range of ``g_den``.
    :raises NumericalError: on a dimension mismatch.
    """
    num = as_hermitian(g_num)
    den = as_hermitian(g_den)
    if num.shape != den.shape:
        raise NumericalError(f"dimension mismatch: {num.shape} vs {den.shape}")

    den_values, den_vectors = scipy.linalg.eigh(den)
    num_values = scipy.linalg.eigh(num, eigvals_only=True)
    scale = max(1.0, float(np.max(np.abs(num_values))), float(np.max(np.abs(den_values))))
    slack = tol * scale

    def feasible(c: float) -> bool:
        return herm_min_eig(c * den - num, tol).psd

    if feasible(0.0):
        return 0.0

    keep = den_values > slack
    if not np.all(keep):
        kernel = den_vectors[:, ~keep]
        compressed = kernel.conj().T @ num @ kernel
        if scipy.linalg.eigh((compressed + compressed.conj().T) / 2, eigvals_only=True)[-1] > slack:
            logger.debug("numerator is positive on the kernel of the denominator")
            return None
    upper = 1.0
    if np.any(keep):
        whitening = den_vectors[:, keep] / np.sqrt(den_values[keep])
        reduced = whitening.conj().T @ num @ whitening
        upper = max(float(scipy.linalg.eigh((reduced + reduced.conj().T) / 2, eigvals_only=True)[-1]), 0.0)
        upper = upper * (1 + 1e-9) + 1e-300
    while not feasible(upper):
        if upper > _SCALE_BOUND_CAP:
            logger.debug("scale bound exceeds %.1e: numerator escapes the range of the denominator", upper)
            return None
        upper *= 2.0 if upper >= 1.0 else 1e4

    lower = 0.0
    for _ in range(_BISECTION_STEPS):
        if upper - lower <= 1e-13 * max(1.0, upper):
            break
        middle = (lower + upper) / 2
        if feasible(middle):
            upper = middle
        else:
            lower = middle
    return upper
