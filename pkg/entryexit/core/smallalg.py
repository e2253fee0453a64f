"""
Dense kernels on small square matrices (d <= 16).

The spectral balance functions evaluate these once per grid sample, so every routine takes
and returns plain :class:`numpy.ndarray` and leaves the heavy lifting to LAPACK through
numpy/scipy. 2x2 spectra use the closed form, which is both faster and free of iteration.
"""

import logging
from typing import NamedTuple

import numpy as np
import scipy.linalg

from entryexit import MAX_DIM
from entryexit.exceptions import InvalidInputException, RangeException

logger = logging.getLogger(__name__)

EXPM_NORM_LIMIT = 1e3


class Spectrum(NamedTuple):
    # sorted by descending real part, ties by descending imaginary part
    values: np.ndarray
    converged: bool


def as_mat(m) -> np.ndarray:
    """
    validate and convert to a float square matrix.
    """
    mat = np.array(m, dtype=float)
    if mat.ndim == 0:
        mat = mat.reshape(1, 1)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
        raise InvalidInputException(f"Expect a square matrix, got shape {mat.shape}")
    if mat.shape[0] > MAX_DIM:
        raise InvalidInputException(
            f"Matrix dimension {mat.shape[0]} exceeds supported maximum {MAX_DIM}"
        )
    if not np.all(np.isfinite(mat)):
        raise InvalidInputException("Matrix has non-finite entries")
    return mat


def sort_spectrum(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=complex)
    return values[np.lexsort((-values.imag, -values.real))]


def _eig2(mat: np.ndarray) -> np.ndarray:
    half_trace = 0.5 * (mat[0, 0] + mat[1, 1])
    det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
    # discriminant written so that it stays exact for triangular input
    disc = (0.5 * (mat[0, 0] - mat[1, 1])) ** 2 + mat[0, 1] * mat[1, 0]
    if disc >= 0:
        root = np.sqrt(disc)
        big = half_trace + np.copysign(root, half_trace)
        small = det / big if big != 0 else half_trace - root
        return np.array([big, small], dtype=complex)
    root = np.sqrt(-disc)
    return np.array([half_trace + 1j * root, half_trace - 1j * root])


def eigenvalues(m) -> Spectrum:
    """
    all eigenvalues with multiplicity.

    d <= 2 is solved in closed form, larger matrices go through LAPACK's Hessenberg reduction and
    shifted QR iteration. A failed iteration is reported via ``converged`` with NaN values instead of
    raising, callers resample.
    """
    mat = as_mat(m)
    dim = mat.shape[0]
    if dim == 1:
        return Spectrum(np.array([mat[0, 0]], dtype=complex), True)
    if dim == 2:
        return Spectrum(sort_spectrum(_eig2(mat)), True)
    try:
        values = np.linalg.eigvals(mat)
    except np.linalg.LinAlgError:
        logger.warning("QR iteration did not converge for %dx%d matrix", dim, dim)
        return Spectrum(np.full(dim, np.nan, dtype=complex), False)
    return Spectrum(sort_spectrum(values), True)


def symmetrize(m) -> np.ndarray:
    mat = as_mat(m)
    return 0.5 * (mat + mat.T)


def sym_eigen_max(m) -> float:
    """
    largest eigenvalue of the symmetric part (M + M^T) / 2.
    """
    return float(np.linalg.eigvalsh(symmetrize(m))[-1])


def singular_values(m) -> np.ndarray:
    """
    singular values in descending order.
    """
    return scipy.linalg.svdvals(as_mat(m))


def expm(m) -> np.ndarray:
    """
    matrix exponential by scaling and squaring with a Pade approximant.
    """
    mat = as_mat(m)
    norm = np.linalg.norm(mat, 1)
    if norm > EXPM_NORM_LIMIT:
        raise RangeException(
            f"Matrix 1-norm {norm:.3g} exceeds {EXPM_NORM_LIMIT:g}, exponential would overflow"
        )
    return scipy.linalg.expm(mat)
