"""Dense linear algebra for the head-coupling math.

Everything works on plain float64 ndarrays. The symmetric routines
symmetrize their input once up front: eigendecomposition assumes exact
symmetry while floating-point accumulation only delivers it approximately.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NumericError

# Eigenvalues below -PSD_TOL (after symmetrization) mean the input was not
# positive semi-definite; anything in [-PSD_TOL, 0) is rounding noise.
PSD_TOL = 1e-8

_SYM_TOL = 1e-10


class SvdResult(NamedTuple):
    u: np.ndarray   # left singular vectors, column-orthonormal
    s: np.ndarray   # singular values, non-increasing, >= 0
    vt: np.ndarray  # right singular vectors, transposed


def _as_matrix(m, name: str = "matrix") -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise NumericError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name} contains non-finite entries")
    return a


def svd(m) -> SvdResult:
    """Thin SVD with U * diag(s) * Vt reconstructing the input.

    Raises NumericError if the underlying iteration does not converge.
    """
    a = _as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc
    return SvdResult(u, s, vt)


def trace_norm(m) -> float:
    """Sum of singular values of ``m`` (the nuclear norm)."""
    return float(np.sum(svd(m).s))


def _sym_eig(m, name: str) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a nearly-symmetric matrix, after symmetrizing."""
    a = _as_matrix(m, name)
    rows, cols = a.shape
    if rows != cols:
        raise NumericError(f"{name} must be square, got {rows}x{cols}")
    skew = np.max(np.abs(a - a.T)) if a.size else 0.0
    if skew > _SYM_TOL * max(1.0, np.max(np.abs(a))):
        raise NumericError(f"{name} is not symmetric (max asymmetry {skew:.3e})")
    a = 0.5 * (a + a.T)
    try:
        evals, evecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition did not converge: {exc}") from exc
    return evals, evecs


def psd_sqrt(m, mu: float = 0.0) -> np.ndarray:
    """Symmetric PSD square root ``(m + mu*I)**0.5``.

    ``m`` must be symmetric PSD up to rounding; ``mu >= 0`` acts as a ridge
    that keeps the result invertible for rank-deficient ``m``.
    """
    if mu < 0.0:
        raise NumericError(f"mu must be non-negative, got {mu}")
    evals, evecs = _sym_eig(m, "psd_sqrt input")
    if evals.size and evals.min() < -PSD_TOL:
        raise NumericError(
            f"psd_sqrt input is not PSD (min eigenvalue {evals.min():.3e})")
    root = np.sqrt(np.clip(evals, 0.0, None) + mu)
    out = (evecs * root) @ evecs.T
    return 0.5 * (out + out.T)


def psd_inv_sqrt(m, mu: float) -> np.ndarray:
    """Symmetric inverse square root ``(m + mu*I)**-0.5`` with ``mu > 0``.

    The positive ridge is what guarantees invertibility, so ``mu <= 0`` is
    rejected even when ``m`` itself happens to be nonsingular.
    """
    if mu <= 0.0:
        raise NumericError(f"psd_inv_sqrt requires mu > 0, got {mu}")
    evals, evecs = _sym_eig(m, "psd_inv_sqrt input")
    if evals.size and evals.min() < -PSD_TOL:
        raise NumericError(
            f"psd_inv_sqrt input is not PSD (min eigenvalue {evals.min():.3e})")
    inv_root = 1.0 / np.sqrt(np.clip(evals, 0.0, None) + mu)
    out = (evecs * inv_root) @ evecs.T
    return 0.5 * (out + out.T)


def psd_inverse(m, rcond: float = 1e-12) -> np.ndarray:
    """Inverse of a symmetric PSD matrix, pseudo-inverting a null space.

    Eigenvalues below ``rcond * max_eigenvalue`` are treated as zero rank,
    which matches the Moore-Penrose inverse on rank-deficient input.
    """
    evals, evecs = _sym_eig(m, "psd_inverse input")
    if evals.size and evals.min() < -PSD_TOL:
        raise NumericError(
            f"psd_inverse input is not PSD (min eigenvalue {evals.min():.3e})")
    cutoff = rcond * max(evals.max(initial=0.0), 0.0)
    inv = np.where(evals > cutoff, 1.0 / np.where(evals > cutoff, evals, 1.0), 0.0)
    out = (evecs * inv) @ evecs.T
    return 0.5 * (out + out.T)
