"""Small dense symmetric-matrix primitives.

Everything here operates on plain ``numpy`` arrays. Symmetric inputs are
symmetrized as ``(M + M.T) / 2`` on the way in, so callers may pass matrices
that are asymmetric in the last digit (typical of JSON round trips).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class PsdReport:
    """Outcome of a spectral PSD/PD check."""

    is_psd: bool
    is_pd: bool
    min_eigenvalue: float
    tolerance_used: float

    def as_dict(self) -> dict:
        return {
            "is_psd": self.is_psd,
            "is_pd": self.is_pd,
            "min_eigenvalue": self.min_eigenvalue,
            "tolerance_used": self.tolerance_used,
        }


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float array, raising ValidationError otherwise."""
    A = np.array(M, dtype=float)
    if A.ndim != 2 or A.shape[0] == 0 or A.shape[1] == 0:
        raise ValidationError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} has non-finite entries")
    return A


def symmetrize(M, name: str = "matrix") -> np.ndarray:
    """Validate a square matrix and return ``(M + M.T) / 2``."""
    A = as_matrix(M, name)
    if A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {A.shape}")
    return 0.5 * (A + A.T)


def default_psd_tolerance(eigenvalues: np.ndarray) -> float:
    """``k * eps * max(1, max|eigenvalue|)``."""
    k = eigenvalues.shape[-1]
    return float(k * EPS * max(1.0, float(np.max(np.abs(eigenvalues)))))


def check_psd(M, tol: float | None = None) -> PsdReport:
    """Classify ``M`` as PSD / PD from its eigenvalue spectrum.

    ``tol`` defaults to :func:`default_psd_tolerance`. ``M`` is PSD when its
    smallest eigenvalue is at least ``-tol`` and PD when it exceeds ``tol``.
    """
    S = symmetrize(M)
    w = np.linalg.eigvalsh(S)
    if tol is None:
        tol = default_psd_tolerance(w)
    elif tol < 0:
        raise ValidationError(f"tolerance must be non-negative, got {tol}")
    lo = float(w[0])
    return PsdReport(is_psd=lo >= -tol, is_pd=lo > tol, min_eigenvalue=lo, tolerance_used=float(tol))


def _require_pd(M, name: str) -> tuple[np.ndarray, np.ndarray]:
    S = symmetrize(M, name)
    w, V = np.linalg.eigh(S)
    if w[0] <= default_psd_tolerance(w):
        raise DomainError(f"{name} is not positive definite (min eigenvalue {w[0]:.6g})")
    return w, V


def spd_sqrt(M) -> np.ndarray:
    """Principal (SPD) square root of an SPD matrix via eigendecomposition."""
    w, V = _require_pd(M, "matrix")
    Q = (V * np.sqrt(w)) @ V.T
    return 0.5 * (Q + Q.T)


def spd_inv_sqrt(M) -> np.ndarray:
    """Inverse of the principal square root of an SPD matrix."""
    w, V = _require_pd(M, "matrix")
    Q = (V / np.sqrt(w)) @ V.T
    return 0.5 * (Q + Q.T)


def spd_product_sqrt(E1, E2) -> np.ndarray:
    """Principal square root of the (generally non-symmetric) product ``E1 @ E2``.

    Both factors must be SPD. The root is built by similarity,
    ``E1^{1/2} sqrt(E1^{1/2} E2 E1^{1/2}) E1^{-1/2}``, which keeps the spectrum
    real and positive and gives ``N @ inv(E2) @ N.T == E1`` exactly in exact
    arithmetic.
    """
    w1, V1 = _require_pd(E1, "E1")
    _require_pd(E2, "E2")
    E2 = symmetrize(E2, "E2")
    if E2.shape != (w1.size, w1.size):
        raise ValidationError(f"E1 and E2 differ in shape: {(w1.size, w1.size)} vs {E2.shape}")
    half = (V1 * np.sqrt(w1)) @ V1.T
    inv_half = (V1 / np.sqrt(w1)) @ V1.T
    middle = half @ E2 @ half
    return half @ spd_sqrt(middle) @ inv_half


def pseudo_inverse(M, tol: float | None = None, psd_tol: float | None = None) -> np.ndarray:
    """Eigen-based Moore-Penrose inverse of a symmetric PSD matrix.

    Eigenvalues at or below ``tol * lambda_max`` are treated as zero
    (``tol`` defaults to ``k * eps``). Raises DomainError when the smallest
    eigenvalue is below ``-psd_tol`` (default as in :func:`check_psd`).
    """
    S = symmetrize(M)
    k = S.shape[0]
    w, V = np.linalg.eigh(S)
    if tol is None:
        tol = k * EPS
    if psd_tol is None:
        psd_tol = default_psd_tolerance(w)
    lam_max = max(float(w[-1]), 0.0)
    cutoff = tol * lam_max
    if w[0] < -max(cutoff, psd_tol):
        raise DomainError(f"pseudo-inverse needs a PSD matrix (min eigenvalue {w[0]:.6g})")
    keep = w > cutoff
    if lam_max == 0.0:
        keep[:] = False
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    P = (V * inv_w) @ V.T
    return 0.5 * (P + P.T)


def adjugate(M) -> np.ndarray:
    """Adjugate (transposed cofactor matrix); accepts stacks of shape (..., k, k).

    Minors are evaluated with LU-based determinants, so singular inputs are
    fine. For k = 1 the adjugate is ``[[1]]``.
    """
    A = np.asarray(M, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValidationError(f"adjugate needs square matrices, got shape {A.shape}")
    k = A.shape[-1]
    if k == 1:
        return np.ones_like(A)
    keep = np.array([[c for c in range(k) if c != i] for i in range(k)])
    minors = A[..., keep[:, None, :, None], keep[None, :, None, :]]
    sign = (-1.0) ** np.add.outer(np.arange(k), np.arange(k))
    cof = sign * np.linalg.det(minors)
    return np.swapaxes(cof, -1, -2)


def logdet_pd(M, name: str = "matrix") -> float:
    """``log|M|`` for a PD matrix, via Cholesky."""
    S = symmetrize(M, name)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        lo = float(np.linalg.eigvalsh(S)[0])
        raise DomainError(f"{name} is not positive definite (min eigenvalue {lo:.6g})") from None
    return float(2.0 * np.sum(np.log(np.diag(L))))


def gaussian_entropy(P) -> float:
    """Differential entropy of a k-variate Gaussian with covariance ``P``.

    h = k/2 + (k/2) ln(2 pi) + (1/2) ln|P|
    """
    S = symmetrize(P, "P")
    sign, ld = np.linalg.slogdet(S)
    if sign <= 0:
        raise DomainError("entropy requires |P| > 0")
    k = S.shape[0]
    return 0.5 * k + 0.5 * k * np.log(2.0 * np.pi) + 0.5 * float(ld)
