"""Generalized least squares over a stack of identity design blocks.

The design matrix ``A`` (n copies of the k x k identity stacked vertically) is
never formed. Products with it reduce to block sums: ``W @ A`` is the sum of
the block columns of ``W`` and ``A.T @ W @ A`` is the sum of all its blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, InsufficientInformationError, ValidationError
from .linalg import as_matrix, check_psd, gaussian_entropy, pseudo_inverse, symmetrize

COMPONENT_SUM_RTOL = 1e-9


@dataclass
class Estimate:
    """One location estimate ``y`` with covariance ``E``.

    ``components`` optionally splits ``E`` into ``B_0 + B_1 + ... + B_m``,
    where ``B_0`` is the independent part. ``t`` and ``instrument`` are
    metadata used by the structured fusion rules.
    """

    y: np.ndarray
    E: np.ndarray
    t: float | None = None
    components: list[np.ndarray] | None = None
    instrument: str | None = None

    def __post_init__(self):
        self.y = np.atleast_1d(np.array(self.y, dtype=float))
        if self.y.ndim != 1 or not np.all(np.isfinite(self.y)):
            raise ValidationError("y must be a finite 1-D vector")
        self.E = symmetrize(np.atleast_2d(self.E), "E")
        if self.E.shape[0] != self.y.size:
            raise ValidationError(f"E is {self.E.shape} but y has {self.y.size} entries")
        if self.t is not None:
            self.t = float(self.t)
            if not np.isfinite(self.t):
                raise ValidationError("t must be finite")
        if self.components is not None:
            comps = [symmetrize(np.atleast_2d(B), f"component {a}") for a, B in enumerate(self.components)]
            if not comps:
                raise ValidationError("components, when given, must be non-empty")
            for a, B in enumerate(comps):
                if B.shape != self.E.shape:
                    raise ValidationError(f"component {a} has shape {B.shape}, expected {self.E.shape}")
                rep = check_psd(B)
                if not rep.is_psd:
                    raise ValidationError(
                        f"component {a} is not PSD (min eigenvalue {rep.min_eigenvalue:.6g})"
                    )
            total = np.sum(comps, axis=0)
            scale = max(np.linalg.norm(self.E), 1e-300)
            if np.linalg.norm(total - self.E) > COMPONENT_SUM_RTOL * scale:
                raise ValidationError("components do not sum to E")
            self.components = comps

    @property
    def k(self) -> int:
        return self.y.size


@dataclass
class FusionResult:
    """Fused estimate and the covariance reported for it."""

    x_hat: np.ndarray
    P: np.ndarray
    method: str
    weights: list[np.ndarray] | None = None
    entropy: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    @property
    def det_P(self) -> float:
        return float(np.linalg.det(self.P))


class StackedSystem:
    """The stacked observation vector ``y`` for ``y = A x + eps``."""

    def __init__(self, estimates: Sequence[Estimate]):
        if len(estimates) == 0:
            raise ValidationError("need at least one estimate")
        k = estimates[0].k
        for i, e in enumerate(estimates):
            if e.k != k:
                raise ValidationError(f"estimate {i} has dimension {e.k}, expected {k}")
        self.estimates = list(estimates)
        self.n = len(estimates)
        self.k = k
        self.y_stacked = np.concatenate([e.y for e in estimates])

    @classmethod
    def from_values(cls, ys: Sequence, Es: Sequence) -> "StackedSystem":
        return cls([Estimate(y, E) for y, E in zip(ys, Es)])

    @property
    def size(self) -> int:
        return self.n * self.k

    def design_matrix(self) -> np.ndarray:
        """Dense ``A``; only for callers that explicitly want it."""
        return np.tile(np.eye(self.k), (self.n, 1))

    def _check(self, M: np.ndarray, name: str) -> np.ndarray:
        M = as_matrix(M, name)
        if M.shape != (self.size, self.size):
            raise ValidationError(f"{name} must be {self.size}x{self.size}, got {M.shape}")
        return M

    def row_blocks(self, M: np.ndarray) -> np.ndarray:
        """``M @ A`` as an (n, k, k) stack of row blocks."""
        n, k = self.n, self.k
        return M.reshape(n, k, n, k).sum(axis=2)

    def normal_matrix(self, W: np.ndarray) -> np.ndarray:
        """``A.T @ W @ A``."""
        G = self.row_blocks(W).sum(axis=0)
        return 0.5 * (G + G.T)


def _invert_normal(G: np.ndarray) -> np.ndarray:
    rep = check_psd(G)
    if not rep.is_pd:
        raise InsufficientInformationError(
            f"insufficient information: A^T W A is not positive definite "
            f"(min eigenvalue {rep.min_eigenvalue:.6g})",
            rep,
        )
    Ginv = np.linalg.inv(G)
    return 0.5 * (Ginv + Ginv.T)


def gls_solve(sys: StackedSystem, W) -> FusionResult:
    """Weighted least squares ``x = (A^T W A)^{-1} A^T W y``.

    The reported covariance is the self-consistent ``(A^T W A)^{-1}``, i.e.
    ``P(W, W^{-1})``. Weight blocks are the k-column partitions of
    ``(A^T W A)^{-1} A^T W`` and sum to the identity.
    """
    W = sys._check(W, "W")
    W = 0.5 * (W + W.T)
    G = sys.normal_matrix(W)
    Ginv = _invert_normal(G)
    WA = sys.row_blocks(W)  # block i is (W A)_i; (A^T W)_i is its transpose
    weights = [Ginv @ B.T for B in WA]
    x_hat = sum(w @ e.y for w, e in zip(weights, sys.estimates))
    return FusionResult(
        x_hat=np.asarray(x_hat, dtype=float),
        P=Ginv,
        method="gls",
        weights=weights,
        entropy=gaussian_entropy(Ginv),
    )


def power_covariance(sys: StackedSystem, W, R) -> np.ndarray:
    """Sandwich covariance ``P(W, R)`` of the W-weighted estimate under truth R."""
    W = sys._check(W, "W")
    R = sys._check(R, "R")
    W = 0.5 * (W + W.T)
    R = 0.5 * (R + R.T)
    Ginv = _invert_normal(sys.normal_matrix(W))
    WA = sys.row_blocks(W).reshape(sys.size, sys.k)
    P = Ginv @ (WA.T @ R @ WA) @ Ginv
    return 0.5 * (P + P.T)


def blue_covariance(sys: StackedSystem, R, tol: float | None = None) -> np.ndarray:
    """``(A^T R^+ A)^{-1}``, the covariance of the BLUE under R."""
    R = sys._check(R, "R")
    return _invert_normal(sys.normal_matrix(pseudo_inverse(R, tol)))


def _logdet(P: np.ndarray, what: str) -> float:
    sign, ld = np.linalg.slogdet(P)
    if sign <= 0:
        raise DomainError(f"{what} has non-positive determinant")
    return float(ld)


def alpha_metric(sys: StackedSystem, W, R) -> float:
    """``sqrt(|P(W,R)| / |P(W,W^{-1})|)``: true over reported error integral."""
    W = sys._check(W, "W")
    actual = power_covariance(sys, W, R)
    reported = _invert_normal(sys.normal_matrix(0.5 * (W + W.T)))
    return float(np.exp(0.5 * (_logdet(actual, "P(W,R)") - _logdet(reported, "P(W,W^-1)"))))


def beta_metric(sys: StackedSystem, W, R) -> float:
    """``sqrt(|P(W,R)| / |P(R^{-1},R)|)``: achieved over optimal error integral."""
    actual = power_covariance(sys, W, R)
    best = blue_covariance(sys, R)
    return float(np.exp(0.5 * (_logdet(actual, "P(W,R)") - _logdet(best, "P(R^-1,R)"))))
