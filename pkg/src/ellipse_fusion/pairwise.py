"""Combining two estimates whose cross-correlation is a single scalar ``r``.

The joint covariance of two estimates is modelled as::

    R(r) = [[E1,              r sqrt(E1 E2)],
            [r sqrt(E1 E2)^T, E2           ]]

and the BLUE precision under that model is ``(S - r Z) / (1 - r^2)`` with
``S = E1^-1 + E2^-1`` and ``Z = K + K^T``, ``K = sqrt(E1^-1 E2^-1)``.
``r_max`` is the coefficient in ``[0, 1]`` maximizing ``|P(r)|`` (and hence
the entropy of the fused estimate).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, ValidationError
from .linalg import adjugate, check_psd, spd_product_sqrt, symmetrize

EPS_BOUNDARY = 1e-9
MONOTONE_GRID = 64
BRACKET_INTERVALS = 256
ROOT_XTOL = 1e-12
IMAG_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PairwiseGeometry:
    E1: np.ndarray
    E2: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    lam: float
    N: np.ndarray  # sqrt(E1 E2)
    K: np.ndarray  # sqrt(E1^-1 E2^-1)

    @property
    def k(self) -> int:
        return self.S.shape[0]


@dataclass
class RmaxResult:
    r_max: float
    method: str
    candidates: list[float] = field(default_factory=list)
    monotone_interval_verified: bool = False
    degenerate: bool = False


def build_geometry(E1, E2) -> PairwiseGeometry:
    """Precompute ``S``, ``Z``, ``lambda = tr(S adj(Z))`` and the two cross roots."""
    E1 = symmetrize(E1, "E1")
    E2 = symmetrize(E2, "E2")
    if E1.shape != E2.shape:
        raise ValidationError(f"E1 and E2 differ in shape: {E1.shape} vs {E2.shape}")
    for name, E in (("E1", E1), ("E2", E2)):
        rep = check_psd(E)
        if not rep.is_pd:
            raise DomainError(f"{name} is not positive definite (min eigenvalue {rep.min_eigenvalue:.6g})")
    if E1.shape == (1, 1):
        # scalar closed forms keep Z = 2/(s1 s2) and S = 1/s1^2 + 1/s2^2 exact
        s1, s2 = math.sqrt(E1[0, 0]), math.sqrt(E2[0, 0])
        N = np.array([[s1 * s2]])
        K = np.array([[1.0 / (s1 * s2)]])
        S = np.array([[1.0 / E1[0, 0] + 1.0 / E2[0, 0]]])
        Z = np.array([[2.0 / (s1 * s2)]])
    else:
        E1i = np.linalg.inv(E1)
        E2i = np.linalg.inv(E2)
        E1i = 0.5 * (E1i + E1i.T)
        E2i = 0.5 * (E2i + E2i.T)
        N = spd_product_sqrt(E1, E2)
        K = spd_product_sqrt(E1i, E2i)
        S = E1i + E2i
        Z = K + K.T
    lam = float(np.trace(S @ adjugate(Z)))
    return PairwiseGeometry(E1=E1, E2=E2, S=S, Z=Z, lam=lam, N=N, K=K)


def _check_open(r: float) -> None:
    if not abs(r) < 1.0:
        raise DomainError(f"|r| must be < 1, got {r}")


def pairwise_joint(geom: PairwiseGeometry, r: float) -> np.ndarray:
    """The 2k x 2k joint covariance ``R(r)``. Any real ``r`` is accepted."""
    off = r * geom.N
    R = np.block([[geom.E1, off], [off.T, geom.E2]])
    return 0.5 * (R + R.T)


def pairwise_joint_inverse(geom: PairwiseGeometry, r: float) -> np.ndarray:
    """Closed-form inverse of ``R(r)`` by block inversion; needs ``|r| < 1``."""
    _check_open(r)
    E1i = np.linalg.inv(geom.E1)
    E2i = np.linalg.inv(geom.E2)
    off = -r * geom.K
    Rinv = np.block([[E1i, off], [off.T, E2i]]) / (1.0 - r * r)
    return 0.5 * (Rinv + Rinv.T)


def pairwise_precision(geom: PairwiseGeometry, r: float) -> np.ndarray:
    """``P^-1(r) = (S - r Z) / (1 - r^2)``."""
    _check_open(r)
    return (geom.S - r * geom.Z) / (1.0 - r * r)


def log_det_P(geom: PairwiseGeometry, r) -> np.ndarray | float:
    """``log|P(r)|`` for scalar or array ``r`` in ``(-1, 1)``; ``-inf`` where undefined."""
    rs = np.atleast_1d(np.asarray(r, dtype=float))
    k = geom.k
    T = geom.S[None] - rs[:, None, None] * geom.Z[None]
    sign, ld = np.linalg.slogdet(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = k * np.log1p(-rs * rs) - ld
    out = np.where((sign > 0) & (np.abs(rs) < 1.0), out, -np.inf)
    return float(out[0]) if np.ndim(r) == 0 else out


def det_P(geom: PairwiseGeometry, r: float) -> float:
    return float(np.exp(log_det_P(geom, r)))


def derivative_numerator(geom: PairwiseGeometry, r) -> np.ndarray | float:
    """``r^2 tr(adj(S-rZ) Z) + 2 k r |S-rZ| - tr(adj(S-rZ) Z)``, vectorized over r.

    This is ``(1 - r^2)^(k+1)`` times the derivative of ``|P^-1|``; its sign
    changes locate the critical points of ``|P|``.
    """
    rs = np.atleast_1d(np.asarray(r, dtype=float))
    T = geom.S[None] - rs[:, None, None] * geom.Z[None]
    tr_adj_z = np.einsum("nij,ji->n", adjugate(T), geom.Z)
    g = rs * rs * tr_adj_z + 2 * geom.k * rs * np.linalg.det(T) - tr_adj_z
    return float(g[0]) if np.ndim(r) == 0 else g


def dP_inv_det_derivative(geom: PairwiseGeometry, r: float) -> float:
    """Exact ``d/dr |P^-1(r)|`` via Jacobi's formula."""
    _check_open(r)
    return derivative_numerator(geom, r) / (1.0 - r * r) ** (geom.k + 1)


def cubic_coefficients(geom: PairwiseGeometry) -> np.ndarray:
    """Coefficients (highest first) of the k = 2 critical-point cubic.

    ``2|Z| r^3 - 3 lambda r^2 + (4|S| + 2|Z|) r - lambda``
    """
    if geom.k != 2:
        raise ValidationError("the critical-point cubic only applies to k = 2")
    dZ = float(np.linalg.det(geom.Z))
    dS = float(np.linalg.det(geom.S))
    return np.array([2.0 * dZ, -3.0 * geom.lam, 4.0 * dS + 2.0 * dZ, -geom.lam])


def _golden_max(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _general_candidates(geom: PairwiseGeometry) -> list[float]:
    hi = 1.0 - EPS_BOUNDARY
    grid = np.linspace(0.0, hi, BRACKET_INTERVALS + 1)
    g = derivative_numerator(geom, grid)
    roots = []
    for i in range(BRACKET_INTERVALS):
        a, b = grid[i], grid[i + 1]
        if g[i] == 0.0:
            roots.append(float(a))
        elif g[i] * g[i + 1] < 0:
            roots.append(brentq(lambda x: derivative_numerator(geom, x), a, b, xtol=ROOT_XTOL))
    if g[-1] == 0.0:
        roots.append(float(hi))
    if not roots:
        roots.append(_golden_max(lambda x: log_det_P(geom, x), 0.0, hi))
    return roots


def monotone_on(geom: PairwiseGeometry, r_max: float, points: int = MONOTONE_GRID, tol: float = 1e-12) -> bool:
    """True when ``|P|`` does not decrease (beyond relative ``tol``) on ``[0, r_max]``."""
    ld = log_det_P(geom, np.linspace(0.0, r_max, points))
    return bool(np.all(np.diff(ld) >= -tol))


def solve_rmax(geom: PairwiseGeometry) -> RmaxResult:
    """Find the coefficient in ``[0, 1]`` that maximizes ``|P(r)|``.

    k = 1 uses ``min(s1/s2, s2/s1)``; k = 2 solves the critical-point cubic by
    companion-matrix eigenvalues; larger k brackets sign changes of the
    derivative numerator and refines them by Brent's method, falling back to a
    golden-section search on ``log|P|``. The candidate set always includes
    ``r = 0`` and the boundary ``1 - EPS_BOUNDARY``. When the boundary wins
    (equal ellipses) the result is flagged ``degenerate``.
    """
    k = geom.k
    hi = 1.0 - EPS_BOUNDARY
    if k == 1:
        s1, s2 = math.sqrt(geom.E1[0, 0]), math.sqrt(geom.E2[0, 0])
        r = min(s1 / s2, s2 / s1)
        if r >= hi:
            return RmaxResult(hi, "closed-form-1d", [r], monotone_on(geom, hi), True)
        return RmaxResult(r, "closed-form-1d", [r], monotone_on(geom, r), False)

    if k == 2:
        method = "cubic-2d"
        roots = np.roots(cubic_coefficients(geom))
        real = [float(z.real) for z in roots if abs(z.imag) < IMAG_TOL]
        candidates = sorted(x for x in real if abs(x) <= 1.0)
    else:
        method = "numeric-general"
        candidates = sorted(_general_candidates(geom))

    pool = [0.0, hi] + [min(x, hi) for x in candidates if x > 0.0]
    scores = log_det_P(geom, np.array(pool))
    best = int(np.argmax(scores))
    r_max = pool[best]
    degenerate = r_max >= hi
    return RmaxResult(r_max, method, candidates, monotone_on(geom, r_max), degenerate)


def mismatch_covariance(geom: PairwiseGeometry, r_p: float, r_n: float) -> np.ndarray:
    """Actual covariance when weighting for ``r_p`` while the truth is ``r_n``."""
    T, M = _mismatch_parts(geom, r_p, r_n)
    Tinv = np.linalg.inv(T)
    P = Tinv @ M @ Tinv
    return 0.5 * (P + P.T)


def _mismatch_parts(geom: PairwiseGeometry, r_p: float, r_n: float):
    _check_open(r_p)
    if abs(r_n) > 1.0:
        raise DomainError(f"|r_n| must be <= 1, got {r_n}")
    T = geom.S - r_p * geom.Z
    rep = check_psd(T)
    if not rep.is_pd:
        raise DomainError(f"S - r_p Z is singular at r_p={r_p} (min eigenvalue {rep.min_eigenvalue:.6g})")
    M = (1.0 - 2.0 * r_p * r_n + r_p * r_p) * geom.S + (r_n - 2.0 * r_p + r_n * r_p * r_p) * geom.Z
    return T, M


def _slogdet_pos(M: np.ndarray) -> float:
    sign, ld = np.linalg.slogdet(M)
    if sign <= 0:
        raise DomainError("determinant is not positive")
    return float(ld)


def pairwise_alpha(geom: PairwiseGeometry, r_p: float, r_n: float) -> float:
    """alpha(r_p, r_n): actual over reported error integral."""
    T, M = _mismatch_parts(geom, r_p, r_n)
    k = geom.k
    log_a = -0.5 * k * math.log1p(-r_p * r_p) + 0.5 * (_slogdet_pos(M) - _slogdet_pos(T))
    return math.exp(log_a)


def pairwise_beta(geom: PairwiseGeometry, r_p: float, r_n: float) -> float:
    """beta(r_p, r_n): actual over BLUE error integral (>= 1)."""
    _check_open(r_n)
    T, M = _mismatch_parts(geom, r_p, r_n)
    k = geom.k
    Tn = geom.S - r_n * geom.Z
    log_b2 = _slogdet_pos(Tn) + _slogdet_pos(M) - k * math.log1p(-r_n * r_n) - 2.0 * _slogdet_pos(T)
    return math.exp(0.5 * log_b2)


def scalar_weights(sigma1: float, sigma2: float, r: float) -> tuple[float, float]:
    """BLUE weights for two scalar estimates with correlation ``r``."""
    if sigma1 <= 0 or sigma2 <= 0:
        raise DomainError("standard deviations must be positive")
    c = r * sigma1 * sigma2
    den = sigma1 * sigma1 + sigma2 * sigma2 - 2.0 * c
    if den == 0.0:
        raise DomainError("weights undefined: equal sigmas with r = 1")
    w1 = (sigma2 * sigma2 - c) / den
    w2 = (sigma1 * sigma1 - c) / den
    return w1, w2
