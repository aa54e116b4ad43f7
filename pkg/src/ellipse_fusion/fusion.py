"""End-to-end fusion procedures.

* ``fuse_convolve``: information-filter sum, assumes independent estimates.
* ``fuse_max_entropy``: BLUE under the entropy-maximizing joint covariance.
* ``fuse_convolve_inflated``: convolved estimate, covariance reported under
  the pairwise-max joint model (also available incrementally).
* ``fuse_structured``: BLUE under a sum-of-components joint covariance.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import InfeasibleError, InsufficientInformationError, ValidationError
from .gls import Estimate, FusionResult, StackedSystem, gls_solve
from .joint import (
    CorrelationVector,
    SearchOptions,
    StructuredModel,
    assemble_structured,
    build_joint,
    pair_list,
    pairwise_max_vector,
    search_rmax_vector,
    structured_coefficients,
)
from .linalg import check_psd, gaussian_entropy, pseudo_inverse
from .pairwise import build_geometry, solve_rmax

MAX_ENTROPY_MODES = ("exact", "pm")


def _coefficient_list(r: CorrelationVector) -> list[dict]:
    return [{"pair": [i, j], "r": v} for i, j, v in r.pairs()]


class ConvolveAccumulator:
    """Running information sums ``sum E_i^-1`` and ``sum E_i^-1 y_i``."""

    method = "convolve"

    def __init__(self):
        self.estimates: list[Estimate] = []
        self.infos: list[np.ndarray] = []
        self.info: np.ndarray | None = None
        self.info_y: np.ndarray | None = None

    def add(self, est: Estimate) -> None:
        if self.estimates and est.k != self.estimates[0].k:
            raise ValidationError(f"estimate has dimension {est.k}, expected {self.estimates[0].k}")
        info_i = pseudo_inverse(est.E)
        if self.info is None:
            self.info = np.zeros_like(info_i)
            self.info_y = np.zeros(est.k)
        self.info = self.info + info_i
        self.info_y = self.info_y + info_i @ est.y
        self.infos.append(info_i)
        self.estimates.append(est)

    def _solve(self) -> tuple[np.ndarray, np.ndarray]:
        if self.info is None:
            raise ValidationError("need at least one estimate")
        G = 0.5 * (self.info + self.info.T)
        rep = check_psd(G)
        if not rep.is_pd:
            raise InsufficientInformationError(
                f"sum of information matrices is not positive definite (min eigenvalue {rep.min_eigenvalue:.6g})",
                rep,
            )
        P_c = np.linalg.inv(G)
        P_c = 0.5 * (P_c + P_c.T)
        return P_c, P_c @ self.info_y

    def result(self) -> FusionResult:
        P_c, x_hat = self._solve()
        return FusionResult(
            x_hat=x_hat,
            P=P_c,
            method=self.method,
            weights=[P_c @ I for I in self.infos],
            entropy=gaussian_entropy(P_c),
        )


def fuse_convolve(estimates: Iterable[Estimate]) -> FusionResult:
    """Ellipse convolving: ``P_c = (sum E_i^-1)^-1``, ``x = P_c sum E_i^-1 y_i``."""
    acc = ConvolveAccumulator()
    for e in estimates:
        acc.add(e)
    return acc.result()


class InflatedConvolver(ConvolveAccumulator):
    """Convolve the estimate, report ``P = P_c + P_r`` under pairwise-max correlation.

    ``P_r = P_c (sum_{i<j} r_ij [sqrt(E_i^-1 E_j^-1) + sqrt(E_j^-1 E_i^-1)]) P_c``.
    Adding an estimate solves one pairwise problem against each earlier
    estimate and updates the cross accumulator in place.
    """

    method = "convolve-inflated"

    def __init__(self):
        super().__init__()
        self.cross: np.ndarray | None = None
        self.coefficients: dict[tuple[int, int], float] = {}
        self.degenerate_pairs: list[tuple[int, int]] = []

    def add(self, est: Estimate) -> None:
        j = len(self.estimates)
        geoms = [build_geometry(prev.E, est.E) for prev in self.estimates]
        if self.cross is None:
            self.cross = np.zeros((est.k, est.k))
        super().add(est)
        for i, geom in enumerate(geoms):
            res = solve_rmax(geom)
            self.coefficients[(i, j)] = res.r_max
            if res.degenerate:
                self.degenerate_pairs.append((i, j))
            # geom.Z is the bracketed sum: sqrt(E_j^-1 E_i^-1) is the transpose of sqrt(E_i^-1 E_j^-1)
            self.cross = self.cross + res.r_max * geom.Z

    def correlation_vector(self) -> CorrelationVector:
        n = len(self.estimates)
        return CorrelationVector(n, [self.coefficients[p] for p in pair_list(n)])

    def result(self) -> FusionResult:
        P_c, x_hat = self._solve()
        P_r = P_c @ self.cross @ P_c
        P = P_c + P_r
        P = 0.5 * (P + P.T)
        return FusionResult(
            x_hat=x_hat,
            P=P,
            method=self.method,
            weights=[P_c @ I for I in self.infos],
            entropy=gaussian_entropy(P),
            diagnostics={
                "P_c": P_c,
                "P_r": 0.5 * (P_r + P_r.T),
                "coefficients": self.correlation_vector(),
                "degenerate_pairs": list(self.degenerate_pairs),
            },
        )


def fuse_convolve_inflated(estimates: Iterable[Estimate]) -> FusionResult:
    acc = InflatedConvolver()
    for e in estimates:
        acc.add(e)
    return acc.result()


def _blue(estimates: Sequence[Estimate], R: np.ndarray, method: str) -> FusionResult:
    rep = check_psd(R)
    if not rep.is_psd:
        raise InfeasibleError(f"joint covariance is not PSD (min eigenvalue {rep.min_eigenvalue:.6g})", rep)
    sys = StackedSystem(estimates)
    res = gls_solve(sys, pseudo_inverse(R))
    res.method = method
    return res


def fuse_max_entropy(estimates: Sequence[Estimate], mode: str = "exact",
                     options: SearchOptions | None = None) -> FusionResult:
    """BLUE under ``R(r)`` with ``r`` from the ascent search (``exact``) or pairwise max (``pm``)."""
    if mode not in MAX_ENTROPY_MODES:
        raise ValidationError(f"mode must be one of {MAX_ENTROPY_MODES}, got {mode!r}")
    estimates = list(estimates)
    StackedSystem(estimates)
    for i, e in enumerate(estimates):
        rep = check_psd(e.E)
        if not rep.is_pd:
            raise ValidationError(f"estimate {i}: E is not positive definite (min eigenvalue {rep.min_eigenvalue:.6g})")
    if mode == "exact":
        r = search_rmax_vector(estimates, options)
    else:
        r = pairwise_max_vector(estimates)
    R = build_joint(estimates, r)
    res = _blue(estimates, R, "max-entropy" if mode == "exact" else "max-entropy-pm")
    res.diagnostics = {"coefficients": r, "flags": r.flags}
    return res


def fuse_structured(estimates: Sequence[Estimate], model: StructuredModel,
                    tol: float | None = None) -> FusionResult:
    """BLUE under the sum-of-components joint covariance."""
    estimates = list(estimates)
    StackedSystem(estimates)
    coeffs = structured_coefficients(estimates, model)
    R = assemble_structured(estimates, coeffs, tol)
    res = _blue(estimates, R, "structured")
    res.diagnostics = {"coefficients": coeffs}
    return res


def coefficients_used(result: FusionResult) -> list:
    """Per-pair coefficients of a result in a JSON-friendly form."""
    c = result.diagnostics.get("coefficients")
    if c is None:
        return []
    if isinstance(c, CorrelationVector):
        return _coefficient_list(c)
    return [{"component": a, "coefficients": _coefficient_list(v)} for a, v in enumerate(c)]
