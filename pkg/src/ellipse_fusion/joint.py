"""Joint covariance of n estimates parameterized by pairwise coefficients.

Block ``(i, j)`` with ``i < j`` of the joint covariance is
``r_ij * sqrt(E_i E_j)``; the lower blocks are the transposes. Coefficients
are stored flat in row-major order over ``i < j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, ValidationError
from .gls import Estimate
from .linalg import EPS, PsdReport, check_psd, default_psd_tolerance, spd_product_sqrt, symmetrize
from .pairwise import build_geometry, solve_rmax

SEARCH_BOUNDS = ("pairwise", "unit")
RULES = ("zero", "pairwise-max", "time-decay", "grouped-by-instrument")


def pair_list(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def pair_index(n: int, i: int, j: int) -> int:
    """Flat position of pair ``(i, j)``; order of ``i`` and ``j`` does not matter."""
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ValidationError(f"invalid pair ({i}, {j}) for n={n}")
    if i > j:
        i, j = j, i
    return i * n - i * (i + 1) // 2 + (j - i - 1)


@dataclass
class CorrelationVector:
    n: int
    values: np.ndarray
    feasible: PsdReport | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float).reshape(-1)
        expected = self.n * (self.n - 1) // 2
        if self.values.size != expected:
            raise ValidationError(f"need {expected} coefficients for n={self.n}, got {self.values.size}")
        if np.any(np.abs(self.values) > 1.0) or not np.all(np.isfinite(self.values)):
            raise ValidationError("correlation coefficients must lie in [-1, 1]")

    @classmethod
    def zeros(cls, n: int) -> "CorrelationVector":
        return cls(n, np.zeros(n * (n - 1) // 2))

    def get(self, i: int, j: int) -> float:
        return float(self.values[pair_index(self.n, i, j)])

    def pairs(self):
        for p, (i, j) in enumerate(pair_list(self.n)):
            yield i, j, float(self.values[p])


def _covariances(items) -> list[np.ndarray]:
    covs = [symmetrize(x.E if isinstance(x, Estimate) else x, f"E[{i}]") for i, x in enumerate(items)]
    if covs and any(c.shape != covs[0].shape for c in covs):
        raise ValidationError("all covariances must share the same dimension")
    return covs


def build_joint(estimates: Sequence, r, roots: dict | None = None) -> np.ndarray:
    """Assemble the nk x nk joint covariance for coefficients ``r``.

    ``estimates`` may hold :class:`Estimate` objects or bare covariance
    matrices. Cross roots are only computed for non-zero coefficients, so
    singular diagonal blocks are allowed wherever the coefficient is 0.
    ``roots`` caches ``sqrt(E_i E_j)`` by pair across calls.
    """
    covs = _covariances(estimates)
    n = len(covs)
    values = r.values if isinstance(r, CorrelationVector) else np.asarray(r, dtype=float).reshape(-1)
    if values.size != n * (n - 1) // 2:
        raise ValidationError(f"need {n * (n - 1) // 2} coefficients for n={n}, got {values.size}")
    k = covs[0].shape[0]
    R = np.zeros((n * k, n * k))
    for i, E in enumerate(covs):
        R[i * k:(i + 1) * k, i * k:(i + 1) * k] = E
    for p, (i, j) in enumerate(pair_list(n)):
        c = values[p]
        if c == 0.0:
            continue
        if roots is not None and (i, j) in roots:
            N = roots[(i, j)]
        else:
            N = spd_product_sqrt(covs[i], covs[j])
            if roots is not None:
                roots[(i, j)] = N
        R[i * k:(i + 1) * k, j * k:(j + 1) * k] = c * N
        R[j * k:(j + 1) * k, i * k:(i + 1) * k] = c * N.T
    return 0.5 * (R + R.T)


def pairwise_max_vector(estimates: Sequence) -> CorrelationVector:
    """Per-pair entropy-maximizing coefficients (the pairwise-max vector)."""
    covs = _covariances(estimates)
    n = len(covs)
    values = []
    degenerate = []
    for i, j in pair_list(n):
        res = solve_rmax(build_geometry(covs[i], covs[j]))
        values.append(res.r_max)
        if res.degenerate:
            degenerate.append((i, j))
    return CorrelationVector(n, np.array(values), flags={"degenerate_pairs": degenerate})


RANGE_TOL = 1e-8


def blue_log_det(covs, values, roots: dict | None = None, tol: float | None = None) -> float:
    """``log|P|`` of the BLUE under ``R(values)``; ``-inf`` if R is infeasible.

    A singular R is accepted only when the identity stack lies in its range;
    otherwise the pseudo-inverse weights are not the BLUE (some direction
    could be estimated exactly) and the point is treated as infeasible.
    """
    R = build_joint(covs, values, roots)
    n, k = len(covs), covs[0].shape[0]
    w, V = np.linalg.eigh(R)
    psd_tol = default_psd_tolerance(w) if tol is None else tol
    cutoff = n * k * EPS * max(float(w[-1]), 0.0)
    if w[0] < -max(cutoff, psd_tol):
        return -math.inf
    keep = w > cutoff
    VA = V.reshape(n, k, n * k).sum(axis=0).T  # row m is (A^T v_m)^T
    if not np.all(keep):
        leak = np.linalg.norm(VA[~keep])
        if leak > RANGE_TOL * math.sqrt(n):
            return -math.inf
    G = (VA[keep].T / w[keep]) @ VA[keep]
    sign, ld = np.linalg.slogdet(0.5 * (G + G.T))
    if sign <= 0 or not np.isfinite(ld):
        return -math.inf
    return -float(ld)


@dataclass
class SearchOptions:
    """Knobs for :func:`search_rmax_vector`.

    ``bounds="pairwise"`` keeps each coefficient in ``[0, r_ij_pm]``;
    ``"unit"`` allows ``[0, 1]``. Either way moves that break PSD-ness of the
    joint covariance are rejected.
    """

    max_sweeps: int = 50
    rel_tol: float = 1e-10
    bounds: str = "pairwise"
    psd_tol: float | None = None
    golden_tol: float = 1e-10
    bisect_steps: int = 50


def _feasible_edge(is_ok, inside: float, outside: float, steps: int) -> float:
    if is_ok(outside):
        return outside
    for _ in range(steps):
        mid = 0.5 * (inside + outside)
        if is_ok(mid):
            inside = mid
        else:
            outside = mid
    return inside


def _golden_argmax(f, a: float, b: float, tol: float) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def search_rmax_vector(estimates: Sequence, options: SearchOptions | None = None) -> CorrelationVector:
    """Heuristic coordinate ascent on ``log|P|`` starting from the pairwise-max vector.

    This is a local search, not a certified global optimum. Each sweep visits
    the pairs in lexicographic order; for each one the feasible sub-interval
    of the coefficient (inside the box and keeping the joint covariance PSD)
    is located by bisection and maximized by golden section. A move is kept
    only if it improves the objective by more than ``rel_tol``. If the
    starting vector is infeasible the search restarts from zero and sets
    ``flags["fallback_start"]``.
    """
    opts = options or SearchOptions()
    if opts.bounds not in SEARCH_BOUNDS:
        raise ValidationError(f"bounds must be one of {SEARCH_BOUNDS}, got {opts.bounds!r}")
    covs = _covariances(estimates)
    n = len(covs)
    if n < 2:
        return CorrelationVector(n, np.zeros(0), flags={"sweeps": 0, "objective": None})

    start = pairwise_max_vector(covs)
    upper = start.values.copy() if opts.bounds == "pairwise" else np.ones_like(start.values)
    roots: dict = {}
    x = start.values.copy()
    obj = blue_log_det(covs, x, roots, opts.psd_tol)
    fallback = False
    if not math.isfinite(obj):
        fallback = True
        x = np.zeros_like(x)
        obj = blue_log_det(covs, x, roots, opts.psd_tol)
    start_obj = obj

    def feasible(vals) -> bool:
        return check_psd(build_joint(covs, vals, roots), opts.psd_tol).is_psd

    sweeps = 0
    for sweeps in range(1, opts.max_sweeps + 1):
        sweep_start = obj
        for p in range(x.size):
            trial = x.copy()

            def at(v, p=p, trial=trial):
                trial[p] = v
                return trial

            cur = x[p]
            hi = _feasible_edge(lambda v: feasible(at(v)), cur, float(upper[p]), opts.bisect_steps)
            lo = _feasible_edge(lambda v: feasible(at(v)), cur, 0.0, opts.bisect_steps)
            if hi - lo <= 0.0:
                continue

            def f(v):
                return blue_log_det(covs, at(v), roots, opts.psd_tol)

            best_v, best_f = _golden_argmax(f, lo, hi, opts.golden_tol)
            for edge in (lo, hi):
                fe = f(edge)
                if fe > best_f:
                    best_v, best_f = edge, fe
            if best_f > obj + opts.rel_tol * max(1.0, abs(obj)):
                x[p] = best_v
                obj = best_f
        if obj - sweep_start <= opts.rel_tol * max(1.0, abs(sweep_start)):
            break

    R = build_joint(covs, x, roots)
    return CorrelationVector(
        n,
        np.clip(x, -1.0, 1.0),
        feasible=check_psd(R, opts.psd_tol),
        flags={
            "fallback_start": fallback,
            "sweeps": sweeps,
            "objective": obj,
            "start_objective": start_obj,
            "degenerate_pairs": start.flags.get("degenerate_pairs", []),
        },
    )


def random_spd(rng: np.random.Generator, k: int, log_spread: float = 2.0) -> np.ndarray:
    """Random SPD matrix with Haar-random eigenvectors and log-uniform eigenvalues."""
    Q, Rq = np.linalg.qr(rng.standard_normal((k, k)))
    Q = Q * np.sign(np.diag(Rq))
    w = np.exp(rng.uniform(-log_spread, log_spread, size=k))
    M = (Q * w) @ Q.T
    return 0.5 * (M + M.T)


@dataclass
class ConjectureReport:
    n: int
    k: int
    seed: int
    trials: int
    violations: int
    worst_min_eigenvalue: float
    worst_seed: int

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "seed": self.seed,
            "trials": self.trials,
            "violations": self.violations,
            "worst_min_eigenvalue": self.worst_min_eigenvalue,
            "worst_seed": self.worst_seed,
        }


def conjecture_instance(trial_seed: int, n: int, k: int) -> tuple[list[np.ndarray], np.ndarray]:
    """The covariances of one trial and the joint matrix built at the pairwise-max vector."""
    rng = np.random.default_rng(trial_seed)
    covs = [random_spd(rng, k) for _ in range(n)]
    return covs, build_joint(covs, pairwise_max_vector(covs))


def psd_conjecture_trial(seed: int, n: int, k: int, trials: int, tol: float | None = None) -> ConjectureReport:
    """Check, on random ensembles, whether ``R(r_pm)`` is PSD.

    Each trial draws its own seed from ``seed`` so any single trial can be
    replayed with :func:`conjecture_instance`. The eigenvalue reported as
    worst is scaled by the largest eigenvalue of its matrix.
    """
    for name, v, least in (("n", n, 2), ("k", k, 1), ("trials", trials, 1)):
        if int(v) != v or v < least:
            raise ValidationError(f"{name} must be an integer >= {least}, got {v}")
    trial_seeds = np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint32)
    violations = 0
    worst = math.inf
    worst_seed = int(trial_seeds[0])
    for ts in trial_seeds:
        _, R = conjecture_instance(int(ts), n, k)
        w = np.linalg.eigvalsh(R)
        rel = float(w[0] / max(abs(w[-1]), 1e-300))
        if not check_psd(R, tol).is_psd:
            violations += 1
        if rel < worst:
            worst, worst_seed = rel, int(ts)
    return ConjectureReport(n, k, int(seed), int(trials), violations, worst, worst_seed)


@dataclass
class ComponentRule:
    """How the cross coefficients of one covariance component are chosen."""

    kind: str
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in RULES:
            raise ValidationError(f"unknown rule {self.kind!r}; expected one of {RULES}")
        if self.kind == "time-decay":
            if self.gamma is None or not (self.gamma > 0 and math.isfinite(self.gamma)):
                raise ValidationError("time-decay needs a positive finite gamma")


@dataclass
class StructuredModel:
    """Rules for the correlated components ``B_1..B_m``; ``B_0`` is always independent."""

    rules: list[ComponentRule]

    @property
    def m(self) -> int:
        return len(self.rules)

    @classmethod
    def time_decay(cls, gamma: float) -> "StructuredModel":
        return cls([ComponentRule("time-decay", gamma)])


def component_rmax(Bi: np.ndarray, Bj: np.ndarray) -> float:
    """Pairwise max coefficient of two components; 0 if either is singular."""
    if not (check_psd(Bi).is_pd and check_psd(Bj).is_pd):
        return 0.0
    return solve_rmax(build_geometry(Bi, Bj)).r_max


def decay_coefficient(r_max: float, gamma: float, dt: float) -> float:
    return r_max * math.exp(-gamma * abs(dt))


def structured_coefficients(estimates: Sequence[Estimate], model: StructuredModel) -> list[CorrelationVector]:
    """Coefficient vectors for components ``0..m`` (component 0 is all zeros)."""
    n = len(estimates)
    if n == 0:
        raise ValidationError("need at least one estimate")
    for i, e in enumerate(estimates):
        if e.components is None or len(e.components) != model.m + 1:
            got = 0 if e.components is None else len(e.components)
            raise ValidationError(f"estimate {i} has {got} components, model needs {model.m + 1}")
    out = [CorrelationVector.zeros(n)]
    for a, rule in enumerate(model.rules, start=1):
        if rule.kind == "time-decay" and any(e.t is None for e in estimates):
            missing = [i for i, e in enumerate(estimates) if e.t is None]
            raise ValidationError(f"time-decay rule needs timestamps; missing for estimates {missing}")
        vals = []
        for i, j in pair_list(n):
            ei, ej = estimates[i], estimates[j]
            if rule.kind == "zero":
                vals.append(0.0)
                continue
            if rule.kind == "grouped-by-instrument" and (ei.instrument is None or ei.instrument != ej.instrument):
                vals.append(0.0)
                continue
            r = component_rmax(ei.components[a], ej.components[a])
            if rule.kind == "time-decay":
                r = decay_coefficient(r, rule.gamma, ei.t - ej.t)
            vals.append(r)
        out.append(CorrelationVector(n, np.array(vals)))
    return out


def assemble_structured(estimates: Sequence[Estimate], coefficients: list[CorrelationVector],
                        tol: float | None = None) -> np.ndarray:
    """Sum of per-component joint matrices; raises InfeasibleError if not PSD."""
    R = sum(
        build_joint([e.components[a] for e in estimates], coefficients[a])
        for a in range(len(coefficients))
    )
    rep = check_psd(R, tol)
    if not rep.is_psd:
        raise InfeasibleError(
            f"structured joint covariance is not PSD (min eigenvalue {rep.min_eigenvalue:.6g})", rep
        )
    return R


def build_structured_joint(estimates: Sequence[Estimate], model: StructuredModel,
                           tol: float | None = None) -> np.ndarray:
    """Joint covariance of the sum-of-components model."""
    return assemble_structured(estimates, structured_coefficients(estimates, model), tol)
