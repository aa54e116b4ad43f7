"""Command-line entry point.

Exit codes: 0 success, 2 invalid input or parameters, 3 numerical
infeasibility.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

import numpy as np

from .documents import dumps, fmt, load_json, parse_document, require_pd, structured_model
from .errors import DomainError, InfeasibleError, ValidationError
from .fusion import (
    coefficients_used,
    fuse_convolve,
    fuse_convolve_inflated,
    fuse_max_entropy,
    fuse_structured,
)
from .joint import SearchOptions, psd_conjecture_trial
from .linalg import check_psd, gaussian_entropy
from .pairwise import build_geometry, mismatch_covariance, pairwise_alpha, pairwise_beta, solve_rmax

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3
METHODS = ("convolve", "max-entropy", "max-entropy-pm", "convolve-inflated", "structured")
RP_CHOICES = ("zero", "rmax", "value", "match")
SWEEP_HEADER = ["r_p", "r_n", "det_P", "alpha", "beta", "entropy", "in_recommended_region"]


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _load(args):
    return parse_document(load_json(args.input), args.tol)


def _pair(doc, pair):
    i, j = pair
    n = len(doc.estimates)
    if not (0 <= i < n and 0 <= j < n) or i == j:
        raise ValidationError(f"--pair {i} {j} is invalid for {n} estimates")
    for idx in (i, j):
        rep = check_psd(doc.estimates[idx].E)
        if not rep.is_pd:
            raise ValidationError(
                f"estimate {idx}: E is not positive definite (min eigenvalue {rep.min_eigenvalue:.6g})"
            )
    return build_geometry(doc.estimates[i].E, doc.estimates[j].E)


def cmd_fuse(args) -> dict:
    doc = _load(args)
    method = args.method or doc.options.get("method") or "max-entropy"
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}")
    ests = doc.estimates
    if method == "structured":
        model = structured_model(doc)
        result = fuse_structured(ests, model, args.tol)
    elif method == "convolve":
        # singular members are fine as long as the summed information is PD
        result = fuse_convolve(ests)
    else:
        require_pd(doc, args.tol)
        if method == "convolve-inflated":
            result = fuse_convolve_inflated(ests)
        elif method == "max-entropy-pm":
            result = fuse_max_entropy(ests, "pm")
        else:
            result = fuse_max_entropy(ests, "exact", SearchOptions(psd_tol=args.tol))
    return {
        "method": method,
        "x_hat": result.x_hat,
        "P": result.P,
        "entropy": result.entropy,
        "det_P": result.det_P,
        "coefficients_used": coefficients_used(result),
    }


def cmd_rmax(args) -> dict:
    doc = _load(args)
    res = solve_rmax(_pair(doc, args.pair))
    return {
        "pair": list(args.pair),
        "r_max": res.r_max,
        "method": res.method,
        "candidates": res.candidates,
        "monotone_interval_verified": res.monotone_interval_verified,
        "degenerate": res.degenerate,
    }


def sweep_rows(geom, r_max: float, grid: int, rp_mode: str, rp_value: float | None = None) -> list[list]:
    """Rows of (r_p, r_n, |P|, alpha, beta, entropy, r_n <= r_max) for r_n = 0, 1/N, ..., 1 - 1/N."""
    if grid < 2:
        raise ValidationError("--grid must be at least 2")
    if rp_mode == "value":
        if rp_value is None or not 0.0 <= rp_value < 1.0:
            raise ValidationError("--rp value needs --rp-value in [0, 1)")
    rows = []
    for i in range(grid):
        r_n = i / grid
        r_p = {"zero": 0.0, "rmax": r_max, "value": rp_value, "match": r_n}[rp_mode]
        P = mismatch_covariance(geom, r_p, r_n)
        rows.append([
            r_p,
            r_n,
            float(np.linalg.det(P)),
            pairwise_alpha(geom, r_p, r_n),
            pairwise_beta(geom, r_p, r_n),
            gaussian_entropy(P),
            r_n <= r_max,
        ])
    return rows


def cmd_sweep(args) -> str:
    doc = _load(args)
    geom = _pair(doc, args.pair)
    r_max = solve_rmax(geom).r_max
    rows = sweep_rows(geom, r_max, args.grid, args.rp, args.rp_value)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([fmt(v) for v in row[:-1]] + ["true" if row[-1] else "false"])
    return buf.getvalue()


def cmd_conjecture(args) -> dict:
    seed = 0 if args.seed is None else args.seed
    return psd_conjecture_trial(seed, args.n, args.k, args.trials, args.tol).as_dict()


def cmd_validate(args) -> dict:
    doc = _load(args)
    rows = []
    for i, e in enumerate(doc.estimates):
        rep = check_psd(e.E, args.tol)
        rows.append({"index": i, "min_eigenvalue": rep.min_eigenvalue, "is_pd": rep.is_pd,
                     "components": 0 if e.components is None else len(e.components)})
    return {"valid": True, "k": doc.k, "n": len(doc.estimates), "estimates": rows}


def build_parser() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--input", "-i", help="input JSON document (default: standard input)")
    common.add_argument("--tol", type=float, default=None, help="PSD tolerance override")
    common.add_argument("--seed", type=int, default=None)

    parser = ArgumentParser(prog="ellipse-fusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p = sub.add_parser("fuse", parents=[common], help="fuse all estimates")
    p.add_argument("--method", choices=METHODS)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("rmax", parents=[common], help="entropy-maximizing coefficient of one pair")
    p.add_argument("--pair", nargs=2, type=int, required=True, metavar=("I", "J"))
    p.set_defaults(func=cmd_rmax)

    p = sub.add_parser("sweep", parents=[common], help="CSV of |P|, alpha, beta over r_n")
    p.add_argument("--pair", nargs=2, type=int, required=True, metavar=("I", "J"))
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--rp", choices=RP_CHOICES, default="zero")
    p.add_argument("--rp-value", type=float, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("conjecture", parents=[common], help="random PSD check of R(r_pm)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.set_defaults(func=cmd_conjecture)

    p = sub.add_parser("validate", parents=[common], help="check an input document")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        out = args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (InfeasibleError, DomainError, np.linalg.LinAlgError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    sys.stdout.write(out if isinstance(out, str) else dumps(out))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
