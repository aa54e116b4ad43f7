"""JSON input documents and 17-significant-digit JSON/CSV output."""

from __future__ import annotations

import io
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .gls import Estimate
from .joint import RULES, ComponentRule, StructuredModel
from .linalg import check_psd


@dataclass
class InputDocument:
    k: int
    estimates: list[Estimate]
    options: dict = field(default_factory=dict)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _matrix(raw, k: int, what: str) -> np.ndarray:
    try:
        M = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{what} is not a numeric matrix") from None
    if M.shape != (k, k):
        raise ValidationError(f"{what} must be {k}x{k}, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{what} has non-finite entries")
    return M


def parse_document(doc, tol: float | None = None) -> InputDocument:
    """Validate a decoded JSON document and build the estimates."""
    if not isinstance(doc, dict):
        raise ValidationError("input document must be a JSON object")
    k = doc.get("k")
    if not isinstance(k, int) or isinstance(k, bool) or k < 1:
        raise ValidationError("'k' must be a positive integer")
    raw = doc.get("estimates")
    if not isinstance(raw, list) or not raw:
        raise ValidationError("'estimates' must be a non-empty list")
    options = doc.get("options") or {}
    if not isinstance(options, dict):
        raise ValidationError("'options' must be an object")

    estimates = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise ValidationError(f"estimate {i} must be an object")
        try:
            y = np.array(item.get("y"), dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise ValidationError(f"estimate {i}: y is not numeric") from None
        if y.size != k or not np.all(np.isfinite(y)):
            raise ValidationError(f"estimate {i}: y must be {k} finite numbers")
        E = _matrix(item.get("E"), k, f"estimate {i}: E")
        E = 0.5 * (E + E.T)
        rep = check_psd(E, tol)
        if not rep.is_psd:
            raise ValidationError(
                f"estimate {i}: E is not positive semidefinite (min eigenvalue {rep.min_eigenvalue:.6g})"
            )
        comps = item.get("components")
        if comps is not None:
            if not isinstance(comps, list) or not comps:
                raise ValidationError(f"estimate {i}: components must be a non-empty list")
            comps = [_matrix(B, k, f"estimate {i}: component {a}") for a, B in enumerate(comps)]
        t = item.get("t")
        instrument = item.get("instrument")
        if instrument is not None and not isinstance(instrument, str):
            raise ValidationError(f"estimate {i}: instrument must be a string")
        try:
            estimates.append(Estimate(y, E, t=t, components=comps, instrument=instrument))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"estimate {i}: {exc}") from None
    return InputDocument(k, estimates, options)


def require_pd(doc: InputDocument, tol: float | None = None) -> None:
    for i, e in enumerate(doc.estimates):
        rep = check_psd(e.E, tol)
        if not rep.is_pd:
            raise ValidationError(
                f"estimate {i}: E is not positive definite (min eigenvalue {rep.min_eigenvalue:.6g})"
            )


def structured_model(doc: InputDocument) -> StructuredModel:
    """Model from ``options``: ``rules`` (one per bias component) and ``gamma``.

    Without explicit rules every bias component uses time decay when
    ``gamma`` is given and pairwise max otherwise.
    """
    first = doc.estimates[0].components
    if first is None:
        raise ValidationError("structured fusion requires components on every estimate")
    m = len(first) - 1
    gamma = doc.options.get("gamma")
    if gamma is not None:
        try:
            gamma = float(gamma)
        except (TypeError, ValueError):
            raise ValidationError("options.gamma must be a number") from None
    rules = doc.options.get("rules")
    if rules is None:
        rules = ["time-decay" if gamma is not None else "pairwise-max"] * m
    if not isinstance(rules, list) or len(rules) != m or not all(r in RULES for r in rules):
        raise ValidationError(f"options.rules must list {m} entries from {RULES}")
    return StructuredModel([ComponentRule(r, gamma if r == "time-decay" else None) for r in rules])


def load_json(path: str | None):
    try:
        if path is None or path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"input is not valid JSON: {exc}") from None
    except OSError as exc:
        raise ValidationError(f"cannot read input: {exc}") from None


def _encode(obj, out: io.StringIO, indent: int, level: int) -> None:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        out.write("true" if obj else "false")
    elif obj is None:
        out.write("null")
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(fmt(obj) if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{")
        for n, (key, val) in enumerate(obj.items()):
            out.write(("," if n else "") + pad + json.dumps(str(key)) + ": ")
            _encode(val, out, indent, level + 1)
        out.write(end + "}")
    elif isinstance(obj, (list, tuple)):
        flat = all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj)
        if flat:
            out.write("[")
            for n, v in enumerate(obj):
                out.write(", " if n else "")
                _encode(v, out, indent, level + 1)
            out.write("]")
            return
        out.write("[")
        for n, v in enumerate(obj):
            out.write(("," if n else "") + pad)
            _encode(v, out, indent, level + 1)
        out.write(end + "]")
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float printed to 17 significant digits."""
    out = io.StringIO()
    _encode(obj, out, indent, 0)
    return out.getvalue() + "\n"
