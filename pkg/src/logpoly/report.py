"""Run reports: JSON documents and their four-decimal text rendering."""
from __future__ import annotations

import hashlib
import json
import math
from importlib import metadata
from pathlib import Path
from typing import Any, Iterable

from .model import LogPolyProblem, problem_to_json
from .pipeline import OrderResult, first_flat

REPORT_FORMAT = "logpoly-report"
REPORT_VERSION = 1
SCHEMA_PATH = Path(__file__).parent / "data" / "schema" / "report.schema.json"
PROBLEM_SCHEMA_PATH = Path(__file__).parent / "data" / "schema" / "problem.schema.json"


def problem_digest(prob: LogPolyProblem) -> str:
    doc = json.dumps(problem_to_json(prob), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).hexdigest()


def _version(pkg: str) -> str:
    try:
        return metadata.version(pkg)
    except metadata.PackageNotFoundError:
        return "unknown"


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _clean(obj):
    """Replace non-finite floats by null so the document is strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _clean(obj.tolist())
    return _finite(obj)


def row_json(res: OrderResult, prob: LogPolyProblem) -> dict:
    sol = res.solution
    return {
        "mode": res.mode,
        "k": res.k,
        "clearing": res.clearing,
        "status": sol.status,
        "backend_status": sol.backend_status,
        "reduced_accuracy": sol.reduced_accuracy,
        "attempts": sol.attempts,
        "value": res.value,
        "build_seconds": res.build_seconds,
        "solve_seconds": sol.solve_time,
        "iterations": sol.iterations,
        "flat": None if res.flat is None else {"t": res.flat[0], "r": res.flat[1]},
        "relaxation": res.relaxation.spec.to_json(),
        "extraction": None if res.extraction is None else res.extraction.to_json(prob.lift),
        "extraction_error": res.extraction_error,
        "certificate": None if res.certificate is None else res.certificate.to_json(prob.lift),
        "notes": list(res.notes),
    }


def build_report(command: str, prob: LogPolyProblem, results: Iterable[OrderResult], settings: dict, extra: dict | None = None) -> dict:
    results = sorted(results, key=lambda r: (r.mode, r.k))
    rows = [row_json(r, prob) for r in results]
    head = rows[-1] if rows else None
    modes = sorted({r.mode for r in results})
    doc: dict[str, Any] = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "command": command,
        "tool": {"name": "logpoly", "version": _version("logpoly"), "backend": f"clarabel {_version('clarabel')}"},
        "problem": {
            "name": prob.name,
            "digest": problem_digest(prob),
            "n": prob.n,
            "terms": prob.m,
            "class": prob.constraint_class.kind,
        },
        "settings": settings,
        "rows": rows,
        "first_flat": {m: first_flat(results, m) for m in modes},
        "extraction": head["extraction"] if head else None,
        "certificate": head["certificate"] if head else None,
    }
    if extra:
        doc.update(extra)
    return _clean(doc)


# ----------------------------------------------------------------------------
# text


def fmt(v, digits: int = 4) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, int):
        return str(v)
    return f"{v:.{digits}f}"


def fmt_vec(v) -> str:
    return "(" + ", ".join(fmt(x) for x in v) + ")"


def render_text(doc: dict) -> str:
    out = []
    p = doc["problem"]
    out.append(f"problem {p['name'] or '<unnamed>'}  n={p['n']}  terms={p['terms']}  class={p['class']}")
    out.append(f"digest  {p['digest'][:16]}")
    out.append("")
    out.append(f"{'mode':<9}{'k':>3}  {'status':<18}{'value':>14}  {'seconds':>8}  flat")
    for r in doc["rows"]:
        flat = f"t={r['flat']['t']} r={r['flat']['r']}" if r["flat"] else "-"
        out.append(f"{r['mode']:<9}{r['k']:>3}  {r['status']:<18}{fmt(r['value']):>14}  {fmt(r['solve_seconds']):>8}  {flat}")
    ff = doc.get("first_flat") or {}
    if len(doc["rows"]) > 1:
        out.append("")
        for m, k in ff.items():
            out.append(f"first flat order ({m}): {fmt(k)}")
    ex = doc.get("extraction")
    if ex:
        out.append("")
        out.append(f"atoms (t={ex['t']}, r={ex['rank']}, residual={fmt(ex['residual'])})")
        for w, v in zip(ex["weights"], ex["points"]):
            out.append(f"  weight {fmt(w)}  point {fmt_vec(v)}")
    cert = doc.get("certificate")
    if cert:
        out.append("")
        out.append(f"verdict  {cert['verdict']}")
        out.append(f"upper    {fmt(cert['upper'])}")
        out.append(f"lower    {fmt(cert['lower'])}")
        out.append(f"gap      {fmt(cert['gap'])}")
        if cert["argmax"] is not None:
            out.append(f"argmax   {fmt_vec(cert['argmax'])}")
        for v in cert["maximizers"]:
            out.append(f"maximizer {fmt_vec(v)}")
    for r in doc["rows"]:
        for note in r["notes"]:
            out.append(f"note (mode {r['mode']}, k={r['k']}): {note}")
        if r["extraction_error"]:
            out.append(f"note (mode {r['mode']}, k={r['k']}): extraction failed: {r['extraction_error']}")
    for note in doc.get("notes", []):
        out.append(f"note: {note}")
    return "\n".join(out) + "\n"


def render_trail(doc: dict) -> str:
    cert = doc.get("certificate")
    if not cert:
        return ""
    lines = ["", "justification"]
    for step in cert["trail"]:
        name = step.get("check", "?")
        rest = ", ".join(f"{k}={_short(v)}" for k, v in step.items() if k != "check")
        lines.append(f"  {name}: {rest}")
    return "\n".join(lines) + "\n"


def _short(v):
    if isinstance(v, float):
        return fmt(v) if abs(v) >= 1e-3 or v == 0 else f"{v:.2e}"
    if isinstance(v, list):
        return "[" + ", ".join(str(_short(x)) for x in v) + "]"
    return v


def load_schema(path: Path = SCHEMA_PATH) -> dict:
    return json.loads(path.read_text())
