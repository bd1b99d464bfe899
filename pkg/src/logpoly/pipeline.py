"""Build, solve, extract and certify in one call; sweeps over orders."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .certify import Certificate, CertificationRefused, CertifyOptions, certify_tightness
from .conic import ConicSolution, SolverSettings, solve
from .extract import DEFAULT_RANK_TOL, ExtractionError, ExtractionResult, extract_atoms, flat_truncation
from .model import LogPolyProblem
from .moments import Tms
from .relax import DEFAULT_CLEARING, Relaxation, build_relaxation, min_order


@dataclass
class OrderResult:
    """Everything produced for one (mode, order) pair."""

    mode: str
    k: int
    clearing: str | None
    relaxation: Relaxation
    solution: ConicSolution
    build_seconds: float
    tms: Tms | None = None
    flat: tuple[int, int] | None = None
    extraction: ExtractionResult | None = None
    extraction_error: str | None = None
    certificate: Certificate | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        return self.solution.status

    @property
    def value(self) -> float | None:
        return self.solution.value if self.solution.ok else None


def solve_problem(
    prob: LogPolyProblem,
    k: int | None = None,
    mode: str = "standard",
    clearing: str = DEFAULT_CLEARING,
    rank_tol: float = DEFAULT_RANK_TOL,
    sos_concave: bool = False,
    settings: SolverSettings | None = None,
    certify: bool = True,
    ball_radius: float | None = None,
) -> OrderResult:
    """Solve the order-``k`` relaxation (the smallest valid order if ``k`` is None)."""
    if k is None:
        k = min_order(prob, mode, clearing)
    t0 = time.perf_counter()
    rel = build_relaxation(prob, k, mode, clearing, ball_radius)
    built = time.perf_counter() - t0
    sol = solve(rel.program, settings)
    res = OrderResult(mode, k, rel.spec.clearing, rel, sol, built)
    if sol.reduced_accuracy:
        res.notes.append("solver stopped at reduced accuracy; residuals within the acceptance threshold")
    if not sol.ok:
        return res
    y = rel.tms(sol.x)
    res.tms = y
    res.flat = flat_truncation(y, rel.spec.d, k, rank_tol)
    if res.flat is not None:
        try:
            res.extraction = extract_atoms(y, *res.flat, problem=prob)
        except ExtractionError as e:
            res.extraction_error = str(e)
    if certify:
        opts = CertifyOptions(rank_tol=rank_tol, sos_concave=sos_concave, settings=settings)
        try:
            res.certificate = certify_tightness(prob, y, sol.value, sol.status, res.extraction, opts)
        except CertificationRefused as e:  # pragma: no cover - guarded by sol.ok above
            res.notes.append(str(e))
    return res


def sweep(
    prob: LogPolyProblem,
    k_min: int | None,
    k_max: int,
    modes: tuple[str, ...] = ("standard",),
    clearing: str = DEFAULT_CLEARING,
    workers: int = 1,
    **kw,
) -> list[OrderResult]:
    """Solve every valid order in ``[k_min, k_max]`` for each mode, sorted by (mode, k).

    Orders below a mode's minimum are skipped; ``k_min=None`` starts at that minimum.
    """
    jobs = []
    for mode in modes:
        lo = min_order(prob, mode, clearing)
        start = lo if k_min is None else max(k_min, lo)
        jobs += [(mode, k) for k in range(start, k_max + 1)]

    def run(job):
        mode, k = job
        return solve_problem(prob, k, mode, clearing, **kw)

    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return sorted(results, key=lambda r: (r.mode, r.k))


def first_flat(results: list[OrderResult], mode: str) -> int | None:
    """Smallest order at which flat truncation held for ``mode``."""
    ks = [r.k for r in results if r.mode == mode and r.flat is not None]
    return min(ks) if ks else None
