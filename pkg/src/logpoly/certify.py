"""Tightness verdicts, feasible lower bounds and the SOS-concavity test."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .conic import ProgramBuilder, SolverSettings, solve, triu_index, triu_to_matrix
from .extract import DEFAULT_RANK_TOL, ExtractionResult, numeric_rank
from .model import LogPolyProblem, relaxation_degree
from .moments import Tms, moment_matrix
from .polycore import Polynomial, monomial_basis

VERDICTS = ("tight_rank1", "tight_equal_values", "tight_sos_concave", "inconclusive")

DEFAULT_FEAS_TOL = 1e-7
DEFAULT_EQUAL_TOL = 1e-5
DEFAULT_CERT_TOL = 1e-5
REFINE_SEED = 7
REFINE_STARTS = 8
POLISH_RADIUS = 1e-3


class CertificationRefused(RuntimeError):
    """The relaxation was not solved to optimality, so nothing can be certified."""

    def __init__(self, status: str):
        super().__init__(f"cannot certify a relaxation with solve status {status!r}")
        self.status = status


# ----------------------------------------------------------------------------
# feasibility


@dataclass
class FeasibilityReport:
    point: np.ndarray
    eq_residuals: list[float]
    ineq_values: list[float]
    objective_values: list[float]
    tol: float
    feasible: bool
    objective_defined: bool

    @property
    def max_violation(self) -> float:
        v = [abs(r) for r in self.eq_residuals] + [max(0.0, -g) for g in self.ineq_values]
        return max(v, default=0.0)

    def to_json(self) -> dict:
        return {
            "point": self.point.tolist(),
            "eq_residuals": self.eq_residuals,
            "ineq_values": self.ineq_values,
            "objective_values": self.objective_values,
            "feasible": self.feasible,
            "objective_defined": self.objective_defined,
            "max_violation": self.max_violation,
        }


def _scale(q: Polynomial) -> float:
    return max(1.0, q.max_abs_coefficient())


def check_feasible_point(v: Sequence[float], prob: LogPolyProblem, tol: float = DEFAULT_FEAS_TOL) -> FeasibilityReport:
    """Residuals of ``v`` against every constraint, plus the objective polynomials at ``v``.

    Tolerances are relative to each constraint's largest coefficient (at least 1).
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != prob.n:
        raise ValueError(f"point has {v.size} coordinates, problem has {prob.n}")
    eq = [c(v) for c in prob.eq]
    ineq = [c(v) for c in prob.ineq]
    ok = all(abs(r) <= tol * _scale(c) for r, c in zip(eq, prob.eq))
    ok = ok and all(g >= -tol * _scale(c) for g, c in zip(ineq, prob.ineq))
    pv = [p(v) for p in prob.objective]
    return FeasibilityReport(v, eq, ineq, pv, tol, bool(ok), all(x > 0 for x in pv))


# ----------------------------------------------------------------------------
# local refinement of candidate points


def _neg_objective(prob: LogPolyProblem):
    grads = [p.gradient() for p in prob.objective]

    def fun(x):
        total, g = 0.0, np.zeros(prob.n)
        for a, p, gp in zip(prob.weights, prob.objective, grads):
            v = max(p(x), 1e-300)
            total += a * math.log(v)
            g += a / v * np.array([q(x) for q in gp])
        return -total, -g

    return fun


def _constraints(prob: LogPolyProblem, floor: float) -> list[dict]:
    def mk(kind, q, shift=0.0):
        grad = q.gradient()
        return {"type": kind, "fun": lambda x: q(x) - shift, "jac": lambda x: np.array([g(x) for g in grad])}

    cons = [mk("eq", c) for c in prob.eq] + [mk("ineq", c) for c in prob.ineq]
    # keep every p_i strictly positive so the logarithms stay defined
    cons += [mk("ineq", p, floor) for p in prob.objective]
    return cons


def local_refine(prob: LogPolyProblem, starts: Sequence[Sequence[float]], maxiter: int = 60) -> list[np.ndarray]:
    """Run SLSQP on the original problem from each start; returns the end points.

    End points that miss feasibility are projected back onto the constraints.
    """
    fun = _neg_objective(prob)
    cons = _constraints(prob, 1e-12)
    out = []
    for x0 in starts:
        x0 = np.asarray(x0, dtype=float)
        if not np.all(np.isfinite(x0)):
            continue
        with np.errstate(all="ignore"):
            res = minimize(fun, x0, jac=True, method="SLSQP", constraints=cons, options={"maxiter": maxiter, "ftol": 1e-10})
            x = np.asarray(res.x, dtype=float)
            if not np.all(np.isfinite(x)):
                continue
            if not check_feasible_point(x, prob).feasible:
                # SLSQP stops at its own feasibility accuracy; finish with a projection
                x = next(iter(_project(prob, x)), x)
        out.append(x)
    return out


def refinement_starts(prob: LogPolyProblem, anchors: Sequence[np.ndarray], count: int = REFINE_STARTS, seed: int = REFINE_SEED):
    """Anchors, the witness, and Gaussian jitters around the first anchor."""
    starts = [np.asarray(a, dtype=float) for a in anchors]
    if prob.witness is not None:
        starts.append(np.asarray(prob.witness, dtype=float))
    center = starts[0] if starts else np.zeros(prob.n)
    rng = np.random.default_rng(seed)
    spread = 0.5 * max(1.0, float(np.max(np.abs(center), initial=0.0)))
    starts += [center + spread * rng.standard_normal(prob.n) for _ in range(count)]
    return starts


def _project(prob: LogPolyProblem, v: np.ndarray) -> list[np.ndarray]:
    """Nearest point to ``v`` satisfying the constraints, as found by SLSQP."""
    if not np.all(np.isfinite(v)):
        return []

    def fun(x):
        d = x - v
        return 0.5 * float(d @ d), d

    with np.errstate(all="ignore"):
        res = minimize(fun, v, jac=True, method="SLSQP", constraints=_constraints(prob, 1e-12), options={"maxiter": 100, "ftol": 1e-14})
    return [np.asarray(res.x, dtype=float)] if np.all(np.isfinite(res.x)) else []


def polish(prob: LogPolyProblem, v, tol: float = DEFAULT_FEAS_TOL) -> tuple[np.ndarray | None, float]:
    """A feasible point within ``POLISH_RADIUS`` (relative) of ``v``, and its distance.

    Moments from an interior point solver satisfy the constraints only to
    solver accuracy; a projection (or, failing that, a short local ascent)
    moves such points onto ``K``.
    Returns ``(None, inf)`` when no nearby feasible point is found.
    """
    v = np.asarray(v, dtype=float)
    if check_feasible_point(v, prob, tol).feasible:
        return v, 0.0
    for w in [*_project(prob, v), *local_refine(prob, [v])]:
        dist = float(np.linalg.norm(w - v))
        if dist <= POLISH_RADIUS * (1.0 + np.linalg.norm(v)) and check_feasible_point(w, prob, tol).feasible:
            return w, dist
    return None, math.inf


# ----------------------------------------------------------------------------
# SOS-concavity


@dataclass
class SosConcavity:
    """``verdict`` is True/False, or None when the solver could not decide."""

    verdict: bool | None
    gram: np.ndarray | None = None
    basis: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)
    status: str = ""

    def __bool__(self) -> bool:
        return self.verdict is True


def sos_concavity_check(p: Polynomial, settings: SolverSettings | None = None) -> SosConcavity:
    """Decide whether ``w^T (-hess p(x)) w`` is a sum of squares in ``(x, w)``.

    The Gram matrix is indexed by ``w_i x^beta`` with ``|beta| <= ceil(deg p / 2) - 1``.
    """
    full_n = p.n
    if p.degree <= 1:
        return SosConcavity(True, np.zeros((0, 0)), [], "trivial")
    # the Hessian vanishes off the variables p uses, so the test runs on that subspace
    support = sorted({i for alpha in p.terms for i, a in enumerate(alpha) if a})
    p = Polynomial(len(support), {tuple(alpha[i] for i in support): c for alpha, c in p.items()})
    n = p.n
    H = [[-h for h in row] for row in p.hessian()]
    e = p.half_degree() - 1
    xb = monomial_basis(n, e).monomials
    basis = [(i, beta) for i in range(n) for beta in xb]
    N = len(basis)
    slots = triu_index(N)
    builder = ProgramBuilder(len(slots))
    # target coefficients of w_i w_j x^gamma (i <= j)
    target: dict[tuple[int, int, tuple[int, ...]], float] = {}
    for i in range(n):
        for j in range(i, n):
            for gamma, c in H[i][j].items():
                target[(i, j, gamma)] = c * (1.0 if i == j else 2.0)
    rows: dict[tuple[int, int, tuple[int, ...]], dict[int, float]] = {}
    for s, (a, b) in enumerate(slots):
        (i, ba), (j, bb) = basis[a], basis[b]
        key = (min(i, j), max(i, j), tuple(u + v for u, v in zip(ba, bb)))
        rows.setdefault(key, {})[s] = rows.get(key, {}).get(s, 0.0) + (1.0 if a == b else 2.0)
    for key in set(rows) | set(target):
        if key not in rows:
            # a Hessian coefficient no Gram entry can produce
            return SosConcavity(False, None, [], "unrepresentable")
        builder.add_equality(rows[key], target.get(key, 0.0), dedupe=False)
    builder.add_cone("psd", N, [({s: 1.0}, 0.0) for s in range(len(slots))], label="gram")
    sol = solve(builder.build(), settings)

    def lift(i, beta):
        full = [0] * full_n
        for j, b in zip(support, beta):
            full[j] = b
        return support[i], tuple(full)

    basis = [lift(i, beta) for i, beta in basis]
    if sol.status == "optimal":
        return SosConcavity(True, triu_to_matrix(sol.x, N), basis, sol.status)
    if sol.status == "infeasible":
        return SosConcavity(False, None, basis, sol.status)
    return SosConcavity(None, None, basis, sol.status)


# ----------------------------------------------------------------------------
# certificates


@dataclass
class Certificate:
    verdict: str
    upper: float
    lower: float | None
    argmax: np.ndarray | None
    maximizers: list[np.ndarray]
    trail: list[dict]
    candidates: list[FeasibilityReport] = field(default_factory=list)

    @property
    def gap(self) -> float | None:
        return None if self.lower is None else self.upper - self.lower

    @property
    def tight(self) -> bool:
        return self.verdict != "inconclusive"

    def to_json(self, lift=None) -> dict:
        conv = (lambda v: lift(v).tolist()) if lift is not None else (lambda v: np.asarray(v).tolist())
        return {
            "verdict": self.verdict,
            "upper": self.upper,
            "lower": self.lower,
            "gap": self.gap,
            "argmax": None if self.argmax is None else conv(self.argmax),
            "maximizers": [conv(v) for v in self.maximizers],
            "trail": self.trail,
        }


@dataclass
class CertifyOptions:
    rank_tol: float = DEFAULT_RANK_TOL
    equal_tol: float = DEFAULT_EQUAL_TOL
    feas_tol: float = DEFAULT_FEAS_TOL
    cert_tol: float = DEFAULT_CERT_TOL
    sos_concave: bool = False
    refine: bool = True
    settings: SolverSettings | None = None

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in ("rank_tol", "equal_tol", "feas_tol", "cert_tol", "sos_concave", "refine")}


def _equal_values(prob: LogPolyProblem, points: Sequence[np.ndarray], tol: float) -> tuple[bool, float]:
    worst = 0.0
    for p in prob.objective:
        vals = [p(v) for v in points]
        spread = (max(vals) - min(vals)) / (1.0 + max(abs(u) for u in vals))
        worst = max(worst, spread)
    return worst <= tol, worst


def sos_concave_problem(prob: LogPolyProblem, settings: SolverSettings | None = None) -> tuple[bool | None, dict]:
    """All ``p_i`` and ``c_I`` SOS-concave and all ``c_E`` affine."""
    detail: dict = {"objective": [], "ineq": [], "eq_affine": all(c.degree <= 1 for c in prob.eq)}
    verdict: bool | None = detail["eq_affine"]
    for role, polys in (("objective", prob.objective), ("ineq", prob.ineq)):
        for q in polys:
            r = sos_concavity_check(q, settings)
            detail[role].append(r.verdict)
            if r.verdict is False:
                verdict = False
            elif r.verdict is None and verdict is not False:
                verdict = None
    return verdict, detail


def certify_tightness(
    prob: LogPolyProblem,
    y: Tms,
    upper: float,
    status: str = "optimal",
    extraction: ExtractionResult | None = None,
    options: CertifyOptions | None = None,
) -> Certificate:
    """Decide tightness of a solved relaxation with value ``upper`` and moments ``y``.

    Checks, in order: rank one ``M_d``; equal objective values across the
    extracted atoms; (opt-in) SOS-concavity of the whole problem. Whatever the
    outcome, the lower bound is the best objective value over feasible
    candidate points: atoms, the first-order moments, and local refinements.
    """
    if status != "optimal":
        raise CertificationRefused(status)
    opt = options or CertifyOptions()
    d = relaxation_degree(prob)
    vstar = y.first_moments()
    trail: list[dict] = [{"check": "tolerances", **opt.to_json()}]
    atoms = [] if extraction is None else list(extraction.points)

    anchors = [vstar, *atoms]
    cands = list(anchors)
    if opt.refine:
        cands += local_refine(prob, refinement_starts(prob, anchors))
    with np.errstate(all="ignore"):
        # failed refinements can wander far away; they are simply infeasible
        reports = [check_feasible_point(v, prob, opt.feas_tol) for v in cands]
    usable = [(prob.value(r.point), r.point) for r in reports if r.feasible and r.objective_defined]
    lower, argmax = max(usable, key=lambda t: t[0]) if usable else (None, None)
    trail.append({"check": "candidates", "count": len(cands), "feasible": len(usable), "refined": opt.refine})

    tol = opt.cert_tol * (1.0 + abs(upper))

    def closes(value) -> bool:
        return value is not None and upper - value <= tol

    verdict, maximizers = "inconclusive", []

    def value_of(v):
        return None if v is None else prob.value(v)

    r_d = numeric_rank(moment_matrix(y, d), opt.rank_tol)
    vpol, vdist = polish(prob, vstar, opt.feas_tol)
    fv = value_of(vpol)
    step = {"check": "rank_one", "order": d, "rank": r_d, "polish_distance": vdist, "value": fv}
    trail.append(step)
    if r_d == 1:
        step["passed"] = closes(fv)
        if step["passed"]:
            verdict, maximizers = "tight_rank1", [vpol]
        else:
            step["note"] = "rank one but no feasible point near the first moments attains the bound"

    if verdict == "inconclusive":
        step = {"check": "equal_values", "atoms": len(atoms)}
        trail.append(step)
        if atoms:
            eq_ok, spread = _equal_values(prob, atoms, opt.equal_tol)
            polished = [polish(prob, v, opt.feas_tol) for v in atoms]
            pts = [w for w, _ in polished]
            vals = [value_of(w) for w in pts]
            step.update(spread=spread, polish_distances=[dd for _, dd in polished], atom_values=vals)
            step["passed"] = eq_ok and all(closes(v) for v in vals)
            if step["passed"]:
                verdict, maximizers = "tight_equal_values", pts
        else:
            step["passed"] = False
            step["note"] = "no extraction"

    if verdict == "inconclusive" and opt.sos_concave:
        ok, detail = sos_concave_problem(prob, opt.settings)
        step = {"check": "sos_concave", "verdict": ok, **detail, "polish_distance": vdist, "value": fv}
        trail.append(step)
        step["passed"] = ok is True and vpol is not None
        if step["passed"]:
            # Jensen: the first moments lie in K and attain at least the bound
            verdict, maximizers = "tight_sos_concave", [vpol]
            if not closes(fv):
                step["note"] = "first moments fall short of the bound beyond tolerance"
                verdict, maximizers = "inconclusive", []

    # polished points are feasible candidates too
    for w in maximizers:
        if w is not None and (lower is None or prob.value(w) > lower):
            lower, argmax = prob.value(w), w

    if verdict != "inconclusive" and not closes(lower):
        trail.append({"check": "gap", "passed": False, "note": "verdict withdrawn, gap above tolerance"})
        verdict, maximizers = "inconclusive", []
    trail.append({"check": "gap", "upper": upper, "lower": lower, "tolerance": tol})
    return Certificate(verdict, upper, lower, argmax, maximizers, trail, reports)
