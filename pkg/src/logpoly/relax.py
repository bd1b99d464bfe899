"""Moment relaxations with log-linear objectives.

Both relaxations share one encoding: the decision vector is the tms
``y`` of degree ``2k`` (``y_0`` pinned to 1 by an equality row) followed by
one epigraph scalar ``t_i`` per objective term; the objective is
``max sum a_i t_i`` with ``(t_i, 1, <p_i, y>)`` in the exponential cone.

The LME relaxation adds the optimality system of the constraint class
(box, simplex or ball).  Multiplier expressions are rational in ``x``; they
are turned into polynomials either by the single global factor
``p_1 * ... * p_m`` (``clearing="global"``) or by exact cancellation of each
expression to lowest terms (``clearing="minimal"``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conic import ConicProgram, ProgramBuilder
from .model import LogPolyProblem, relaxation_degree
from .moments import Tms, localizing_structure, moment_structure
from .polycore import DegreeError, MonomialBasis, Polynomial, monomial_basis

MODES = ("standard", "lme")
CLEARINGS = ("global", "minimal")
DEFAULT_CLEARING = "minimal"


class UnsupportedClassError(ValueError):
    """LMEs are only available for box, simplex and ball constraint classes."""


class ClearingError(ValueError):
    """A cleared multiplier denominator is not positive where it must be."""


@dataclass
class LmeSystem:
    tau: list[Polynomial]          # cleared multipliers, one per inequality row
    denominators: list[Polynomial]  # positive factor each tau was multiplied by
    gradient: list[Polynomial]     # n entries (zero entries are kept here)
    complementarity: list[Polynomial]
    clearing: str
    eq_constraints: list[Polynomial] = field(default_factory=list)
    ineq_constraints: list[Polynomial] = field(default_factory=list)

    @property
    def phi(self) -> list[Polynomial]:
        return [*self.eq_constraints, *self.gradient, *self.complementarity]

    @property
    def psi(self) -> list[Polynomial]:
        return [*self.ineq_constraints, *self.tau]

    def degree(self) -> int:
        """``d_1 = max ceil(deg(q)/2)`` over the nonzero members of Phi and Psi."""
        return max((q.half_degree() for q in (*self.phi, *self.psi) if not q.is_zero()), default=0)


# ----------------------------------------------------------------------------
# LME generation


def _check_class(prob: LogPolyProblem) -> None:
    kind = prob.constraint_class.kind
    if kind not in ("box", "simplex", "ball"):
        raise UnsupportedClassError(f"no Lagrange multiplier expressions for constraint class {kind!r}")
    if list(prob.ineq) != prob.constraint_class.constraints(prob.n) or prob.eq:
        raise UnsupportedClassError(f"inequality rows do not literally encode the {kind} class")


def _multipliers_from_gradient(prob: LogPolyProblem, grad: Sequence, x: Sequence, num):
    """Multiplier formulas of the box/simplex/ball families.

    Generic in the number type: ``num`` converts a float constant (identity
    for float polynomials, exact rationals for sympy expressions).
    """
    cc = prob.constraint_class
    n = prob.n
    if cc.kind == "simplex":
        xg = sum((x[l] * grad[l] for l in range(n)), num(0.0))
        return [xg] + [xg - grad[j] for j in range(n)]
    if cc.kind == "box":
        out = []
        for j, (lo, hi) in enumerate(cc.bounds):
            w = num(1.0) / (num(hi) - num(lo))
            out.append(grad[j] * (x[j] - num(hi)) * w)
            out.append(grad[j] * (x[j] - num(lo)) * w)
        return out
    center = [num(c) for c in cc.center]
    b2 = num(2.0) * num(cc.radius) ** 2
    return [sum(((x[l] - center[l]) * grad[l] for l in range(n)), num(0.0)) * (num(1.0) / b2)]


def generate_lme(prob: LogPolyProblem, clearing: str = DEFAULT_CLEARING) -> LmeSystem:
    """Polynomial KKT system of ``prob`` with multiplier expressions substituted."""
    _check_class(prob)
    if clearing == "global":
        return _lme_global(prob)
    if clearing == "minimal":
        return _lme_minimal(prob)
    raise ValueError(f"unknown clearing {clearing!r}")


def _lme_global(prob: LogPolyProblem) -> LmeSystem:
    n = prob.n
    polys = prob.objective
    m = len(polys)
    # f_i = prod_{l != i} p_l  via prefix/suffix products
    one = Polynomial.constant(n, 1.0)
    prefix = [one]
    for p in polys:
        prefix.append(prefix[-1] * p)
    suffix = [one]
    for p in reversed(polys):
        suffix.append(suffix[-1] * p)
    suffix.reverse()
    f = [prefix[i] * suffix[i + 1] for i in range(m)]
    p_all = prefix[-1]
    G = [Polynomial.zero(n) for _ in range(n)]
    for a, fi, p in zip(prob.weights, f, polys):
        for l, dp in enumerate(p.gradient()):
            if not dp.is_zero():
                G[l] = G[l] + (fi * dp).scale(a)
    x = Polynomial.variables(n)
    tau = _multipliers_from_gradient(prob, G, x, float)
    cons = list(prob.ineq)
    gradient = []
    for l in range(n):
        g = G[l]
        for t, c in zip(tau, cons):
            dc = c.partial(l)
            if not dc.is_zero():
                g = g + t * dc
        gradient.append(g)
    return LmeSystem(
        tau=tau,
        denominators=[p_all] * len(tau),
        gradient=gradient,
        complementarity=[t * c for t, c in zip(tau, cons)],
        clearing="global",
        eq_constraints=list(prob.eq),
        ineq_constraints=cons,
    )


def _to_sympy(p: Polynomial, xs):
    import sympy as sp

    expr = sp.Integer(0)
    for alpha, c in p.items():
        term = sp.Rational(c)
        for xi, e in zip(xs, alpha):
            if e:
                term *= xi**e
        expr += term
    return expr


def _from_sympy(expr, xs, n: int) -> Polynomial:
    import sympy as sp

    if expr == 0:
        return Polynomial.zero(n)
    poly = sp.Poly(sp.expand(expr), *xs)
    return Polynomial(n, {tuple(int(e) for e in mono): float(c) for mono, c in poly.terms()})


def _lme_minimal(prob: LogPolyProblem) -> LmeSystem:
    import sympy as sp

    n = prob.n
    xs = sp.symbols(f"x1:{n + 1}")
    ps = [_to_sympy(p, xs) for p in prob.objective]
    grad = [
        sum((sp.Rational(a) * sp.diff(p, xs[l]) / p for a, p in zip(prob.weights, ps)), sp.Integer(0))
        for l in range(n)
    ]
    rat = _multipliers_from_gradient(prob, grad, xs, sp.Rational)
    ref = prob.witness if prob.witness is not None else prob.constraint_class.reference_point(n)
    subs = dict(zip(xs, (sp.Rational(float(v)) for v in ref)))
    tau, dens = [], []
    for j, t in enumerate(rat):
        num, den = sp.fraction(sp.cancel(sp.together(t)))
        s = den.subs(subs)
        if s == 0:
            raise ClearingError(f"denominator of multiplier {j} vanishes at the reference point")
        if s < 0:
            num, den = -num, -den
        tau.append(_from_sympy(num, xs, n))
        dens.append(_from_sympy(den, xs, n))
    cons = [_to_sympy(c, xs) for c in prob.ineq]
    gradient = []
    for l in range(n):
        g = grad[l] + sum((r * sp.diff(c, xs[l]) for r, c in zip(rat, cons)), sp.Integer(0))
        num, _ = sp.fraction(sp.cancel(sp.together(g)))
        gradient.append(_from_sympy(num, xs, n))
    return LmeSystem(
        tau=tau,
        denominators=dens,
        gradient=gradient,
        complementarity=[t * c for t, c in zip(tau, prob.ineq)],
        clearing="minimal",
        eq_constraints=list(prob.eq),
        ineq_constraints=list(prob.ineq),
    )


# ----------------------------------------------------------------------------
# relaxation assembly


@dataclass
class RelaxationSpec:
    name: str
    order: int
    mode: str
    clearing: str | None
    d: int
    d1: int | None
    eq_generators: list[Polynomial]
    ineq_generators: list[Polynomial]
    block_sizes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "problem": self.name,
            "order": self.order,
            "mode": self.mode,
            "clearing": self.clearing,
            "d": self.d,
            "d1": self.d1,
            "eq_generator_degrees": [q.degree for q in self.eq_generators],
            "ineq_generator_degrees": [q.degree for q in self.ineq_generators],
            "blocks": self.block_sizes,
        }


@dataclass
class Relaxation:
    problem: LogPolyProblem
    spec: RelaxationSpec
    program: ConicProgram
    basis: MonomialBasis
    t_index: list[int]
    lme: LmeSystem | None = None

    @property
    def k(self) -> int:
        return self.spec.order

    @property
    def index_map(self) -> dict[tuple[int, ...], int]:
        return {alpha: i for i, alpha in enumerate(self.basis)}

    def tms(self, x: np.ndarray) -> Tms:
        return Tms(self.problem.n, self.k, np.asarray(x)[: len(self.basis)])

    def functional_row(self, p: Polynomial) -> dict[int, float]:
        return {self.basis.index(a): c for a, c in p.items()}


def ideal_rows(q: Polynomial, k: int, basis: MonomialBasis) -> list[dict[int, float]]:
    """Rows ``<x^beta q, y> = 0`` for ``|beta| <= 2k - deg q``.

    These span every entry of ``L_q^{(k)}[y]``; for odd ``deg q`` they also
    reach the top degree ``2k``, which the localizing matrix alone misses.
    """
    if q.degree > 2 * k:
        raise DegreeError(f"deg(q)={q.degree} exceeds 2k={2 * k}")
    rows = []
    for beta in monomial_basis(q.n, 2 * k - q.degree):
        rows.append({basis.index(tuple(a + b for a, b in zip(alpha, beta))): c for alpha, c in q.items()})
    return rows


def _normalized(q: Polynomial) -> Polynomial:
    s = q.max_abs_coefficient()
    return q if s in (0.0, 1.0) else q.scale(1.0 / s)


def _assemble(
    prob: LogPolyProblem,
    k: int,
    eq_gens: Sequence[Polynomial],
    ineq_gens: Sequence[Polynomial],
    spec: RelaxationSpec,
    lme: LmeSystem | None,
) -> Relaxation:
    n = prob.n
    basis = monomial_basis(n, 2 * k)
    ny = len(basis)
    m = prob.m
    names = ["y" + "".join(map(str, a)) for a in basis] + [f"t{i + 1}" for i in range(m)]
    b = ProgramBuilder(ny + m, names)
    b.add_equality({0: 1.0}, 1.0)

    for q in eq_gens:
        if q.is_zero():
            continue
        for row in ideal_rows(_normalized(q), k, basis):
            b.add_equality(row, 0.0)

    def psd_rows(st):
        rows = []
        for i, j, terms in st.upper_entries():
            row: dict[int, float] = {}
            for a, v in terms:
                row[a] = row.get(a, 0.0) + v
            rows.append((row, 0.0))
        return rows

    st = moment_structure(n, k)
    b.add_cone("psd", st.side, psd_rows(st), label=f"M_{k}")
    for j, q in enumerate(ineq_gens):
        if q.is_zero():
            continue
        st = localizing_structure(_normalized(q), k)
        b.add_cone("psd", st.side, psd_rows(st), label=f"L_ineq{j}")

    t_index = []
    for i, (a, p) in enumerate(zip(prob.weights, prob.objective)):
        t = ny + i
        t_index.append(t)
        b.c[t] = a
        row = {basis.index(alpha): c for alpha, c in p.items()}
        b.add_cone("exp", 3, [({t: 1.0}, 0.0), ({}, 1.0), (row, 0.0)], label=f"log_p{i + 1}")
    b.offset = prob.offset
    prog = b.build()
    spec.block_sizes = prog.block_summary()
    return Relaxation(prob, spec, prog, basis, t_index, lme)


def _ball_row(n: int, radius: float) -> Polynomial:
    x = Polynomial.variables(n)
    return radius**2 - sum((xi * xi for xi in x), Polynomial.zero(n))


def build_standard_relaxation(prob: LogPolyProblem, k: int, ball_radius: float | None = None) -> Relaxation:
    """Order-``k`` moment relaxation of ``prob``.

    ``ball_radius`` appends the redundant constraint ``R^2 - |x|^2 >= 0``.
    """
    d = relaxation_degree(prob)
    if k < d:
        raise DegreeError(f"order {k} is below the minimal order d={d}")
    ineq = list(prob.ineq)
    if ball_radius is not None:
        ineq.append(_ball_row(prob.n, ball_radius))
    spec = RelaxationSpec(prob.name, k, "standard", None, d, None, list(prob.eq), ineq)
    return _assemble(prob, k, prob.eq, ineq, spec, None)


def lme_degree(prob: LogPolyProblem, clearing: str = DEFAULT_CLEARING) -> int:
    """Smallest valid order of the LME relaxation (never below ``d``)."""
    return max(generate_lme(prob, clearing).degree(), relaxation_degree(prob))


def build_lme_relaxation(
    prob: LogPolyProblem,
    k: int,
    clearing: str = DEFAULT_CLEARING,
    ball_radius: float | None = None,
    lme: LmeSystem | None = None,
) -> Relaxation:
    """Order-``k`` LME-strengthened relaxation."""
    lme = lme or generate_lme(prob, clearing)
    d = relaxation_degree(prob)
    d1 = max(lme.degree(), d)
    if k < d1:
        raise DegreeError(f"order {k} is below the minimal LME order d1={d1} ({clearing} clearing)")
    eq = [q for q in lme.phi if not q.is_zero()]
    ineq = [q for q in lme.psi if not q.is_zero()]
    if ball_radius is not None:
        ineq.append(_ball_row(prob.n, ball_radius))
    spec = RelaxationSpec(prob.name, k, "lme", lme.clearing, d, d1, eq, ineq)
    return _assemble(prob, k, eq, ineq, spec, lme)


def build_relaxation(prob: LogPolyProblem, k: int, mode: str = "standard", clearing: str = DEFAULT_CLEARING, ball_radius=None) -> Relaxation:
    if mode == "standard":
        return build_standard_relaxation(prob, k, ball_radius)
    if mode == "lme":
        return build_lme_relaxation(prob, k, clearing, ball_radius)
    raise ValueError(f"unknown mode {mode!r}")


def min_order(prob: LogPolyProblem, mode: str = "standard", clearing: str = DEFAULT_CLEARING) -> int:
    return relaxation_degree(prob) if mode == "standard" else lme_degree(prob, clearing)
