"""Log-polynomial problem definitions and statistical-estimation builders.

A problem is::

    maximize   offset + sum_i a_i log p_i(x)
    subject to c_j(x) = 0  (eq),   c_j(x) >= 0  (ineq)
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .polycore import Polynomial, product

CONSTRAINT_CLASSES = ("general", "box", "simplex", "ball")
VARIANTS = ("mle", "cross_entropy", "kl", "paternity", "lcm")


class ProblemError(ValueError):
    """Structurally malformed problem or application data."""


class SchemaError(ProblemError):
    """A JSON document does not match the expected schema; ``path`` names the field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass(frozen=True)
class ConstraintClass:
    kind: str = "general"
    bounds: tuple[tuple[float, float], ...] | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in CONSTRAINT_CLASSES:
            raise ProblemError(f"unknown constraint class {self.kind!r}")
        if self.kind == "box" and not self.bounds:
            raise ProblemError("box class needs bounds")
        if self.kind == "ball" and (self.center is None or self.radius is None):
            raise ProblemError("ball class needs center and radius")

    def constraints(self, n: int) -> list[Polynomial]:
        """The inequality rows this class stands for, in canonical order."""
        x = Polynomial.variables(n)
        if self.kind == "simplex":
            return [1.0 - sum(x, Polynomial.zero(n))] + x
        if self.kind == "box":
            rows = []
            for j, (lo, hi) in enumerate(self.bounds):
                rows += [x[j] - lo, hi - x[j]]
            return rows
        if self.kind == "ball":
            r2 = sum(((x[j] - c) ** 2 for j, c in enumerate(self.center)), Polynomial.zero(n))
            return [self.radius**2 - r2]
        return []

    def reference_point(self, n: int) -> np.ndarray | None:
        """A point in the relative interior, used for sign normalisation."""
        if self.kind == "simplex":
            return np.full(n, 1.0 / (n + 1))
        if self.kind == "box":
            return np.array([(lo + hi) / 2 for lo, hi in self.bounds])
        if self.kind == "ball":
            return np.array(self.center, dtype=float)
        return None

    def to_json(self) -> dict:
        out: dict[str, Any] = {"class": self.kind}
        if self.kind == "box":
            out["bounds"] = [list(b) for b in self.bounds]
        if self.kind == "ball":
            out["center"] = list(self.center)
            out["radius"] = self.radius
        return out


@dataclass(frozen=True, eq=False)
class Lift:
    """Affine map ``x = matrix @ xbar + shift`` back to the original coordinates."""

    matrix: np.ndarray
    shift: np.ndarray
    names: tuple[str, ...] = ()

    def __call__(self, xbar: Sequence[float]) -> np.ndarray:
        return self.matrix @ np.asarray(xbar, dtype=float) + self.shift

    def to_json(self) -> dict:
        return {"matrix": self.matrix.tolist(), "shift": self.shift.tolist(), "names": list(self.names)}

    @classmethod
    def from_json(cls, d: Mapping) -> "Lift":
        return cls(np.array(d["matrix"], dtype=float), np.array(d["shift"], dtype=float), tuple(d.get("names", ())))


@dataclass(frozen=True)
class LogPolyProblem:
    n: int
    weights: tuple[float, ...]
    objective: tuple[Polynomial, ...]
    eq: tuple[Polynomial, ...] = ()
    ineq: tuple[Polynomial, ...] = ()
    constraint_class: ConstraintClass = field(default_factory=ConstraintClass)
    witness: tuple[float, ...] | None = None
    offset: float = 0.0
    lift: Lift | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(a) for a in self.weights))
        object.__setattr__(self, "objective", tuple(self.objective))
        object.__setattr__(self, "eq", tuple(self.eq))
        object.__setattr__(self, "ineq", tuple(self.ineq))
        if self.witness is not None:
            object.__setattr__(self, "witness", tuple(float(v) for v in self.witness))
        if len(self.weights) != len(self.objective):
            raise ProblemError(f"{len(self.weights)} weights for {len(self.objective)} objective polynomials")
        if not self.objective:
            raise ProblemError("objective has no terms")
        for role, polys in (("objective", self.objective), ("eq", self.eq), ("ineq", self.ineq)):
            for j, p in enumerate(polys):
                if not isinstance(p, Polynomial):
                    raise ProblemError(f"{role}[{j}] is not a Polynomial")
                if p.n != self.n:
                    raise ProblemError(f"{role}[{j}] has {p.n} variables, problem has {self.n}")
        if self.witness is not None and len(self.witness) != self.n:
            raise ProblemError(f"witness has {len(self.witness)} coordinates, expected {self.n}")
        if any(not math.isfinite(a) for a in self.weights):
            raise ProblemError("non-finite objective weight")

    @classmethod
    def with_class(cls, n: int, weights, objective, constraint_class: ConstraintClass, eq=(), **kw) -> "LogPolyProblem":
        """Problem whose inequality list is exactly the rows of ``constraint_class``."""
        return cls(n, weights, objective, eq=eq, ineq=constraint_class.constraints(n), constraint_class=constraint_class, **kw)

    @property
    def m(self) -> int:
        return len(self.objective)

    def value(self, x: Sequence[float]) -> float:
        """``offset + sum a_i log p_i(x)``; ``-inf`` if some ``p_i(x) <= 0``."""
        total = self.offset
        for a, p in zip(self.weights, self.objective):
            v = p(x)
            if v <= 0:
                return -math.inf
            total += a * math.log(v)
        return total

    def recover(self, x: Sequence[float]) -> np.ndarray:
        """Map a solution to the original (pre-substitution) coordinates."""
        x = np.asarray(x, dtype=float)
        return self.lift(x) if self.lift is not None else x

    def product_polynomial(self) -> Polynomial:
        return product(self.objective, self.n)


def relaxation_degree(prob: LogPolyProblem) -> int:
    """``d = max ceil(deg/2)`` over objective and constraint polynomials."""
    return max(p.half_degree() for p in (*prob.objective, *prob.eq, *prob.ineq))


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def warnings(self) -> list[str]:
        return [f"{c.name}: {c.detail}" for c in self.checks if not c.ok]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_problem(prob: LogPolyProblem, tol: float = 1e-8) -> ValidationReport:
    """Semantic checks; failures are reported, not raised."""
    checks = [
        Check(
            "weights_positive",
            all(a > 0 for a in prob.weights),
            "" if all(a > 0 for a in prob.weights) else f"nonpositive weights at {[i for i, a in enumerate(prob.weights) if a <= 0]}",
        )
    ]
    if prob.witness is not None:
        w = prob.witness
        eq_res = [abs(c(w)) for c in prob.eq]
        ineq_res = [c(w) for c in prob.ineq]
        obj = [p(w) for p in prob.objective]
        checks.append(Check("witness_eq", all(r <= tol for r in eq_res), f"max |c_E| = {max(eq_res, default=0.0):.3g}"))
        checks.append(Check("witness_ineq", all(r >= -tol for r in ineq_res), f"min c_I = {min(ineq_res, default=0.0):.3g}"))
        checks.append(Check("witness_objective_positive", all(v > 0 for v in obj), f"min p_i = {min(obj):.3g}"))
    cc = prob.constraint_class
    if cc.kind != "general":
        want = cc.constraints(prob.n)
        ok = list(prob.ineq) == want and not prob.eq
        if cc.kind == "box" and len(cc.bounds) != prob.n:
            ok = False
        if cc.kind == "ball" and len(cc.center) != prob.n:
            ok = False
        checks.append(
            Check("class_consistent", ok, "" if ok else f"inequality rows do not literally encode the {cc.kind} class")
        )
    return ValidationReport(checks)


# ----------------------------------------------------------------------------
# application builders


@dataclass
class CountModelSpec:
    """Inputs for :func:`build_application`.

    mle:           ``counts`` and ``model`` (one pmf polynomial per support point)
    cross_entropy: ``pmf`` and ``model``
    kl:            ``pmf`` and ``model``
    paternity:     ``counts`` (length t) and ``P`` (t x n)
    lcm:           ``T``, ``categories`` (c_1..c_d), ``patterns`` and ``counts``
    """

    variant: str
    n: int = 0
    counts: tuple[float, ...] = ()
    model: tuple[Polynomial, ...] = ()
    pmf: tuple[float, ...] = ()
    P: tuple[tuple[float, ...], ...] = ()
    T: int = 0
    categories: tuple[int, ...] = ()
    patterns: tuple[tuple[int, ...], ...] = ()
    eq: tuple[Polynomial, ...] = ()
    ineq: tuple[Polynomial, ...] = ()
    constraint_class: ConstraintClass = field(default_factory=ConstraintClass)
    witness: tuple[float, ...] | None = None
    name: str = ""

    def check(self) -> None:
        if self.variant not in VARIANTS:
            raise ProblemError(f"unknown variant {self.variant!r}")
        if any(c < 0 for c in self.counts):
            raise ProblemError("counts must be nonnegative")
        if self.variant in ("mle", "cross_entropy", "kl"):
            weights = self.counts if self.variant == "mle" else self.pmf
            if len(weights) != len(self.model):
                raise ProblemError(f"{len(weights)} weights for {len(self.model)} model polynomials")
        if self.variant in ("cross_entropy", "kl"):
            if any(p < 0 for p in self.pmf) or abs(sum(self.pmf) - 1.0) > 1e-9:
                raise ProblemError("pmf values must be nonnegative and sum to 1")
        if self.variant == "paternity":
            P = np.asarray(self.P, dtype=float)
            if P.ndim != 2 or P.shape[0] != len(self.counts) or P.shape[1] < 2:
                raise ProblemError("P must be t x n with t = len(counts) and n >= 2")
            if (P < 0).any() or (P > 1).any():
                raise ProblemError("P entries must lie in [0, 1]")
        if self.variant == "lcm":
            if self.T < 1 or not self.categories or any(c < 2 for c in self.categories):
                raise ProblemError("lcm needs T >= 1 and categories c_j >= 2")
            if len(self.patterns) != len(self.counts):
                raise ProblemError("one count per pattern required")
            for pat in self.patterns:
                if len(pat) != len(self.categories) or any(not 1 <= l <= c for l, c in zip(pat, self.categories)):
                    raise ProblemError(f"pattern {pat} out of range for categories {self.categories}")


def build_application(spec: CountModelSpec) -> LogPolyProblem:
    spec.check()
    v = spec.variant
    if v in ("mle", "cross_entropy", "kl"):
        weights = spec.counts if v == "mle" else spec.pmf
        keep = [i for i, a in enumerate(weights) if a > 0]
        offset = 0.0
        if v == "kl":
            offset = -sum(p * math.log(p) for p in spec.pmf if p > 0)
        return LogPolyProblem(
            spec.n,
            [weights[i] for i in keep],
            [spec.model[i] for i in keep],
            eq=spec.eq,
            ineq=spec.ineq,
            constraint_class=spec.constraint_class,
            witness=spec.witness,
            offset=offset,
            name=spec.name or v,
        )
    if v == "paternity":
        return _paternity(spec)
    return _lcm(spec)


def _paternity(spec: CountModelSpec) -> LogPolyProblem:
    P = np.asarray(spec.P, dtype=float)
    t, n = P.shape
    nb = n - 1
    weights, polys = [], []
    for i in range(t):
        if spec.counts[i] == 0:
            continue
        # P_in + sum_j (P_ij - P_in) x_j
        p = Polynomial.affine(P[i, :nb] - P[i, nb], P[i, nb])
        weights.append(spec.counts[i])
        polys.append(p)
    lift = Lift(
        np.vstack([np.eye(nb), -np.ones((1, nb))]),
        np.concatenate([np.zeros(nb), [1.0]]),
        tuple(f"x{j + 1}" for j in range(n)),
    )
    cc = ConstraintClass("simplex")
    return LogPolyProblem.with_class(
        nb, weights, polys, cc, witness=np.full(nb, 1.0 / n), lift=lift, name=spec.name or "paternity"
    )


def lcm_layout(T: int, categories: Sequence[int]) -> tuple[int, dict]:
    """Variable numbering after eliminating the last coordinate of each simplex.

    Returns ``(nvars, index)`` with ``index[('eta', t)]`` and ``index[('pi', t, j, l)]``
    (0-based t, j, l) for the free coordinates.
    """
    index = {}
    k = 0
    for t in range(T - 1):
        index[("eta", t)] = k
        k += 1
    for t in range(T):
        for j, c in enumerate(categories):
            for l in range(c - 1):
                index[("pi", t, j, l)] = k
                k += 1
    return k, index


def _lcm(spec: CountModelSpec) -> LogPolyProblem:
    T, cats = spec.T, tuple(spec.categories)
    n, index = lcm_layout(T, cats)
    if n == 0:
        raise ProblemError("lcm has no free parameters")
    x = Polynomial.variables(n)
    one = Polynomial.constant(n, 1.0)

    def simplex_coords(free: list[Polynomial]) -> list[Polynomial]:
        return free + [one - sum(free, Polynomial.zero(n))]

    eta = simplex_coords([x[index[("eta", t)]] for t in range(T - 1)])
    pi = {
        (t, j): simplex_coords([x[index[("pi", t, j, l)]] for l in range(c - 1)])
        for t in range(T)
        for j, c in enumerate(cats)
    }
    weights, polys = [], []
    for pat, cnt in zip(spec.patterns, spec.counts):
        if cnt == 0:
            continue
        p = Polynomial.zero(n)
        for t in range(T):
            term = eta[t]
            for j, l in enumerate(pat):
                term = term * pi[(t, j)][l - 1]
            p = p + term
        weights.append(cnt)
        polys.append(p)

    ineq: list[Polynomial] = []
    groups = [[index[("eta", t)] for t in range(T - 1)]] if T > 1 else []
    groups += [[index[("pi", t, j, l)] for l in range(c - 1)] for t in range(T) for j, c in enumerate(cats)]
    for g in groups:
        ineq.append(one - sum((x[i] for i in g), Polynomial.zero(n)))
        ineq.extend(x[i] for i in g)
    witness = spec.witness
    if witness is None:
        w = np.zeros(n)
        for t in range(T - 1):
            w[index[("eta", t)]] = 1.0 / T
        for t in range(T):
            for j, c in enumerate(cats):
                for l in range(c - 1):
                    # break label symmetry mildly so every p_i is positive
                    w[index[("pi", t, j, l)]] = 1.0 / c
        witness = tuple(w)
    return LogPolyProblem(n, weights, polys, ineq=ineq, witness=witness, name=spec.name or "lcm")


def lcm_point(T: int, categories: Sequence[int], eta: Sequence[float], pi: Mapping[tuple[int, int], Sequence[float]]) -> np.ndarray:
    """Free coordinates of an lcm parameter; ``pi[(t, j)]`` is the full category pmf."""
    n, index = lcm_layout(T, categories)
    x = np.zeros(n)
    for t in range(T - 1):
        x[index[("eta", t)]] = eta[t]
    for t in range(T):
        for j, c in enumerate(categories):
            for l in range(c - 1):
                x[index[("pi", t, j, l)]] = pi[(t, j)][l]
    return x


def simulate_lcm(
    eta: Sequence[float],
    pi: Mapping[tuple[int, int], Sequence[float]],
    categories: Sequence[int],
    N: int,
    seed: int,
) -> tuple[tuple[tuple[int, ...], ...], tuple[int, ...]]:
    """Draw ``N`` samples and return the deduplicated ``(patterns, counts)`` table.

    Categories are 1-based.  Uses ``numpy.random.default_rng(seed)``.
    """
    rng = np.random.default_rng(seed)
    T = len(eta)
    groups = rng.choice(T, size=N, p=np.asarray(eta, dtype=float))
    table: dict[tuple[int, ...], int] = {}
    for s in groups:
        pat = tuple(int(rng.choice(c, p=np.asarray(pi[(int(s), j)], dtype=float))) + 1 for j, c in enumerate(categories))
        table[pat] = table.get(pat, 0) + 1
    pats = tuple(sorted(table))
    return pats, tuple(table[p] for p in pats)


# ----------------------------------------------------------------------------
# JSON


def _poly(n: int, data, path: str) -> Polynomial:
    try:
        return Polynomial.from_json(n, data)
    except (TypeError, ValueError) as e:
        raise SchemaError(path, str(e)) from None


def _polys(n: int, data, path: str) -> tuple[Polynomial, ...]:
    if not isinstance(data, list):
        raise SchemaError(path, "expected a list of polynomials")
    return tuple(_poly(n, p, f"{path}[{i}]") for i, p in enumerate(data))


def _class_from_json(d: Mapping, path: str = "$") -> ConstraintClass:
    kind = d.get("class", "general")
    try:
        if kind == "box":
            return ConstraintClass("box", bounds=tuple((float(a), float(b)) for a, b in d["bounds"]))
        if kind == "ball":
            return ConstraintClass("ball", center=tuple(float(c) for c in d["center"]), radius=float(d["radius"]))
        return ConstraintClass(kind)
    except KeyError as e:
        raise SchemaError(f"{path}.{e.args[0]}", f"required for class {kind!r}") from None
    except ProblemError as e:
        raise SchemaError(f"{path}.class", str(e)) from None


def _require(d: Mapping, key: str, path: str = "$"):
    if key not in d:
        raise SchemaError(f"{path}.{key}", "missing required field")
    return d[key]


def _int_field(d: Mapping, key: str, path: str = "$") -> int:
    v = _require(d, key, path)
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        raise SchemaError(f"{path}.{key}", f"expected a positive integer, got {v!r}")
    return v


def problem_from_json(d: Mapping) -> LogPolyProblem:
    if not isinstance(d, Mapping):
        raise SchemaError("$", "expected an object")
    n = _int_field(d, "n")
    obj = _require(d, "objective")
    if not isinstance(obj, list) or not obj:
        raise SchemaError("$.objective", "expected a nonempty list")
    weights, polys = [], []
    for i, term in enumerate(obj):
        if not isinstance(term, Mapping):
            raise SchemaError(f"$.objective[{i}]", "expected an object with 'weight' and 'poly'")
        weights.append(float(_require(term, "weight", f"$.objective[{i}]")))
        polys.append(_poly(n, _require(term, "poly", f"$.objective[{i}]"), f"$.objective[{i}].poly"))
    cc = _class_from_json(d)
    eq = _polys(n, d.get("eq", []), "$.eq")
    if "ineq" in d:
        ineq = _polys(n, d["ineq"], "$.ineq")
    else:
        ineq = tuple(cc.constraints(n))
    try:
        return LogPolyProblem(
            n,
            weights,
            polys,
            eq=eq,
            ineq=ineq,
            constraint_class=cc,
            witness=d.get("witness"),
            offset=float(d.get("offset", 0.0)),
            lift=Lift.from_json(d["lift"]) if "lift" in d else None,
            name=d.get("name", ""),
        )
    except ProblemError as e:
        raise SchemaError("$", str(e)) from None


def problem_to_json(prob: LogPolyProblem) -> dict:
    out: dict[str, Any] = {"n": prob.n}
    if prob.name:
        out["name"] = prob.name
    out["objective"] = [{"weight": a, "poly": p.to_json()} for a, p in zip(prob.weights, prob.objective)]
    out["eq"] = [p.to_json() for p in prob.eq]
    out["ineq"] = [p.to_json() for p in prob.ineq]
    out.update(prob.constraint_class.to_json())
    if prob.witness is not None:
        out["witness"] = list(prob.witness)
    if prob.offset:
        out["offset"] = prob.offset
    if prob.lift is not None:
        out["lift"] = prob.lift.to_json()
    return out


def application_from_json(d: Mapping) -> CountModelSpec:
    variant = _require(d, "variant")
    if variant not in VARIANTS:
        raise SchemaError("$.variant", f"unknown variant {variant!r}")
    name = d.get("name", "")
    if variant == "paternity":
        return CountModelSpec("paternity", counts=tuple(_require(d, "counts")), P=tuple(map(tuple, _require(d, "P"))), name=name)
    if variant == "lcm":
        T = _int_field(d, "T")
        cats = tuple(_require(d, "categories"))
        if "patterns" in d:
            pats = tuple(tuple(p) for p in d["patterns"])
            counts = tuple(_require(d, "counts"))
        else:
            sim = _require(d, "simulate")
            pats, counts = simulate_lcm(
                sim["eta"], _pi_from_json(sim["pi"], T, cats), cats, int(sim["N"]), int(sim["seed"])
            )
        return CountModelSpec("lcm", T=T, categories=cats, patterns=pats, counts=counts, name=name)
    n = _int_field(d, "n")
    cc = _class_from_json(d)
    ineq = _polys(n, d["ineq"], "$.ineq") if "ineq" in d else tuple(cc.constraints(n))
    common = dict(
        n=n,
        model=_polys(n, _require(d, "model"), "$.model"),
        eq=_polys(n, d.get("eq", []), "$.eq"),
        ineq=ineq,
        constraint_class=cc,
        witness=tuple(d["witness"]) if "witness" in d else None,
        name=name,
    )
    if variant == "mle":
        return CountModelSpec("mle", counts=tuple(_require(d, "counts")), **common)
    return CountModelSpec(variant, pmf=tuple(_require(d, "pmf")), **common)


def _pi_from_json(rows, T: int, cats: Sequence[int]) -> dict:
    """``rows[t][j]`` is the category pmf of variable j in class t."""
    return {(t, j): tuple(rows[t][j]) for t in range(T) for j in range(len(cats))}


def load_problem(source: str | Mapping) -> LogPolyProblem:
    """Problem from a path or parsed JSON; application documents are built on the fly."""
    if isinstance(source, Mapping):
        d = source
    else:
        try:
            with open(source) as fh:
                d = json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaError(f"line {e.lineno}", e.msg) from None
    if isinstance(d, Mapping) and "variant" in d:
        try:
            return build_application(application_from_json(d))
        except SchemaError:
            raise
        except ProblemError as e:
            raise SchemaError("$", str(e)) from None
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError("$", f"malformed application data: {e}") from None
    return problem_from_json(d)
