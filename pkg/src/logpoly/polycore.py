"""Sparse multivariate polynomials over a fixed number of variables.

Monomials are exponent tuples.  All matrix indexing in the package goes
through :class:`MonomialBasis`, which orders monomials graded
lexicographically with ``x1 > x2 > ... > xn``::

    1, x1, x2, x1^2, x1*x2, x2^2, x1^3, ...
"""
from __future__ import annotations

import functools
import math
from numbers import Real
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

MultiIndex = tuple[int, ...]


class DegreeError(ValueError):
    """A monomial or polynomial exceeds the degree a basis or order allows."""


class DimensionError(ValueError):
    """Operands live in polynomial rings with different variable counts."""


def _exponents_of_degree(n: int, g: int) -> Iterator[MultiIndex]:
    # descending lex within a fixed total degree
    if n == 1:
        yield (g,)
        return
    for first in range(g, -1, -1):
        for rest in _exponents_of_degree(n - 1, g - first):
            yield (first,) + rest


class MonomialBasis:
    """All exponents of total degree at most ``d`` in ``n`` variables."""

    __slots__ = ("n", "d", "monomials", "_index", "_exps")

    def __init__(self, n: int, d: int):
        if n < 1 or d < 0:
            raise ValueError(f"invalid basis size n={n}, d={d}")
        self.n = n
        self.d = d
        self.monomials: list[MultiIndex] = [
            a for g in range(d + 1) for a in _exponents_of_degree(n, g)
        ]
        self._index = {a: i for i, a in enumerate(self.monomials)}
        self._exps = np.array(self.monomials, dtype=np.int64).reshape(len(self.monomials), n)

    def __len__(self) -> int:
        return len(self.monomials)

    def __iter__(self) -> Iterator[MultiIndex]:
        return iter(self.monomials)

    def __getitem__(self, i: int) -> MultiIndex:
        return self.monomials[i]

    def __contains__(self, alpha) -> bool:
        return tuple(alpha) in self._index

    def __repr__(self) -> str:
        return f"MonomialBasis(n={self.n}, d={self.d}, size={len(self)})"

    @property
    def exponents(self) -> np.ndarray:
        """Exponent array of shape ``(len(basis), n)``; read-only view."""
        v = self._exps.view()
        v.flags.writeable = False
        return v

    def index(self, alpha: Sequence[int]) -> int:
        try:
            return self._index[tuple(alpha)]
        except KeyError:
            if len(alpha) != self.n:
                raise DimensionError(f"exponent {tuple(alpha)} has length {len(alpha)}, basis has n={self.n}")
            raise DegreeError(f"monomial {tuple(alpha)} has degree {sum(alpha)} > {self.d}") from None

    def evaluate(self, v: Sequence[float]) -> np.ndarray:
        """The monomial vector ``[v]_d``."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n,):
            raise DimensionError(f"point has shape {v.shape}, expected ({self.n},)")
        return np.prod(v[None, :] ** self._exps, axis=1)


@functools.lru_cache(maxsize=256)
def monomial_basis(n: int, d: int) -> MonomialBasis:
    """Cached :class:`MonomialBasis` constructor."""
    return MonomialBasis(n, d)


def basis_size(n: int, d: int) -> int:
    return math.comb(n + d, d)


def monomial_index(alpha: Sequence[int], basis: MonomialBasis) -> int:
    """0-based graded-lex position of ``alpha`` in ``basis``."""
    return basis.index(alpha)


def _add_exp(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


class Polynomial:
    """Immutable sparse polynomial ``sum_alpha c_alpha x^alpha``.

    Terms with coefficient exactly zero are dropped on construction.
    """

    __slots__ = ("n", "_terms", "_hash", "_arrays")

    def __init__(self, n: int, terms: Mapping[Sequence[int], float] | Iterable[tuple[Sequence[int], float]] = ()):
        if n < 1:
            raise ValueError("polynomials need at least one variable")
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[MultiIndex, float] = {}
        for alpha, c in items:
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n:
                raise DimensionError(f"exponent {alpha} does not have length {n}")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = float(c)
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient {c} at {alpha}")
            acc[alpha] = acc.get(alpha, 0.0) + c
        self.n = n
        self._terms = {a: c for a, c in acc.items() if c != 0.0}
        self._hash = None
        self._arrays = None

    # constructors

    @classmethod
    def zero(cls, n: int) -> "Polynomial":
        return cls(n)

    @classmethod
    def constant(cls, n: int, c: float) -> "Polynomial":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Polynomial":
        """The coordinate ``x_{i+1}`` (``i`` is 0-based)."""
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): 1.0})

    @classmethod
    def variables(cls, n: int) -> list["Polynomial"]:
        return [cls.variable(n, i) for i in range(n)]

    @classmethod
    def affine(cls, coefs: Sequence[float], const: float = 0.0) -> "Polynomial":
        """``const + sum_i coefs[i] * x_i``."""
        n = len(coefs)
        terms = {(0,) * n: const}
        for i, c in enumerate(coefs):
            e = [0] * n
            e[i] = 1
            terms[tuple(e)] = c
        return cls(n, terms)

    # basic queries

    @property
    def terms(self) -> Mapping[MultiIndex, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degree(self) -> int:
        """Total degree; ``-1`` for the zero polynomial."""
        return max((sum(a) for a in self._terms), default=-1)

    def half_degree(self) -> int:
        """``ceil(deg/2)``, with the zero polynomial counted as degree 0."""
        return (max(self.degree, 0) + 1) // 2

    def coefficient(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def is_homogeneous(self) -> bool:
        return len({sum(a) for a in self._terms}) <= 1

    def coefficient_vector(self, basis: MonomialBasis) -> np.ndarray:
        """``vec(p)`` with respect to ``basis``."""
        if basis.n != self.n:
            raise DimensionError(f"basis has n={basis.n}, polynomial has n={self.n}")
        out = np.zeros(len(basis))
        for alpha, c in self._terms.items():
            out[basis.index(alpha)] = c
        return out

    # evaluation

    def evaluate(self, v: Sequence[float]) -> float:
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape != (self.n,):
            raise DimensionError(f"point has {v.size} coordinates, polynomial has n={self.n}")
        if not self._terms:
            return 0.0
        if self._arrays is None:
            self._arrays = (
                np.array(list(self._terms.keys()), dtype=np.int64),
                np.fromiter(self._terms.values(), dtype=float, count=len(self._terms)),
            )
        exps, coefs = self._arrays
        return float(coefs @ np.prod(v[None, :] ** exps, axis=1))

    __call__ = evaluate

    # arithmetic

    def _check(self, other: "Polynomial") -> None:
        if other.n != self.n:
            raise DimensionError(f"variable counts differ: {self.n} vs {other.n}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, Real):
            return Polynomial.constant(self.n, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = dict(self._terms)
        for a, c in other._terms.items():
            acc[a] = acc.get(a, 0.0) + c
        return Polynomial(self.n, acc)

    __radd__ = __add__

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.n, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def scale(self, s: float) -> "Polynomial":
        s = float(s)
        return Polynomial(self.n, {a: s * c for a, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, Real):
            return self.scale(other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        self._check(other)
        acc: dict[MultiIndex, float] = {}
        for a, c in self._terms.items():
            for b, e in other._terms.items():
                k = _add_exp(a, b)
                acc[k] = acc.get(k, 0.0) + c * e
        return Polynomial(self.n, acc)

    __rmul__ = __mul__

    def __truediv__(self, s):
        if isinstance(s, Real):
            return self.scale(1.0 / float(s))
        return NotImplemented

    def __pow__(self, k: int) -> "Polynomial":
        if not isinstance(k, int) or k < 0:
            raise ValueError("only nonnegative integer powers are supported")
        out = Polynomial.constant(self.n, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def shift(self, beta: Sequence[int]) -> "Polynomial":
        """Multiply by the monomial ``x^beta``."""
        beta = tuple(beta)
        return Polynomial(self.n, {_add_exp(a, beta): c for a, c in self._terms.items()})

    # calculus

    def partial(self, i: int) -> "Polynomial":
        acc = {}
        for a, c in self._terms.items():
            if a[i]:
                b = list(a)
                b[i] -= 1
                acc[tuple(b)] = c * a[i]
        return Polynomial(self.n, acc)

    def gradient(self) -> list["Polynomial"]:
        return [self.partial(i) for i in range(self.n)]

    def hessian(self) -> list[list["Polynomial"]]:
        g = self.gradient()
        H = [[None] * self.n for _ in range(self.n)]
        for i in range(self.n):
            for j in range(i, self.n):
                H[i][j] = g[i].partial(j)
                H[j][i] = H[i][j]
        return H

    # comparison / hashing

    def __eq__(self, other) -> bool:
        if isinstance(other, Real):
            other = Polynomial.constant(self.n, float(other))
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.n, frozenset(self._terms.items())))
        return self._hash

    def allclose(self, other: "Polynomial", atol: float = 1e-12, rtol: float = 1e-12) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(
            abs(self.coefficient(k) - other.coefficient(k)) <= atol + rtol * max(abs(self.coefficient(k)), abs(other.coefficient(k)))
            for k in keys
        )

    # text forms

    def to_json(self) -> list[dict]:
        return [{"exp": list(a), "coef": c} for a, c in self._sorted_items()]

    @classmethod
    def from_json(cls, n: int, data: Sequence[Mapping]) -> "Polynomial":
        if not isinstance(data, (list, tuple)):
            raise TypeError(f"polynomial must be a list of terms, got {type(data).__name__}")
        terms = []
        for k, t in enumerate(data):
            if not isinstance(t, Mapping) or "exp" not in t or "coef" not in t:
                raise TypeError(f"term {k} must be an object with 'exp' and 'coef'")
            terms.append((t["exp"], t["coef"]))
        return cls(n, terms)

    def _sorted_items(self):
        return sorted(self._terms.items(), key=lambda kv: (sum(kv[0]), tuple(-a for a in kv[0])))

    def __repr__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for a, c in self._sorted_items():
            mono = "*".join(
                f"x{i + 1}" if e == 1 else f"x{i + 1}^{e}" for i, e in enumerate(a) if e
            )
            if not mono:
                parts.append(f"{c:g}")
            elif c == 1:
                parts.append(mono)
            elif c == -1:
                parts.append(f"-{mono}")
            else:
                parts.append(f"{c:g}*{mono}")
        return " + ".join(parts).replace("+ -", "- ")


def evaluate(p: Polynomial, v: Sequence[float]) -> float:
    return p.evaluate(v)


def differentiate(p: Polynomial) -> tuple[list[Polynomial], list[list[Polynomial]]]:
    """Exact gradient and (symmetric) Hessian of ``p``."""
    return p.gradient(), p.hessian()


def poly_arith(lhs: Polynomial, rhs, op: str) -> Polynomial:
    """``op`` is ``'add'``, ``'mul'`` or ``'scale'`` (``rhs`` a real for scale)."""
    if op == "add":
        return lhs + rhs
    if op == "mul":
        return lhs * rhs
    if op == "scale":
        return lhs.scale(rhs)
    raise ValueError(f"unknown operation {op!r}")


def product(polys: Iterable[Polynomial], n: int) -> Polynomial:
    out = Polynomial.constant(n, 1.0)
    for p in polys:
        out = out * p
    return out
