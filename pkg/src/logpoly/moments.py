"""Truncated multi-sequences, the Riesz functional and localizing matrices."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .polycore import DegreeError, DimensionError, MonomialBasis, Polynomial, monomial_basis


@dataclass(frozen=True, eq=False)
class Tms:
    """A truncated multi-sequence ``y = (y_alpha)`` of degree ``2k``.

    ``values`` is indexed by ``monomial_basis(n, 2k)``.
    """

    n: int
    k: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        want = len(monomial_basis(self.n, 2 * self.k))
        if vals.size != want:
            raise DimensionError(f"tms of degree {2 * self.k} in {self.n} variables needs {want} entries, got {vals.size}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def degree(self) -> int:
        return 2 * self.k

    @property
    def basis(self) -> MonomialBasis:
        return monomial_basis(self.n, 2 * self.k)

    def __getitem__(self, alpha) -> float:
        return float(self.values[self.basis.index(alpha)])

    def first_moments(self) -> np.ndarray:
        """``(y_{e_1}, ..., y_{e_n})``."""
        return self.values[1 : self.n + 1].copy()

    def truncate(self, k: int) -> "Tms":
        """``y|_{2k}``."""
        if k > self.k:
            raise DegreeError(f"cannot truncate degree {self.degree} tms to degree {2 * k}")
        return Tms(self.n, k, self.values[: len(monomial_basis(self.n, 2 * k))])

    def __add__(self, other: "Tms") -> "Tms":
        self._check(other)
        return Tms(self.n, self.k, self.values + other.values)

    def __mul__(self, s: float) -> "Tms":
        return Tms(self.n, self.k, float(s) * self.values)

    __rmul__ = __mul__

    def _check(self, other: "Tms") -> None:
        if (self.n, self.k) != (other.n, other.k):
            raise DimensionError("tms shapes differ")


def point_tms(v: Sequence[float], k: int) -> Tms:
    """``[v]_{2k}``, the moments of the Dirac measure at ``v``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    return Tms(v.size, k, monomial_basis(v.size, 2 * k).evaluate(v))


def mixture_tms(weights: Sequence[float], points: Sequence[Sequence[float]], k: int) -> Tms:
    """``sum_j weights[j] * [points[j]]_{2k}``."""
    pts = [np.asarray(p, dtype=float).reshape(-1) for p in points]
    basis = monomial_basis(pts[0].size, 2 * k)
    vals = sum(w * basis.evaluate(p) for w, p in zip(weights, pts))
    return Tms(pts[0].size, k, vals)


def apply_functional(f: Polynomial, y: Tms) -> float:
    """``<f, y> = sum_alpha f_alpha y_alpha``."""
    if f.n != y.n:
        raise DimensionError(f"polynomial has n={f.n}, tms has n={y.n}")
    if f.degree > y.degree:
        raise DegreeError(f"deg(f)={f.degree} exceeds tms degree {y.degree}")
    basis = y.basis
    return float(sum(c * y.values[basis.index(a)] for a, c in f.items()))


@dataclass(frozen=True, eq=False)
class LocalizingStructure:
    """Sparse coefficient matrices ``Q_alpha`` with ``L_q^{(k)}[y] = sum y_alpha Q_alpha``.

    Only the upper triangle (``row <= col``) is stored.
    """

    q: Polynomial
    k: int
    side: int
    alpha_idx: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    _entries: dict = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.q.n

    @property
    def s(self) -> int:
        return self.k - self.q.half_degree()

    def entry_map(self) -> dict[tuple[int, int], list[tuple[int, float]]]:
        """``(row, col) -> [(alpha index, coefficient), ...]`` over the upper triangle."""
        if self._entries is None:
            out: dict[tuple[int, int], list[tuple[int, float]]] = {}
            for a, r, c, v in zip(self.alpha_idx, self.rows, self.cols, self.vals):
                out.setdefault((int(r), int(c)), []).append((int(a), float(v)))
            object.__setattr__(self, "_entries", out)
        return self._entries

    def upper_entries(self):
        """Iterate ``(row, col, terms)`` column-major over the upper triangle, including empty entries."""
        em = self.entry_map()
        for j in range(self.side):
            for i in range(j + 1):
                yield i, j, em.get((i, j), [])


@functools.lru_cache(maxsize=1024)
def localizing_structure(q: Polynomial, k: int) -> LocalizingStructure:
    """Precompute the localizing pattern of ``q`` at order ``k``."""
    s = k - q.half_degree()
    if s < 0:
        raise DegreeError(f"ceil(deg(q)/2)={q.half_degree()} exceeds order {k}")
    n = q.n
    small = monomial_basis(n, s)
    big = monomial_basis(n, 2 * k)
    acc: dict[tuple[int, int, int], float] = {}
    mons = small.monomials
    for r in range(len(mons)):
        for c in range(r, len(mons)):
            base = tuple(a + b for a, b in zip(mons[r], mons[c]))
            for gamma, coef in q.items():
                idx = big.index(tuple(a + b for a, b in zip(base, gamma)))
                key = (idx, r, c)
                acc[key] = acc.get(key, 0.0) + coef
    keys = [k_ for k_, v in acc.items() if v != 0.0]
    arr = np.array(keys, dtype=np.int64).reshape(-1, 3)
    return LocalizingStructure(
        q=q,
        k=k,
        side=len(small),
        alpha_idx=arr[:, 0],
        rows=arr[:, 1],
        cols=arr[:, 2],
        vals=np.array([acc[k_] for k_ in keys], dtype=float),
    )


def moment_structure(n: int, k: int) -> LocalizingStructure:
    return localizing_structure(Polynomial.constant(n, 1.0), k)


def assemble_localizing(struct: LocalizingStructure, y: Tms) -> np.ndarray:
    """Dense symmetric ``L_q^{(k)}[y]``."""
    if y.n != struct.n:
        raise DimensionError(f"tms has n={y.n}, structure has n={struct.n}")
    if y.k < struct.k:
        raise DegreeError(f"structure of order {struct.k} needs a tms of degree >= {2 * struct.k}")
    vals = y.values
    if y.k > struct.k:
        vals = vals[: len(monomial_basis(y.n, 2 * struct.k))]
    upper = np.zeros((struct.side, struct.side))
    np.add.at(upper, (struct.rows, struct.cols), struct.vals * vals[struct.alpha_idx])
    return upper + np.triu(upper, 1).T


def moment_matrix(y: Tms, t: int | None = None) -> np.ndarray:
    """``M_t[y]`` (``t`` defaults to the tms order)."""
    t = y.k if t is None else t
    if t > y.k:
        raise DegreeError(f"M_{t} needs a tms of degree {2 * t}, have {y.degree}")
    basis_t = monomial_basis(y.n, t)
    big = y.basis
    exps = basis_t.exponents
    idx = np.array(
        [[big.index(tuple(exps[i] + exps[j])) for j in range(len(basis_t))] for i in range(len(basis_t))],
        dtype=np.int64,
    ).reshape(len(basis_t), len(basis_t))
    return y.values[idx]


def localizing_matrix(q: Polynomial, y: Tms, k: int | None = None) -> np.ndarray:
    return assemble_localizing(localizing_structure(q, y.k if k is None else k), y)
