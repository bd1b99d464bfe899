"""Flat truncation and recovery of finitely atomic representing measures."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .moments import Tms, moment_matrix
from .polycore import monomial_basis

if TYPE_CHECKING:
    from .model import LogPolyProblem

DEFAULT_RANK_TOL = 1e-6
DEFAULT_SEED = 20240917
MAX_CONDITION = 1e10
NEGATIVE_WEIGHT_TOL = 1e-6


class ExtractionError(RuntimeError):
    """Atom extraction failed; ``diagnostics`` carries the numbers behind it."""

    def __init__(self, msg: str, **diagnostics):
        super().__init__(msg)
        self.diagnostics = diagnostics


class ExtractionUnstable(ExtractionError):
    pass


class InconsistentExtraction(ExtractionError):
    pass


def numeric_rank(M: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of singular values above ``rank_tol * sigma_max``."""
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def flat_truncation(y: Tms, d: int, k: int | None = None, rank_tol: float = DEFAULT_RANK_TOL) -> tuple[int, int] | None:
    """Smallest ``t`` in ``[d, k]`` with ``rank M_t[y] = rank M_{t-d}[y]``, with that rank."""
    k = y.k if k is None else min(k, y.k)
    ranks: dict[int, int] = {}

    def rank(t):
        if t not in ranks:
            ranks[t] = numeric_rank(moment_matrix(y, t), rank_tol)
        return ranks[t]

    for t in range(max(d, 1), k + 1):
        if rank(t) == rank(t - d):
            return t, rank(t)
    return None


@dataclass
class ExtractionResult:
    t: int
    rank: int
    weights: np.ndarray
    points: np.ndarray  # (r, n)
    residual: float
    feasibility: list[float] = field(default_factory=list)
    condition: float = float("nan")
    seed: int = DEFAULT_SEED

    @property
    def atoms(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.weights.tolist(), self.points))

    @property
    def min_separation(self) -> float:
        if len(self.points) < 2:
            return float("inf")
        return min(float(np.linalg.norm(a - b)) for a, b in itertools.combinations(self.points, 2))

    def report_weights(self) -> np.ndarray:
        """Weights with tiny negatives clamped to 0 and renormalised (reporting only)."""
        w = np.clip(self.weights, 0.0, None)
        return w / w.sum() if w.sum() > 0 else w

    def to_json(self, lift=None) -> dict:
        pts = [lift(p).tolist() if lift is not None else p.tolist() for p in self.points]
        return {
            "t": self.t,
            "rank": self.rank,
            "weights": self.weights.tolist(),
            "report_weights": self.report_weights().tolist(),
            "points": pts,
            "residual": self.residual,
            "feasibility_residuals": list(self.feasibility),
            "min_separation": self.min_separation if np.isfinite(self.min_separation) else None,
            "condition": self.condition,
        }


def reconstruction_residual(y: Tms, t: int, weights, points) -> float:
    """``|| y|_{2t} - sum_j w_j [v_j]_{2t} ||_inf``."""
    basis = monomial_basis(y.n, 2 * t)
    approx = sum(w * basis.evaluate(v) for w, v in zip(weights, points))
    return float(np.max(np.abs(y.values[: len(basis)] - approx)))


def _shifted_moment_matrix(y: Tms, s: int, i: int) -> np.ndarray:
    """``[y_{alpha + beta + e_i}]`` over ``alpha, beta`` of degree ``<= s``."""
    small = monomial_basis(y.n, s)
    big = y.basis
    e = np.zeros(y.n, dtype=np.int64)
    e[i] = 1
    exps = small.exponents
    N = len(small)
    out = np.empty((N, N))
    for a in range(N):
        for b in range(a, N):
            out[a, b] = out[b, a] = y.values[big.index(tuple(exps[a] + exps[b] + e))]
    return out


def extract_atoms(
    y: Tms,
    t: int,
    r: int,
    seed: int = DEFAULT_SEED,
    problem: "LogPolyProblem | None" = None,
) -> ExtractionResult:
    """Recover ``(weights, points)`` with ``y|_{2t} = sum_j w_j [v_j]_{2t}``.

    Works on ``A = M_{t-1}[y]`` (rank ``r`` under flatness) and the shifted
    matrices ``A_i = [y_{a+b+e_i}]``: with ``A = U S U^T`` truncated to rank
    ``r`` and ``W = U S^{-1/2}``, the ``N_i = W^T A_i W`` commute and share
    eigenvectors whose diagonal entries are the atom coordinates.
    """
    if t < 1:
        raise ValueError("extraction needs t >= 1")
    n = y.n
    A = moment_matrix(y, t - 1)
    lam, U = np.linalg.eigh(A)
    lam, U = lam[::-1], U[:, ::-1]
    if lam[-1] < -NEGATIVE_WEIGHT_TOL * max(1.0, lam[0]):
        # a negative eigenvalue means some atom would carry negative weight
        raise InconsistentExtraction(
            f"M_{t - 1} is not positive semidefinite (eigenvalue {lam[-1]:.3g})", eigenvalues=lam.tolist()
        )
    s = np.clip(lam, 0.0, None)
    if r > s.size:
        raise ExtractionUnstable(f"rank {r} exceeds the size of M_{t - 1}", sizes=s.size)
    cond = float(s[0] / s[r - 1]) if s[r - 1] > 0 else float("inf")
    if cond > MAX_CONDITION:
        raise ExtractionUnstable(
            f"rank-{r} basis of M_{t - 1} is ill conditioned (cond {cond:.3g})", condition=cond, singular_values=s.tolist()
        )
    W = U[:, :r] / np.sqrt(s[:r])
    Ns = []
    for i in range(n):
        Ni = W.T @ _shifted_moment_matrix(y, t - 1, i) @ W
        Ns.append((Ni + Ni.T) / 2)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(n)
    xi /= np.linalg.norm(xi)
    _, Q = np.linalg.eigh(sum(c * Ni for c, Ni in zip(xi, Ns)))
    points = np.array([[Q[:, j] @ Ni @ Q[:, j] for Ni in Ns] for j in range(r)]).reshape(r, n)

    basis = monomial_basis(n, 2 * t)
    V = np.column_stack([basis.evaluate(v) for v in points])
    target = y.values[: len(basis)]
    weights, *_ = np.linalg.lstsq(V, target, rcond=None)
    if (weights < -NEGATIVE_WEIGHT_TOL).any():
        raise InconsistentExtraction(
            f"negative atom weight {weights.min():.3g}", weights=weights.tolist(), points=points.tolist()
        )
    order = np.lexsort(points.T[::-1])
    points, weights = points[order], weights[order]
    feas = [feasibility_residual(problem, v) for v in points] if problem is not None else []
    return ExtractionResult(
        t=t,
        rank=r,
        weights=weights,
        points=points,
        residual=reconstruction_residual(y, t, weights, points),
        feasibility=feas,
        condition=cond,
        seed=seed,
    )


def feasibility_residual(problem: "LogPolyProblem", v) -> float:
    """Largest constraint violation of ``v``: ``|c_E(v)|`` and ``max(0, -c_I(v))``."""
    res = [abs(c(v)) for c in problem.eq] + [max(0.0, -c(v)) for c in problem.ineq]
    return max(res, default=0.0)
