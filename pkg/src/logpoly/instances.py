"""Catalogue of the worked instances shipped with the package.

Every builder returns a :class:`LogPolyProblem`; :func:`write_bundled` dumps
them to the JSON files under ``logpoly/data``.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable

import numpy as np

from .model import (
    ConstraintClass,
    CountModelSpec,
    LogPolyProblem,
    build_application,
    lcm_point,
    problem_to_json,
    simulate_lcm,
)
from .polycore import Polynomial

DATA_DIR = Path(__file__).parent / "data"
LCM_SEED = 2024
LCM_SAMPLES = 500


def gap(eps: float = 0.01) -> LogPolyProblem:
    """Two-point feasible set ``{-1, 1}`` with a relaxation gap that grows as ``eps -> 0``."""
    x = Polynomial.variable(1, 0)
    return LogPolyProblem(1, [0.5, 0.5], [1 + eps - x, 1 + eps + x], eq=[1 - x * x], witness=(1.0,), name=f"gap_eps{eps:g}")


def counterexample(a: float = 1.0) -> LogPolyProblem:
    """Feasible set ``{-1, 0, 1}``; the relaxation is never tight for ``a`` in ``{1, 0.1}``."""
    x = Polynomial.variable(1, 0)
    return LogPolyProblem(
        1, [1.0, 1.0], [(x - 1) ** 2 + a, (x + 1) ** 2 + a], eq=[x * (x - 1) * (x + 1)], witness=(0.0,), name=f"counter_a{a:g}"
    )


ABO_COUNTS = (182, 60, 17, 176)


def abo() -> LogPolyProblem:
    """ABO blood group likelihood; phenotype probabilities in allele frequencies."""
    x1, x2, x3 = Polynomial.variables(3)
    model = (x1 * x1 + 2 * x1 * x3, x2 * x2 + 2 * x2 * x3, 2 * x1 * x2, x3 * x3)
    spec = CountModelSpec(
        "mle",
        n=3,
        counts=ABO_COUNTS,
        model=model,
        ineq=tuple(ConstraintClass("simplex").constraints(3)),
        constraint_class=ConstraintClass("simplex"),
        witness=(1 / 3, 1 / 3, 1 / 3),
        name="abo",
    )
    return build_application(spec)


def ball5() -> LogPolyProblem:
    """Three sums of squares on the unit ball in five variables."""
    x = Polynomial.variables(5)
    p1 = (x[2] + x[3]) ** 2 + (1 + 2 * (x[0] + x[4]) + 3 * (x[1] + x[3])) ** 2 + 0.01
    p2 = (x[1] + x[3] - x[4]) ** 2 + (2 * x[1] + 3 * x[4]) ** 2 + 0.02
    p3 = (x[0] + x[2] + x[3]) ** 2 + (x[0] - x[2] + x[3]) ** 2 + 0.03
    cc = ConstraintClass("ball", center=(0.0,) * 5, radius=1.0)
    return LogPolyProblem.with_class(5, [30 / 218, 97 / 218, 91 / 218], [p1, p2, p3], cc, witness=(0.0,) * 5, name="ball5")


CUBIC_WEIGHTS = (0.0968, 0.1419, 0.2194, 0.0839, 0.2839, 0.1742)


def cubic_simplex(weights=CUBIC_WEIGHTS) -> LogPolyProblem:
    """Six cubic terms of ``(x1 + x2 + x3)^3`` on the simplex."""
    x1, x2, x3 = Polynomial.variables(3)
    polys = [
        x1**3 + 3 * x1**2 * x2 + 3 * x1**2 * x3,
        3 * x1 * x2**2 + 6 * x1 * x2 * x3,
        3 * x1 * x3**2,
        x2**3 + 3 * x2**2 * x3,
        3 * x2 * x3**2,
        x3**3,
    ]
    return LogPolyProblem.with_class(3, weights, polys, ConstraintClass("simplex"), witness=(1 / 3,) * 3, name="cubic_simplex")


def power_product(split: bool = False) -> LogPolyProblem:
    """``max q1^20 q2^25`` taken to logs; ``split`` factors ``q2 = 8 - (x5 - x2)^2``."""
    x = Polynomial.variables(5)
    q1 = (x[2] + x[3] + x[4]) ** 2 - x[0] * x[1]
    u = x[4] - x[1]
    q2 = 8 - u * u
    ball = 4 - sum((xi * xi for xi in x), Polynomial.zero(5))
    if split:
        r = 2 * math.sqrt(2)
        weights, polys = [20.0, 25.0, 25.0], [q1, r - u, r + u]
    else:
        weights, polys = [20.0, 25.0], [q1, q2]
    return LogPolyProblem(
        5, weights, polys, ineq=[ball, q1, q2], witness=(0.0, 0.0, 1.0, 0.0, 0.0), name="power_product_split" if split else "power_product"
    )


QUAD10 = (
    # a, alpha, beta, gamma, delta, b, c, d, e
    (3, 10, 2, 3, -3, 0.5, 0.5, -0.5, 0.5),
    (2, 12, 3, 2, -1, -0.6, 0.1, -0.6, -0.1),
    (1, 11, 4, 1, 0, 0.7, -0.2, 0, 0),
    (1, 15, 2, 5, -2, -0.8, 0.3, -0.8, 0.3),
    (5, 13, -3, 2, 0, -0.9, 0.4, 0, 0),
)


def quad10() -> LogPolyProblem:
    """Five paired quadratics in ten variables under nonconvex quadratic constraints."""
    x = Polynomial.variables(10)
    weights, polys, ineq = [], [], []
    for i, (a, al, be, ga, de, b, c, d, e) in enumerate(QUAD10):
        u, v = x[2 * i], x[2 * i + 1]
        p = al - (be * (u + b) ** 2 + ga * (v + c) ** 2 + de * (u + d) * (v + e))
        weights.append(a)
        polys.append(p)
        ineq.append(p - (i + 1))
    ineq += [
        6 - (x[5] - x[6] - x[7]) ** 2 - x[8] ** 2,
        7 - (x[0] - x[9]) ** 2 - (x[1] - x[8]) ** 2,
        (x[0] + x[1] + x[2]) ** 2 + (x[3] + x[4]) ** 2 - 8,
        (x[1] + x[3] - x[5] + x[7] - x[9]) ** 2 - 9,
    ]
    return LogPolyProblem(10, weights, polys, ineq=ineq, name="quad10")


QUARTIC12_ALPHA = (20, 25, 18, 22, 30, 15, 28, 19, 21, 26)
QUARTIC12_BETA = (1.5, 1.2, 2.5, 1.1, 1.6, 1.9, 2.3, 1.7, 2.4, 1.4)
QUARTIC12_A = (-0.2, -1, 0.4, 0.4, -1.1, -0.8, -0.3, -1.7, 1.2, 1.7)
QUARTIC12_B = (-1.6, -0.4, -1, 0.8, -1.5, -0.7, 0, -1, -1.9, 0.9)
QUARTIC12_C = (None, None, None, None, None, -1.3, 0.7, -0.7, 0.8, -0.5)


def quartic12_h(i: int) -> Polynomial:
    """Affine form inside the ``i``-th term (1-based ``i``)."""
    x = Polynomial.variables(12)

    def X(j):  # 1-based
        return x[j - 1]

    a, b, c = QUARTIC12_A[i - 1], QUARTIC12_B[i - 1], QUARTIC12_C[i - 1]
    if i <= 5:
        return (X(2 * i) + a) + (X(2 * i + 1) + b)
    r = (i + 4) % 12
    return (-1) ** (i - 4) * (X(i - 5) + a) + (-1) ** (i + 1) * (X(i) + b) + (-1) ** r * (X(r + 1) + c)


def quartic12() -> LogPolyProblem:
    """Ten concave quartics ``alpha - beta h^4`` over a convex set in twelve variables."""
    x = Polynomial.variables(12)
    z = Polynomial.zero(12)

    def S(idx, signs=None):
        signs = signs or [1] * len(idx)
        return sum((s * x[j - 1] for j, s in zip(idx, signs)), z)

    polys = [QUARTIC12_ALPHA[i] - QUARTIC12_BETA[i] * quartic12_h(i + 1) ** 4 for i in range(10)]
    ineq = [
        15 - S(range(1, 7)) ** 2,
        15 - S(range(7, 13)) ** 2,
        8 - S([1, 3, 5, 7, 9, 11], [1, -1, 1, -1, 1, -1]) ** 2,
        8 - S([2, 4, 6, 8, 10, 12], [1, -1, 1, -1, 1, -1]) ** 2,
        9 - (x[0] + x[11]) ** 2 - (x[1] + x[10]) ** 2,
        9 - (x[2] - x[9]) ** 2 - (x[3] - x[8]) ** 2 - (x[4] - x[7]) ** 2,
        20
        - sum((x[2 * i - 1] ** 2 for i in range(1, 7)), z)
        - 2 * (x[0] ** 2 + x[2] ** 2 + x[6] ** 2 + x[8] ** 2)
        - 3 * (x[4] ** 2 + x[10] ** 2),
        5 - sum((x[2 * i - 2] - x[2 * i - 1] for i in range(1, 7)), z),
        4 - (x[0] + x[5] + x[11]) ** 2,
        3 - x[0] + x[11],
        S(range(1, 13)),
    ]
    return LogPolyProblem(12, [1.0] * 10, polys, ineq=ineq, witness=(0.0,) * 12, name="quartic12")


# paternity rows: counts N, genotype-by-father probabilities P (t x n), reported x*
PATERNITY = (
    ((77, 23), ((0.5, 1), (0.5, 0)), (0.4600, 0.5400)),
    ((63, 37), ((0.5, 1), (0.5, 0)), (0.7400, 0.2600)),
    ((49, 40, 11), ((0.5, 0.875), (0.25, 0.125), (0.25, 0)), (0.8813, 0.1187)),
    ((83, 2, 15), ((0.5, 0.25), (0.5, 0.5), (0, 0.25)), (0.6939, 0.3061)),
    ((63, 17, 20), ((0.5, 0.25), (0.5, 0.5), (0, 0.25)), (0.5181, 0.4819)),
    ((59, 8, 16, 17), ((0.25, 0.5), (0.25, 0.5), (0.25, 0), (0.25, 0)), (0.6599, 0.3401)),
    ((7, 9, 4, 33, 47), ((0.25, 0), (0.25, 0), (0.25, 0), (0.25, 0.5), (0, 0.5)), (0.2463, 0.7537)),
    ((39, 38, 23), ((0.5, 0, 0.875), (0.25, 0.75, 0.125), (0.25, 0.25, 0)), (0.6400, 0.2800, 0.0800)),
    ((29, 21, 88, 62), ((0.5, 0, 0), (0.25, 0.75, 0.25), (0.25, 0.25, 0.5), (0, 0, 0.25)), (0.2240, 0.0000, 0.7760)),
)


def paternity_spec(row: int) -> CountModelSpec:
    counts, P, _ = PATERNITY[row - 1]
    return CountModelSpec("paternity", counts=counts, P=P, name=f"paternity{row}")


def paternity(row: int) -> LogPolyProblem:
    """Row ``row`` (1-based) of the paternity table, in the ``n - 1`` free coordinates."""
    return build_application(paternity_spec(row))


# latent class parameter sets: eta, pi[t][j] = category pmf
LCM_SETS = (
    ((0.5, 0.5), (((0.4, 0.6),), ((0.8, 0.2),))),
    ((0.5, 0.3, 0.2), (((0.4, 0.6),), ((0.8, 0.2),), ((0.1, 0.9),))),
    ((0.5, 0.5), (((0.4, 0.6), (0.1, 0.9)), ((0.8, 0.2), (0.6, 0.4)))),
)


def lcm_truth(which: int):
    """``(T, categories, eta, pi)`` of parameter set ``which`` (1-based)."""
    eta, rows = LCM_SETS[which - 1]
    T, cats = len(eta), tuple(len(r) for r in rows[0])
    pi = {(t, j): rows[t][j] for t in range(T) for j in range(len(cats))}
    return T, cats, eta, pi


def lcm_spec(which: int, N: int = LCM_SAMPLES, seed: int = LCM_SEED) -> CountModelSpec:
    T, cats, eta, pi = lcm_truth(which)
    pats, counts = simulate_lcm(eta, pi, cats, N, seed)
    return CountModelSpec("lcm", T=T, categories=cats, patterns=pats, counts=counts, name=f"lcm{which}")


def lcm(which: int, N: int = LCM_SAMPLES, seed: int = LCM_SEED) -> LogPolyProblem:
    return build_application(lcm_spec(which, N, seed))


def lcm_true_point(which: int) -> np.ndarray:
    T, cats, eta, pi = lcm_truth(which)
    return lcm_point(T, cats, eta, pi)


CATALOGUE: dict[str, Callable[[], LogPolyProblem]] = {
    "gap": gap,
    "counter_a1": lambda: counterexample(1.0),
    "counter_a0.1": lambda: counterexample(0.1),
    "abo": abo,
    "ball5": ball5,
    "cubic_simplex": cubic_simplex,
    "power_product": power_product,
    "power_product_split": lambda: power_product(True),
    "quad10": quad10,
    "quartic12": quartic12,
    **{f"paternity{r}": (lambda r=r: paternity(r)) for r in range(1, 10)},
    **{f"lcm{w}": (lambda w=w: lcm(w)) for w in range(1, 4)},
}


def _application_json(name: str) -> dict | None:
    """Raw application documents for instances built from count data."""
    if name == "abo":
        x = abo()
        return {
            "variant": "mle",
            "name": "abo",
            "n": 3,
            "counts": list(ABO_COUNTS),
            "model": [p.to_json() for p in x.objective],
            "class": "simplex",
            "witness": list(x.witness),
        }
    if name.startswith("paternity"):
        s = paternity_spec(int(name[len("paternity") :]))
        return {"variant": "paternity", "name": name, "counts": list(s.counts), "P": [list(r) for r in s.P]}
    if name.startswith("lcm"):
        T, cats, eta, pi = lcm_truth(int(name[3:]))
        rows = [[list(pi[(t, j)]) for j in range(len(cats))] for t in range(T)]
        return {
            "variant": "lcm",
            "name": name,
            "T": T,
            "categories": list(cats),
            "simulate": {"eta": list(eta), "pi": rows, "N": LCM_SAMPLES, "seed": LCM_SEED},
        }
    return None


def bundled_path(name: str) -> Path:
    return DATA_DIR / f"{name}.json"


def bundled_names() -> list[str]:
    return sorted(p.stem for p in DATA_DIR.glob("*.json") if not p.stem.endswith("schema"))


def write_bundled(directory: Path = DATA_DIR) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, build in CATALOGUE.items():
        doc = _application_json(name) or problem_to_json(build())
        path = directory / f"{name}.json"
        path.write_text(json.dumps(doc, indent=1) + "\n")
        out.append(path)
    return out


if __name__ == "__main__":
    for p in write_bundled():
        print(p)
