"""Backend-neutral conic programs and the interior-point solve.

A :class:`ConicProgram` is::

    maximize    c @ x + offset
    subject to  A_eq @ x == b_eq
                A_k @ x + b_k  in  K_k      for every cone block k

Cone kinds:

``psd``
    ``side * (side + 1) / 2`` slots holding the upper triangle of a symmetric
    matrix, column-major: ``(0,0), (0,1), (1,1), (0,2), (1,2), (2,2), ...``.
    Entries are unscaled matrix entries.
``exp``
    Three slots ``(u, v, w)`` with ``v * exp(u / v) <= w, v > 0`` (closure).
    ``(t, 1, s)`` therefore encodes ``t <= log(s)``.

The solver backend is Clarabel, a primal-dual interior-point method for the
product of zero, nonnegative, PSD and exponential cones.
"""
from __future__ import annotations

import io
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

CONE_KINDS = ("psd", "exp")
JSON_FORMAT_VERSION = 1

STATUSES = ("optimal", "infeasible", "unbounded", "numerical_failure", "max_iter")


class ConeError(ValueError):
    """Malformed cone block or a cone kind the target format cannot express."""


@dataclass(frozen=True, eq=False)
class Cone:
    kind: str
    dim: int  # psd: matrix side; exp: 3
    A: sparse.csr_matrix
    b: np.ndarray
    label: str = ""

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ConeError(f"unknown cone kind {self.kind!r}")
        nslots = self.slots
        if self.A.shape[0] != nslots or self.b.shape != (nslots,):
            raise ConeError(f"{self.kind} cone of dim {self.dim} needs {nslots} slots, got A{self.A.shape}, b{self.b.shape}")

    @property
    def slots(self) -> int:
        if self.kind == "exp":
            if self.dim != 3:
                raise ConeError("exponential cones have exactly 3 slots")
            return 3
        return self.dim * (self.dim + 1) // 2

    def values(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self.b

    def matrix(self, x: np.ndarray) -> np.ndarray:
        """The symmetric matrix of a psd block at ``x``."""
        if self.kind != "psd":
            raise ConeError("matrix() is defined for psd blocks only")
        return triu_to_matrix(self.values(x), self.dim)

    def violation(self, x: np.ndarray) -> float:
        """Distance-like infeasibility of ``x`` for this block (0 when inside)."""
        v = self.values(x)
        if self.kind == "psd":
            if self.dim == 1:
                return max(0.0, -float(v[0]))
            return max(0.0, -float(np.linalg.eigvalsh(triu_to_matrix(v, self.dim))[0]))
        return exp_cone_violation(*v)


def triu_index(side: int) -> list[tuple[int, int]]:
    return [(i, j) for j in range(side) for i in range(j + 1)]


def triu_to_matrix(v: np.ndarray, side: int) -> np.ndarray:
    M = np.zeros((side, side))
    iu = np.array(triu_index(side)).reshape(-1, 2)
    M[iu[:, 0], iu[:, 1]] = v
    M[iu[:, 1], iu[:, 0]] = v
    return M


def exp_cone_violation(u: float, v: float, w: float) -> float:
    """Violation of ``v exp(u/v) <= w, v >= 0`` measured in the ``w`` slot."""
    if v > 1e-300:
        gap = v * math.exp(min(u / v, 700.0)) - w
        return max(0.0, gap, -v)
    # closure: v == 0 requires u <= 0, w >= 0
    return max(0.0, -v, u if v <= 0 else 0.0, -w)


@dataclass(eq=False)
class ConicProgram:
    nvars: int
    c: np.ndarray
    offset: float = 0.0
    A_eq: sparse.csr_matrix = None
    b_eq: np.ndarray = None
    cones: list[Cone] = field(default_factory=list)
    var_names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.c.shape != (self.nvars,):
            raise ConeError(f"objective has {self.c.size} entries for {self.nvars} variables")
        if self.A_eq is None:
            self.A_eq = sparse.csr_matrix((0, self.nvars))
            self.b_eq = np.zeros(0)
        self.A_eq = sparse.csr_matrix(self.A_eq)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        if self.A_eq.shape != (self.b_eq.size, self.nvars):
            raise ConeError(f"equality block has shape {self.A_eq.shape}, rhs {self.b_eq.shape}")
        for k, cone in enumerate(self.cones):
            if cone.A.shape[1] != self.nvars:
                raise ConeError(f"cone {k} references {cone.A.shape[1]} variables, program has {self.nvars}")

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def scaled(self, s: float) -> "ConicProgram":
        """Same feasible set, objective multiplied by ``s > 0``."""
        return ConicProgram(self.nvars, s * self.c, s * self.offset, self.A_eq, self.b_eq, list(self.cones), self.var_names)

    def block_summary(self) -> dict:
        psd = [c.dim for c in self.cones if c.kind == "psd"]
        return {
            "variables": self.nvars,
            "equalities": int(self.A_eq.shape[0]),
            "psd_sides": psd,
            "exp_cones": sum(c.kind == "exp" for c in self.cones),
        }

    def residuals(self, x: np.ndarray) -> dict:
        """Independent re-evaluation of every constraint at ``x``."""
        eq = float(np.max(np.abs(self.A_eq @ x - self.b_eq), initial=0.0))
        cone = max((cone.violation(x) for cone in self.cones), default=0.0)
        return {"equality": eq, "cone": cone}


@dataclass
class SolverSettings:
    tol_feas: float = 1e-8
    tol_gap: float = 1e-8
    max_iter: int = 200
    verbose: bool = False

    @classmethod
    def from_env(cls, **overrides) -> "SolverSettings":
        """Defaults, then ``LOGPOLY_TOL`` / ``LOGPOLY_MAX_ITER``, then ``overrides``."""
        s = cls()
        if "LOGPOLY_TOL" in os.environ:
            s.tol_feas = s.tol_gap = float(os.environ["LOGPOLY_TOL"])
        if "LOGPOLY_MAX_ITER" in os.environ:
            s.max_iter = int(os.environ["LOGPOLY_MAX_ITER"])
        for k, v in overrides.items():
            if v is not None:
                setattr(s, k, v)
        return s


@dataclass
class ConicSolution:
    status: str
    x: np.ndarray | None
    value: float | None
    primal_infeasibility: float = math.nan
    dual_infeasibility: float = math.nan
    gap: float = math.nan
    iterations: int = 0
    solve_time: float = 0.0
    backend_status: str = ""
    tolerances: dict = field(default_factory=dict)
    reduced_accuracy: bool = False
    attempts: int = 1

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


_STATUS_MAP = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "MaxIterations": "max_iter",
    "MaxTime": "max_iter",
}

# AlmostSolved is accepted as optimal only if the final iterate is this good
REDUCED_ACCURACY_TOL = 1e-6


def _svec_rows(cone: Cone) -> tuple[sparse.csr_matrix, np.ndarray]:
    # Clarabel's triangle cone stores off-diagonals scaled by sqrt(2)
    scale = np.array([1.0 if i == j else math.sqrt(2.0) for i, j in triu_index(cone.dim)])
    D = sparse.diags(scale)
    return D @ cone.A, scale * cone.b


def _clarabel_data(prog: ConicProgram):
    import clarabel

    blocks_A, blocks_b, cones = [], [], []
    if prog.A_eq.shape[0]:
        blocks_A.append(prog.A_eq)
        blocks_b.append(prog.b_eq)
        cones.append(clarabel.ZeroConeT(prog.A_eq.shape[0]))
    for cone in prog.cones:
        # s = b - A x  must lie in the cone, with s = (A_k x + b_k)
        if cone.kind == "psd" and cone.dim == 1:
            blocks_A.append(-cone.A)
            blocks_b.append(cone.b)
            cones.append(clarabel.NonnegativeConeT(1))
        elif cone.kind == "psd":
            A, b = _svec_rows(cone)
            blocks_A.append(-A)
            blocks_b.append(b)
            cones.append(clarabel.PSDTriangleConeT(cone.dim))
        else:
            blocks_A.append(-cone.A)
            blocks_b.append(cone.b)
            cones.append(clarabel.ExponentialConeT())
    if blocks_A:
        A = sparse.vstack(blocks_A).tocsc()
        b = np.concatenate(blocks_b)
    else:
        A = sparse.csc_matrix((0, prog.nvars))
        b = np.zeros(0)
    return A, b, cones


# Backend configurations tried in order when a solve ends in numerical
# failure: (scale the objective to unit max-norm, Clarabel setting overrides).
# Scaling helps on objectives with large weights; on some degenerate programs
# it stalls the method, and the unscaled or unequilibrated run succeeds.
RETRY_LADDER = (
    (True, {}),
    (False, {}),
    (True, {"equilibrate_enable": False}),
)


def _solve_once(prog: ConicProgram, settings: SolverSettings, data, scale: bool, overrides: dict, tolerances: dict) -> ConicSolution:
    import clarabel

    A, b, cones = data
    P = sparse.csc_matrix((prog.nvars, prog.nvars))
    cscale = (float(np.max(np.abs(prog.c), initial=0.0)) or 1.0) if scale else 1.0
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.tol_feas = settings.tol_feas
    opts.tol_gap_abs = settings.tol_gap
    opts.tol_gap_rel = settings.tol_gap
    opts.max_iter = settings.max_iter
    for k, v in overrides.items():
        setattr(opts, k, v)
    t0 = time.perf_counter()
    try:
        sol = clarabel.DefaultSolver(P, -prog.c / cscale, A, b, cones, opts).solve()
    except Exception as e:  # backend setup failures surface as a status, not a crash
        return ConicSolution("numerical_failure", None, None, backend_status=f"error: {e}", tolerances=tolerances)
    elapsed = time.perf_counter() - t0
    backend = str(sol.status).split(".")[-1]
    status = _STATUS_MAP.get(backend, "numerical_failure")
    x = np.array(sol.x, dtype=float) if len(sol.x) else None
    gap = abs(sol.obj_val - sol.obj_val_dual) / (1.0 + abs(sol.obj_val))
    reduced = False
    if backend == "AlmostSolved" and max(sol.r_prim, sol.r_dual, gap) <= REDUCED_ACCURACY_TOL:
        status, reduced = "optimal", True
    value = prog.objective(x) if status == "optimal" else None
    return ConicSolution(
        status=status,
        x=x,
        value=value,
        primal_infeasibility=float(sol.r_prim),
        dual_infeasibility=float(sol.r_dual),
        gap=gap if status == "optimal" else math.nan,
        iterations=int(sol.iterations),
        solve_time=elapsed,
        backend_status=backend,
        tolerances=tolerances,
        reduced_accuracy=reduced,
    )


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve ``prog`` to the tolerances in ``settings``.

    Any non-optimal outcome is reported in ``status``; ``value`` is only set
    for ``optimal``.  Numerical failures are retried down ``RETRY_LADDER``;
    ``attempts`` counts the backend runs and ``solve_time`` covers all of them.
    """
    settings = settings or SolverSettings.from_env()
    tolerances = {"feasibility": settings.tol_feas, "gap": settings.tol_gap, "max_iter": settings.max_iter}
    if prog.nvars == 0:
        return ConicSolution("optimal", np.zeros(0), prog.offset, 0.0, 0.0, 0.0, tolerances=tolerances)
    data = _clarabel_data(prog)
    first, total = None, 0.0
    for n, (scale, overrides) in enumerate(RETRY_LADDER, start=1):
        sol = _solve_once(prog, settings, data, scale, overrides, tolerances)
        total += sol.solve_time
        first = first or sol
        if sol.status != "numerical_failure":
            break
    else:
        sol = first
    sol.attempts = n
    sol.solve_time = total
    return sol


# ----------------------------------------------------------------------------
# export


def program_to_json(prog: ConicProgram) -> dict:
    def coo(M):
        M = sparse.coo_matrix(M)
        return {"rows": M.row.tolist(), "cols": M.col.tolist(), "vals": M.data.tolist(), "shape": list(M.shape)}

    return {
        "format": "logpoly-conic",
        "version": JSON_FORMAT_VERSION,
        "sense": "max",
        "nvars": prog.nvars,
        "c": prog.c.tolist(),
        "offset": prog.offset,
        "A_eq": coo(prog.A_eq),
        "b_eq": prog.b_eq.tolist(),
        "cones": [
            {"kind": k.kind, "dim": k.dim, "A": coo(k.A), "b": k.b.tolist(), "label": k.label} for k in prog.cones
        ],
        "var_names": prog.var_names,
    }


def program_from_json(d: dict) -> ConicProgram:
    if d.get("format") != "logpoly-conic":
        raise ConeError("not a logpoly-conic document")
    if d.get("version") != JSON_FORMAT_VERSION:
        raise ConeError(f"unsupported program format version {d.get('version')}")

    def mat(m):
        return sparse.csr_matrix(
            (np.array(m["vals"], dtype=float), (np.array(m["rows"], dtype=np.int64), np.array(m["cols"], dtype=np.int64))),
            shape=tuple(m["shape"]),
        )

    return ConicProgram(
        nvars=d["nvars"],
        c=np.array(d["c"], dtype=float),
        offset=d["offset"],
        A_eq=mat(d["A_eq"]),
        b_eq=np.array(d["b_eq"], dtype=float),
        cones=[Cone(k["kind"], k["dim"], mat(k["A"]), np.array(k["b"], dtype=float), k.get("label", "")) for k in d["cones"]],
        var_names=d.get("var_names"),
    )


def _write_cbf(prog: ConicProgram, out: io.StringIO) -> None:
    """Conic Benchmark Format, version 3.

    Scalar cones go in CON as affine rows; psd blocks become PSDCON with
    lower-triangle HCOORD/DCOORD entries.  The CBF exponential cone is
    ``{(r, s, t): r >= s exp(t/s)}``, so ``(u, v, w)`` is written as ``(w, v, u)``.
    """
    for k in prog.cones:
        if k.kind not in CONE_KINDS:
            raise ConeError(f"cone kind {k.kind!r} has no CBF encoding")
    w = out.write
    w("VER\n3\n\nOBJSENSE\nMAX\n\n")
    w(f"VAR\n{prog.nvars} {1 if prog.nvars else 0}\n")
    if prog.nvars:
        w(f"F {prog.nvars}\n")
    w("\n")

    scalar_cones = []  # (CBF name, A, b)
    if prog.A_eq.shape[0]:
        scalar_cones.append(("L=", prog.A_eq, -prog.b_eq))
    psd = []
    for k in prog.cones:
        if k.kind == "exp":
            perm = [2, 1, 0]
            scalar_cones.append(("EXP", k.A[perm], k.b[perm]))
        else:
            psd.append(k)

    nrows = sum(A.shape[0] for _, A, _ in scalar_cones)
    if scalar_cones:
        w(f"CON\n{nrows} {len(scalar_cones)}\n")
        for name, A, _ in scalar_cones:
            w(f"{name} {A.shape[0]}\n")
        w("\n")
    if psd:
        w(f"PSDCON\n{len(psd)}\n")
        for k in psd:
            w(f"{k.dim}\n")
        w("\n")

    obj = sparse.coo_matrix(prog.c.reshape(1, -1))
    if obj.nnz:
        w(f"OBJACOORD\n{obj.nnz}\n")
        for j, v in zip(obj.col, obj.data):
            w(f"{j} {float(v)!r}\n")
        w("\n")
    if prog.offset:
        w(f"OBJBCOORD\n{float(prog.offset)!r}\n\n")

    if scalar_cones:
        acoord, bcoord = [], []
        base = 0
        for _, A, b in scalar_cones:
            A = sparse.coo_matrix(A)
            acoord += [(base + i, j, v) for i, j, v in zip(A.row, A.col, A.data) if v != 0]
            bcoord += [(base + i, v) for i, v in enumerate(b) if v != 0]
            base += A.shape[0]
        if acoord:
            w(f"ACOORD\n{len(acoord)}\n")
            w("".join(f"{i} {j} {float(v)!r}\n" for i, j, v in acoord))
            w("\n")
        if bcoord:
            w(f"BCOORD\n{len(bcoord)}\n")
            w("".join(f"{i} {float(v)!r}\n" for i, v in bcoord))
            w("\n")

    if psd:
        hcoord, dcoord = [], []
        for p, k in enumerate(psd):
            pairs = triu_index(k.dim)
            A = sparse.coo_matrix(k.A)
            for s, j, v in zip(A.row, A.col, A.data):
                if v != 0:
                    i0, j0 = pairs[s]
                    hcoord.append((p, j, j0, i0, v))  # lower triangle: row >= col
            for s, v in enumerate(k.b):
                if v != 0:
                    i0, j0 = pairs[s]
                    dcoord.append((p, j0, i0, v))
        if hcoord:
            w(f"HCOORD\n{len(hcoord)}\n")
            w("".join(f"{p} {j} {r} {c} {float(v)!r}\n" for p, j, r, c, v in hcoord))
            w("\n")
        if dcoord:
            w(f"DCOORD\n{len(dcoord)}\n")
            w("".join(f"{p} {r} {c} {float(v)!r}\n" for p, r, c, v in dcoord))
            w("\n")


def export_program(prog: ConicProgram, fmt: str = "json") -> bytes:
    """Serialize ``prog`` as ``'cbf'`` text or the versioned JSON document."""
    if fmt == "json":
        return json.dumps(program_to_json(prog)).encode()
    if fmt == "cbf":
        buf = io.StringIO()
        _write_cbf(prog, buf)
        return buf.getvalue().encode()
    raise ValueError(f"unknown export format {fmt!r}")


def import_program(data: bytes | str) -> ConicProgram:
    """Inverse of ``export_program(..., 'json')``."""
    return program_from_json(json.loads(data))


class ProgramBuilder:
    """Incremental assembly of a :class:`ConicProgram` from sparse affine rows.

    An affine row is a ``dict`` ``{var: coef}`` plus a constant.
    """

    def __init__(self, nvars: int, var_names: Sequence[str] | None = None):
        self.nvars = nvars
        self.c = np.zeros(nvars)
        self.offset = 0.0
        self.var_names = list(var_names) if var_names is not None else None
        self._eq_rows: list[dict] = []
        self._eq_rhs: list[float] = []
        self._eq_seen: set = set()
        self.cones: list[Cone] = []

    def add_equality(self, row: dict[int, float], rhs: float = 0.0, dedupe: bool = True) -> bool:
        """Add ``row @ x == rhs``; identical rows (up to scaling) are dropped when ``dedupe``."""
        row = {j: v for j, v in row.items() if v != 0.0}
        if not row:
            if abs(rhs) > 0:
                raise ConeError("infeasible constant equality row")
            return False
        if dedupe:
            j0 = min(row)
            s = row[j0]
            key = (tuple(sorted((j, v / s) for j, v in row.items())), rhs / s)
            if key in self._eq_seen:
                return False
            self._eq_seen.add(key)
        self._eq_rows.append(row)
        self._eq_rhs.append(rhs)
        return True

    def add_cone(self, kind: str, dim: int, rows: Iterable[tuple[dict[int, float], float]], label: str = "") -> None:
        rows = list(rows)
        data, ri, ci, b = [], [], [], []
        for r, (row, const) in enumerate(rows):
            for j, v in row.items():
                if v != 0.0:
                    ri.append(r)
                    ci.append(j)
                    data.append(v)
            b.append(const)
        A = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), self.nvars))
        self.cones.append(Cone(kind, dim, A, np.array(b, dtype=float), label))

    def build(self) -> ConicProgram:
        data, ri, ci = [], [], []
        for r, row in enumerate(self._eq_rows):
            for j, v in row.items():
                ri.append(r)
                ci.append(j)
                data.append(v)
        A_eq = sparse.csr_matrix((data, (ri, ci)), shape=(len(self._eq_rows), self.nvars))
        return ConicProgram(self.nvars, self.c.copy(), self.offset, A_eq, np.array(self._eq_rhs), list(self.cones), self.var_names)
