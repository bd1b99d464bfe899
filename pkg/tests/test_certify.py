import math

import numpy as np
import pytest

from logpoly.certify import (
    CertificationRefused,
    CertifyOptions,
    check_feasible_point,
    certify_tightness,
    polish,
    sos_concave_problem,
    sos_concavity_check,
)
from logpoly.instances import abo, ball5, counterexample, gap, quad10, quartic12
from logpoly.model import LogPolyProblem
from logpoly.moments import point_tms
from logpoly.pipeline import solve_problem
from logpoly.polycore import Polynomial

X = Polynomial.variable(1, 0)


def test_feasible_point_examples():
    rep = check_feasible_point([0.2644, 0.0932, 0.6424], abo())
    assert rep.feasible and rep.objective_defined
    rep = check_feasible_point([2.0, 0.0, 0.0], abo())
    assert not rep.feasible
    assert rep.max_violation == pytest.approx(1.0)
    rep = check_feasible_point([1.0], gap(0.01))
    assert rep.feasible
    assert rep.objective_values[0] == pytest.approx(0.01)
    with pytest.raises(ValueError):
        check_feasible_point([0.1, 0.2], abo())


def test_polish_projects_nearby_points():
    prob = abo()
    v, dist = polish(prob, [0.2644, 0.0932, 0.6424 + 1e-6])
    assert v is not None and check_feasible_point(v, prob).feasible
    assert dist <= 1e-3


# --- SOS-concavity ---------------------------------------------------------------


def test_sos_concavity_basic():
    assert sos_concavity_check(-(X**2)).verdict is True
    assert sos_concavity_check(X**2).verdict is False
    assert sos_concavity_check(1 - X**4).verdict is True
    assert sos_concavity_check(3 + 2 * X).status == "trivial"


def test_quad10_indefinite_term():
    verdicts = [sos_concavity_check(p).verdict for p in quad10().objective]
    # the fifth term mixes a concave and a convex square
    assert verdicts[4] is False
    assert sos_concave_problem(quad10())[0] is False


def test_quartic12_is_sos_concave():
    ok, detail = sos_concave_problem(quartic12())
    assert ok is True
    assert all(detail["objective"]) and all(detail["ineq"]) and detail["eq_affine"]


def test_gram_reproduces_negative_hessian():
    x1, x2 = Polynomial.variables(2)
    p = 1 - (x1 + 0.5 * x2) ** 4 - x2**2
    res = sos_concavity_check(p)
    assert res.verdict is True
    G = res.gram
    assert np.linalg.eigvalsh(G)[0] >= -1e-7
    rng = np.random.default_rng(4)
    H = p.hessian()
    for _ in range(5):
        v, w = rng.normal(size=2), rng.normal(size=2)
        z = np.array([w[i] * np.prod(np.power(v, beta)) for i, beta in res.basis])
        direct = -sum(w[i] * w[j] * H[i][j](v) for i in range(2) for j in range(2))
        assert z @ G @ z == pytest.approx(direct, rel=1e-5, abs=1e-5)


def hessian_fd(f, v, h=1e-3):
    n = len(v)
    H = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            e_i, e_j = np.eye(n)[i] * h, np.eye(n)[j] * h
            H[i, j] = (f(v + e_i + e_j) - f(v + e_i - e_j) - f(v - e_i + e_j) + f(v - e_i - e_j)) / (4 * h * h)
    return H


def test_random_quadratics_agree_with_hessian_oracle():
    rng = np.random.default_rng(20)
    for trial in range(20):
        n = int(rng.integers(1, 4))
        if trial % 2 == 0:
            A = rng.normal(size=(n, n))
            Q = -A @ A.T - 0.1 * np.eye(n)
        else:
            while True:
                S = rng.normal(size=(n, n))
                Q = (S + S.T) / 2
                if np.linalg.eigvalsh(Q)[-1] > 0.1:
                    break
        x = Polynomial.variables(n)
        b = rng.normal(size=n)
        p = Polynomial.constant(n, 1.0)
        for i in range(n):
            p = p + float(b[i]) * x[i]
            for j in range(n):
                p = p + 0.5 * float(Q[i, j]) * x[i] * x[j]
        # oracle: largest Hessian eigenvalue over a coarse grid, from finite differences
        grid = rng.uniform(-1, 1, size=(6, n))
        worst = max(np.linalg.eigvalsh(hessian_fd(p, g))[-1] for g in grid)
        expect = bool(worst <= 0)
        assert sos_concavity_check(p).verdict is expect, (trial, worst)


# --- certificates ------------------------------------------------------------------


def check_invariants(prob, cert):
    tol = 1e-5 * (1 + abs(cert.upper))
    if cert.lower is not None:
        assert cert.lower <= cert.upper + tol
        assert check_feasible_point(cert.argmax, prob).feasible
        assert prob.value(cert.argmax) == pytest.approx(cert.lower)
    if cert.tight:
        assert cert.gap <= tol
        for v in cert.maximizers:
            assert check_feasible_point(v, prob).feasible
    assert cert.trail[0]["check"] == "tolerances"
    assert cert.trail[-1]["check"] == "gap"


def test_refuses_unsolved_status():
    y = point_tms([0.0], 3)
    with pytest.raises(CertificationRefused):
        certify_tightness(counterexample(1.0), y, 1.0, status="max_iter")


def test_abo_standard_bound_is_loose_but_lower_bound_is_sharp():
    prob = abo()
    cert = solve_problem(prob, 2).certificate
    assert cert.verdict == "inconclusive"
    assert cert.upper == pytest.approx(-491.8158, abs=1e-3)
    assert cert.lower == pytest.approx(-492.5353, abs=1e-3)
    check_invariants(prob, cert)


def test_abo_lme_rank_one():
    prob = abo()
    cert = solve_problem(prob, 2, mode="lme").certificate
    assert cert.verdict == "tight_rank1"
    assert cert.argmax == pytest.approx([0.2644, 0.0932, 0.6424], abs=1e-4)
    check_invariants(prob, cert)


def test_counterexample_is_inconclusive():
    prob = counterexample(1.0)
    res = solve_problem(prob, 3)
    cert = res.certificate
    assert res.value == pytest.approx(math.log(9), abs=1e-5)
    assert cert.verdict == "inconclusive"
    assert cert.lower == pytest.approx(math.log(5), abs=1e-7)
    check_invariants(prob, cert)


def test_counterexample_negative_control():
    # the best feasible value is at the origin, far below the bound; nothing may certify
    prob = counterexample(0.1)
    cert = solve_problem(prob, 3, sos_concave=True).certificate
    assert cert.verdict == "inconclusive"
    assert cert.lower == pytest.approx(2 * math.log(1.1), abs=1e-7)
    assert cert.upper == pytest.approx(math.log(4.41), abs=1e-5)
    check_invariants(prob, cert)


def test_gap_instance_is_inconclusive():
    prob = gap(0.01)
    cert = solve_problem(prob, 1).certificate
    assert cert.verdict == "inconclusive"
    assert cert.lower == pytest.approx(0.5 * math.log(0.01 * 2.01), abs=1e-7)
    check_invariants(prob, cert)


def test_false_bound_is_not_certified():
    # a rank-one y at the true maximizer but with an inflated upper bound must fail the gap check
    prob = abo()
    y = point_tms([0.26444, 0.09317, 0.64239], 2)
    cert = certify_tightness(prob, y, prob.value([0.26444, 0.09317, 0.64239]) + 1.0)
    assert cert.verdict == "inconclusive"
    check_invariants(prob, cert)


def test_refinement_can_be_disabled():
    prob = ball5()
    res = solve_problem(prob, 1, certify=False)
    opts = CertifyOptions(refine=False)
    cert = certify_tightness(prob, res.tms, res.value, res.status, res.extraction, opts)
    assert cert.trail[1]["refined"] is False
    check_invariants(prob, cert)


def test_single_term_is_sos_concave_problem():
    x1, x2 = Polynomial.variables(2)
    prob = LogPolyProblem(2, [1.0], [2 - x1 * x1 - x2 * x2], ineq=[1 - x1, 1 + x1])
    ok, _ = sos_concave_problem(prob)
    assert ok is True
