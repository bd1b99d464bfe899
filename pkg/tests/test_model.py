import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logpoly.instances import CATALOGUE, PATERNITY, abo, bundled_names, bundled_path, counterexample, gap, paternity, paternity_spec
from logpoly.model import (
    ConstraintClass,
    CountModelSpec,
    LogPolyProblem,
    ProblemError,
    SchemaError,
    build_application,
    load_problem,
    problem_from_json,
    problem_to_json,
    relaxation_degree,
    validate_problem,
)
from logpoly.pipeline import solve_problem
from logpoly.polycore import Polynomial


def test_relaxation_degree_examples():
    assert relaxation_degree(gap()) == 1
    assert relaxation_degree(counterexample(1.0)) == 2
    x = Polynomial.variables(2)
    lin = LogPolyProblem(2, [1.0, 2.0], [x[0] + 1, x[1] + 2], ineq=[1 - x[0] - x[1]])
    assert relaxation_degree(lin) == 1


def test_relaxation_degree_invariances():
    prob = counterexample(1.0)
    x = Polynomial.variable(1, 0)
    padded = LogPolyProblem(1, prob.weights, prob.objective, eq=(*prob.eq, Polynomial.zero(1)), ineq=[1 - x * x, x + 1])
    permuted = LogPolyProblem(1, prob.weights, prob.objective, eq=prob.eq, ineq=[x + 1, 1 - x * x])
    assert relaxation_degree(padded) == relaxation_degree(permuted) == relaxation_degree(prob)


def test_validate_abo_witness():
    prob = abo()
    prob = LogPolyProblem(3, prob.weights, prob.objective, ineq=prob.ineq, constraint_class=prob.constraint_class, witness=(0.3, 0.3, 0.4))
    report = validate_problem(prob)
    assert report.ok, report.warnings


def test_validate_failures():
    x = Polynomial.variables(2)
    zero_weight = LogPolyProblem(2, [0.0, 1.0], [x[0] + 1, x[1] + 1])
    assert not validate_problem(zero_weight)["weights_positive"].ok
    missing_rows = LogPolyProblem(2, [1.0], [x[0] + 1], ineq=[1 - x[0] - x[1]], constraint_class=ConstraintClass("simplex"))
    report = validate_problem(missing_rows)
    assert not report["class_consistent"].ok
    assert any("class_consistent" in w for w in report.warnings)
    bad_witness = LogPolyProblem(2, [1.0], [x[0]], ineq=[1 - x[0] - x[1]], witness=(2.0, 0.0))
    assert not validate_problem(bad_witness)["witness_ineq"].ok


def test_paternity_first_row():
    prob = paternity(1)
    assert prob.n == 1
    # independent oracle: grid search of the substituted objective
    grid = np.linspace(1e-4, 1 - 1e-4, 20001)
    vals = [prob.value([g]) for g in grid]
    xbar = grid[int(np.argmax(vals))]
    assert xbar == pytest.approx(0.46, abs=1e-4)
    assert prob.recover([xbar]) == pytest.approx([0.46, 0.54], abs=1e-4)


@pytest.mark.parametrize("row", range(1, 10))
def test_paternity_substitution_is_exact(row):
    counts, P, _ = PATERNITY[row - 1]
    P = np.array(P)
    prob = paternity(row)
    rng = np.random.default_rng(row)
    for _ in range(5):
        x = rng.dirichlet(np.ones(P.shape[1]))
        direct = sum(N * math.log(P[i] @ x) for i, N in enumerate(counts) if N > 0)
        assert prob.value(x[:-1]) == pytest.approx(direct, rel=1e-12)


def test_abo_problem():
    prob = abo()
    assert prob.weights == (182.0, 60.0, 17.0, 176.0)
    v = np.array([0.2644, 0.0932, 0.6424])
    x1, x2, x3 = v
    expect = 182 * math.log(x1**2 + 2 * x1 * x3) + 60 * math.log(x2**2 + 2 * x2 * x3) + 17 * math.log(2 * x1 * x2) + 176 * math.log(x3**2)
    assert prob.value(v) == pytest.approx(expect, rel=1e-12)


def test_single_support_point_counts():
    model = abo().objective
    spec = CountModelSpec("mle", n=3, counts=(0, 0, 0, 10), model=model, ineq=tuple(ConstraintClass("simplex").constraints(3)), constraint_class=ConstraintClass("simplex"))
    prob = build_application(spec)
    assert prob.m == 1
    res = solve_problem(prob, 2, certify=False)
    assert res.value == pytest.approx(0.0, abs=1e-6)
    assert res.tms.first_moments() == pytest.approx([0, 0, 1], abs=1e-4)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=4, max_size=4).filter(any), st.lists(st.floats(0.05, 1), min_size=3, max_size=3))
def test_mle_objective_is_log_likelihood(counts, w):
    x = np.array(w) / sum(w)
    model = abo().objective
    spec = CountModelSpec("mle", n=3, counts=tuple(counts), model=model)
    prob = build_application(spec)
    direct = math.log(math.prod(p(x) ** a for a, p in zip(counts, model)))
    assert prob.value(x) == pytest.approx(direct, rel=1e-9)


def test_kl_is_shifted_cross_entropy():
    model = abo().objective
    pmf = (0.4, 0.1, 0.1, 0.4)
    ce = build_application(CountModelSpec("cross_entropy", n=3, pmf=pmf, model=model))
    kl = build_application(CountModelSpec("kl", n=3, pmf=pmf, model=model))
    x = [0.3, 0.2, 0.5]
    entropy = -sum(p * math.log(p) for p in pmf)
    assert kl.value(x) == pytest.approx(ce.value(x) + entropy, rel=1e-12)
    assert all(p1 == p2 for p1, p2 in zip(kl.objective, ce.objective))
    # at the pmf itself the model reproduces the data, so -KL is zero there
    x1, x2, x3 = Polynomial.variables(3)
    ident = (x1, x2, x3, 1 - x1 - x2 - x3)
    kl2 = build_application(CountModelSpec("kl", n=3, pmf=pmf, model=ident))
    assert kl2.value(pmf[:3]) == pytest.approx(0.0, abs=1e-12)


def test_spec_invariants():
    model = abo().objective
    with pytest.raises(ProblemError):
        build_application(CountModelSpec("mle", n=3, counts=(1, -1, 0, 0), model=model))
    with pytest.raises(ProblemError):
        build_application(CountModelSpec("kl", n=3, pmf=(0.5, 0.5, 0.5, 0.0), model=model))
    with pytest.raises(ProblemError):
        build_application(CountModelSpec("paternity", counts=(1, 2), P=((0.5, 1.5), (0.5, 0))))
    with pytest.raises(ProblemError):
        build_application(CountModelSpec("mle", n=3, counts=(1, 2), model=model))


@pytest.mark.parametrize("name", sorted(CATALOGUE))
def test_problem_json_round_trip(name):
    prob = CATALOGUE[name]()
    again = problem_from_json(json.loads(json.dumps(problem_to_json(prob))))
    assert problem_to_json(again) == problem_to_json(prob)


@pytest.mark.parametrize("name", sorted(CATALOGUE))
def test_bundled_file_matches_builder(name):
    assert name in bundled_names()
    assert problem_to_json(load_problem(str(bundled_path(name)))) == problem_to_json(CATALOGUE[name]())


def test_schema_errors(tmp_path):
    good = problem_to_json(gap())
    with pytest.raises(SchemaError) as e:
        problem_from_json({k: v for k, v in good.items() if k != "n"})
    assert e.value.path == "$.n"
    with pytest.raises(SchemaError) as e:
        problem_from_json({**good, "objective": [{"weight": 1.0, "poly": "x"}]})
    assert e.value.path == "$.objective[0].poly"
    with pytest.raises(SchemaError) as e:
        problem_from_json({**good, "class": "box"})
    assert e.value.path == "$.bounds"
    with pytest.raises(SchemaError) as e:
        problem_from_json({**good, "witness": [1.0, 2.0]})
    path = tmp_path / "broken.json"
    path.write_text('{\n "n": 1,\n "objective": [\n')
    with pytest.raises(SchemaError) as e:
        load_problem(str(path))
    assert e.value.path.startswith("line")
    with pytest.raises(SchemaError):
        load_problem({"variant": "paternity", "counts": [1, 2], "P": [[0.5], [0.5]]})


def test_application_documents_build_the_same_problem():
    doc = json.loads(bundled_path("paternity3").read_text())
    assert doc["variant"] == "paternity"
    assert problem_to_json(load_problem(doc)) == problem_to_json(build_application(paternity_spec(3)))
