import random

import pytest

from casecheck.lia import (
    LinConstraint,
    TheoryError,
    Theory,
    IntVar,
    enumerate_int_solutions,
    format_constraint,
    ground,
    parse_constraint,
    parse_theory,
)
from casecheck.logic import count_models
from casecheck.solver import SolveStatus, SolverSession


def test_parse_two_named_constraints():
    theory = parse_theory(
        "(declare-int x 0 3)\n"
        "(assert (>= x 2))\n"
        "(assert (<= x 1))\n"
    )
    assert [v.name for v in theory.variables] == ["x"]
    assert theory.variables[0].lower == 0 and theory.variables[0].upper == 3
    assert theory.assertion_names == ["a1", "a2"]


def test_parse_definitional_equality():
    theory = parse_theory(
        "(declare-int start_A 0 10)\n"
        "(declare-int end_A 0 12)\n"
        "(assert (! (= end_A (+ start_A 2)) :named dur_A))\n"
    )
    name, c = theory.assertions[0]
    assert name == "dur_A"
    assert c.relation == "="
    assert sorted(c.terms) == [(-1, "start_A"), (1, "end_A")]
    assert c.constant == 2


@pytest.mark.parametrize(
    "text,fragment",
    [
        ("(assert (<= x 1))", "undeclared"),
        ("(declare-int x 0 3)(assert (<= (* x x) 1))", "nonlinear"),
        ("(declare-const x Int)", "unbounded"),
        ("(declare-int x 0 200)", "width"),
        ("(declare-int x 0 3)(assert (<= 1 2))", "no variables"),
        ("(declare-int x 0 3)(assert (<= x 1)", "unbalanced"),
    ],
)
def test_parse_rejections(text, fragment):
    with pytest.raises(TheoryError) as exc:
        parse_theory(text)
    assert fragment in str(exc.value)


def test_ground_pigeonhole_single_var():
    theory = parse_theory("(declare-int x 0 1)(assert (= x 0))(assert (= x 1))")
    gt = ground(theory)
    res = SolverSession(gt.formula).solve()
    assert res.status is SolveStatus.UNSAT


def test_ground_model_count_matches_integers():
    theory = parse_theory("(declare-int x 0 3)(assert (>= x 2))")
    gt = ground(theory)
    assert count_models(gt.formula) == 2
    assert len(enumerate_int_solutions(theory)) == 2


def test_ground_decode_roundtrip():
    theory = parse_theory(
        "(declare-int x 0 4)(declare-int y 1 5)"
        "(assert (<= (+ x y) 6))(assert (> y x))"
    )
    gt = ground(theory)
    res = SolverSession(gt.formula).solve()
    assert res.status is SolveStatus.SAT
    values = gt.decode(res.model)
    assert values["x"] + values["y"] <= 6 and values["y"] > values["x"]


def test_core_groups_translate_to_names():
    theory = parse_theory(
        "(declare-int x 0 5)"
        "(assert (! (>= x 4) :named big))"
        "(assert (! (<= x 1) :named small))"
        "(assert (! (>= x 0) :named harmless))"
    )
    gt = ground(theory)
    f = gt.formula
    # every clause belongs to exactly one named group or the domain axioms
    for i in range(len(f.clauses)):
        assert f.group_of(i) in {"domain", "big", "small", "harmless"}
    assert SolverSession(f).solve().status is SolveStatus.UNSAT


def test_disequality_encoding():
    theory = parse_theory("(declare-int x 0 3)(assert (!= x 2))")
    gt = ground(theory)
    assert count_models(gt.formula) == 3
    assert len(enumerate_int_solutions(theory)) == 3


def test_equisatisfiability_random_instances():
    rng = random.Random(424)
    agree = 0
    for _ in range(200):
        n_vars = rng.randint(1, 3)
        variables = [IntVar(f"v{i}", 0, rng.randint(1, 4)) for i in range(n_vars)]
        assertions = []
        for j in range(rng.randint(1, 4)):
            width = rng.randint(1, n_vars)
            chosen = rng.sample(variables, width)
            terms = tuple((rng.choice([-2, -1, 1, 2]), v.name) for v in chosen)
            rel = rng.choice(["<=", "<", "=", ">=", ">", "!="])
            const = rng.randint(-4, 8)
            assertions.append((f"c{j}", LinConstraint(terms, rel, const)))
        theory = Theory(variables, assertions)
        gt = ground(theory)
        grounded = SolverSession(gt.formula).solve()
        expected = len(enumerate_int_solutions(theory, cap=1)) > 0
        assert grounded.status is (SolveStatus.SAT if expected else SolveStatus.UNSAT)
        agree += 1
    assert agree == 200


def test_scheduling_fixture_premises_parse_to_five_assertions():
    import json
    from pathlib import Path

    record = json.loads(
        (Path(__file__).parent / "fixtures" / "scheduling.jsonl").read_text())
    theory = parse_theory(record["premises"])
    assert len(theory.assertions) == 5
    assert {n for n, _ in theory.assertions} == {
        "dur_A", "dur_B", "order_ab", "horizon_a", "horizon_b"}


def test_constraint_text_roundtrip():
    var_map = {"x": IntVar("x", 0, 5), "y": IntVar("y", 0, 5)}
    c = parse_constraint("(<= (+ x (* -2 y)) 3)", var_map)
    assert parse_constraint(format_constraint(c), var_map) == c


def test_reify_matches_integer_semantics():
    theory = parse_theory("(declare-int x 0 4)")
    gt = ground(theory)
    c = parse_constraint("(>= x 3)", theory.var_map)
    lit = gt.reify(c, "probe")
    gt.formula.validate()
    session = SolverSession(gt.formula)
    # forcing the literal forces the constraint, and vice versa
    res = session.solve(assumptions=[lit])
    assert res.status is SolveStatus.SAT and gt.decode(res.model)["x"] >= 3
    res = session.solve(assumptions=[-lit])
    assert res.status is SolveStatus.SAT and gt.decode(res.model)["x"] < 3
