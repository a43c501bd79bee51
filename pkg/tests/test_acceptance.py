"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line
(run with ``pytest tests/test_acceptance.py -v -s``).

The headline comparisons use the calibrated noisy preset over the default
generated corpus; oracle equivalence, invariants, and budget audits pin the
engine-level guarantees.
"""

import itertools
import random
import time
from contextlib import contextmanager

import pytest

from casecheck.casefile import Label, derive_gold_label
from casecheck.commitments import AppendStatus, BeliefState, Commitment
from casecheck.generator import generate_corpus
from casecheck.lia import IntVar, LinConstraint, Theory, enumerate_int_solutions, ground
from casecheck.logic import Formula, count_models, truth_table
from casecheck.metrics import UNSAT, aggregate, contradiction_density
from casecheck.repair import logic_filtered_vote, min_revision_cost
from casecheck.runner import RunConfig, evaluate_bundle
from casecheck.solver import SolveStatus, SolverSession

POLICY_SEED = 7  # calibrated configuration: default corpus seed 0, this seed


@contextmanager
def criterion(number: int, description: str):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number:02d} FAIL - {description}")
        raise
    print(f"\nACCEPTANCE {number:02d} PASS - {description}")


@pytest.fixture(scope="module")
def corpus(default_corpus):
    return default_corpus


def _run_method(corpus, method, policy="nocot-like", mode="sequential"):
    config = RunConfig(corpus="", policy=policy, method=method, mode=mode,
                       seed=POLICY_SEED, max_conflicts=200_000, max_seconds=None)
    return [evaluate_bundle(case, config) for case in corpus]


@pytest.fixture(scope="module")
def sweep(corpus):
    start = time.perf_counter()
    reports = {method: _run_method(corpus, method)
               for method in ("baseline", "check", "check+repair")}
    elapsed = time.perf_counter() - start
    return reports, elapsed


def test_criterion_01_solver_soundness():
    with criterion(1, "solver agrees with enumeration on exhaustive + 10k random instances"):
        start = time.perf_counter()
        # exhaustive: every CNF over 3 variables with up to 4 clauses,
        # clause pool = all normalized clauses incl. the empty clause
        pool = [()]
        for polarity in itertools.product((1, 0, -1), repeat=3):
            clause = tuple(sign * v for v, sign in zip((1, 2, 3), polarity) if sign)
            if clause:
                pool.append(clause)
        checked = 0
        for k in range(0, 5):
            for clauses in itertools.combinations(pool, k):
                f = Formula(num_vars=3, clauses=list(clauses))
                verdict = SolverSession(f, max_seconds=None).solve().status
                expected = SolveStatus.SAT if truth_table(f) else SolveStatus.UNSAT
                assert verdict is expected, f"exhaustive mismatch on {clauses}"
                checked += 1
        assert checked == sum(
            len(list(itertools.combinations(range(len(pool)), k))) for k in range(5))

        rng = random.Random(424242)
        for i in range(10_000):
            nv = rng.randint(2, 16)
            f = Formula(num_vars=nv)
            for _ in range(max(1, int(nv * rng.uniform(1.0, 6.0)))):
                width = rng.randint(1, min(4, nv))
                lits = rng.sample(range(1, nv + 1), width)
                f.add_clause([l if rng.random() < 0.5 else -l for l in lits])
            verdict = SolverSession(f, max_seconds=None).solve().status
            expected = SolveStatus.SAT if truth_table(f) else SolveStatus.UNSAT
            assert verdict is expected, f"random instance {i} mismatch"
        elapsed = time.perf_counter() - start
        assert elapsed < 120.0, f"soundness corpus took {elapsed:.1f}s"


def test_criterion_02_grounding_equisatisfiability():
    with criterion(2, "200 bounded integer instances match integer brute force"):
        rng = random.Random(77)
        for _ in range(200):
            n_vars = rng.randint(1, 3)
            variables = [IntVar(f"v{i}", 0, rng.randint(1, 4)) for i in range(n_vars)]
            assertions = []
            for j in range(rng.randint(1, 4)):
                chosen = rng.sample(variables, rng.randint(1, n_vars))
                terms = tuple((rng.choice([-2, -1, 1, 2]), v.name) for v in chosen)
                rel = rng.choice(["<=", "<", "=", ">=", ">", "!="])
                assertions.append((f"c{j}", LinConstraint(terms, rel, rng.randint(-4, 8))))
            theory = Theory(variables, assertions)
            grounded = SolverSession(ground(theory).formula, max_seconds=None).solve()
            expected = bool(enumerate_int_solutions(theory, cap=1))
            assert grounded.status is (SolveStatus.SAT if expected else SolveStatus.UNSAT)


def test_criterion_03_gold_label_correctness(corpus):
    with criterion(3, "gold labels match the enumeration oracle on a 50-case sample"):
        sample = [c for c in corpus if c.formula.num_vars <= 20][:50]
        assert len(sample) == 50
        for case in sample:
            table = truth_table(case.formula)
            n = case.formula.num_vars
            total = table.bit_count()
            assert total > 0
            session = case.new_session()
            for q in case.queries:
                var, positive = abs(q.atom), q.atom > 0
                from casecheck.logic import _var_mask
                mask = _var_mask(n, var)
                true_count = (table & mask).bit_count() if positive else (table & ~mask).bit_count()
                if true_count == total:
                    expected = Label.ENTAILED
                elif true_count == 0:
                    expected = Label.CONTRADICTED
                else:
                    expected = Label.UNKNOWN
                assert derive_gold_label(case, q, session) is expected
                assert q.gold_label is expected


def test_criterion_04_oracle_consistency(corpus):
    with criterion(4, "oracle policy: SetCons 1.0, density 0.0, revision cost 0.0"):
        reports = _run_method(corpus, "check", policy="oracle")
        m = aggregate(reports)
        assert m.set_cons_rate == 1.0
        assert m.contradiction_density == 0.0
        assert m.revision_cost == 0.0


def test_criterion_05_core_minimality():
    with criterion(5, "500 minimal cores pass the remove-one-member check"):
        rng = random.Random(999)
        verified = 0
        while verified < 500:
            nv = rng.randint(3, 7)
            f = Formula(num_vars=nv)
            for _ in range(rng.randint(0, 2)):
                lits = rng.sample(range(1, nv + 1), 2)
                f.add_clause([l if rng.random() < 0.5 else -l for l in lits])
            if count_models(f) == 0:
                continue
            state = BeliefState(f, max_seconds=None)
            for i in range(rng.randint(2, 8)):
                lit = rng.choice([1, -1]) * rng.randint(1, nv)
                res = state.append_and_check(Commitment(f"q{i}", Label.ENTAILED, (lit,)))
                if res.status is AppendStatus.VIOLATION:
                    core = state.unsat_core(
                        pending_index=len(state.commitments) - 1,
                        failed=res.solve_result.failed_assumptions)
                    assert core.minimal
                    members = [state.selectors[j] for j in core.commitment_indices]
                    assert state.session.solve(members).status is SolveStatus.UNSAT
                    for drop in range(len(members)):
                        rest = members[:drop] + members[drop + 1:]
                        assert state.session.solve(rest).status is SolveStatus.SAT
                    verified += 1
                    break
        assert verified == 500


def test_criterion_06_revision_cost_exactness(corpus, sweep):
    with criterion(6, "exact minimum revision vs subset brute force; repair never beats it"):
        rng = random.Random(321)
        checked = 0
        while checked < 200:
            nv = rng.randint(3, 7)
            f = Formula(num_vars=nv)
            for _ in range(rng.randint(0, 2)):
                lits = rng.sample(range(1, nv + 1), 2)
                f.add_clause([l if rng.random() < 0.5 else -l for l in lits])
            if count_models(f) == 0:
                continue
            state = BeliefState(f, max_seconds=None)
            for i in range(rng.randint(2, 8)):
                lit = rng.choice([1, -1]) * rng.randint(1, nv)
                c = Commitment(f"q{i}", Label.ENTAILED, (lit,))
                if state.append_and_check(c).status is AppendStatus.VIOLATION:
                    state.force_append(c, known_unsat=True)
            rev = min_revision_cost(state)
            assert rev.exact
            # independent oracle: exhaustive retraction subsets by cardinality
            candidates = [i for i in state.active_indices if state.commitments[i].literals]
            brute = len(candidates)
            done = False
            for k in range(len(candidates) + 1):
                for subset in itertools.combinations(candidates, k):
                    g = state.rebuild_formula(exclude=frozenset(subset))
                    if count_models(g) > 0:
                        brute = k
                        done = True
                        break
                if done:
                    break
            assert rev.value == brute
            checked += 1

        reports, _ = sweep
        for report in reports["check+repair"]:
            assert report.retractions >= report.min_revision


def test_criterion_07_budget_compliance(corpus, sweep):
    with criterion(7, "check issues exactly n checks when clean; repair stays within 3n and r_max"):
        reports, _ = sweep
        for report in reports["check"]:
            n = report.n
            if not report.repair_log and report.final_sat:  # clean bundle
                assert report.counts.get("check_solver_calls") == n
                assert report.counts.get("core_solver_calls", 0) == 0
        for report in reports["check+repair"]:
            pipeline = (report.counts.get("check_solver_calls", 0)
                        + report.counts.get("core_solver_calls", 0)
                        + report.counts.get("repair_solver_calls", 0))
            assert pipeline <= 3 * report.n, report.case_id
            for entry in report.repair_log:
                assert len(entry.tried) <= 2
            assert not report.invariant_failures


def test_criterion_08_trend_reproduction(sweep):
    with criterion(8, "calibrated noise reproduces the reported ordering and sizes"):
        reports, elapsed = sweep
        base = aggregate(reports["baseline"])
        check = aggregate(reports["check"])
        repair = aggregate(reports["check+repair"])
        assert abs(base.set_cons_rate - 0.55) <= 0.05, base.set_cons_rate
        assert check.set_cons_rate >= base.set_cons_rate + 0.25
        assert repair.set_cons_rate >= check.set_cons_rate + 0.04
        assert repair.revision_cost <= base.revision_cost / 2
        assert abs(repair.accuracy - base.accuracy) <= 0.03
        assert elapsed < 600.0, f"sweep took {elapsed:.0f}s"


def test_criterion_09_no_over_abstention(sweep):
    with criterion(9, "Unknown prediction rate moves < 2 points from baseline to repair"):
        reports, _ = sweep
        base = aggregate(reports["baseline"])
        repair = aggregate(reports["check+repair"])
        assert abs(repair.unknown_rate - base.unknown_rate) < 0.02


def test_criterion_10_monotone_prefix(sweep):
    with criterion(10, "no-intervention runs are monotone with density <= 1/n"):
        reports, _ = sweep
        for report in reports["baseline"]:
            assert report.statuses_before == report.statuses_after
            seen_unsat = False
            for status in report.statuses_after:
                if status == UNSAT:
                    seen_unsat = True
                else:
                    assert not seen_unsat, f"{report.case_id}: SAT after UNSAT"
            assert contradiction_density(report) <= 1.0 / report.n + 1e-12


def test_criterion_11_filtered_vote_conservative():
    with criterion(11, "1000 filtered votes never return a state-killing label"):
        rng = random.Random(1111)
        done = 0
        while done < 1000:
            nv = rng.randint(2, 6)
            f = Formula(num_vars=nv)
            for _ in range(rng.randint(0, nv)):
                lits = rng.sample(range(1, nv + 1), min(2, nv))
                f.add_clause([l if rng.random() < 0.5 else -l for l in lits])
            if count_models(f) == 0:
                continue
            state = BeliefState(f, max_seconds=None)
            # a couple of accepted prior commitments
            for i in range(rng.randint(0, 2)):
                lit = rng.choice([1, -1]) * rng.randint(1, nv)
                state.append_and_check(Commitment(f"p{i}", Label.ENTAILED, (lit,)))
            atom = rng.randint(1, nv)
            samples = []
            for _ in range(rng.randint(1, 5)):
                label = rng.choice(list(Label))
                if label is Label.UNKNOWN:
                    samples.append(Commitment("q", label, ()))
                else:
                    lit = atom if label is Label.ENTAILED else -atom
                    samples.append(Commitment("q", label, (lit,)))
            result = logic_filtered_vote(samples, state)
            if result.label is not Label.UNKNOWN:
                lit = atom if result.label is Label.ENTAILED else -atom
                g = state.rebuild_formula()
                g.add_clause([lit])
                assert count_models(g) > 0, "vote returned a state-killing label"
            done += 1


def test_criterion_12_determinism(corpus, tmp_path):
    with criterion(12, "same RunConfig twice gives byte-identical reports and metrics"):
        from casecheck.casefile import save_corpus
        from casecheck.cli import main
        corpus_path = tmp_path / "corpus.jsonl"
        save_corpus(corpus[:60], corpus_path)
        outs = []
        for name in ("one", "two"):
            out = tmp_path / name
            rc = main(["run", "--corpus", str(corpus_path), "--out", str(out),
                       "--policy", "nocot-like", "--method", "check+repair",
                       "--seed", str(POLICY_SEED), "--max-conflicts", "200000"])
            assert rc == 0
            assert main(["score", "--run", str(out)]) == 0
            outs.append(out)
        a, b = outs
        assert (a / "reports.jsonl").read_bytes() == (b / "reports.jsonl").read_bytes()
        assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()
        assert (a / "table.txt").read_bytes() == (b / "table.txt").read_bytes()
