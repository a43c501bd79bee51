import itertools
import random

from casecheck.casefile import Label
from casecheck.commitments import AppendStatus, BeliefState, Commitment
from casecheck.logic import Formula, count_models, parse_dimacs
from casecheck.repair import (
    CallMeter,
    RepairBudget,
    RepairKind,
    RepairOutcomeKind,
    attempt_repair,
    logic_filtered_vote,
    min_revision_cost,
    propose_repairs,
)
from casecheck.solver import SolveStatus


def state_of(dimacs: str | None = None, num_vars: int = 4) -> BeliefState:
    formula = parse_dimacs(dimacs) if dimacs else Formula(num_vars=num_vars)
    return BeliefState(formula)


def violating_append(state, commitment):
    res = state.append_and_check(commitment)
    assert res.status is AppendStatus.VIOLATION
    pending = len(state.commitments) - 1
    core = state.unsat_core(pending_index=pending,
                            failed=res.solve_result.failed_assumptions)
    return pending, core


def test_candidates_without_derived_atoms():
    state = state_of("p cnf 1 1\n1 0")
    c = Commitment("q1", Label.ENTAILED, (-1,))
    pending, core = violating_append(state, c)
    actions = propose_repairs(state, c, core, pending)
    kinds = [(a.kind, a.new_label) for a in actions]
    assert kinds[0] == (RepairKind.FLIP, Label.UNKNOWN)
    assert kinds[1] == (RepairKind.FLIP, Label.CONTRADICTED)
    assert all(a.kind is not RepairKind.SOFTEN for a in actions)


def test_soften_candidate_keeps_queried_atom():
    state = state_of(num_vars=5)
    state.append_and_check(Commitment("q1", Label.ENTAILED, (-5,)))
    c = Commitment("q2", Label.ENTAILED, (3, 5))  # derived atom 5 conflicts
    pending, core = violating_append(state, c)
    actions = propose_repairs(state, c, core, pending)
    softens = [a for a in actions if a.kind is RepairKind.SOFTEN]
    assert softens and softens[0].dropped_atoms == (5,)
    budget = RepairBudget()
    outcome = attempt_repair(state, c, core, pending, budget)
    assert outcome.kind is RepairOutcomeKind.REPAIRED
    assert outcome.action.kind is RepairKind.SOFTEN
    assert outcome.final_commitment.literals == (3,)
    assert outcome.final_commitment.label is Label.ENTAILED
    assert state.rebuild_check()


def test_forced_flip_to_unknown_cost():
    state = state_of("p cnf 1 1\n1 0")
    c = Commitment("q1", Label.CONTRADICTED, (-1,))
    pending, core = violating_append(state, c)
    outcome = attempt_repair(state, c, core, pending, RepairBudget())
    assert outcome.kind is RepairOutcomeKind.REPAIRED
    assert outcome.action.kind is RepairKind.FLIP
    assert outcome.action.new_label is Label.UNKNOWN
    assert outcome.action.cost == (0, 1, 0)
    assert state.rebuild_check()


def test_retraction_reached_with_wider_budget():
    # forced-in conflict: a and not-a both active, current query innocent
    state = state_of(num_vars=3)
    state.append_and_check(Commitment("q1", Label.ENTAILED, (1,)))
    c2 = Commitment("q2", Label.CONTRADICTED, (-1,))
    res = state.append_and_check(c2)
    assert res.status is AppendStatus.VIOLATION
    state.force_append(c2, known_unsat=True)
    c3 = Commitment("q3", Label.ENTAILED, (2,))
    res3 = state.append_and_check(c3)
    assert res3.status is AppendStatus.VIOLATION
    pending = len(state.commitments) - 1
    core = state.unsat_core(pending_index=pending,
                            failed=res3.solve_result.failed_assumptions)
    outcome = attempt_repair(state, c3, core, pending, RepairBudget(r_max=4))
    assert outcome.kind is RepairOutcomeKind.REPAIRED
    assert outcome.action.kind is RepairKind.RETRACT
    assert outcome.delta_past == 1
    assert state.rebuild_check()
    assert state.check().status is SolveStatus.SAT


def test_partial_when_entanglement_exceeds_threshold():
    # four disjoint forced-in conflicts need four retractions (> limit of 3)
    state = state_of(num_vars=5)
    for i, v in enumerate((1, 2, 3, 4), start=1):
        state.append_and_check(Commitment(f"p{i}", Label.ENTAILED, (v,)))
    for i, v in enumerate((1, 2, 3, 4), start=1):
        c = Commitment(f"n{i}", Label.CONTRADICTED, (-v,))
        res = state.append_and_check(c)
        assert res.status is AppendStatus.VIOLATION
        state.force_append(c, known_unsat=True)
    current = Commitment("q9", Label.ENTAILED, (5,))
    res = state.append_and_check(current)
    assert res.status is AppendStatus.VIOLATION
    pending = len(state.commitments) - 1
    core = state.unsat_core(pending_index=pending,
                            failed=res.solve_result.failed_assumptions)
    outcome = attempt_repair(state, current, core, pending, RepairBudget())
    assert outcome.kind is RepairOutcomeKind.PARTIAL


def test_repair_verification_cap_respected():
    state = state_of("p cnf 1 1\n1 0")
    c = Commitment("q1", Label.CONTRADICTED, (-1,))
    pending, core = violating_append(state, c)
    meter = CallMeter()
    outcome = attempt_repair(state, c, core, pending, RepairBudget(r_max=2), meter=meter)
    assert outcome.solver_calls <= 2
    assert len([t for t in outcome.tried]) <= 2


def test_fallback_unknown_when_candidates_fail():
    # current commitment conflicts; r_max=1 and the single tried candidate
    # (flip to Unknown) always succeeds, so force failure differently: make
    # the sole candidate verification hit the call cap
    state = state_of("p cnf 1 1\n1 0")
    c = Commitment("q1", Label.CONTRADICTED, (-1,))
    pending, core = violating_append(state, c)
    meter = CallMeter(cap=0)  # no calls left for verification
    outcome = attempt_repair(state, c, core, pending, RepairBudget(), meter=meter)
    assert outcome.kind is RepairOutcomeKind.FALLBACK_UNKNOWN
    assert outcome.final_commitment.label is Label.UNKNOWN
    assert state.rebuild_check()


def test_accepted_repair_is_lexicographically_optimal():
    # exhaust the candidate space independently: every candidate that would
    # restore satisfiability must cost at least as much as the accepted one
    rng = random.Random(71)
    checked = 0
    while checked < 30:
        nv = rng.randint(3, 6)
        f = Formula(num_vars=nv)
        for _ in range(rng.randint(0, 2)):
            lits = rng.sample(range(1, nv + 1), 2)
            f.add_clause([l if rng.random() < 0.5 else -l for l in lits])
        if count_models(f) == 0:
            continue
        state = BeliefState(f)
        violation = None
        for i in range(rng.randint(2, 6)):
            lit = rng.choice([1, -1]) * rng.randint(1, nv)
            derived = tuple(rng.choice([1, -1]) * rng.randint(1, nv)
                            for _ in range(rng.randint(0, 2)))
            derived = tuple(d for d in derived if abs(d) != abs(lit))
            c = Commitment(f"q{i}", Label.ENTAILED, (lit, *derived))
            res = state.append_and_check(c)
            if res.status is AppendStatus.VIOLATION:
                violation = (c, res)
                break
        if violation is None:
            continue
        c, res = violation
        pending = len(state.commitments) - 1
        core = state.unsat_core(pending_index=pending,
                                failed=res.solve_result.failed_assumptions)
        candidates = propose_repairs(state, c, core, pending)
        # oracle pass: which candidates restore satisfiability?
        from casecheck.repair import _revised_commitment, RepairKind as RK
        sat_costs = []
        for action in candidates:
            g = state.rebuild_formula(exclude=frozenset(action.retract_indices))
            revised = c if action.kind is RK.RETRACT else _revised_commitment(c, action)
            for lit2 in revised.literals:
                g.add_clause([lit2])
            if count_models(g) > 0:
                sat_costs.append(action.cost)
        outcome = attempt_repair(state, c, core, pending,
                                 RepairBudget(r_max=len(candidates) or 1))
        if outcome.kind is RepairOutcomeKind.REPAIRED and outcome.action is not None:
            assert sat_costs and outcome.action.cost == min(sat_costs)
            checked += 1
        else:
            assert not sat_costs  # nothing could have fixed it
            checked += 1


def test_pluggable_proposer_can_force_partial_over_threshold():
    # a recorded/external proposer may suggest retraction sets bigger than the
    # enumerator would; acceptance beyond the threshold abandons the bundle
    from casecheck.repair import RepairAction

    state = state_of(num_vars=6)
    for i, v in enumerate((1, 2, 3, 4), start=1):
        state.append_and_check(Commitment(f"q{i}", Label.ENTAILED, (v,)))
    current = Commitment("q5", Label.CONTRADICTED, (-5,))
    res = state.append_and_check(Commitment("q0", Label.ENTAILED, (5,)))
    assert res.status is AppendStatus.ACCEPTED
    res = state.append_and_check(current)
    assert res.status is AppendStatus.VIOLATION
    pending = len(state.commitments) - 1
    core = state.unsat_core(pending_index=pending,
                            failed=res.solve_result.failed_assumptions)

    def proposer(state, commitment, core, pending_index):
        # a sweeping retraction that does restore satisfiability (it covers
        # the conflicting q0) but costs four past commitments
        return [RepairAction(RepairKind.RETRACT, retract_indices=(1, 2, 3, 4),
                             cost=(4, 0, commitment.size))]

    outcome = attempt_repair(state, current, core, pending,
                             RepairBudget(delta_past_limit=3), proposer=proposer)
    assert outcome.kind is RepairOutcomeKind.PARTIAL


# ------------------------------------------------------------- filtered vote


def test_vote_plain_majority():
    state = state_of(num_vars=3)
    samples = [Commitment("q1", Label.ENTAILED, (1,)),
               Commitment("q1", Label.ENTAILED, (1,)),
               Commitment("q1", Label.CONTRADICTED, (-1,))]
    assert logic_filtered_vote(samples, state).label is Label.ENTAILED


def test_vote_filters_state_killers():
    state = state_of("p cnf 1 1\n-1 0")  # premises refute atom 1
    samples = [Commitment("q1", Label.ENTAILED, (1,)),
               Commitment("q1", Label.ENTAILED, (1,)),
               Commitment("q1", Label.CONTRADICTED, (-1,))]
    result = logic_filtered_vote(samples, state)
    assert result.label is Label.CONTRADICTED  # sole survivor
    assert result.survivors == [Label.CONTRADICTED]


def test_vote_tie_yields_unknown():
    state = state_of(num_vars=2)
    samples = [Commitment("q1", Label.ENTAILED, (1,)),
               Commitment("q1", Label.CONTRADICTED, (-1,))]
    assert logic_filtered_vote(samples, state).label is Label.UNKNOWN


def test_vote_conservative_over_seeds():
    rng = random.Random(51)
    for _ in range(100):
        nv = rng.randint(2, 5)
        f = Formula(num_vars=nv)
        for _ in range(rng.randint(0, nv)):
            lits = rng.sample(range(1, nv + 1), min(2, nv))
            f.add_clause([l if rng.random() < 0.5 else -l for l in lits])
        if count_models(f) == 0:
            continue
        state = BeliefState(f)
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
            assert count_models(g) > 0


# --------------------------------------------------------- minimum revision


def test_revision_cost_zero_when_sat():
    state = state_of(num_vars=2)
    state.append_and_check(Commitment("q1", Label.ENTAILED, (1,)))
    assert min_revision_cost(state).value == 0


def test_revision_cost_single_conflict():
    state = state_of(num_vars=3)
    state.append_and_check(Commitment("q1", Label.ENTAILED, (1,)))
    state.append_and_check(Commitment("q2", Label.ENTAILED, (2,)))
    c = Commitment("q3", Label.CONTRADICTED, (-1,))
    res = state.append_and_check(c)
    state.force_append(c, known_unsat=True)
    rev = min_revision_cost(state)
    assert rev.value == 1 and rev.exact


def brute_force_min_retraction(state) -> int:
    candidates = [i for i in state.active_indices if state.commitments[i].literals]
    for k in range(len(candidates) + 1):
        for subset in itertools.combinations(candidates, k):
            f = state.rebuild_formula(exclude=frozenset(subset))
            if count_models(f) > 0:
                return k
    return len(candidates)


def test_revision_cost_matches_brute_force_on_seeded_conflicts():
    rng = random.Random(61)
    checked = 0
    while checked < 40:
        nv = rng.randint(3, 6)
        f = Formula(num_vars=nv)
        for _ in range(rng.randint(0, 2)):
            lits = rng.sample(range(1, nv + 1), 2)
            f.add_clause([l if rng.random() < 0.5 else -l for l in lits])
        if count_models(f) == 0:
            continue
        state = BeliefState(f)
        for i in range(rng.randint(2, 8)):
            lit = rng.choice([1, -1]) * rng.randint(1, nv)
            c = Commitment(f"q{i}", Label.ENTAILED, (lit,))
            res = state.append_and_check(c)
            if res.status is AppendStatus.VIOLATION:
                state.force_append(c, known_unsat=True)
        rev = min_revision_cost(state)
        assert rev.exact
        assert rev.value == brute_force_min_retraction(state)
        if rev.value > 0:
            checked += 1
