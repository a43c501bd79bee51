"""Conflict repair under a minimal-change objective.

When a commitment breaks satisfiability, candidates are enumerated (flip the
current label, soften by dropping derived atoms, selectively retract prior
core members), ranked by the lexicographic cost (past retractions, label
change, commitment size), and verified against the solver under hard budgets:
at most ``r_max`` verifications per query and a per-bundle solver-call cap.
Also hosts logic-filtered voting and the exact minimum-revision-cost search.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .casefile import Label
from .commitments import BeliefState, Commitment, CommitmentOrigin, UnsatCore
from .solver import SolveStatus

OPPOSITE = {Label.ENTAILED: Label.CONTRADICTED, Label.CONTRADICTED: Label.ENTAILED}


class RepairKind(str, Enum):
    FLIP = "flip"
    SOFTEN = "soften"
    RETRACT = "retract"


@dataclass(frozen=True)
class RepairAction:
    kind: RepairKind
    new_label: Label | None = None
    dropped_atoms: tuple[int, ...] = ()
    retract_indices: tuple[int, ...] = ()
    cost: tuple[int, int, int] = (0, 0, 0)  # (past retractions, label changed, psi size)


@dataclass
class RepairBudget:
    r_max: int = 2              # candidate verifications per query
    call_cap: int | None = None  # absolute solver-call cap for the bundle
    delta_past_limit: int = 3   # retraction threshold before giving up

    def __post_init__(self):
        if self.r_max <= 0 or self.delta_past_limit <= 0:
            raise ValueError("budget fields must be positive")
        if self.call_cap is not None and self.call_cap <= 0:
            raise ValueError("budget fields must be positive")


class CallMeter:
    """Per-bundle solver-call accounting with a hard cap."""

    def __init__(self, cap: int | None = None):
        self.cap = cap
        self.used = 0

    def can(self, n: int = 1) -> bool:
        return self.cap is None or self.used + n <= self.cap

    def spend(self, n: int = 1) -> None:
        self.used += n


class RepairOutcomeKind(str, Enum):
    REPAIRED = "repaired"
    FALLBACK_UNKNOWN = "fallback-unknown"
    PARTIAL = "partial"


@dataclass
class RepairOutcome:
    kind: RepairOutcomeKind
    final_commitment: Commitment
    action: RepairAction | None = None
    retracted_indices: tuple[int, ...] = ()
    tried: list[tuple[RepairAction, str]] = field(default_factory=list)
    solver_calls: int = 0
    active_index: int | None = None  # belief-state slot of the final commitment

    @property
    def delta_past(self) -> int:
        return len(self.retracted_indices)


Proposer = Callable[[BeliefState, Commitment, UnsatCore, int], list[RepairAction]]


def propose_repairs(state: BeliefState, commitment: Commitment, core: UnsatCore,
                    pending_index: int) -> list[RepairAction]:
    """Deterministic candidate enumeration: flip to Unknown, flip to the
    opposite label, soften one derived atom at a time (most derived first),
    then retract prior core members singly, in pairs, and as a whole."""
    derived = commitment.literals[1:] if commitment.literals else ()
    d = len(derived)
    out: list[RepairAction] = []
    if commitment.label is not Label.UNKNOWN:
        out.append(RepairAction(RepairKind.FLIP, new_label=Label.UNKNOWN, cost=(0, 1, 0)))
        out.append(RepairAction(RepairKind.FLIP, new_label=OPPOSITE[commitment.label],
                                cost=(0, 1, 1 + d)))
    for k in range(1, d + 1):  # drop the k most recently derived atoms
        out.append(RepairAction(RepairKind.SOFTEN, new_label=commitment.label,
                                dropped_atoms=tuple(derived[d - k:]),
                                cost=(0, 0, 1 + d - k)))
    prior = [i for i in core.commitment_indices
             if i != pending_index and state.commitments[i].literals]
    recent_first = sorted(prior, reverse=True)
    size_now = commitment.size
    for i in recent_first:
        out.append(RepairAction(RepairKind.RETRACT, retract_indices=(i,),
                                cost=(1, 0, size_now)))
    for pair in itertools.combinations(recent_first, 2):
        out.append(RepairAction(RepairKind.RETRACT, retract_indices=pair,
                                cost=(2, 0, size_now)))
    if len(recent_first) > 2:
        full = tuple(recent_first)
        out.append(RepairAction(RepairKind.RETRACT, retract_indices=full,
                                cost=(len(full), 0, size_now)))
    return out


def _revised_commitment(original: Commitment, action: RepairAction) -> Commitment:
    if action.kind is RepairKind.FLIP:
        if action.new_label is Label.UNKNOWN:
            atom = original.literals[0] if original.literals else None
            return Commitment(original.query_id, Label.UNKNOWN, (),
                              CommitmentOrigin.REPAIR, undetermined_atom=atom)
        flipped = (-original.literals[0], *original.literals[1:])
        return Commitment(original.query_id, action.new_label, flipped,
                          CommitmentOrigin.REPAIR)
    if action.kind is RepairKind.SOFTEN:
        kept = tuple(l for l in original.literals if l not in action.dropped_atoms)
        return Commitment(original.query_id, original.label, kept,
                          CommitmentOrigin.REPAIR)
    return original  # retraction leaves the current commitment as-is


def attempt_repair(state: BeliefState, commitment: Commitment, core: UnsatCore,
                   pending_index: int, budget: RepairBudget,
                   meter: CallMeter | None = None,
                   proposer: Proposer | None = None) -> RepairOutcome:
    """Try candidates in lexicographic cost order (ties by enumeration order)
    until one restores satisfiability; otherwise revert the current label to
    Unknown. States that stay unsatisfiable even then (violations that were
    forced in earlier) get an exact minimum-retraction completion, or PARTIAL
    when that exceeds the retraction threshold."""
    meter = meter if meter is not None else CallMeter()
    proposer = proposer or propose_repairs
    candidates = proposer(state, commitment, core, pending_index)
    ordered = sorted(range(len(candidates)), key=lambda i: (candidates[i].cost, i))

    tried: list[tuple[RepairAction, str]] = []
    calls = 0
    verifications = 0
    for idx in ordered:
        if verifications >= budget.r_max or not meter.can(1):
            break
        action = candidates[idx]
        exclude = frozenset(action.retract_indices)
        if action.kind is RepairKind.RETRACT:
            trial_idx = pending_index
        else:
            trial_idx = state.install(_revised_commitment(commitment, action))
        result = state.solve_with(extra=(state.selectors[trial_idx],), exclude=exclude)
        meter.spend()
        calls += 1
        verifications += 1
        if result.status is SolveStatus.SAT:
            if action.cost[0] > budget.delta_past_limit:
                tried.append((action, "accepted-over-threshold"))
                return RepairOutcome(RepairOutcomeKind.PARTIAL,
                                     final_commitment=commitment,
                                     action=action, tried=tried, solver_calls=calls)
            for i in action.retract_indices:
                state.retract(i)
            state.activate(trial_idx, sat=True)
            tried.append((action, "accepted"))
            final = state.commitments[trial_idx]
            return RepairOutcome(RepairOutcomeKind.REPAIRED, final_commitment=final,
                                 action=action,
                                 retracted_indices=action.retract_indices,
                                 tried=tried, solver_calls=calls,
                                 active_index=trial_idx)
        tried.append((action, "timeout" if result.status is SolveStatus.TIMEOUT else "unsat"))

    # no candidate within budget: the current label reverts to Unknown
    fallback = Commitment(commitment.query_id, Label.UNKNOWN, (), CommitmentOrigin.REPAIR,
                          undetermined_atom=commitment.literals[0] if commitment.literals else None)
    fb_idx = state.install(fallback)
    state.activate(fb_idx, sat=state.sat)
    if state.sat:
        return RepairOutcome(RepairOutcomeKind.FALLBACK_UNKNOWN, final_commitment=fallback,
                             tried=tried, solver_calls=calls, active_index=fb_idx)

    # the state was already past a violation; find the cheapest retraction set
    rev = min_revision_cost(state, meter=meter)
    calls += rev.solver_calls
    if not rev.exact or rev.value > budget.delta_past_limit or rev.witness is None:
        return RepairOutcome(RepairOutcomeKind.PARTIAL, final_commitment=fallback,
                             tried=tried, solver_calls=calls, active_index=fb_idx)
    for i in rev.witness:
        state.retract(i)
    state.sat = True
    return RepairOutcome(RepairOutcomeKind.REPAIRED, final_commitment=fallback,
                         retracted_indices=rev.witness, tried=tried, solver_calls=calls,
                         active_index=fb_idx)


# ------------------------------------------------------------- filtered vote


@dataclass
class VoteResult:
    label: Label
    survivors: list[Label]
    solver_calls: int


def logic_filtered_vote(samples: Sequence[Commitment], state: BeliefState,
                        meter: CallMeter | None = None) -> VoteResult:
    """Keep only sampled answers whose commitments preserve satisfiability,
    then majority-vote the survivors; ties and empty survivor sets yield
    Unknown. Trial checks roll back (commitments are installed but never
    activated)."""
    if not samples:
        raise ValueError("need at least one sample")
    meter = meter if meter is not None else CallMeter()
    survivors: list[Label] = []
    calls = 0
    for commitment in samples:
        if not commitment.literals:
            survivors.append(commitment.label)  # asserts nothing, trivially safe
            continue
        if not meter.can(1):
            continue  # budget exhausted: unverified candidates are not retained
        idx = state.install(commitment)
        result = state.solve_with(extra=(state.selectors[idx],))
        meter.spend()
        calls += 1
        if result.status is SolveStatus.SAT:
            survivors.append(commitment.label)
    if not survivors:
        return VoteResult(Label.UNKNOWN, survivors, calls)
    counts = {label: survivors.count(label) for label in set(survivors)}
    best = max(counts.values())
    top = [label for label, n in counts.items() if n == best]
    label = top[0] if len(top) == 1 else Label.UNKNOWN
    return VoteResult(label, survivors, calls)


# --------------------------------------------------------- minimum revision


@dataclass
class RevisionCost:
    value: int
    exact: bool
    witness: tuple[int, ...] | None
    solver_calls: int


REVISION_EXACT_LIMIT = 12


def min_revision_cost(state: BeliefState, meter: CallMeter | None = None) -> RevisionCost:
    """Exact minimum number of active commitments whose retraction restores
    satisfiability: breadth-first over subset cardinality, pruned by core
    membership (every correction set must hit every core). Exact up to
    12 non-empty commitments; beyond that a greedy upper bound is returned
    and flagged approximate."""
    meter = meter if meter is not None else CallMeter()
    calls = 0

    def solve(exclude: frozenset[int]):
        nonlocal calls
        result = state.solve_with(exclude=exclude)
        calls += 1
        meter.spend()
        return result

    result = solve(frozenset())
    if result.status is SolveStatus.SAT:
        return RevisionCost(0, True, (), calls)

    candidates = [i for i in state.active_indices if state.commitments[i].literals]
    if len(candidates) > REVISION_EXACT_LIMIT:
        # greedy: drop most recent core members until satisfiable
        dropped: list[int] = []
        while True:
            core = state.unsat_core(minimize=False)
            viable = [i for i in core.commitment_indices
                      if state.commitments[i].literals and i not in dropped]
            if not viable:
                return RevisionCost(len(candidates), False, None, calls)
            dropped.append(max(viable))
            result = solve(frozenset(dropped))
            if result.status is SolveStatus.SAT:
                return RevisionCost(len(dropped), False, tuple(dropped), calls)

    must_hit = set(candidates)
    if result.failed_assumptions:
        failed_idx = {state.selectors.index(s) for s in result.failed_assumptions
                      if s in state.selectors}
        if failed_idx:
            must_hit = failed_idx
    for k in range(1, len(candidates) + 1):
        for subset in itertools.combinations(candidates, k):
            if not must_hit.intersection(subset):
                continue  # cannot hit the known core
            result = solve(frozenset(subset))
            if result.status is SolveStatus.SAT:
                return RevisionCost(k, True, subset, calls)
    return RevisionCost(len(candidates), True, tuple(candidates), calls)
