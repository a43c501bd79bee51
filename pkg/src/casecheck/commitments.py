"""Commitment extraction and belief-state tracking.

Answering a query induces a commitment: the queried atom for an entailed
answer, its negation for a contradicted one, nothing for Unknown. The belief
state is the conjunction of the case premises with every accepted commitment;
commitments enter the solver as selector-guarded clause groups so retraction
is an assumption flip rather than a rebuild, and unsatisfiable cores over the
selectors localize conflicts to specific commitments.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

from .casefile import Label, Query
from .logic import Formula
from .solver import SolveResult, SolveStatus, SolverSession

log = logging.getLogger(__name__)


class CommitmentOrigin(str, Enum):
    EXTRACT = "deterministic-extract"
    REPLAY = "replay-trace"
    REPAIR = "repair"


@dataclass
class Commitment:
    query_id: str
    label: Label
    literals: tuple[int, ...]  # queried atom first, derived atoms after; empty for Unknown
    origin: CommitmentOrigin = CommitmentOrigin.EXTRACT
    # analysis-only marker for Unknown answers; never asserted to the solver
    undetermined_atom: int | None = None

    @property
    def size(self) -> int:
        return len(self.literals)


def extract_commitment(query: Query, label: Label,
                       derived_atoms: tuple[int, ...] | list[int] | None = None,
                       vocabulary_size: int | None = None,
                       origin: CommitmentOrigin = CommitmentOrigin.EXTRACT) -> Commitment:
    """Deterministic commitment for a (query, label) pair.

    Derived atoms outside the premise vocabulary are dropped with a warning
    rather than poisoning the solver state."""
    derived = list(derived_atoms or ())
    if vocabulary_size is not None:
        kept = []
        for atom in derived:
            if atom == 0 or abs(atom) > vocabulary_size:
                log.warning("query %s: derived atom %d outside vocabulary, dropped",
                            query.id, atom)
            else:
                kept.append(atom)
        derived = kept
    derived = [a for a in derived if abs(a) != abs(query.atom)]

    if label is Label.ENTAILED:
        literals = (query.atom, *derived)
    elif label is Label.CONTRADICTED:
        literals = (-query.atom, *derived)
    else:
        return Commitment(query.id, label, (), origin, undetermined_atom=query.atom)
    return Commitment(query.id, label, literals, origin)


class AppendStatus(Enum):
    ACCEPTED = "accepted"
    VIOLATION = "violation"
    TIMEOUT_FALLBACK = "timeout-fallback"


@dataclass
class AppendResult:
    status: AppendStatus
    commitment: Commitment
    solve_result: SolveResult | None = None


@dataclass
class UnsatCore:
    commitment_indices: tuple[int, ...]  # positions in the belief state, ascending
    minimal: bool

    def __contains__(self, idx: int) -> bool:
        return idx in self.commitment_indices

    def __len__(self) -> int:
        return len(self.commitment_indices)


class BeliefState:
    """Premises plus an ordered list of commitments, each behind a selector
    literal. The retained conjunction at any time equals the premises plus
    every active commitment, verifiable by a non-incremental rebuild."""

    def __init__(self, formula: Formula, max_conflicts: int | None = None,
                 max_seconds: float | None = 30.0):
        self.base_formula = formula
        self.session = SolverSession(formula, max_conflicts=max_conflicts,
                                     max_seconds=max_seconds)
        self.base_vars = formula.num_vars
        self.commitments: list[Commitment] = []
        self.selectors: list[int] = []
        self.active: list[bool] = []
        self.sat = True  # status of the retained conjunction; premises checked upstream

    # ------------------------------------------------------------- plumbing

    def _install(self, commitment: Commitment) -> int:
        selector = self.session.add_variable()
        for lit in commitment.literals:
            self.session.add_clause([-selector, lit])
        self.commitments.append(commitment)
        self.selectors.append(selector)
        self.active.append(False)
        return len(self.commitments) - 1

    def active_assumptions(self, extra: tuple[int, ...] = (),
                           exclude: frozenset[int] = frozenset()) -> list[int]:
        out = [s for i, s in enumerate(self.selectors)
               if self.active[i] and i not in exclude]
        out.extend(extra)
        return out

    @property
    def active_indices(self) -> list[int]:
        return [i for i, on in enumerate(self.active) if on]

    def index_of_query(self, query_id: str) -> int:
        for i, c in enumerate(self.commitments):
            if c.query_id == query_id and self.active[i]:
                return i
        raise KeyError(query_id)

    # ------------------------------------------------------------ operations

    def append_and_check(self, commitment: Commitment) -> AppendResult:
        """One solver call: tentatively assume the new commitment on top of
        the active set. Accepted on SAT; on UNSAT the state is unchanged and
        repair (or the caller's policy) decides what happens; on TIMEOUT the
        commitment conservatively degrades to Unknown and is accepted."""
        idx = self._install(commitment)
        result = self.session.solve(self.active_assumptions(extra=(self.selectors[idx],)))
        if result.status is SolveStatus.SAT:
            self.active[idx] = True
            return AppendResult(AppendStatus.ACCEPTED, commitment, result)
        if result.status is SolveStatus.TIMEOUT:
            # fresh entry: the original selector still guards the old literals
            fallback = Commitment(commitment.query_id, Label.UNKNOWN, (),
                                  commitment.origin,
                                  undetermined_atom=commitment.literals[0] if commitment.literals else None)
            fb_idx = self._install(fallback)
            self.active[fb_idx] = True
            log.warning("query %s: satisfiability check timed out, label degraded to Unknown",
                        commitment.query_id)
            return AppendResult(AppendStatus.TIMEOUT_FALLBACK, fallback, result)
        return AppendResult(AppendStatus.VIOLATION, commitment, result)

    def force_append(self, commitment: Commitment, known_unsat: bool | None = None) -> int:
        """Continue past a violation: activate the commitment regardless.

        ``known_unsat`` spares a solver call when the caller already holds the
        verdict for the extended conjunction."""
        if (self.commitments and self.commitments[-1] is commitment
                and not self.active[-1]):
            idx = len(self.commitments) - 1
        else:
            idx = self._install(commitment)
        self.active[idx] = True
        if known_unsat is None:
            result = self.session.solve(self.active_assumptions())
            known_unsat = result.status is not SolveStatus.SAT
        if known_unsat:
            self.sat = False
        return idx

    def install(self, commitment: Commitment) -> int:
        """Install without activating (trial commitments for repair/voting)."""
        return self._install(commitment)

    def activate(self, index: int, sat: bool = True) -> None:
        self.active[index] = True
        self.sat = sat

    def retract(self, index: int) -> None:
        self.active[index] = False

    def replace(self, index: int, commitment: Commitment) -> int:
        """Deactivate the commitment at ``index`` and install its replacement."""
        self.active[index] = False
        new_idx = self._install(commitment)
        self.active[new_idx] = True
        return new_idx

    def check(self) -> SolveResult:
        """Re-check the retained conjunction (one solver call)."""
        result = self.session.solve(self.active_assumptions())
        self.sat = result.status is SolveStatus.SAT
        return result

    def solve_with(self, extra: tuple[int, ...] = (),
                   exclude: frozenset[int] = frozenset()) -> SolveResult:
        """Trial check with some commitments masked out or selectors added."""
        return self.session.solve(self.active_assumptions(extra=extra, exclude=exclude))

    # ------------------------------------------------------------ core logic

    def unsat_core(self, pending_index: int | None = None,
                   failed: frozenset[int] | None = None,
                   minimize: bool = True,
                   call_budget: int | None = None) -> UnsatCore:
        """Core over commitment indices whose conjunction with the premises is
        UNSAT. Starts from the solver's failed-assumption set and then runs a
        deletion scan, most recent first, so cores bias toward recent
        commitments. A minimization timeout returns the unminimized core."""
        candidates = set(self.active_indices)
        if pending_index is not None:
            candidates.add(pending_index)
        if failed is not None:
            failed_indices = {self.selectors.index(s) for s in failed if s in self.selectors}
            candidates &= failed_indices

        core = sorted(candidates)
        if not minimize:
            return UnsatCore(tuple(core), minimal=False)
        calls = 0
        for idx in sorted(core, reverse=True):  # most recent first
            if idx not in core:
                continue
            if call_budget is not None and calls >= call_budget:
                return UnsatCore(tuple(sorted(core)), minimal=False)
            trial = [self.selectors[i] for i in core if i != idx]
            result = self.session.solve(trial)
            calls += 1
            if result.status is SolveStatus.TIMEOUT:
                return UnsatCore(tuple(sorted(core)), minimal=False)
            if result.status is SolveStatus.UNSAT:
                # narrow to the failed subset, which drops idx and maybe more
                narrowed = {self.selectors.index(s) for s in result.failed_assumptions}
                core = sorted(narrowed) if narrowed else [i for i in core if i != idx]
        return UnsatCore(tuple(sorted(core)), minimal=True)

    # ------------------------------------------------------------ validation

    def rebuild_formula(self, exclude: frozenset[int] = frozenset()) -> Formula:
        """Premises plus active commitments as plain unit clauses; the
        non-incremental cross-check used by tests and repair verification."""
        f = self.base_formula.copy()
        f.close_groups()
        for i in self.active_indices:
            if i in exclude:
                continue
            with f.new_group(f"commitment:{self.commitments[i].query_id}"):
                for lit in self.commitments[i].literals:
                    f.add_clause([lit])
        return f

    def rebuild_check(self) -> bool:
        """Fresh-session satisfiability of the retained conjunction."""
        result = SolverSession(self.rebuild_formula()).solve()
        return result.status is SolveStatus.SAT
