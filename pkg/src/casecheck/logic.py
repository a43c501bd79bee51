"""Propositional core: clauses, grouped CNF formulas, DIMACS io, model enumeration.

Literals are nonzero ints in DIMACS convention: ``v`` asserts variable ``v``
true, ``-v`` asserts it false. Variables are numbered from 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

ENUMERATION_VAR_LIMIT = 24

TAUTOLOGY = None  # marker returned by normalize_clause


class LogicError(ValueError):
    pass


class DimacsError(LogicError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EnumerationGuardError(LogicError):
    pass


def neg(lit: int) -> int:
    return -lit


def variable(lit: int) -> int:
    return abs(lit)


def normalize_clause(lits: Iterable[int]) -> tuple[int, ...] | None:
    """Deduplicate literals; return TAUTOLOGY (None) for clauses with l and -l."""
    seen: dict[int, None] = {}
    for l in lits:
        if not isinstance(l, int) or l == 0:
            raise LogicError(f"bad literal {l!r}")
        if -l in seen:
            return TAUTOLOGY
        seen.setdefault(l, None)
    return tuple(seen)


@dataclass
class Formula:
    """A CNF formula with clauses partitioned into named, contiguous groups.

    Group tags let unsatisfiable cores over the clause list be translated back
    to the named constraints they came from.
    """

    num_vars: int = 0
    clauses: list[tuple[int, ...]] = field(default_factory=list)
    # (name, start, end) half-open ranges; must partition the clause list
    groups: list[tuple[str, int, int]] = field(default_factory=list)

    def add_clause(self, lits: Iterable[int]) -> bool:
        """Normalize and append a clause; returns False if it was a tautology."""
        clause = normalize_clause(lits)
        if clause is TAUTOLOGY:
            return False
        for l in clause:
            if abs(l) > self.num_vars:
                raise LogicError(f"literal {l} exceeds declared variable count {self.num_vars}")
        self.clauses.append(clause)
        return True

    def new_group(self, name: str) -> "_GroupRecorder":
        return _GroupRecorder(self, name)

    def close_groups(self, default: str = "main") -> None:
        """Tag any untagged clause tail with a default group."""
        end = self.groups[-1][2] if self.groups else 0
        if end < len(self.clauses):
            self.groups.append((default, end, len(self.clauses)))

    def group_of(self, clause_index: int) -> str:
        for name, start, end in self.groups:
            if start <= clause_index < end:
                return name
        raise LogicError(f"clause {clause_index} not covered by any group")

    def group_clauses(self, name: str) -> list[tuple[int, ...]]:
        out = []
        for gname, start, end in self.groups:
            if gname == name:
                out.extend(self.clauses[start:end])
        return out

    def validate(self) -> None:
        for clause in self.clauses:
            for l in clause:
                if l == 0 or abs(l) > self.num_vars:
                    raise LogicError(f"literal {l} out of range 1..{self.num_vars}")
        pos = 0
        for name, start, end in self.groups:
            if start != pos or end < start:
                raise LogicError(f"group {name!r} range [{start},{end}) does not partition the clause list")
            pos = end
        if self.groups and pos != len(self.clauses):
            raise LogicError("group ranges do not cover all clauses")

    def copy(self) -> "Formula":
        return Formula(self.num_vars, list(self.clauses), list(self.groups))


class _GroupRecorder:
    """Context manager recording the clause range added while it is open."""

    def __init__(self, formula: Formula, name: str):
        self.formula = formula
        self.name = name

    def __enter__(self) -> Formula:
        self._start = len(self.formula.clauses)
        return self.formula

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.formula.groups.append((self.name, self._start, len(self.formula.clauses)))


def parse_dimacs(text: str) -> Formula:
    """Parse DIMACS CNF text. Group comments ``c group <name> <start> <end>``
    emitted by emit_dimacs are read back; other comments are ignored."""
    num_vars: int | None = None
    num_clauses: int | None = None
    clauses: list[tuple[int, ...]] = []
    groups: list[tuple[str, int, int]] = []
    pending: list[int] = []
    pending_line = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("c"):
            parts = line.split()
            if len(parts) == 5 and parts[1] == "group":
                try:
                    groups.append((parts[2], int(parts[3]), int(parts[4])))
                except ValueError:
                    raise DimacsError(f"malformed group comment {line!r}", lineno)
            continue
        if line.startswith("p"):
            if num_vars is not None:
                raise DimacsError("duplicate problem header", lineno)
            parts = line.split()
            if len(parts) != 4 or parts[0] != "p" or parts[1] != "cnf":
                raise DimacsError(f"malformed header {line!r}", lineno)
            try:
                num_vars, num_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"non-integer counts in header {line!r}", lineno)
            if num_vars < 0 or num_clauses < 0:
                raise DimacsError("negative counts in header", lineno)
            continue
        if num_vars is None:
            raise DimacsError("clause before problem header", lineno)
        try:
            lits = [int(tok) for tok in line.split()]
        except ValueError:
            raise DimacsError(f"non-integer literal in {line!r}", lineno)
        if not pending:
            pending_line = lineno
        for l in lits:
            if l == 0:
                clause = normalize_clause(pending)
                if clause is TAUTOLOGY:
                    if groups:
                        raise DimacsError("tautological clause in grouped formula", pending_line)
                else:
                    for c in clause:
                        if abs(c) > num_vars:
                            raise DimacsError(f"literal {c} out of declared range 1..{num_vars}", pending_line)
                    clauses.append(clause)
                pending = []
            else:
                pending.append(l)

    if num_vars is None:
        raise DimacsError("missing problem header")
    if pending:
        raise DimacsError("clause missing terminating 0", pending_line)
    if num_clauses is not None and len(clauses) != num_clauses:
        raise DimacsError(f"header declares {num_clauses} clauses, found {len(clauses)}")

    formula = Formula(num_vars, clauses, groups)
    formula.close_groups()
    formula.validate()
    return formula


def emit_dimacs(formula: Formula, comment: str | None = None) -> str:
    lines = []
    if comment:
        for part in comment.splitlines():
            lines.append(f"c {part}")
    for name, start, end in formula.groups:
        lines.append(f"c group {name} {start} {end}")
    lines.append(f"p cnf {formula.num_vars} {len(formula.clauses)}")
    for clause in formula.clauses:
        lines.append(" ".join(str(l) for l in clause) + " 0")
    return "\n".join(lines) + "\n"


def evaluate(formula: Formula, model: dict[int, bool]) -> bool:
    """Direct evaluation of a total assignment against every clause."""
    for clause in formula.clauses:
        if not any(model[abs(l)] == (l > 0) for l in clause):
            return False
    return True


_MASK_CACHE: dict[tuple[int, int], int] = {}


def _var_mask(n: int, var: int) -> int:
    """Bitmask over all 2^n assignment indices where ``var`` is true.

    Assignment index i assigns variable j the bit (i >> (n - j)) & 1, so
    ascending i enumerates assignments in lexicographic variable order.
    """
    key = (n, var)
    cached = _MASK_CACHE.get(key)
    if cached is not None:
        return cached
    half = 1 << (n - var)
    mask = ((1 << half) - 1) << half
    span = half * 2
    total = 1 << n
    while span < total:
        mask |= mask << span
        span *= 2
    _MASK_CACHE[key] = mask
    return mask


def truth_table(formula: Formula) -> int:
    """The formula's satisfying set as a bitmask over all 2^num_vars assignments."""
    n = formula.num_vars
    if n > ENUMERATION_VAR_LIMIT:
        raise EnumerationGuardError(f"{n} variables exceeds enumeration limit {ENUMERATION_VAR_LIMIT}")
    full = (1 << (1 << n)) - 1
    table = full
    for clause in formula.clauses:
        cmask = 0
        for l in clause:
            m = _var_mask(n, abs(l))
            cmask |= m if l > 0 else (full ^ m)
        table &= cmask
        if table == 0:
            break
    return table


def count_models(formula: Formula) -> int:
    return truth_table(formula).bit_count()


def _index_to_model(n: int, i: int) -> dict[int, bool]:
    return {j: bool((i >> (n - j)) & 1) for j in range(1, n + 1)}


@dataclass
class ModelEnumeration:
    models: list[dict[int, bool]]
    overflow: bool

    def __iter__(self) -> Iterator[dict[int, bool]]:
        return iter(self.models)

    def __len__(self) -> int:
        return len(self.models)


def enumerate_models(formula: Formula, cap: int | None = None) -> ModelEnumeration:
    """All satisfying total assignments in lexicographic variable order,
    truncated at ``cap`` with the overflow flag set."""
    n = formula.num_vars
    table = truth_table(formula)
    models: list[dict[int, bool]] = []
    overflow = False
    i = 0
    while table:
        low = table & -table
        i = low.bit_length() - 1
        if cap is not None and len(models) >= cap:
            overflow = True
            break
        models.append(_index_to_model(n, i))
        table ^= low
    return ModelEnumeration(models, overflow)
