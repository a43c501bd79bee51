"""Case files and query bundles: data model, on-disk corpus format, gold-label
derivation by entailment checking, and case-level splits.

Corpus files are line-delimited JSON, one case per line. Propositional cases
carry DIMACS premises and integer query atoms; temporal cases carry theory
text and constraint-text atoms that are reified to fresh literals when the
case is compiled. Unknown record fields are preserved verbatim so files from
other producers round-trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .lia import GroundedTheory, Theory, ground, parse_constraint, parse_theory
from .logic import Formula, parse_dimacs
from .solver import SolveStatus, SolverSession


class Label(str, Enum):
    ENTAILED = "entailed"
    CONTRADICTED = "contradicted"
    UNKNOWN = "unknown"


class Domain(str, Enum):
    RELATIONAL = "relational"
    TEMPORAL = "temporal"
    POLICY = "policy"
    ABDUCTIVE = "abductive"


class CaseError(ValueError):
    pass


class CorpusFormatError(CaseError):
    pass


class LabelTimeout(CaseError):
    """A gold-label solver check exceeded its budget; the label is refused."""


_QUERY_FIELDS = {"id", "atom", "gold_label", "text", "depends_on"}
_CASE_FIELDS = {"id", "domain", "split", "premises", "premises_format", "queries"}


@dataclass
class Query:
    id: str
    atom: int  # literal in the compiled formula
    gold_label: Label | None = None
    text: str | None = None
    depends_on: list[str] = field(default_factory=list)
    atom_text: str | None = None  # source constraint text for theory cases
    extra: dict = field(default_factory=dict)


@dataclass
class CaseFile:
    id: str
    domain: Domain
    premises: str
    premises_format: str  # "dimacs" | "theory"
    queries: list[Query]
    split: str | None = None
    formula: Formula | None = None
    theory: Theory | None = None
    grounded: GroundedTheory | None = None
    extra: dict = field(default_factory=dict)

    @property
    def bundle_size(self) -> int:
        return len(self.queries)

    def query_by_id(self, qid: str) -> Query:
        for q in self.queries:
            if q.id == qid:
                return q
        raise KeyError(qid)

    def new_session(self, max_conflicts: int | None = None,
                    max_seconds: float | None = 30.0) -> SolverSession:
        if self.formula is None:
            raise CaseError(f"case {self.id} is not compiled")
        return SolverSession(self.formula, max_conflicts=max_conflicts, max_seconds=max_seconds)


def compile_case(case: CaseFile, check_premises: bool = True) -> CaseFile:
    """Build the case formula; theory cases get each query atom reified to a
    fresh literal in a ``query:<id>`` clause group."""
    if case.premises_format == "dimacs":
        case.formula = parse_dimacs(case.premises)
        for q in case.queries:
            if not isinstance(q.atom, int) or q.atom == 0 or abs(q.atom) > case.formula.num_vars:
                raise CorpusFormatError(
                    f"case {case.id} query {q.id}: atom {q.atom!r} outside premise vocabulary")
    elif case.premises_format == "theory":
        case.theory = parse_theory(case.premises)
        case.grounded = ground(case.theory)
        var_map = case.theory.var_map
        for q in case.queries:
            if not q.atom_text:
                raise CorpusFormatError(f"case {case.id} query {q.id}: missing constraint atom")
            constraint = parse_constraint(q.atom_text, var_map)
            q.atom = case.grounded.reify(constraint, f"query:{q.id}")
        case.formula = case.grounded.formula
        case.formula.validate()
    else:
        raise CorpusFormatError(f"case {case.id}: unknown premises_format {case.premises_format!r}")

    if check_premises:
        res = case.new_session().solve()
        if res.status is SolveStatus.UNSAT:
            raise CaseError(f"case {case.id}: premises are unsatisfiable")
        if res.status is SolveStatus.TIMEOUT:
            raise LabelTimeout(f"case {case.id}: premise satisfiability check timed out")
    return case


def literal_gold_label(session: SolverSession, atom: int) -> Label:
    """Label of a literal against satisfiable premises: exactly one of the
    three labels, decided by two assumption checks."""
    res = session.solve(assumptions=[-atom])
    if res.status is SolveStatus.TIMEOUT:
        raise LabelTimeout("entailment check timed out")
    if res.status is SolveStatus.UNSAT:
        return Label.ENTAILED
    res = session.solve(assumptions=[atom])
    if res.status is SolveStatus.TIMEOUT:
        raise LabelTimeout("refutation check timed out")
    if res.status is SolveStatus.UNSAT:
        return Label.CONTRADICTED
    return Label.UNKNOWN


def derive_gold_label(case: CaseFile, query: Query,
                      session: SolverSession | None = None) -> Label:
    if session is None:
        session = case.new_session()
    return literal_gold_label(session, query.atom)


def label_case(case: CaseFile, session: SolverSession | None = None) -> None:
    """Fill gold labels for every query; raises LabelTimeout on budget hits."""
    if session is None:
        session = case.new_session()
    for q in case.queries:
        q.gold_label = literal_gold_label(session, q.atom)


# ------------------------------------------------------------------ corpus io


def case_to_record(case: CaseFile) -> dict:
    queries = []
    for q in case.queries:
        rec = {
            "id": q.id,
            "atom": q.atom_text if case.premises_format == "theory" else q.atom,
            "gold_label": q.gold_label.value if q.gold_label else None,
            "text": q.text,
            "depends_on": list(q.depends_on),
        }
        rec.update(q.extra)
        queries.append(rec)
    record = {
        "id": case.id,
        "domain": case.domain.value,
        "split": case.split,
        "premises": case.premises,
        "premises_format": case.premises_format,
        "queries": queries,
    }
    record.update(case.extra)
    return record


def case_from_record(record: dict, index: int = 0, compile: bool = True,
                     check_premises: bool = True) -> CaseFile:
    path = f"cases[{index}]"

    def need(d: dict, key: str, where: str):
        if key not in d:
            raise CorpusFormatError(f"{where}.{key}: missing required field")
        return d[key]

    case_id = need(record, "id", path)
    domain_raw = need(record, "domain", path)
    try:
        domain = Domain(domain_raw)
    except ValueError:
        raise CorpusFormatError(f"{path}.domain: unknown domain {domain_raw!r}")
    premises = need(record, "premises", path)
    fmt = record.get("premises_format")
    if fmt is None:
        fmt = "dimacs" if premises.lstrip().startswith(("p cnf", "c", "p")) else "theory"
    queries = []
    for j, qrec in enumerate(need(record, "queries", path)):
        qpath = f"{path}.queries[{j}]"
        gold_raw = qrec.get("gold_label")
        try:
            gold = Label(gold_raw) if gold_raw is not None else None
        except ValueError:
            raise CorpusFormatError(f"{qpath}.gold_label: unknown label {gold_raw!r}")
        atom = need(qrec, "atom", qpath)
        if fmt == "theory":
            if not isinstance(atom, str):
                raise CorpusFormatError(f"{qpath}.atom: theory cases need constraint text")
            atom_text, atom_lit = atom, 0
        else:
            if not isinstance(atom, int):
                raise CorpusFormatError(f"{qpath}.atom: expected a literal (int)")
            atom_text, atom_lit = None, atom
        queries.append(Query(
            id=str(need(qrec, "id", qpath)),
            atom=atom_lit,
            gold_label=gold,
            text=qrec.get("text"),
            depends_on=[str(d) for d in qrec.get("depends_on", [])],
            atom_text=atom_text,
            extra={k: v for k, v in qrec.items() if k not in _QUERY_FIELDS},
        ))
    case = CaseFile(
        id=str(case_id),
        domain=domain,
        premises=premises,
        premises_format=fmt,
        queries=queries,
        split=record.get("split"),
        extra={k: v for k, v in record.items() if k not in _CASE_FIELDS},
    )
    if compile:
        compile_case(case, check_premises=check_premises)
    return case


def save_corpus(cases: Iterable[CaseFile], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for case in cases:
            fh.write(json.dumps(case_to_record(case), sort_keys=True) + "\n")


def load_corpus(path: str | Path, compile: bool = True,
                check_premises: bool = True) -> list[CaseFile]:
    cases = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"cases[{i}]: invalid JSON ({exc})")
            cases.append(case_from_record(record, index=i, compile=compile,
                                          check_premises=check_premises))
    return cases


def save_casefile(case: CaseFile, path: str | Path) -> None:
    save_corpus([case], path)


def load_casefile(path: str | Path) -> CaseFile:
    cases = load_corpus(path)
    if len(cases) != 1:
        raise CorpusFormatError(f"expected one case in {path}, found {len(cases)}")
    return cases[0]


# --------------------------------------------------------------------- splits


def split_cases(cases: Sequence[CaseFile], ratios: Sequence[float] = (0.8, 0.1, 0.1),
                seed: int = 0, names: Sequence[str] = ("train", "dev", "test")) -> list[CaseFile]:
    """Partition at case granularity with deterministic shuffling; bundle
    membership never straddles splits. Counts use largest-remainder rounding."""
    if len(ratios) != len(names):
        raise ValueError("ratios and names must align")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios sum to {sum(ratios)}, expected 1")
    import random

    n = len(cases)
    exact = [r * n for r in ratios]
    counts = [int(x) for x in exact]
    remainder = n - sum(counts)
    by_fraction = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in range(remainder):
        counts[by_fraction[i % len(counts)]] += 1

    order = list(range(n))
    random.Random(seed).shuffle(order)
    pos = 0
    for name, count in zip(names, counts):
        for idx in order[pos:pos + count]:
            cases[idx].split = name
        pos += count
    return list(cases)
