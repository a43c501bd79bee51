"""Bundle evaluation pipeline.

Three methods share one loop over a bundle's queries:

* ``baseline``: answers are committed as given; the per-step checks only
  measure, never intervene, so prefix satisfiability is monotone.
* ``check``: each commitment is verified before acceptance. A conflict whose
  minimized core is the current commitment alone is handled conservatively
  (the label reverts to Unknown); conflicts that implicate earlier
  commitments are localized and reported, but altering the past requires
  repair authority, so the bundle keeps the contradiction.
* ``check+repair``: detected conflicts go through the repair search (soften,
  flip, selective retraction) under the per-query and per-bundle budgets;
  retracted queries revert to Unknown. A repair whose retraction set would
  exceed the threshold abandons repair and the bundle is tagged partial.

In sequential mode the answerer sees earlier final answers; in set mode the
whole bundle is answered up front. Checking walks the bundle order in both.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path

from .answerers import Answer, Answerer, PolicyConfig, policy_from_dict, policy_to_dict, resolve_policy
from .casefile import CaseFile, Label, Query, case_from_record, case_to_record, load_corpus
from .commitments import AppendStatus, BeliefState, extract_commitment
from .metrics import SAT, TIMEOUT, UNSAT, BundleReport, QueryRecord, RepairLogEntry, save_reports
from .repair import (
    CallMeter,
    RepairBudget,
    RepairOutcomeKind,
    attempt_repair,
    logic_filtered_vote,
    min_revision_cost,
)

METHODS = ("baseline", "check", "check+repair")
MODES = ("set", "sequential")


@dataclass
class RunConfig:
    corpus: str
    policy: str | PolicyConfig
    method: str = "check+repair"
    mode: str = "sequential"
    split: str | None = None
    seed: int = 0
    r_max: int = 2
    call_cap_factor: int = 3       # per-bundle solver-call cap = factor * n
    delta_past_limit: int = 3
    max_conflicts: int | None = None
    max_seconds: float | None = 30.0
    jobs: int = 1
    validate: bool = True          # engine self-checks (not part of budgets)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.method == "check+repair":
            if self.r_max <= 0 or self.call_cap_factor <= 0 or self.delta_past_limit <= 0:
                raise ValueError("check+repair requires positive budgets")

    def to_dict(self) -> dict:
        data = asdict(self)
        if isinstance(self.policy, PolicyConfig):
            data["policy"] = policy_to_dict(self.policy)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        if isinstance(data.get("policy"), dict):
            data["policy"] = policy_from_dict(data["policy"])
        return cls(**data)


class _PhaseCounter:
    """Attribute solver calls to pipeline phases via session statistics."""

    def __init__(self, session):
        self.session = session
        self.counts: dict[str, int] = {}
        self._mark = session.stats.solver_calls

    def take(self, phase: str) -> int:
        now = self.session.stats.solver_calls
        delta = now - self._mark
        self._mark = now
        self.counts[phase] = self.counts.get(phase, 0) + delta
        return delta


def evaluate_bundle(case: CaseFile, config: RunConfig) -> BundleReport:
    policy = resolve_policy(config.policy)
    answerer = Answerer(policy, config.seed)
    state = BeliefState(case.formula, max_conflicts=config.max_conflicts,
                        max_seconds=config.max_seconds)
    counter = _PhaseCounter(state.session)
    n = case.bundle_size
    call_cap = config.call_cap_factor * n
    pipeline = CallMeter(cap=None)  # tracked for audit; hard slack math below

    use_filter = (policy.kind == "self-consistency" and policy.logic_filter
                  and config.method != "baseline")

    records: list[QueryRecord] = []
    statuses_before: list[str] = []
    statuses_after: list[str] = []
    repair_log: list[RepairLogEntry] = []
    invariants: list[str] = []
    history: list[tuple[Query, Label]] = []
    answerer_calls = 0
    retractions_total = 0
    partial = False
    any_violation = False
    any_repair = False
    index_to_record: dict[int, int] = {}  # belief-state index -> records position

    preset_answers: dict[str, Answer] = {}
    if config.mode == "set" and not use_filter:
        for q in case.queries:
            ans = answerer.answer(case, q, history=None)
            answerer_calls += ans.calls
            preset_answers[q.id] = ans

    def slack(step: int) -> int:
        """Solver calls available for optional work while still affording the
        remaining per-step checks within the per-bundle cap."""
        remaining_checks = n - step - 1
        return max(0, call_cap - pipeline.used - remaining_checks)

    for t, query in enumerate(case.queries):
        # ------------------------------------------------------------ answer
        if use_filter:
            draws = answerer.sample_commitment_candidates(
                case, query, history if config.mode == "sequential" else None, policy.k)
            answerer_calls += len(draws)
            candidates = [extract_commitment(query, d.label, d.derived_atoms,
                                             vocabulary_size=state.base_vars)
                          for d in draws]
            vote = logic_filtered_vote(candidates, state)
            counter.take("filter_solver_calls")
            answer = Answer(vote.label)
        elif query.id in preset_answers:
            answer = preset_answers[query.id]
        else:
            ans_history = history if config.mode == "sequential" else None
            answer = answerer.answer(case, query, history=ans_history)
            answerer_calls += answer.calls

        commitment = extract_commitment(query, answer.label, answer.derived_atoms,
                                        vocabulary_size=state.base_vars)
        predicted = answer.label
        final = answer.label

        # ------------------------------------------------------------- check
        if partial:
            # repair abandoned earlier: record the contradiction trail only
            state.force_append(commitment, known_unsat=None)
            pipeline.spend(counter.take("check_solver_calls"))
            statuses_before.append(SAT if state.sat else UNSAT)
            statuses_after.append(statuses_before[-1])
        else:
            result = state.append_and_check(commitment)
            pipeline.spend(counter.take("check_solver_calls"))
            if result.status is AppendStatus.ACCEPTED:
                statuses_before.append(SAT)
                statuses_after.append(SAT)
                index_to_record[len(state.commitments) - 1] = len(records)
            elif result.status is AppendStatus.TIMEOUT_FALLBACK:
                statuses_before.append(TIMEOUT)
                statuses_after.append(SAT if state.sat else UNSAT)
                if config.method != "baseline":
                    final = Label.UNKNOWN
            else:
                any_violation = True
                statuses_before.append(UNSAT)
                pending = len(state.commitments) - 1
                if config.method == "baseline":
                    state.force_append(commitment, known_unsat=True)
                    statuses_after.append(UNSAT)
                else:
                    core = state.unsat_core(
                        pending_index=pending,
                        failed=result.solve_result.failed_assumptions,
                        minimize=slack(t) > 0,
                        call_budget=slack(t))
                    pipeline.spend(counter.take("core_solver_calls"))
                    core_qids = [state.commitments[i].query_id
                                 for i in core.commitment_indices]
                    if config.method == "check":
                        local = core.minimal and core.commitment_indices == (pending,)
                        if local:
                            # overconfident answer against the premises: abstain
                            final = Label.UNKNOWN
                            fb = extract_commitment(query, Label.UNKNOWN)
                            idx = state.install(fb)
                            state.activate(idx, sat=state.sat)
                            outcome_name = "fallback-unknown"
                        else:
                            # altering past commitments needs repair authority
                            state.force_append(commitment, known_unsat=True)
                            outcome_name = "reported"
                        statuses_after.append(SAT if state.sat else UNSAT)
                        repair_log.append(RepairLogEntry(
                            query_id=query.id, core_query_ids=core_qids,
                            core_minimal=core.minimal, tried=[], accepted=None,
                            outcome=outcome_name, retracted_query_ids=[],
                            solver_calls=0))
                    else:  # check+repair
                        sub = CallMeter(cap=slack(t))
                        budget = RepairBudget(r_max=config.r_max,
                                              call_cap=None,
                                              delta_past_limit=config.delta_past_limit)
                        outcome = attempt_repair(state, commitment, core, pending,
                                                 budget, meter=sub)
                        pipeline.spend(counter.take("repair_solver_calls"))
                        any_repair = True
                        retracted_qids = []
                        if outcome.kind is RepairOutcomeKind.PARTIAL:
                            partial = True
                            statuses_after.append(SAT if state.sat else UNSAT)
                        else:
                            final = outcome.final_commitment.label
                            for i in outcome.retracted_indices:
                                retracted_qids.append(state.commitments[i].query_id)
                                pos = index_to_record.get(i)
                                if pos is not None:
                                    records[pos].final = Label.UNKNOWN.value
                            retractions_total += outcome.delta_past
                            if outcome.active_index is not None:
                                index_to_record[outcome.active_index] = len(records)
                            statuses_after.append(SAT)
                        repair_log.append(RepairLogEntry(
                            query_id=query.id, core_query_ids=core_qids,
                            core_minimal=core.minimal,
                            tried=[{"kind": a.kind.value,
                                    "cost": list(a.cost),
                                    "verdict": verdict}
                                   for a, verdict in outcome.tried],
                            accepted=(None if outcome.action is None else
                                      {"kind": outcome.action.kind.value,
                                       "cost": list(outcome.action.cost)}),
                            outcome=outcome.kind.value,
                            retracted_query_ids=retracted_qids,
                            solver_calls=outcome.solver_calls))

        records.append(QueryRecord(
            query_id=query.id,
            gold=query.gold_label.value if query.gold_label else None,
            predicted=predicted.value,
            final=final.value,
        ))
        history.append((query, final))

    # -------------------------------------------------------------- scoring
    final_sat = state.sat
    rev = min_revision_cost(state)
    counter.take("revision_probe_calls")  # measurement, not pipeline cost

    if config.validate:
        if state.rebuild_check() != state.sat:
            invariants.append("incremental status disagrees with fresh rebuild")
        if config.method == "check+repair" and not partial and not final_sat:
            invariants.append("repair mode ended unsatisfiable without partial flag")
        if config.method == "check+repair":
            per_query_attempts = [len(e.tried) for e in repair_log]
            if any(a > config.r_max for a in per_query_attempts):
                invariants.append("repair attempts exceeded r_max")
            if pipeline.used > call_cap:
                invariants.append(f"solver calls {pipeline.used} exceed cap {call_cap}")

    if partial:
        bundle_status = "partial"
    elif not final_sat:
        bundle_status = "inconsistent"
    elif any_repair and any_violation:
        bundle_status = "repaired"
    else:
        bundle_status = "consistent"

    counts = dict(counter.counts)
    counts["answerer_calls"] = answerer_calls
    return BundleReport(
        case_id=case.id,
        domain=case.domain.value,
        mode=config.mode,
        method=config.method,
        queries=records,
        statuses_before=statuses_before,
        statuses_after=statuses_after,
        final_sat=final_sat,
        partial=partial,
        bundle_status=bundle_status,
        repair_log=repair_log,
        counts=counts,
        retractions=retractions_total,
        min_revision=rev.value,
        min_revision_exact=rev.exact,
        invariant_failures=invariants,
    )


# ----------------------------------------------------------------- run level


def _evaluate_record(record_json: str, config_json: str) -> tuple[dict, float]:
    record = json.loads(record_json)
    config = RunConfig.from_dict(json.loads(config_json))
    case = case_from_record(record)
    start = time.perf_counter()
    report = evaluate_bundle(case, config)
    wall_ms = (time.perf_counter() - start) * 1000.0
    return report.to_record(), wall_ms


def run(config: RunConfig, cases: list[CaseFile] | None = None) -> tuple[list[BundleReport], dict[str, float]]:
    """Evaluate every bundle in the selected split; reports come back ordered
    by case id regardless of parallelism. Returns (reports, wall-clock ms by
    case id)."""
    if cases is None:
        cases = load_corpus(config.corpus)
    if config.split:
        cases = [c for c in cases if c.split == config.split]
    if not cases:
        raise ValueError("no cases selected")
    cases = sorted(cases, key=lambda c: c.id)

    reports: list[BundleReport] = []
    timings: dict[str, float] = {}
    if config.jobs > 1:
        payload = [(json.dumps(case_to_record(c), sort_keys=True),
                    json.dumps(config.to_dict(), sort_keys=True)) for c in cases]
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for case, (record, wall_ms) in zip(
                    cases, pool.map(_evaluate_record, *zip(*payload))):
                reports.append(BundleReport.from_record(record))
                timings[case.id] = wall_ms
    else:
        for case in cases:
            start = time.perf_counter()
            reports.append(evaluate_bundle(case, config))
            timings[case.id] = (time.perf_counter() - start) * 1000.0
    reports.sort(key=lambda r: r.case_id)
    return reports, timings


def write_run(out_dir: str | Path, config: RunConfig,
              reports: list[BundleReport], timings: dict[str, float]) -> Path:
    """Run directory layout: canonical reports + manifest, timing sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_reports(reports, out / "reports.jsonl")
    manifest = {
        "config": config.to_dict(),
        "bundles": len(reports),
        "invariant_failures": sum(len(r.invariant_failures) for r in reports),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    sidecar = {
        "total_seconds": sum(timings.values()) / 1000.0,
        "per_case_ms": dict(sorted(timings.items())),
    }
    (out / "timings.json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n")
    return out
