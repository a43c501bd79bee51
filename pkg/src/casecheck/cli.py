"""Command-line harness: generate corpora, derive labels, run policy/method
sweeps, and score reports.

Exit codes separate engine problems from measured phenomena: a run exits
nonzero only when an internal invariant check failed, never because the
evaluated policy produced contradictions (those are the data).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .answerers import PRESETS, resolve_policy
from .casefile import (
    Domain,
    LabelTimeout,
    label_case,
    load_corpus,
    save_corpus,
    split_cases,
)
from .generator import DEFAULT_DOMAIN_MIX, GeneratorSpec, corpus_composition, generate_corpus
from .metrics import aggregate, domain_breakdown, load_reports, render_table
from .runner import RunConfig, run as run_bundles, write_run

ENV_CORPUS_DIR = "CASECHECK_CORPUS_DIR"


def _resolve_corpus_path(path: str) -> str:
    if Path(path).exists():
        return path
    base = os.environ.get(ENV_CORPUS_DIR)
    if base and (Path(base) / path).exists():
        return str(Path(base) / path)
    return path


def _parse_mix(text: str) -> dict[Domain, int]:
    parts = [int(x) for x in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("mix needs four counts: relational,temporal,policy,abductive")
    return dict(zip((Domain.RELATIONAL, Domain.TEMPORAL, Domain.POLICY, Domain.ABDUCTIVE), parts))


def _parse_ratios(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _apportion(total: int) -> dict[Domain, int]:
    weights = DEFAULT_DOMAIN_MIX
    wsum = sum(weights.values())
    exact = {d: total * w / wsum for d, w in weights.items()}
    counts = {d: int(v) for d, v in exact.items()}
    leftovers = sorted(weights, key=lambda d: (-(exact[d] - counts[d]), d.value))
    for i in range(total - sum(counts.values())):
        counts[leftovers[i % 4]] += 1
    return counts


def cmd_generate(args) -> int:
    mix = _parse_mix(args.mix) if args.mix else (_apportion(args.cases) if args.cases else None)
    spec = GeneratorSpec(domain_mix=mix) if mix else GeneratorSpec()
    cases = generate_corpus(spec, seed=args.seed)
    split_cases(cases, _parse_ratios(args.split), seed=args.seed)
    save_corpus(cases, args.out)
    rows = corpus_composition(cases)
    header = f"{'Domain':<12}{'Cases':>7}{'Q/Bundle':>12}{'Queries':>9}"
    print(header)
    for row in rows:
        qb = f"{row['queries_per_bundle_mean']} ± {row['queries_per_bundle_sd']}"
        print(f"{row['domain']:<12}{row['cases']:>7}{qb:>12}{row['queries']:>9}")
    print(f"wrote {len(cases)} cases to {args.out}")
    return 0


def cmd_label(args) -> int:
    cases = load_corpus(_resolve_corpus_path(args.corpus))
    timeouts = 0
    for case in cases:
        try:
            label_case(case)
        except LabelTimeout:
            timeouts += 1
            case.extra["label_timeout"] = True
            for q in case.queries:
                q.gold_label = None
    save_corpus(cases, args.out)
    labeled = sum(1 for c in cases if all(q.gold_label for q in c.queries))
    print(f"labeled {labeled}/{len(cases)} cases ({timeouts} refused on timeout) -> {args.out}")
    return 0


def cmd_run(args) -> int:
    config = RunConfig(
        corpus=_resolve_corpus_path(args.corpus),
        policy=args.policy,
        method=args.method,
        mode=args.mode,
        split=args.split,
        seed=args.seed,
        r_max=args.r_max,
        call_cap_factor=args.call_cap_factor,
        delta_past_limit=args.delta_past_limit,
        max_conflicts=args.max_conflicts,
        max_seconds=args.timeout,
        jobs=args.jobs,
    )
    resolve_policy(args.policy)  # fail fast on unknown presets
    reports, timings = run_bundles(config)
    out = write_run(args.out, config, reports, timings)
    m = aggregate(reports)
    bad = sum(len(r.invariant_failures) for r in reports)
    print(f"{len(reports)} bundles -> {out}")
    print(f"SetCons={m.set_cons_rate:.3f} Acc={m.accuracy:.3f} "
          f"RevCost={m.revision_cost:.3f} partial={m.partial_bundles}")
    if bad:
        for r in reports:
            for failure in r.invariant_failures:
                print(f"INVARIANT VIOLATION [{r.case_id}]: {failure}", file=sys.stderr)
        return 1
    return 0


def _load_run(run_dir: str):
    reports = load_reports(Path(run_dir) / "reports.jsonl")
    timings_path = Path(run_dir) / "timings.json"
    wall = None
    if timings_path.exists():
        wall = json.loads(timings_path.read_text()).get("total_seconds")
    return reports, wall


def cmd_score(args) -> int:
    reports, wall = _load_run(args.run)
    baseline_reports, baseline_wall = (None, None)
    if args.baseline:
        baseline_reports, baseline_wall = _load_run(args.baseline)
    m = aggregate(reports, baseline=baseline_reports)
    label = f"{reports[0].method}/{reports[0].mode}" if reports else "run"
    table = render_table([(label, m)])
    out_dir = Path(args.out or args.run)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(
        json.dumps(m.to_dict(), sort_keys=True, indent=2) + "\n")
    (out_dir / "table.txt").write_text(table)
    print(table, end="")
    if wall is not None:
        line = f"wall-clock: {wall:.2f}s"
        if baseline_wall:
            line += f" ({wall / baseline_wall:.2f}x baseline)"
        print(line)
    return 0


def cmd_report(args) -> int:
    reports, _ = _load_run(args.run)
    m = aggregate(reports)
    label = f"{reports[0].method}/{reports[0].mode}" if reports else "run"
    print(render_table([(label, m)], title="overall"), end="")
    print()
    print(render_table(domain_breakdown(reports), title="by domain"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="casecheck",
        description="Case-file consistency engine: corpus generation, "
                    "policy evaluation, and set-level metrics.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--cases", type=int, default=None,
                   help="total case count (default: the full 120/100/80/90 mix)")
    g.add_argument("--mix", default=None,
                   help="per-domain counts: relational,temporal,policy,abductive")
    g.add_argument("--split", default="0.8,0.1,0.1")
    g.set_defaults(func=cmd_generate)

    l = sub.add_parser("label", help="derive gold labels with the solver")
    l.add_argument("--corpus", required=True)
    l.add_argument("--out", required=True)
    l.set_defaults(func=cmd_label)

    r = sub.add_parser("run", help="evaluate a policy over a corpus")
    r.add_argument("--corpus", required=True)
    r.add_argument("--out", required=True, help="run directory")
    r.add_argument("--policy", default="oracle",
                   help=f"preset ({', '.join(sorted(PRESETS))}) or a config file")
    r.add_argument("--method", default="check+repair",
                   choices=("baseline", "check", "check+repair"))
    r.add_argument("--mode", default="sequential", choices=("set", "sequential"))
    r.add_argument("--split", default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--r-max", type=int, default=2, dest="r_max")
    r.add_argument("--call-cap-factor", type=int, default=3, dest="call_cap_factor")
    r.add_argument("--delta-past-limit", type=int, default=3, dest="delta_past_limit")
    r.add_argument("--timeout", type=float, default=30.0,
                   help="wall-clock solver budget per call (seconds)")
    r.add_argument("--max-conflicts", type=int, default=None, dest="max_conflicts",
                   help="deterministic conflict budget (overrides wall clock in CI)")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("score", help="compute metrics from a run directory")
    s.add_argument("--run", required=True)
    s.add_argument("--baseline", default=None)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="print metric tables for a run")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
