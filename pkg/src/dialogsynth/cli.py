"""Command-line entry point: ``dialogsynth <stage> ...``.

Every stage reads and writes files, so stages can run separately, be resumed
after a crash, or be chained by ``run``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .analyst import PlanError, ProfileError
from .corpus import RepoCorpusIndex
from .gateway import PoolConfig, stub_pool
from .pipeline import (
    check_manifest,
    render_report,
    run_all,
    stage_analyze,
    stage_judge,
    stage_plan,
    stage_produce,
    stage_report,
)

log = logging.getLogger("dialogsynth")


def load_pool(spec: str | None) -> PoolConfig:
    """``stub`` (or nothing) selects the offline stub pool; otherwise a JSON pool file."""
    if spec in (None, "stub"):
        return stub_pool()
    return PoolConfig.from_file(spec)


def _cmd_index(a: argparse.Namespace) -> int:
    index = RepoCorpusIndex.from_directory(a.corpus)
    index.save(a.out)
    for p in index.problems():
        log.warning("%s", p)
    print(f"indexed {len(index.files)} files from {len(index.roots)} repositories -> {a.out}")
    return 0


def _cmd_analyze(a: argparse.Namespace) -> int:
    profile = stage_analyze(a.logs, a.out, load_pool(a.pool), workers=a.workers)
    print(f"profile of {profile.sample_count} interactions -> {a.out}")
    return 0


def _cmd_plan(a: argparse.Namespace) -> int:
    out = a.out or str(Path(a.profile).with_name("plan.json"))
    plan = stage_plan(a.profile, a.total, a.seed, out)
    print(f"plan of {plan.total} units in {len(plan.items)} items -> {out}")
    return 0


def _cmd_produce(a: argparse.Namespace) -> int:
    if a.plan is None and a.requeue is None:
        raise SystemExit("produce: give --plan, --requeue, or both")
    counts = stage_produce(
        a.plan, a.corpus, load_pool(a.pool), a.seed, a.out_dir,
        requeue_path=a.requeue, workers=a.workers, work_root=a.work_root,
        keep_workspaces=a.keep_workspaces,
    )
    print(json.dumps(counts, sort_keys=True))
    return 0


def _cmd_judge(a: argparse.Namespace) -> int:
    out_dir = a.out_dir or str(Path(a.traces).parent)
    counts = stage_judge(a.traces, load_pool(a.pool), out_dir, seed=a.seed, workers=a.workers)
    print(json.dumps(counts, sort_keys=True))
    return 0


def _cmd_report(a: argparse.Namespace) -> int:
    report = stage_report(a.dataset, a.scorecards, a.plan, a.human, a.out)
    print(render_report(report))
    return 0


def _cmd_run(a: argparse.Namespace) -> int:
    summary = run_all(a.logs, a.corpus, a.total, a.seed, a.out_dir, load_pool(a.pool),
                      rounds=a.rounds, workers=a.workers)
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_check(a: argparse.Namespace) -> int:
    problems = check_manifest(a.run_dir)
    for p in problems:
        print(p)
    print("manifest ok" if not problems else f"{len(problems)} problem(s)")
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dialogsynth", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def pool_arg(sp: argparse.ArgumentParser, required: bool = False) -> None:
        sp.add_argument("--pool", required=required, help="pool JSON file, or 'stub'")
        sp.add_argument("--workers", type=int, default=8)

    s = sub.add_parser("index", help="index a corpus directory (one repository per subdirectory)")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=_cmd_index)

    s = sub.add_parser("analyze", help="classify logged interactions into a behavior profile")
    s.add_argument("--logs", required=True)
    s.add_argument("--out", required=True)
    pool_arg(s)
    s.set_defaults(fn=_cmd_analyze)

    s = sub.add_parser("plan", help="turn a profile into a production plan")
    s.add_argument("--profile", required=True)
    s.add_argument("--total", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out")
    s.set_defaults(fn=_cmd_plan)

    s = sub.add_parser("produce", help="generate configurations and run simulated sessions")
    s.add_argument("--plan")
    s.add_argument("--requeue", help="requeue.jsonl from an earlier round")
    s.add_argument("--corpus", required=True, help="corpus directory or index JSON")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out-dir", default=".")
    s.add_argument("--work-root")
    s.add_argument("--keep-workspaces", action="store_true")
    pool_arg(s, required=True)
    s.set_defaults(fn=_cmd_produce)

    s = sub.add_parser("judge", help="answer each session with the pool and admit 5-point answers")
    s.add_argument("--traces", required=True)
    s.add_argument("--out-dir")
    s.add_argument("--seed", type=int, default=0)
    pool_arg(s, required=True)
    s.set_defaults(fn=_cmd_judge)

    s = sub.add_parser("report", help="PSR, UR, Accuracy5 and plan fidelity")
    s.add_argument("--dataset", required=True)
    s.add_argument("--scorecards", required=True)
    s.add_argument("--plan")
    s.add_argument("--human", help="JSONL of {query_id, endpoint_id, human_score}")
    s.add_argument("--out")
    s.set_defaults(fn=_cmd_report)

    s = sub.add_parser("run", help="all stages end to end")
    s.add_argument("--logs", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--total", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rounds", type=int, default=3)
    s.add_argument("--out-dir", required=True)
    pool_arg(s)
    s.set_defaults(fn=_cmd_run)

    s = sub.add_parser("check", help="verify manifest digests and count conservation")
    s.add_argument("--run-dir", required=True)
    s.set_defaults(fn=_cmd_check)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ProfileError, PlanError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
