"""Run every stage against the offline stub pool and print the report.

Usage: python3 scripts/run_stub_pipeline.py OUT_DIR [--total N] [--seed S]
"""

from __future__ import annotations

import argparse
import json
import tempfile
import time
from pathlib import Path

from dialogsynth.gateway import stub_pool
from dialogsynth.jsonio import write_jsonl
from dialogsynth.pipeline import check_manifest, render_report, run_all, stage_report
from dialogsynth.synthetic import synthetic_logs, write_fixture_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--total", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rounds", type=int, default=3)
    a = ap.parse_args()
    out = Path(a.out_dir)
    inputs = Path(tempfile.mkdtemp(prefix="dialogsynth-inputs-"))
    write_fixture_corpus(inputs / "corpus")
    write_jsonl(inputs / "logs.jsonl", [s.interaction.to_dict() for s in synthetic_logs(400, seed=a.seed)])

    t0 = time.perf_counter()
    summary = run_all(inputs / "logs.jsonl", inputs / "corpus", a.total, a.seed, out, stub_pool(), rounds=a.rounds)
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"wall time {time.perf_counter() - t0:.1f}s")
    for r in range(len(summary["rounds"])):
        problems = check_manifest(out / f"round{r}")
        print(f"round{r} manifest: {'ok' if not problems else problems}")
    report = stage_report(out / "dataset.jsonl", out / "scorecards.jsonl", out / "plan.json", out=out / "report.json")
    print(render_report(report))


if __name__ == "__main__":
    main()
