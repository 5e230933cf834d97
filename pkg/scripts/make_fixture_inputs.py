"""Write a synthetic code corpus and interaction logs for offline runs.

Usage: python3 scripts/make_fixture_inputs.py OUT_DIR [--logs N] [--seed S]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from dialogsynth.jsonio import write_jsonl
from dialogsynth.synthetic import synthetic_logs, write_fixture_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--logs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args()
    out = Path(a.out_dir)
    write_fixture_corpus(out / "corpus")
    write_jsonl(out / "logs.jsonl", [s.interaction.to_dict() for s in synthetic_logs(a.logs, seed=a.seed)])
    print(f"corpus -> {out / 'corpus'}\nlogs   -> {out / 'logs.jsonl'}")


if __name__ == "__main__":
    main()
