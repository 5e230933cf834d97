"""Stage runners. Stages talk to each other only through files.

Layout of a run directory::

    profile.json      analyze
    plan.json         plan
    configs.jsonl     produce: one configuration per produced session
    traces.jsonl      produce: one DialogueSession per line
    requeue.jsonl     produce + judge: queries to retry next round
    dropped.jsonl     produce + judge: queries given up on, with reason
    scorecards.jsonl  judge
    dataset.jsonl     judge: admitted training examples
    manifest.json     per-stage counts and file digests
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TypeVar

from . import __version__
from .analyst import (
    BehaviorProfile,
    ProductionPlan,
    ProfileError,
    build_profile,
    label_interaction,
    label_marginals,
    make_production_plan,
    planning_marginals,
)
from .configgen import build_configuration, derive_seed
from .corpus import CorpusGap, RepoCorpusIndex
from .gateway import PoolConfig, SamplingParams, generate_candidates
from .harness import DialogueSession, SessionError, TurnFailed, run_session, selected_code_of
from .jsonio import JsonlStore, file_digest, iter_jsonl, read_json, text_digest, write_json
from .judge import (
    JudgeContext,
    JudgeUnavailable,
    Requeue,
    ScoreCard,
    judge_candidates,
    select_training_example,
)
from .metrics import accuracy5, distribution_distance, format_table, psr, ur
from .taxonomy import DEFAULT_TAXONOMY, ChatConfiguration, Labels, QaInteraction, Taxonomy, TrainingExample

log = logging.getLogger(__name__)

REQUEUE_CAP = 3
BATCH = 64

T = TypeVar("T")
R = TypeVar("R")


def _pmap(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _batches(items: Sequence[T], size: int = BATCH) -> Iterable[Sequence[T]]:
    for i in range(0, len(items), size):
        yield items[i:i + size]


# -- manifest ------------------------------------------------------------------------

def update_manifest(
    run_dir: str | Path,
    stage: str,
    seed: int | None,
    inputs: Iterable[str | Path],
    outputs: Iterable[str | Path],
    counts: dict[str, int],
    started: float,
) -> dict[str, Any]:
    """Record one stage's digests and counts in ``run_dir/manifest.json``."""
    path = Path(run_dir) / "manifest.json"
    manifest = read_json(path) if path.exists() else {"stages": {}}
    in_digests = {str(p): file_digest(p) for p in inputs if p is not None}
    entry = {
        "version": __version__,
        "seed": seed,
        "inputs": in_digests,
        "outputs": {str(p): file_digest(p) for p in outputs},
        "counts": counts,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "elapsed_s": round(time.time() - started, 3),
    }
    manifest["stages"][stage] = entry
    manifest["run_id"] = manifest.get("run_id") or text_digest(f"{seed}:{sorted(in_digests.items())}")[:16]
    manifest.setdefault("seed", seed)
    write_json(path, manifest)
    return manifest


def check_manifest(run_dir: str | Path) -> list[str]:
    """Conservation and digest checks over a run directory's manifest."""
    path = Path(run_dir) / "manifest.json"
    manifest = read_json(path)
    problems = []
    for stage, entry in manifest["stages"].items():
        for f, digest in entry["outputs"].items():
            if file_digest(f) != digest:
                problems.append(f"{stage}: digest mismatch for {f}")
        c = entry["counts"]
        if stage == "produce":
            if c["planned"] != c["generated"] + c["filtered_out"] + c["corpus_gaps"] + c["skipped"]:
                problems.append("produce: planned != generated + filtered_out + corpus_gaps + skipped")
            if c["generated"] != c["sessions_ok"] + c["requeued"] + c["dropped"]:
                problems.append("produce: generated != sessions_ok + requeued + dropped")
        if stage == "judge" and c["judged"] != c["admitted"] + c["requeued"] + c["dropped"]:
            problems.append("judge: judged != admitted + requeued + dropped")
    return problems


# -- analyze / plan -------------------------------------------------------------------

def load_interactions(path: str | Path) -> list[QaInteraction]:
    out = []
    for i, rec in enumerate(iter_jsonl(path), 1):
        inter = QaInteraction.from_dict(rec)
        problems = inter.problems()
        if problems:
            raise ValueError(f"{path}: record {i} ({inter.id}): {'; '.join(problems)}")
        out.append(inter)
    return out


def stage_analyze(
    logs: str | Path,
    out: str | Path,
    pool: PoolConfig,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    workers: int = 8,
) -> BehaviorProfile:
    started = time.time()
    interactions = load_interactions(logs)
    if not interactions:
        raise ProfileError("no interactions")
    helper = pool.helper_client()
    labeled = _pmap(lambda x: label_interaction(x, helper, taxonomy), interactions, workers)
    kept = [lb for lb in labeled if lb is not None]
    profile = build_profile(kept, taxonomy)
    write_json(out, profile.to_dict())
    update_manifest(Path(out).parent, "analyze", None, [logs], [out], {
        "interactions": len(interactions),
        "classified": len(kept),
        "unclassified": len(interactions) - len(kept),
    }, started)
    return profile


def stage_plan(profile_path: str | Path, total: int, seed: int, out: str | Path) -> ProductionPlan:
    started = time.time()
    profile = BehaviorProfile.from_dict(read_json(profile_path))
    plan = make_production_plan(profile, total, seed)
    write_json(out, plan.to_dict())
    update_manifest(Path(out).parent, "plan", seed, [profile_path], [out], {
        "total": plan.total, "items": len(plan.items),
    }, started)
    return plan


# -- produce --------------------------------------------------------------------------

@dataclass
class RunFiles:
    root: Path
    configs: Path = field(init=False)
    traces: Path = field(init=False)
    requeue: Path = field(init=False)
    dropped: Path = field(init=False)
    scorecards: Path = field(init=False)
    dataset: Path = field(init=False)

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        self.root.mkdir(parents=True, exist_ok=True)
        for name in ("configs", "traces", "requeue", "dropped", "scorecards", "dataset"):
            setattr(self, name, self.root / f"{name}.jsonl")


def _round_key(rec: dict) -> tuple[str, int]:
    return rec["query_id"], int(rec.get("round", 0))


@dataclass
class _Unit:
    query_id: str
    round: int
    labels: Labels | None = None
    config: ChatConfiguration | None = None


@dataclass
class _UnitResult:
    unit: _Unit
    status: str  # ok | filtered | gap | requeued | dropped
    config: ChatConfiguration | None = None
    session: DialogueSession | None = None
    reason: str | None = None


def stage_produce(
    plan_path: str | Path | None,
    corpus: str | Path | RepoCorpusIndex,
    pool: PoolConfig,
    seed: int,
    out_dir: str | Path,
    requeue_path: str | Path | None = None,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    workers: int = 8,
    work_root: str | Path | None = None,
    keep_workspaces: bool = False,
    requeue_cap: int = REQUEUE_CAP,
) -> dict[str, int]:
    """Build configurations and run simulated sessions for a plan or a requeue file."""
    started = time.time()
    files = RunFiles(out_dir)
    index = corpus if isinstance(corpus, RepoCorpusIndex) else RepoCorpusIndex.load(corpus, taxonomy)
    work_root = Path(work_root) if work_root else files.root / "workspaces"
    work_root.mkdir(parents=True, exist_ok=True)
    helper = pool.helper_client()
    assistant = pool.assistant_client()

    units: list[_Unit] = []
    if plan_path is not None:
        plan = ProductionPlan.from_dict(read_json(plan_path), taxonomy)
        units += [_Unit(f"q{i:06d}", 0, labels=lb) for i, lb in enumerate(plan.units())]
    dropped_cap: list[dict] = []
    if requeue_path is not None:
        for rec in iter_jsonl(requeue_path):
            cfg = ChatConfiguration.from_dict(rec["configuration"], taxonomy)
            nxt = int(rec.get("round", 0)) + 1
            if nxt >= requeue_cap:
                dropped_cap.append({"query_id": cfg.query_id, "round": nxt, "stage": "produce",
                                    "reason": f"requeue cap of {requeue_cap} rounds reached"})
                continue
            units.append(_Unit(cfg.query_id, nxt, config=_with_round(cfg, nxt)))

    traces = JsonlStore(files.traces, _round_key)
    configs = JsonlStore(files.configs, _round_key)
    requeue = JsonlStore(files.requeue, _round_key)
    dropped = JsonlStore(files.dropped, _round_key)
    dropped.append(dropped_cap)
    done = lambda u: (u.query_id, u.round) in traces or (u.query_id, u.round) in requeue or (u.query_id, u.round) in dropped  # noqa: E731

    def work(u: _Unit) -> _UnitResult:
        cfg = u.config
        if cfg is None:
            try:
                outcome = build_configuration(u.query_id, u.labels, index, helper, seed, taxonomy, round=u.round)
            except CorpusGap as exc:
                log.error("%s: %s", u.query_id, exc)
                return _UnitResult(u, "gap", reason=str(exc))
            if outcome.config is None:
                return _UnitResult(u, "filtered", reason=outcome.drop_reason)
            cfg = outcome.config
        try:
            session = run_session(cfg, index, assistant, work_root, keep_workspaces, seed=seed)
        except TurnFailed as exc:
            return _UnitResult(u, "requeued", cfg, reason=str(exc))
        except SessionError as exc:
            return _UnitResult(u, "dropped", cfg, reason=str(exc))
        return _UnitResult(u, "ok", cfg, session)

    counts = dict(planned=len(units), generated=0, filtered_out=0, corpus_gaps=0, skipped=0,
                  sessions_ok=0, requeued=0, dropped=0)
    todo = [u for u in units if not done(u)]
    counts["skipped"] = len(units) - len(todo)
    for batch in _batches(todo):
        results = _pmap(work, batch, workers)
        new_traces, new_configs, new_requeue, new_dropped = [], [], [], []
        for r in results:
            key = {"query_id": r.unit.query_id, "round": r.unit.round}
            if r.status == "gap":
                counts["corpus_gaps"] += 1
                new_dropped.append({**key, "stage": "produce", "reason": r.reason})
                continue
            if r.status == "filtered":
                counts["filtered_out"] += 1
                new_dropped.append({**key, "stage": "produce", "reason": r.reason})
                continue
            counts["generated"] += 1
            new_configs.append(r.config.to_dict())
            if r.status == "ok":
                counts["sessions_ok"] += 1
                new_traces.append(r.session.to_dict())
            elif r.status == "requeued":
                counts["requeued"] += 1
                new_requeue.append({**key, "stage": "produce", "reason": r.reason,
                                    "configuration": r.config.to_dict()})
            else:
                counts["dropped"] += 1
                new_dropped.append({**key, "stage": "produce", "reason": r.reason})
        configs.append(new_configs)
        traces.append(new_traces)
        requeue.append(new_requeue)
        dropped.append(new_dropped)
    for store in (configs, traces, requeue, dropped):
        store.append([])
    counts["dropped_at_cap"] = len(dropped_cap)
    if not keep_workspaces and not any(work_root.iterdir()):
        work_root.rmdir()
    update_manifest(files.root, "produce", seed, [plan_path, requeue_path],
                    [files.configs, files.traces], counts, started)
    return counts


def _with_round(cfg: ChatConfiguration, round: int) -> ChatConfiguration:
    from dataclasses import replace

    return replace(cfg, round=round)


# -- judge -----------------------------------------------------------------------------

@dataclass
class _Judged:
    session: DialogueSession
    cards: list[ScoreCard]
    outcome: TrainingExample | Requeue


def stage_judge(
    traces_path: str | Path,
    pool: PoolConfig,
    out_dir: str | Path,
    seed: int = 0,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
    workers: int = 8,
    requeue_cap: int = REQUEUE_CAP,
) -> dict[str, int]:
    """Collect pool candidates for each session, score them and admit 5-point answers."""
    started = time.time()
    files = RunFiles(out_dir)
    generators = pool.generator_clients()
    judge = pool.judge_client()

    dataset = JsonlStore(files.dataset, lambda r: r["query_id"])
    scorecards = JsonlStore(files.scorecards, lambda r: (r["query_id"], r.get("round", 0), r["endpoint_id"]))
    requeue = JsonlStore(files.requeue, _round_key)
    dropped = JsonlStore(files.dropped, _round_key)

    sessions = []
    for seq, rec in enumerate(iter_jsonl(traces_path)):
        s = DialogueSession.from_dict(rec, taxonomy)
        key = (s.query_id, s.config.round)
        if s.query_id in dataset or key in requeue or key in dropped:
            continue
        sessions.append((seq, s))

    def work(item: tuple[int, DialogueSession]) -> _Judged:
        seq, s = item
        messages = s.final_messages()
        params = SamplingParams(seed=derive_seed(seed, s.query_id, s.config.round, "pool"))
        candidates = generate_candidates(generators, messages, params)
        ctx = JudgeContext.from_configuration(s.config, selected_code_of(messages))
        try:
            cards = judge_candidates(s.query_id, messages, candidates, ctx, judge)
        except JudgeUnavailable as exc:
            return _Judged(s, [], Requeue(s.query_id, f"judge unavailable: {exc}"))
        provenance = {"round": s.config.round, "trace_seq": seq, "judge_seed": seed,
                      "candidates": len(candidates), "pool": [c.endpoint_id for c in candidates]}
        outcome = select_training_example(s.config, messages, candidates, cards, judge, provenance)
        return _Judged(s, cards, outcome)

    counts = dict(judged=0, admitted=0, requeued=0, dropped=0, candidates=0, candidate_errors=0)
    for batch in _batches(sessions):
        results = _pmap(work, batch, workers)
        new_examples, new_cards, new_requeue, new_dropped = [], [], [], []
        for j in results:
            s = j.session
            counts["judged"] += 1
            counts["candidates"] += len(j.cards)
            counts["candidate_errors"] += sum(1 for c in j.cards if not c.scored)
            new_cards += [{**c.to_dict(), "round": s.config.round} for c in j.cards]
            key = {"query_id": s.query_id, "round": s.config.round}
            if isinstance(j.outcome, TrainingExample):
                counts["admitted"] += 1
                new_examples.append(j.outcome.to_dict())
            elif s.config.round + 1 >= requeue_cap:
                counts["dropped"] += 1
                new_dropped.append({**key, "stage": "judge",
                                    "reason": f"{j.outcome.reason}; requeue cap of {requeue_cap} rounds reached"})
            else:
                counts["requeued"] += 1
                new_requeue.append({**key, "stage": "judge", "reason": j.outcome.reason,
                                    "configuration": s.config.to_dict()})
        dataset.append(new_examples)
        scorecards.append(new_cards)
        requeue.append(new_requeue)
        dropped.append(new_dropped)
    for store in (dataset, scorecards, requeue, dropped):
        store.append([])
    update_manifest(files.root, "judge", seed, [traces_path], [files.dataset, files.scorecards], counts, started)
    return counts


# -- report ----------------------------------------------------------------------------

def stage_report(
    dataset_path: str | Path,
    scorecards_path: str | Path,
    plan_path: str | Path | None = None,
    human_path: str | Path | None = None,
    out: str | Path | None = None,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
) -> dict[str, Any]:
    examples = [TrainingExample.from_dict(r, taxonomy) for r in iter_jsonl(dataset_path)]
    cards = [ScoreCard.from_dict(r) for r in iter_jsonl(scorecards_path)]
    card_rounds = [r.get("round", 0) for r in iter_jsonl(scorecards_path)]
    finals = [c.final_score for c in cards if c.scored and c.final_score is not None]
    report: dict[str, Any] = {
        "admitted": len(examples),
        "admitted_all_five": all(e.final_score == 5 for e in examples),
        "candidates_scored": len(finals),
        "psr": psr(finals) if finals else None,
        "ur": ur(finals) if finals else None,
    }
    by_endpoint: dict[str, list[int]] = {}
    by_query: dict[tuple[str, int], list[int]] = {}
    for c, rnd in zip(cards, card_rounds):
        if c.scored and c.final_score is not None:
            by_endpoint.setdefault(c.endpoint_id, []).append(c.final_score)
            by_query.setdefault((c.query_id, rnd), []).append(c.final_score)
    report["per_endpoint"] = {k: {"psr": psr(v), "ur": ur(v), "n": len(v)} for k, v in sorted(by_endpoint.items())}
    if by_query:
        report["pool_psr"] = sum(1 for v in by_query.values() if 5 in v) / len(by_query)
    if plan_path is not None and examples:
        plan = ProductionPlan.from_dict(read_json(plan_path), taxonomy)
        planned = label_marginals(plan.units())
        produced = label_marginals([e.configuration.labels for e in examples])
        report["plan_vs_dataset_l1"] = distribution_distance(planned, produced)
    if human_path is not None:
        finals_by_key = {(c.query_id, c.endpoint_id): c.final_score for c in cards if c.scored}
        pairs = []
        for rec in iter_jsonl(human_path):
            k = (rec["query_id"], rec["endpoint_id"])
            if k in finals_by_key:
                pairs.append((finals_by_key[k], int(rec["human_score"])))
        report["accuracy5"] = accuracy5(pairs).to_dict()
    if out is not None:
        write_json(out, report)
        Path(out).with_suffix(".txt").write_text(render_report(report) + "\n", encoding="utf-8")
    return report


def render_report(report: dict[str, Any]) -> str:
    def pct(x: Any) -> str:
        return "n/a" if x is None or isinstance(x, str) else f"{100 * x:.2f}%"

    rows = [
        ("admitted examples", str(report["admitted"])),
        ("candidates scored", str(report["candidates_scored"])),
        ("PSR (final = 5)", pct(report["psr"])),
        ("UR (final >= 4)", pct(report["ur"])),
    ]
    if "pool_psr" in report:
        rows.append(("pool PSR (any 5 per query)", pct(report["pool_psr"])))
    for ep, v in report.get("per_endpoint", {}).items():
        rows.append((f"  {ep} PSR / UR", f"{pct(v['psr'])} / {pct(v['ur'])}  (n={v['n']})"))
    for dim, d in report.get("plan_vs_dataset_l1", {}).items():
        rows.append((f"L1 plan vs dataset: {dim}", f"{d:.4f}"))
    if "accuracy5" in report:
        a = report["accuracy5"]
        rows += [("Accuracy5", pct(a["accuracy"])), ("usable among misses", pct(a["usable_among_misses"])),
                 ("recall of human 5s", pct(a["recall"]))]
    return format_table(rows)


def profile_plan_distance(profile: BehaviorProfile, plan: ProductionPlan) -> dict[str, float]:
    return distribution_distance(planning_marginals(profile), label_marginals(plan.units()))


# -- end to end ------------------------------------------------------------------------

def run_all(
    logs: str | Path,
    corpus: str | Path | RepoCorpusIndex,
    total: int,
    seed: int,
    out_dir: str | Path,
    pool: PoolConfig,
    rounds: int = REQUEUE_CAP,
    workers: int = 8,
    taxonomy: Taxonomy = DEFAULT_TAXONOMY,
) -> dict[str, Any]:
    """analyze, plan, then produce and judge for up to ``rounds`` rounds.

    Round ``r`` lives in ``out_dir/round<r>``; admitted examples and
    scorecards of all rounds are merged into ``out_dir`` in round order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage_analyze(logs, out / "profile.json", pool, taxonomy, workers)
    stage_plan(out / "profile.json", total, seed, out / "plan.json")
    index = corpus if isinstance(corpus, RepoCorpusIndex) else RepoCorpusIndex.load(corpus, taxonomy)
    summary: dict[str, Any] = {"rounds": []}
    prev: Path | None = None
    for rnd in range(rounds):
        if rnd and (prev is None or not prev.exists() or not prev.read_text(encoding="utf-8").strip()):
            break
        rdir = out / f"round{rnd}"
        produced = stage_produce(out / "plan.json" if rnd == 0 else None, index, pool, seed, rdir,
                                 requeue_path=prev, taxonomy=taxonomy, workers=workers,
                                 requeue_cap=rounds)
        judged = stage_judge(rdir / "traces.jsonl", pool, rdir, seed=seed, taxonomy=taxonomy,
                             workers=workers, requeue_cap=rounds)
        summary["rounds"].append({"produce": produced, "judge": judged})
        prev = rdir / "requeue.jsonl"
    for name in ("dataset", "scorecards", "dropped"):
        merged = JsonlStore(out / f"{name}.jsonl", lambda r: (r["query_id"], r.get("round", 0), r.get("endpoint_id")))
        for rnd in range(len(summary["rounds"])):
            merged.append(iter_jsonl(out / f"round{rnd}" / f"{name}.jsonl"))
        merged.append([])
    summary["admitted"] = sum(r["judge"]["admitted"] for r in summary["rounds"])
    return summary
