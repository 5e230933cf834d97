"""Evaluation quantities over final scores and label distributions."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Sequence


def psr(scores: Sequence[int]) -> float:
    """Perfect-score rate: share of scores equal to 5."""
    if not scores:
        raise ValueError("psr of an empty score list")
    return sum(1 for s in scores if s == 5) / len(scores)


def ur(scores: Sequence[int]) -> float:
    """Usability rate: share of scores of at least 4."""
    if not scores:
        raise ValueError("ur of an empty score list")
    return sum(1 for s in scores if s >= 4) / len(scores)


@dataclass(frozen=True)
class JudgeAgreementCounts:
    pred5_pos: int
    pred5_neg: int
    human5_total: int
    pred5_neg_usable: int

    @property
    def recalled5(self) -> int:
        return self.pred5_pos

    @classmethod
    def count(cls, pairs: Iterable[tuple[int, int]]) -> "JudgeAgreementCounts":
        pos = neg = human5 = usable = 0
        for system, human in pairs:
            if human == 5:
                human5 += 1
            if system == 5:
                if human == 5:
                    pos += 1
                else:
                    neg += 1
                    if human >= 4:
                        usable += 1
        return cls(pos, neg, human5, usable)


@dataclass(frozen=True)
class Accuracy5:
    accuracy: float | None
    usable_among_misses: float | None
    recall: float | None
    counts: JudgeAgreementCounts

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("accuracy", "usable_among_misses", "recall"):
            if d[k] is None:
                d[k] = "n/a"
        return d


def accuracy5(pairs: Iterable[tuple[int, int]]) -> Accuracy5:
    """Agreement of system-assigned 5s with human 5s over ``(system, human)`` pairs.

    accuracy = pred5_pos / (pred5_pos + pred5_neg); ``None`` (reported as
    n/a) when the system gave no 5 at all.
    """
    c = JudgeAgreementCounts.count(pairs)
    predicted = c.pred5_pos + c.pred5_neg
    return Accuracy5(
        accuracy=c.pred5_pos / predicted if predicted else None,
        usable_among_misses=c.pred5_neg_usable / c.pred5_neg if c.pred5_neg else None,
        recall=c.pred5_pos / c.human5_total if c.human5_total else None,
        counts=c,
    )


def normalize(dist: Mapping[str, float]) -> dict[str, float]:
    total = sum(dist.values())
    if total <= 0:
        raise ValueError("distribution has no mass")
    return {k: v / total for k, v in dist.items()}


def l1_distance(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    p, q = normalize(p), normalize(q)
    return sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def distribution_distance(
    reference: Mapping[str, Mapping[str, float]],
    produced: Mapping[str, Mapping[str, float]],
) -> dict[str, float]:
    """Per-dimension L1 distance over the dimensions both sides cover."""
    missing = set(reference) ^ set(produced)
    if missing:
        raise ValueError(f"dimensions not covered by both sides: {sorted(missing)}")
    return {dim: l1_distance(reference[dim], produced[dim]) for dim in reference}


def format_table(rows: Sequence[tuple[str, str]]) -> str:
    width = max((len(k) for k, _ in rows), default=0)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)
