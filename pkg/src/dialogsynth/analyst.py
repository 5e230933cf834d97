"""Developer-behavior analysis: label interactions, profile them, plan production.

The first seven dimensions come from deterministic rules over the editor
snapshot and query text; the last three are asked of a model. A profile is the
per-dimension empirical distribution, and a plan is a seeded draw of label
combinations that reproduces those marginals under compatibility constraints.
"""

from __future__ import annotations

import itertools
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import prompts
from .gateway import Gateway
from .taxonomy import (
    DEFAULT_TAXONOMY,
    DIMENSIONS,
    MAX_PLANNED_TURNS,
    MODEL_DIMENSIONS,
    RULE_DIMENSIONS,
    SELECTION_BEHAVIORS,
    UNKNOWN,
    Dimension,
    LabelError,
    Labels,
    QaInteraction,
    Taxonomy,
    cursor_behavior_of,
    ordered_regions,
    parse_label,
)
from .textutil import requested_locale

log = logging.getLogger(__name__)

D = Dimension


class ProfileError(ValueError):
    pass


class PlanError(ValueError):
    pass


# -- rule dimensions -----------------------------------------------------------

def instruction_type_of(query: str, templates: Iterable[str]) -> str:
    q = query.strip().lower()
    for template in sorted(templates, key=len, reverse=True):
        t = template.lower()
        if q == t:
            return "template_only"
        if q.startswith(t) and not (q[len(t)].isalnum() or q[len(t)] == "_"):
            return "template_plus_query"
    return "query"


def query_locale_requirement_of(query: str, system_locale: str) -> str:
    wanted = requested_locale(query)
    if wanted is None:
        return "none"
    return "same_as_system" if wanted == system_locale else "differs_from_system"


def classify_rule_dims(interaction: QaInteraction, taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> dict[str, Any]:
    snap = interaction.snapshot
    language = taxonomy.language_for(snap.active_file)
    if language == UNKNOWN and not snap.active_file and interaction.language_hint in taxonomy.languages:
        language = interaction.language_hint
    return {
        D.CURSOR_BEHAVIOR.value: cursor_behavior_of(snap.active_file, snap.selections),
        D.TRIGGER_METHOD.value: interaction.trigger_method,
        D.INSTRUCTION_TYPE.value: instruction_type_of(interaction.query, taxonomy.templates),
        D.PROGRAMMING_LANGUAGE.value: language,
        D.SYSTEM_LOCALE.value: interaction.system_locale,
        D.DIALOG_TURNS.value: 1 + len(interaction.prior_turn_ids),
        D.QUERY_LOCALE_REQUIREMENT.value: query_locale_requirement_of(interaction.query, interaction.system_locale),
    }


# -- model dimensions ------------------------------------------------------------

_JSON_OBJECT = re.compile(r"\{.*\}", re.S)


def parse_model_labels(reply: str) -> tuple[dict[str, Any], list[str]]:
    """Parse a classifier reply into (valid labels, problems)."""
    m = _JSON_OBJECT.search(reply or "")
    if not m:
        return {}, ["no JSON object in reply"]
    try:
        data = json.loads(m.group(0))
    except json.JSONDecodeError as exc:
        return {}, [f"invalid JSON: {exc.msg}"]
    if not isinstance(data, dict):
        return {}, ["reply is not a JSON object"]
    labels: dict[str, Any] = {}
    problems: list[str] = []
    for dim in MODEL_DIMENSIONS:
        if dim.value not in data:
            problems.append(f"{dim.value} missing")
            continue
        try:
            labels[dim.value] = parse_label(dim, data[dim.value])
        except LabelError as exc:
            problems.append(str(exc))
    return labels, problems


def classify_model_dims(interaction: QaInteraction, gateway: Gateway) -> dict[str, Any] | None:
    """Ask ``gateway`` for reference regions, difficulty and intent.

    Returns ``None`` when the endpoint fails; the interaction is then left
    out of the profile. Fields still invalid after one repair round become
    ``unknown``.
    """
    messages = prompts.classify_messages(
        interaction.query,
        has_history=bool(interaction.prior_turn_ids),
        has_selection=bool(interaction.snapshot.selections),
    )
    reply = gateway.complete(messages)
    if not reply.ok:
        log.warning("interaction %s unclassified: %s", interaction.id, reply.error)
        return None
    labels, problems = parse_model_labels(reply.text)
    if problems:
        retry = messages + [
            {"role": "assistant", "content": reply.text},
            {"role": "user", "content": prompts.CLASSIFY_REPAIR},
        ]
        second = gateway.complete(retry)
        if not second.ok:
            log.warning("interaction %s unclassified on repair: %s", interaction.id, second.error)
            return None
        fixed, problems = parse_model_labels(second.text)
        labels = {**labels, **fixed}
    return {dim.value: labels.get(dim.value, UNKNOWN) for dim in MODEL_DIMENSIONS}


def label_interaction(
    interaction: QaInteraction, gateway: Gateway, taxonomy: Taxonomy = DEFAULT_TAXONOMY
) -> Labels | None:
    model = classify_model_dims(interaction, gateway)
    if model is None:
        return None
    raw = {**classify_rule_dims(interaction, taxonomy), **model}
    return Labels(**raw)


# -- profile ---------------------------------------------------------------------

def _category_order(dim: Dimension, cats: Iterable[str], taxonomy: Taxonomy) -> list[str]:
    cats = set(cats)
    if dim is D.DIALOG_TURNS:
        numeric = sorted((c for c in cats if c != UNKNOWN), key=int)
        return numeric + ([UNKNOWN] if UNKNOWN in cats else [])
    known = list(taxonomy.categories(dim))
    return [c for c in known if c in cats] + sorted(cats - set(known))


@dataclass(frozen=True)
class BehaviorProfile:
    """Per-dimension category probabilities estimated from ``sample_count`` interactions.

    Categories are strings; dialog turns are keyed by their decimal form.
    """

    distributions: Mapping[str, Mapping[str, float]]
    sample_count: int

    def __post_init__(self) -> None:
        if self.sample_count <= 0:
            raise ProfileError("sample count must be positive")
        for dim in DIMENSIONS:
            dist = self.distributions.get(dim.value)
            if not dist:
                raise ProfileError(f"profile has no distribution for {dim.value}")
            if any(p < 0 for p in dist.values()):
                raise ProfileError(f"{dim.value}: negative probability")
            if abs(sum(dist.values()) - 1.0) > 1e-9:
                raise ProfileError(f"{dim.value}: probabilities sum to {sum(dist.values())}")

    def marginal(self, dim: Dimension | str) -> Mapping[str, float]:
        return self.distributions[Dimension(dim).value]

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_count": self.sample_count,
            "distributions": {d.value: dict(self.distributions[d.value]) for d in DIMENSIONS},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BehaviorProfile":
        return cls(
            distributions={k: {str(c): float(p) for c, p in v.items()} for k, v in data["distributions"].items()},
            sample_count=int(data["sample_count"]),
        )


def count_categories(labeled: Sequence[Labels]) -> dict[str, Counter]:
    counts: dict[str, Counter] = {d.value: Counter() for d in DIMENSIONS}
    for labels in labeled:
        for dim in DIMENSIONS:
            value = labels.get(dim)
            if dim is D.REFERENCE_REGIONS and value != UNKNOWN:
                counts[dim.value].update(value)
            else:
                counts[dim.value][str(value)] += 1
    return counts


def build_profile(labeled: Sequence[Labels], taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> BehaviorProfile:
    if not labeled:
        raise ProfileError("no interactions")
    counts = count_categories(labeled)
    dists = {}
    for dim in DIMENSIONS:
        c = counts[dim.value]
        total = sum(c.values())
        dists[dim.value] = {cat: c[cat] / total for cat in _category_order(dim, c, taxonomy)}
    return BehaviorProfile(distributions=dists, sample_count=len(labeled))


# -- production plan ---------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    """Hard compatibility rule over a few dimensions.

    ``allows`` receives ``{dimension value: category}`` for exactly ``dims``;
    reference regions appear as the single planned region.
    """

    name: str
    dims: tuple[Dimension, ...]
    allows: Callable[[Mapping[str, str]], bool]


DEFAULT_CONSTRAINTS: tuple[Constraint, ...] = (
    Constraint(
        "selected_code_requires_selection",
        (D.CURSOR_BEHAVIOR, D.REFERENCE_REGIONS),
        lambda v: v["reference_regions"] != "selected_code" or v["cursor_behavior"] in SELECTION_BEHAVIORS,
    ),
    Constraint(
        "template_requires_selection",
        (D.CURSOR_BEHAVIOR, D.INSTRUCTION_TYPE),
        lambda v: v["instruction_type"] == "query" or v["cursor_behavior"] in SELECTION_BEHAVIORS,
    ),
    Constraint(
        "inline_chat_requires_file",
        (D.CURSOR_BEHAVIOR, D.TRIGGER_METHOD),
        lambda v: v["trigger_method"] != "inline_chat" or v["cursor_behavior"] != "no_active_file",
    ),
    # a bare template has no room for a locale directive
    Constraint(
        "template_only_has_no_locale_requirement",
        (D.INSTRUCTION_TYPE, D.QUERY_LOCALE_REQUIREMENT),
        lambda v: v["instruction_type"] != "template_only" or v["query_locale_requirement"] == "none",
    ),
)


@dataclass(frozen=True)
class PlanItem:
    count: int
    labels: Labels

    def to_dict(self) -> dict[str, Any]:
        return {"count": self.count, "labels": self.labels.to_dict()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "PlanItem":
        return cls(int(data["count"]), Labels.from_dict(data["labels"], taxonomy))


@dataclass(frozen=True)
class ProductionPlan:
    items: tuple[PlanItem, ...]
    total: int
    seed: int
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if sum(i.count for i in self.items) != self.total:
            raise PlanError("item counts do not sum to the plan total")

    def units(self) -> list[Labels]:
        """Expand items into one label set per query to produce."""
        return [item.labels for item in self.items for _ in range(item.count)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "seed": self.seed,
            "meta": dict(self.meta),
            "items": [i.to_dict() for i in self.items],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], taxonomy: Taxonomy = DEFAULT_TAXONOMY) -> "ProductionPlan":
        return cls(
            items=tuple(PlanItem.from_dict(i, taxonomy) for i in data["items"]),
            total=int(data["total"]),
            seed=int(data["seed"]),
            meta=dict(data.get("meta") or {}),
        )


def planning_marginals(profile: BehaviorProfile) -> dict[str, dict[str, float]]:
    """Profile marginals restricted to plannable categories.

    ``unknown`` mass is dropped and turn counts above the cap fold into it.
    """
    out: dict[str, dict[str, float]] = {}
    for dim in DIMENSIONS:
        dist: dict[str, float] = {}
        for cat, p in profile.marginal(dim).items():
            if cat == UNKNOWN or p <= 0:
                continue
            if dim is D.DIALOG_TURNS:
                cat = str(min(int(cat), MAX_PLANNED_TURNS))
            dist[cat] = dist.get(cat, 0.0) + p
        total = sum(dist.values())
        if total <= 0:
            raise PlanError(f"profile has no plannable categories for {dim.value}")
        out[dim.value] = {c: p / total for c, p in dist.items()}
    return out


def _fit_joint(
    dims: list[str],
    cats: dict[str, list[str]],
    targets: dict[str, np.ndarray],
    constraints: Sequence[Constraint],
    max_iter: int = 2000,
    tol: float = 1e-12,
) -> tuple[np.ndarray, float]:
    """Iterative proportional fitting of a joint on the allowed cells."""
    shape = tuple(len(cats[d]) for d in dims)
    mask = np.zeros(shape, dtype=bool)
    rejected_by: dict[tuple[str, str], set[str]] = {}
    for idx in itertools.product(*(range(n) for n in shape)):
        values = {d: cats[d][i] for d, i in zip(dims, idx)}
        failed = [c.name for c in constraints if not c.allows({x.value: values[x.value] for x in c.dims})]
        mask[idx] = not failed
        for d in dims:
            rejected_by.setdefault((d, values[d]), set()).update(failed)
    for axis, d in enumerate(dims):
        other = tuple(a for a in range(len(dims)) if a != axis)
        allowed = mask.any(axis=other) if other else mask
        for i, cat in enumerate(cats[d]):
            if not allowed[i]:
                names = ", ".join(sorted(rejected_by[(d, cat)]))
                raise PlanError(f"{d}={cat} is unsatisfiable under constraint(s): {names}")

    joint = mask.astype(float)
    for axis, d in enumerate(dims):
        view = [1] * len(dims)
        view[axis] = -1
        joint = joint * targets[d].reshape(view)
    joint /= joint.sum()
    residual = prev = np.inf
    for _ in range(max_iter):
        for axis, d in enumerate(dims):
            other = tuple(a for a in range(len(dims)) if a != axis)
            current = joint.sum(axis=other) if other else joint
            ratio = np.divide(targets[d], current, out=np.zeros_like(current), where=current > 0)
            view = [1] * len(dims)
            view[axis] = -1
            joint = joint * ratio.reshape(view)
        residual = max(
            float(np.abs(joint.sum(axis=tuple(a for a in range(len(dims)) if a != axis)) - targets[d]).sum())
            for axis, d in enumerate(dims)
        )
        # infeasible targets converge to a nonzero residual; stop once it stalls
        if residual < tol or prev - residual < tol:
            break
        prev = residual
    return joint / joint.sum(), residual


def make_production_plan(
    profile: BehaviorProfile,
    total: int,
    seed: int,
    constraints: Sequence[Constraint] = DEFAULT_CONSTRAINTS,
    diversity_floor_min_total: int = 40,
) -> ProductionPlan:
    """Seeded plan of ``total`` queries whose marginals track ``profile``.

    Dimensions touched by a constraint are drawn jointly from an
    IPF-fitted table that puts zero mass on incompatible combinations; the
    rest are drawn independently. For ``total >= diversity_floor_min_total``
    every category with profile mass appears at least once.
    """
    if total < 1:
        raise PlanError("total must be >= 1")
    marg = planning_marginals(profile)
    cats = {d: list(dist) for d, dist in marg.items()}
    probs = {d: np.array([marg[d][c] for c in cats[d]]) for d in marg}

    coupled = [d.value for d in DIMENSIONS if any(d in c.dims for c in constraints)]
    free = [d.value for d in DIMENSIONS if d.value not in coupled]
    if coupled:
        joint, residual = _fit_joint(coupled, cats, probs, constraints)
    else:
        joint, residual = np.ones(()), 0.0
    # below 1e-3 the gap is smaller than any plan can resolve
    if residual > 1e-3:
        log.warning("profile marginals are not jointly attainable under constraints (residual %.3g)", residual)

    rng = np.random.default_rng(seed)
    flat = joint.reshape(-1)
    draws: dict[str, np.ndarray] = {}
    if coupled:
        cells = rng.choice(flat.size, size=total, p=flat)
        for d, col in zip(coupled, np.unravel_index(cells, joint.shape)):
            draws[d] = col
    for d in free:
        draws[d] = rng.choice(len(cats[d]), size=total, p=probs[d])
    units = [{d: cats[d][int(draws[d][i])] for d in cats} for i in range(total)]

    if total >= diversity_floor_min_total:
        _apply_diversity_floor(units, cats, probs, coupled, joint, rng)

    for u in units:
        for c in constraints:
            if not c.allows({x.value: u[x.value] for x in c.dims}):
                raise PlanError(f"internal: sampled item violates {c.name}")

    counts: dict[tuple, int] = {}
    order: list[tuple] = []
    for u in units:
        key = tuple(u[d.value] for d in DIMENSIONS)
        if key not in counts:
            counts[key] = 0
            order.append(key)
        counts[key] += 1
    items = tuple(PlanItem(counts[k], _unit_labels(dict(zip((d.value for d in DIMENSIONS), k)))) for k in order)
    meta = {"profile_sample_count": profile.sample_count, "fit_residual": round(float(residual), 12)}
    return ProductionPlan(items=items, total=total, seed=seed, meta=meta)


def _unit_labels(u: Mapping[str, str]) -> Labels:
    raw = dict(u)
    raw["dialog_turns"] = int(raw["dialog_turns"])
    raw["reference_regions"] = frozenset([raw["reference_regions"]])
    return Labels(**raw)


def _apply_diversity_floor(units, cats, probs, coupled, joint, rng) -> None:
    forced: set[int] = set()
    counts = {d: Counter(u[d] for u in units) for d in cats}
    for dim in DIMENSIONS:
        d = dim.value
        for ci, cat in enumerate(cats[d]):
            if counts[d][cat] > 0:
                continue
            # coupled dimensions always come from the constrained joint
            new = {}
            sub = np.take(joint, [ci], axis=coupled.index(d)) if d in coupled else joint
            if coupled:
                if sub.sum() <= 0:
                    raise PlanError(f"diversity floor unsatisfiable for {d}={cat}")
                flat = sub.reshape(-1) / sub.sum()
                cell = np.unravel_index(rng.choice(flat.size, p=flat), sub.shape)
                for a, dd in enumerate(coupled):
                    new[dd] = cat if dd == d else cats[dd][int(cell[a])]
            for dd in cats:
                if dd not in new:
                    new[dd] = cat if dd == d else cats[dd][int(rng.choice(len(cats[dd]), p=probs[dd]))]
            candidates = [
                i for i, u in enumerate(units)
                if i not in forced and all(counts[x][u[x]] >= 2 for x in cats)
            ]
            if not candidates:
                raise PlanError(f"diversity floor unsatisfiable for {d}={cat}")
            j = int(candidates[int(rng.integers(len(candidates)))])
            for x in cats:
                counts[x][units[j][x]] -= 1
                counts[x][new[x]] += 1
            units[j] = new
            forced.add(j)


def plan_marginals(plan: ProductionPlan) -> dict[str, dict[str, float]]:
    """Observed per-dimension frequencies of a plan (regions per occurrence)."""
    return label_marginals(plan.units())


def label_marginals(labels: Sequence[Labels]) -> dict[str, dict[str, float]]:
    counts = count_categories(labels)
    out = {}
    for d, c in counts.items():
        total = sum(c.values())
        out[d] = {k: v / total for k, v in c.items()} if total else {}
    return out
