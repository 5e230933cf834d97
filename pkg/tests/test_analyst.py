from __future__ import annotations

import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from dialogsynth.analyst import (
    DEFAULT_CONSTRAINTS,
    BehaviorProfile,
    Constraint,
    PlanError,
    ProductionPlan,
    ProfileError,
    build_profile,
    classify_model_dims,
    classify_rule_dims,
    instruction_type_of,
    label_interaction,
    make_production_plan,
    parse_model_labels,
    planning_marginals,
)
from dialogsynth.gateway import ModelEndpoint
from dialogsynth.stub import StubChatClient
from dialogsynth.synthetic import synthetic_logs
from dialogsynth.taxonomy import (
    CURSOR_BEHAVIORS,
    DEFAULT_TAXONOMY,
    DIMENSIONS,
    UNKNOWN,
    Dimension,
    QaInteraction,
)

from .strategies import labels as label_strategy


def frequency_oracle(units) -> dict[str, dict[str, float]]:
    """Plain counting of planned categories, one region per unit."""
    out = {}
    for dim in DIMENSIONS:
        c = Counter()
        for lb in units:
            v = lb.get(dim)
            if dim is Dimension.REFERENCE_REGIONS:
                for r in v:
                    c[r] += 1
            else:
                c[str(v)] += 1
        n = sum(c.values())
        out[dim.value] = {k: v / n for k, v in c.items()}
    return out


def l1(p, q) -> float:
    return sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in set(p) | set(q))


def dirichlet_profile(seed: int, taxonomy=DEFAULT_TAXONOMY, max_turns: int = 6) -> BehaviorProfile:
    rng = np.random.default_rng(seed)
    dists = {}
    for dim in DIMENSIONS:
        cats = list(taxonomy.categories(dim)) or [str(i) for i in range(1, max_turns + 1)]
        p = rng.dirichlet(np.full(len(cats), 2.0))
        dists[dim.value] = dict(zip(cats, (float(x) for x in p / p.sum())))
        s = sum(dists[dim.value].values())
        dists[dim.value][cats[0]] += 1.0 - s
    return BehaviorProfile(dists, 1000)


def test_rule_dims_on_synthetic_logs():
    for s in synthetic_logs(400, seed=5):
        assert classify_rule_dims(s.interaction) == s.truth


def test_template_matching_needs_word_boundary():
    t = DEFAULT_TAXONOMY.templates
    assert instruction_type_of("/fix", t) == "template_only"
    assert instruction_type_of("/fix it", t) == "template_plus_query"
    assert instruction_type_of("/fixture setup?", t) == "query"
    assert instruction_type_of("Explain Code", t) == "template_only"
    assert instruction_type_of("please /fix", t) == "query"


@pytest.mark.parametrize("reply,problems", [
    ('{"reference_regions": ["question"], "difficulty": "expert", "intent": "general_qa"}', 0),
    ('Sure! {"reference_regions": "question", "difficulty": "expert", "intent": "general_qa"}', 0),
    ('{"reference_regions": ["question"], "difficulty": "legendary", "intent": "general_qa"}', 1),
    ('{"difficulty": "expert"}', 2),
    ("no json here", 1),
])
def test_parse_model_labels(reply, problems):
    _, found = parse_model_labels(reply)
    assert len(found) == problems


def test_classifier_repair_and_unknown():
    inter = QaInteraction("i1", "what is this?")
    bad = '{"reference_regions": ["question"], "difficulty": "legendary", "intent": "general_qa"}'
    client = StubChatClient(task_replies={"classify": bad})
    got = classify_model_dims(inter, client)
    assert got["difficulty"] == UNKNOWN and got["intent"] == "general_qa"
    assert classify_model_dims(inter, StubChatClient(fail=True)) is None


def test_label_interaction_with_stub():
    client = StubChatClient(ModelEndpoint(id="helper", base_url="stub://"))
    for s in synthetic_logs(30, seed=2):
        lb = label_interaction(s.interaction, client)
        assert lb is not None
        assert lb.cursor_behavior == s.truth["cursor_behavior"]


@settings(max_examples=40, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(label_strategy, min_size=1, max_size=40))
def test_profile_sums_and_region_occurrences(labeled):
    prof = build_profile(labeled)
    for dim in DIMENSIONS:
        assert abs(sum(prof.marginal(dim).values()) - 1) < 1e-9
    regions = Counter(r for lb in labeled for r in lb.reference_regions)
    n = sum(regions.values())
    for r, c in regions.items():
        assert prof.marginal("reference_regions")[r] == pytest.approx(c / n)
    assert BehaviorProfile.from_dict(json.loads(json.dumps(prof.to_dict()))) == prof


def test_empty_profile_is_an_error():
    with pytest.raises(ProfileError, match="no interactions"):
        build_profile([])


def test_planning_marginals_fold_turns_and_drop_unknown():
    prof = dirichlet_profile(1)
    d = {k: dict(v) for k, v in prof.distributions.items()}
    d["dialog_turns"] = {"1": 0.5, "10": 0.1, "14": 0.2, UNKNOWN: 0.2}
    m = planning_marginals(BehaviorProfile(d, 10))
    assert m["dialog_turns"] == pytest.approx({"1": 0.625, "10": 0.375})


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 300))
def test_plan_respects_constraints_and_total(seed, total):
    plan = make_production_plan(dirichlet_profile(seed), total, seed)
    assert plan.total == total == len(plan.units())
    for lb in plan.units():
        for c in DEFAULT_CONSTRAINTS:
            v = {d.value: lb.get(d) for d in c.dims}
            if "reference_regions" in v:
                (v["reference_regions"],) = v["reference_regions"]
            assert c.allows(v), (c.name, lb)
    keys = [tuple(sorted(i.labels.to_dict().items(), key=str)) for i in plan.items]
    assert len(keys) == len(set(map(str, keys)))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(40, 400))
def test_diversity_floor(seed, total):
    prof = dirichlet_profile(seed)
    plan = make_production_plan(prof, total, seed)
    seen = frequency_oracle(plan.units())
    for dim, dist in planning_marginals(prof).items():
        assert set(dist) <= set(seen[dim]), dim


def test_plan_is_seeded():
    prof = dirichlet_profile(3)
    a = make_production_plan(prof, 500, 11)
    assert a == make_production_plan(prof, 500, 11)
    assert a != make_production_plan(prof, 500, 12)
    assert ProductionPlan.from_dict(json.loads(json.dumps(a.to_dict()))) == a


def test_unsatisfiable_category_names_constraint():
    prof = dirichlet_profile(4)
    never_inline = Constraint("no_inline_ever", (Dimension.TRIGGER_METHOD,), lambda v: v["trigger_method"] != "inline_chat")
    with pytest.raises(PlanError, match="no_inline_ever"):
        make_production_plan(prof, 100, 0, constraints=DEFAULT_CONSTRAINTS + (never_inline,))


def test_plan_marginals_close_to_profile():
    prof = dirichlet_profile(9)
    plan = make_production_plan(prof, 10_000, 9)
    got = frequency_oracle(plan.units())
    target = planning_marginals(prof)
    for dim in target:
        assert l1(target[dim], got[dim]) <= 0.05, dim


def test_cursor_behaviors_all_plannable():
    prof = dirichlet_profile(21)
    plan = make_production_plan(prof, 2000, 21)
    assert {lb.cursor_behavior for lb in plan.units()} == set(CURSOR_BEHAVIORS)
