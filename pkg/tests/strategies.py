"""Hypothesis strategies shared across test modules."""

from __future__ import annotations

from hypothesis import strategies as st

from dialogsynth.taxonomy import (
    CURSOR_BEHAVIORS,
    DEFAULT_TAXONOMY,
    DIFFICULTIES,
    INSTRUCTION_TYPES,
    INTENTS,
    LOCALES,
    QUERY_LOCALE_REQUIREMENTS,
    REFERENCE_REGIONS,
    TRIGGER_METHODS,
    Labels,
    LineRange,
)

regions = st.frozensets(st.sampled_from(REFERENCE_REGIONS), min_size=1)

labels = st.builds(
    Labels,
    cursor_behavior=st.sampled_from(CURSOR_BEHAVIORS),
    trigger_method=st.sampled_from(TRIGGER_METHODS),
    instruction_type=st.sampled_from(INSTRUCTION_TYPES),
    programming_language=st.sampled_from(DEFAULT_TAXONOMY.languages),
    system_locale=st.sampled_from(LOCALES),
    dialog_turns=st.integers(1, 12),
    query_locale_requirement=st.sampled_from(QUERY_LOCALE_REQUIREMENTS),
    reference_regions=regions,
    difficulty=st.sampled_from(DIFFICULTIES),
    intent=st.sampled_from(INTENTS),
)


@st.composite
def disjoint_ranges(draw, max_line: int = 300, max_ranges: int = 4) -> tuple[LineRange, ...]:
    cuts = sorted(draw(st.sets(st.integers(1, max_line), min_size=0, max_size=2 * max_ranges)))
    if len(cuts) % 2:
        cuts = cuts[:-1]
    return tuple(LineRange(a, b) for a, b in zip(cuts[::2], cuts[1::2]))


@st.composite
def score_pairs(draw, max_size: int = 60) -> list[tuple[int, int]]:
    score = st.integers(0, 5)
    return draw(st.lists(st.tuples(score, score), max_size=max_size))


SAMPLE_LABELS = Labels(
    cursor_behavior="select_block", trigger_method="chat_view", instruction_type="query",
    programming_language="go", system_locale="en", dialog_turns=2, query_locale_requirement="none",
    reference_regions=frozenset({"selected_code", "question"}), difficulty="intermediate",
    intent="code_explanation",
)
