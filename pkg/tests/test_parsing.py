"""Judge-output parsing: golden corpus, totality, and round trips."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from mqmjudge import (
    ErrorAnnotation,
    ScoreScale,
    SegmentKey,
    Severity,
    parse_direct_score,
    parse_error_spans,
    split_think_answer,
)
from mqmjudge.parsing import Strictness, format_annotation_blocks
from conftest import random_annotation
from golden_harness import check_golden_case, golden_case_names

GOLDEN_CASES = golden_case_names()


def _spans_as_lists(spans) -> list[list[str]]:
    return [[s.severity.value, s.category, s.span] for s in spans]


@pytest.mark.parametrize("name", GOLDEN_CASES)
def test_golden_case(name):
    check_golden_case(name)


def test_golden_corpus_is_large_enough():
    assert len(GOLDEN_CASES) >= 30


class TestSplitThinkAnswer:
    def test_wellformed_pair(self):
        split = split_think_answer("<think>abc</think>\nScore: -5")
        assert (split.think, split.answer, split.truncated) == ("abc", "Score: -5", False)

    def test_backslash_close_variant(self):
        split = split_think_answer("<think>abc<\\think>\nScore: -5")
        assert (split.think, split.answer) == ("abc", "Score: -5")

    def test_unterminated_open(self):
        split = split_think_answer("<think>abc")
        assert (split.think, split.answer, split.truncated) == ("abc", "", True)

    def test_passthrough(self):
        split = split_think_answer("Critical:\nno-error\n")
        assert split.think is None
        assert split.answer == "Critical:\nno-error\n"

    @given(st.text(max_size=400))
    @settings(max_examples=300)
    def test_totality_on_arbitrary_text(self, raw):
        split = split_think_answer(raw)
        assert isinstance(split.answer, str)
        assert split.think is None or isinstance(split.think, str)


class TestRoundTrip:
    def test_render_then_parse_recovers_multiset(self):
        rng = random.Random(7)
        for _ in range(1500):
            annotation = random_annotation(rng)
            rendered = format_annotation_blocks(annotation.spans)
            judgment = parse_error_spans(rendered, Strictness.STRICT)
            assert sorted(_spans_as_lists(judgment.spans)) == sorted(_spans_as_lists(annotation.spans))
            assert judgment.warnings == ()

    def test_lenient_never_recovers_fewer_spans_than_strict(self):
        rng = random.Random(8)
        for _ in range(300):
            annotation = random_annotation(rng)
            rendered = format_annotation_blocks(annotation.spans)
            strict = parse_error_spans(rendered, Strictness.STRICT)
            lenient = parse_error_spans(rendered, Strictness.LENIENT)
            assert len(lenient.spans) >= len(strict.spans)


class TestDirectScore:
    def test_mqm_negative_float(self):
        assert parse_direct_score("reasoning...\nScore: -7.1", ScoreScale.MQM) == -7.1

    def test_esa_reference_point(self):
        assert parse_direct_score("Score (0-100): 66", ScoreScale.ESA_0_100) == 66.0

    def test_last_match_wins(self):
        assert parse_direct_score("Score: 33\n...\nScore: 90", ScoreScale.ESA_0_100) == 90.0

    def test_mqm_sign_normalization(self):
        assert parse_direct_score("Score: 12.5", ScoreScale.MQM) == -12.5

    def test_markdown_wrapped_score(self):
        assert parse_direct_score("**Score:** -3", ScoreScale.MQM) == -3.0


def test_parsed_judgment_attaches_key():
    judgment = parse_error_spans("Major:\naccuracy - x", Strictness.LENIENT)
    key = SegmentKey("en-de", "sysA", "d0", 1)
    annotation = judgment.annotation_for(key, rater="run1")
    assert isinstance(annotation, ErrorAnnotation)
    assert annotation.key == key and annotation.rater == "run1"
    assert annotation.spans[0].severity is Severity.MAJOR
