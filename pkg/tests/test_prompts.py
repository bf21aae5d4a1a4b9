"""Prompt rendering: layout, mode isolation, determinism, templates."""

from __future__ import annotations

import random

import pytest

from mqmjudge import (
    DataError,
    DEFAULT_WEIGHTS,
    MaterialsMode,
    PromptTemplate,
    Segment,
    build_judge_prompt,
    build_rescoring_prompt,
    default_demos,
)
from mqmjudge.errors import ConfigError
from mqmjudge.parsing import Strictness, parse_error_spans

SEG = Segment(
    lang_pair="en-de",
    system_id="sysA",
    doc_id="d0",
    seg_id=7,
    source="The cat sat on the mat.",
    hypothesis="Die Katze sass auf der Matte.",
    reference="Die Katze saß auf der Matte.",
)


def template(mode: MaterialsMode, demos=()) -> PromptTemplate:
    return PromptTemplate(mode=mode, demos=tuple(demos))


class TestJudgePrompt:
    def test_src_mode_layout(self):
        rp = build_judge_prompt(SEG, template(MaterialsMode.SRC))
        assert "English source:" in rp.text
        assert "German translation:" in rp.text
        assert "human reference" not in rp.text
        assert "use no-error if empty" in rp.text
        assert rp.text.index("English source:") < rp.text.index("German translation:")
        for header in ("Critical:", "Major:", "Minor:"):
            assert header in rp.text

    def test_joint_mode_has_reference_between_source_and_translation(self):
        rp = build_judge_prompt(SEG, template(MaterialsMode.JOINT))
        i_src = rp.text.index("English source:")
        i_ref = rp.text.index("German human reference:")
        i_tra = rp.text.index("German translation:")
        assert i_src < i_ref < i_tra

    def test_ref_mode_has_no_source_block(self):
        rp = build_judge_prompt(SEG, template(MaterialsMode.REF))
        assert "English source:" not in rp.text
        assert "German human reference:" in rp.text

    def test_determinism(self):
        t = template(MaterialsMode.JOINT, default_demos())
        a = build_judge_prompt(SEG, t)
        b = build_judge_prompt(SEG, t)
        assert a.text == b.text and a.fingerprint == b.fingerprint

    def test_mode_isolation_src_never_leaks_reference(self):
        rng = random.Random(1)
        sentinel = "REFERENCE-SENTINEL-9Q4X"
        for i in range(50):
            seg = Segment(
                lang_pair=rng.choice(["en-de", "ja-zh", "en-es"]),
                system_id=f"sys{i}",
                doc_id="d0",
                seg_id=i,
                source=f"source text {i}",
                hypothesis=f"hypothesis text {i}",
                reference=sentinel,
            )
            rp = build_judge_prompt(seg, template(MaterialsMode.SRC))
            assert sentinel not in rp.text

    def test_missing_reference_raises_with_key(self):
        seg = Segment("en-de", "sysA", "d0", 1, source="s", hypothesis="h", reference=None)
        with pytest.raises(DataError) as exc_info:
            build_judge_prompt(seg, template(MaterialsMode.REF))
        assert "sysA" in str(exc_info.value)

    def test_demos_precede_query_and_share_layout(self):
        demos = default_demos()
        rp = build_judge_prompt(SEG, template(MaterialsMode.SRC, demos))
        for demo in demos:
            assert rp.text.index(demo.source) < rp.text.index(SEG.source)
        # Demo annotations use the canonical three-block format and parse back.
        from mqmjudge.prompts import _render_demo

        demo_text = _render_demo(demos[0], MaterialsMode.SRC)
        judgment = parse_error_spans(demo_text, Strictness.STRICT)
        assert len(judgment.spans) == len(demos[0].spans)
        # Demo blocks mirror the query block layout: source then translation.
        assert demo_text.index("English source:") < demo_text.index("German translation:")
        assert "human reference" not in demo_text

    def test_at_most_three_demos(self):
        with pytest.raises(ConfigError):
            PromptTemplate(mode=MaterialsMode.SRC, demos=default_demos() + default_demos())

    def test_ref_mode_demos_require_reference(self):
        from mqmjudge import DemoExample

        demo = DemoExample(
            source_lang="English", target_lang="German",
            source="a", translation="b", reference=None,
        )
        with pytest.raises(ConfigError):
            PromptTemplate(mode=MaterialsMode.REF, demos=(demo,))

    def test_custom_template_file(self, tmp_path):
        path = tmp_path / "custom.txt"
        path.write_text("{materials}\nJudge it.\nCritical:\nMajor:\nMinor:\n", encoding="utf-8")
        t = PromptTemplate(mode=MaterialsMode.SRC, name=str(path))
        rp = build_judge_prompt(SEG, t)
        assert rp.text.startswith("English source:")
        assert "Judge it." in rp.text

    def test_unknown_placeholder_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("{materials} {nonexistent}", encoding="utf-8")
        with pytest.raises(ConfigError):
            build_judge_prompt(SEG, PromptTemplate(mode=MaterialsMode.SRC, name=str(path)))

    def test_unknown_language_tag_falls_back_to_tag(self):
        seg = Segment("xx-yy", "sysA", "d0", 0, source="s", hypothesis="h")
        rp = build_judge_prompt(seg, template(MaterialsMode.SRC))
        assert "xx source:" in rp.text

    def test_language_name_override(self):
        t = PromptTemplate(mode=MaterialsMode.SRC, lang_overrides={"en": "British English"})
        rp = build_judge_prompt(SEG, t)
        assert "British English source:" in rp.text


class TestThinkingTemplates:
    def test_rubric_line_with_default_weights(self):
        t = PromptTemplate(mode=MaterialsMode.SRC, name="thinmqm-src")
        rp = build_judge_prompt(SEG, t, weights=DEFAULT_WEIGHTS)
        assert '-25="Critical", -5="Major", -1="Minor", -0.1="Minor/Fluency/Punctuation", 0="No-error"' in rp.text

    def test_rubric_line_substitutes_weights(self):
        from mqmjudge import WeightScheme

        t = PromptTemplate(mode=MaterialsMode.REF, name="thinmqm-ref")
        rp = build_judge_prompt(SEG, t, weights=WeightScheme(-3, -2, -1, -0.5))
        assert '-3="Critical", -2="Major", -1="Minor", -0.5="Minor/Fluency/Punctuation"' in rp.text


class TestRescoringPrompt:
    def test_reference_points_and_tail(self):
        rp = build_rescoring_prompt(SEG, 'Major: accuracy/mistranslation - "x"', MaterialsMode.REF)
        for fragment in (
            '0="No meaning preserved"',
            '33="Some meaning preserved"',
            '66="Most meaning preserved and few grammar mistakes"',
            '100="Perfect meaning and grammar"',
        ):
            assert fragment in rp.text
        assert rp.text.endswith("Score (0-100):")
        assert "Annotated error spans:" in rp.text
        assert "English source:" in rp.text and "German translation:" in rp.text

    def test_no_error_details_are_valid(self):
        rp = build_rescoring_prompt(SEG, "no-error", MaterialsMode.SRC)
        assert "```no-error```" in rp.text

    def test_empty_details_rejected(self):
        with pytest.raises(DataError):
            build_rescoring_prompt(SEG, "   ", MaterialsMode.SRC)

    def test_ref_mode_requires_reference(self):
        seg = Segment("en-de", "sysA", "d0", 1, source="s", hypothesis="h")
        with pytest.raises(DataError):
            build_rescoring_prompt(seg, "no-error", MaterialsMode.REF)


def test_fingerprints_distinguish_segments_and_modes():
    t_src = template(MaterialsMode.SRC)
    t_joint = template(MaterialsMode.JOINT)
    other = Segment("en-de", "sysB", "d0", 7, source="s", hypothesis="h", reference="r")
    fps = {
        build_judge_prompt(SEG, t_src).fingerprint,
        build_judge_prompt(SEG, t_joint).fingerprint,
        build_judge_prompt(other, t_src).fingerprint,
    }
    assert len(fps) == 3
