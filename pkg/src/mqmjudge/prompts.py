"""Render judge prompts for all material modes, plus the ESA rescoring prompt.

Templates are plain text files with ``{placeholder}`` substitution. The
shipped defaults are named gemba-mqm-src / gemba-mqm-ref / gemba-mqm-joint
/ gemba-esa-rescore / thinmqm-src / thinmqm-ref; a filesystem path may be
given instead to swap in a custom template (e.g. paraphrased instruction
variants) without code changes.

The ``{materials}`` placeholder expands to the mode-appropriate
source/reference/translation blocks. In-context demos are rendered through
the same block layout and the same three-block annotation formatter used
for trajectory synthesis, so demo and target formats cannot drift apart.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .errors import ConfigError, DataError
from .parsing import format_annotation_blocks, format_number
from .scoring import WeightScheme, DEFAULT_WEIGHTS
from .types import ErrorSpan, MaterialsMode, Segment, SegmentKey, Severity, display_name, split_lang_pair

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

BUILTIN_TEMPLATES = (
    "gemba-mqm-src",
    "gemba-mqm-ref",
    "gemba-mqm-joint",
    "gemba-esa-rescore",
    "thinmqm-src",
    "thinmqm-ref",
)


def _read_builtin(name: str) -> str:
    return resources.files("mqmjudge").joinpath("templates", f"{name}.txt").read_text("utf-8")


def load_template_text(name_or_path: str) -> tuple[str, str]:
    """Resolve a template id or path to (template name, text)."""
    if name_or_path in BUILTIN_TEMPLATES:
        return name_or_path, _read_builtin(name_or_path).rstrip("\n")
    path = Path(name_or_path)
    if not path.exists():
        raise ConfigError(
            f"unknown template {name_or_path!r}; expected one of {BUILTIN_TEMPLATES} or a file path"
        )
    return path.stem, path.read_text("utf-8").rstrip("\n")


def default_judge_template_name(mode: MaterialsMode) -> str:
    return f"gemba-mqm-{mode.value}"


@dataclass(frozen=True)
class DemoExample:
    """One in-context demonstration: materials plus its gold annotation."""

    source_lang: str
    target_lang: str
    source: str
    translation: str
    reference: str | None = None
    spans: tuple[ErrorSpan, ...] = ()

    @classmethod
    def from_dict(cls, d: Mapping) -> "DemoExample":
        spans = tuple(
            ErrorSpan(Severity.parse(s["severity"]), s["category"], s.get("span", ""))
            for s in d.get("spans", ())
        )
        return cls(
            source_lang=d["source_lang"],
            target_lang=d["target_lang"],
            source=d["source"],
            translation=d["translation"],
            reference=d.get("reference"),
            spans=spans,
        )


def default_demos() -> tuple[DemoExample, ...]:
    """The three stock demonstrations shipped with the judge templates.

    Reference texts are hand-corrected stand-ins; swap in canonical demos
    via PromptTemplate(demos=...) if you have them.
    """
    raw = resources.files("mqmjudge").joinpath("templates", "demos-default.json").read_text("utf-8")
    return tuple(DemoExample.from_dict(d) for d in json.loads(raw))


@dataclass(frozen=True)
class PromptTemplate:
    """A named template bound to a materials mode and optional ICL demos."""

    mode: MaterialsMode
    name: str = ""
    text: str = ""
    demos: tuple[DemoExample, ...] = ()
    lang_overrides: Mapping[str, str] | None = None

    def __post_init__(self):
        if not self.name and not self.text:
            name, text = load_template_text(default_judge_template_name(self.mode))
            object.__setattr__(self, "name", name)
            object.__setattr__(self, "text", text)
        elif not self.text:
            name, text = load_template_text(self.name)
            object.__setattr__(self, "name", name)
            object.__setattr__(self, "text", text)
        if len(self.demos) > 3:
            raise ConfigError("at most 3 in-context demos are supported")
        if self.mode.needs_reference:
            for demo in self.demos:
                if not demo.reference:
                    raise ConfigError(
                        f"{self.mode.value} mode requires a reference in every demo"
                    )

    @property
    def template_id(self) -> str:
        digest = hashlib.blake2b(self.text.encode("utf-8"), digest_size=6).hexdigest()
        return f"{self.name}#{digest}"


@dataclass(frozen=True)
class RenderedPrompt:
    """A fully rendered prompt with a stable fingerprint."""

    text: str
    fingerprint: str
    key: SegmentKey
    mode: MaterialsMode
    template_id: str = ""


def _substitute(text: str, mapping: Mapping[str, str]) -> str:
    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name not in mapping:
            raise ConfigError(f"template references unknown placeholder {{{name}}}")
        return mapping[name]

    return _PLACEHOLDER_RE.sub(repl, text)


def _materials_block(
    mode: MaterialsMode,
    source_language: str,
    target_language: str,
    source: str,
    translation: str,
    reference: str | None,
) -> str:
    lines: list[str] = []
    if mode in (MaterialsMode.SRC, MaterialsMode.JOINT):
        lines += [f"{source_language} source:", f"```{source}```"]
    if mode.needs_reference:
        lines += [f"{target_language} human reference:", f"```{reference}```"]
    lines += [f"{target_language} translation:", f"```{translation}```"]
    return "\n".join(lines)


def _render_demo(demo: DemoExample, mode: MaterialsMode) -> str:
    blocks = _materials_block(
        mode,
        demo.source_lang,
        demo.target_lang,
        demo.source,
        demo.translation,
        demo.reference,
    )
    return blocks + "\n\n" + format_annotation_blocks(demo.spans)


def _fingerprint(template_id: str, key: SegmentKey, mode: MaterialsMode) -> str:
    payload = "|".join([template_id, key.lang_pair, key.system_id, key.doc_id, str(key.seg_id), mode.value])
    return hashlib.blake2b(payload.encode("utf-8"), digest_size=16).hexdigest()


def _segment_languages(segment: Segment, overrides: Mapping[str, str] | None) -> tuple[str, str]:
    src_tag, tgt_tag = split_lang_pair(segment.lang_pair)
    return display_name(src_tag, overrides), display_name(tgt_tag, overrides)


def build_judge_prompt(
    segment: Segment,
    template: PromptTemplate,
    weights: WeightScheme = DEFAULT_WEIGHTS,
) -> RenderedPrompt:
    """Render the error-annotation prompt for one segment.

    ``weights`` only matters for templates carrying the scoring-rubric
    reference points (the thinmqm ones); the plain judge templates ignore
    it.
    """
    mode = template.mode
    if mode.needs_reference:
        segment.require_reference()
    source_language, target_language = _segment_languages(segment, template.lang_overrides)

    demos = "".join(_render_demo(d, mode) + "\n\n\n" for d in template.demos)
    mapping = {
        "demos": demos,
        "materials": _materials_block(
            mode, source_language, target_language, segment.source, segment.hypothesis, segment.reference
        ),
        "source_language": source_language,
        "target_language": target_language,
        "source": segment.source,
        "translation": segment.hypothesis,
        "critical_weight": format_number(weights.critical),
        "major_weight": format_number(weights.major),
        "minor_weight": format_number(weights.minor),
        "minor_fluency_punct_weight": format_number(weights.minor_fluency_punct),
    }
    if mode.needs_reference:
        mapping["reference"] = segment.reference or ""
    text = _substitute(template.text, mapping)
    return RenderedPrompt(
        text=text,
        fingerprint=_fingerprint(template.template_id, segment.key, mode),
        key=segment.key,
        mode=mode,
        template_id=template.template_id,
    )


def build_rescoring_prompt(
    segment: Segment,
    esa_details: str,
    mode: MaterialsMode,
    lang_overrides: Mapping[str, str] | None = None,
    template_name: str = "gemba-esa-rescore",
) -> RenderedPrompt:
    """Render the 0-100 rescoring prompt over previously annotated spans.

    ``esa_details`` is the annotated-error-span text (use the literal
    "no-error" for clean translations). The shipped layout always shows
    source and translation; the mode still gates reference availability so
    reference-based pipelines fail fast on reference-less segments.
    """
    if not esa_details.strip():
        raise DataError(f"esa_details must be non-empty for segment {segment.key} (use 'no-error')")
    if mode.needs_reference:
        segment.require_reference()
    name, text = load_template_text(template_name)
    source_language, target_language = _segment_languages(segment, lang_overrides)
    mapping = {
        "source_language": source_language,
        "target_language": target_language,
        "source": segment.source,
        "translation": segment.hypothesis,
        "reference": segment.reference or "",
        "esa_details": esa_details,
        "demos": "",
        "materials": _materials_block(
            mode, source_language, target_language, segment.source, segment.hypothesis, segment.reference
        ),
    }
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=6).hexdigest()
    template_id = f"{name}#{digest}"
    rendered = _substitute(text, mapping)
    return RenderedPrompt(
        text=rendered,
        fingerprint=_fingerprint(template_id, segment.key, mode),
        key=segment.key,
        mode=mode,
        template_id=template_id,
    )
