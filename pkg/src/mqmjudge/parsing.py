"""Parse free-form judge completions into structured annotations and scores.

A completion splits into an optional think block and an answer. Answers
follow the three-block error format::

    Critical:
    no-error
    Major:
    accuracy/mistranslation - "das Haus"
    Minor:
    fluency/punctuation - ","

Severity blocks run until the next severity header or a calculation/score
marker ("Finally ...", "Total: ...", "Score: ..."); text after such a
marker is narration, not annotation. Under Strict parsing any
unrecognized line inside a block is an error; under Lenient it becomes a
warning and common markdown decoration (fences, bold, headings, bullets)
is stripped first.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import DataError, ParseError
from .types import ErrorSpan, Severity, TAXONOMY_TOPS, normalize_category

THINK_OPEN = "<think>"
# Some serving stacks emit a backslash variant of the closing tag.
THINK_CLOSE_RE = re.compile(r"</think>|<\\think>")

_HEADER_RE = re.compile(r"^(critical|major|minor)\s*:?\s*$", re.IGNORECASE)
# Lines that end all annotation blocks: the score-calculation narration or
# the final score line.
_TERMINATOR_RE = re.compile(r"^(finally|total|score)\b", re.IGNORECASE)
_THINK_TAG_RE = re.compile(r"^<\\?/?think>$")
_NO_ERROR_RE = re.compile(r"^(no[-_\s]?errors?|none)\s*\.?$", re.IGNORECASE)
_BRACKET_SPAN_RE = re.compile(r"^\[(?P<cat>[^\]]+)\]\s*-\s*\[?(?P<span>.*?)\]?\s*$")
_PLAIN_SPAN_RE = re.compile(r"^(?P<cat>.+?)\s+-\s+(?P<span>.*)$")

_MD_FENCE_RE = re.compile(r"^\s*```\w*\s*$")
_MD_DECOR_RE = re.compile(r"^\s*(?:#{1,6}\s+|[-*•]\s+)?(?P<body>.*?)\s*$")
_MD_EMPHASIS_RE = re.compile(r"^(?:\*\*|__|\*|_|`)(?P<body>.+?)(?:\*\*|__|\*|_|`)$")


NO_BLOCKS_MESSAGE = "no MQM blocks found"


class Strictness(str, enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"


class ScoreScale(str, enum.Enum):
    """Numeric scale of a directly extracted score."""

    MQM = "mqm"  # non-positive penalty; bare positives are sign-normalized
    ESA_0_100 = "esa-0-100"  # quality score in [0, 100]


@dataclass(frozen=True)
class ThinkSplit:
    think: str | None
    answer: str
    truncated: bool = False


@dataclass(frozen=True)
class ParsedJudgment:
    """Spans recovered from one answer, with any Lenient-mode warnings."""

    spans: tuple[ErrorSpan, ...]
    warnings: tuple[str, ...] = ()
    strictness: Strictness = Strictness.LENIENT

    def annotation_for(self, key, rater: str | None = None):
        from .types import ErrorAnnotation

        return ErrorAnnotation(key=key, spans=self.spans, rater=rater)


def split_think_answer(raw: str) -> ThinkSplit:
    """Split a completion into (think, answer). Total on arbitrary text.

    A well-formed open/close pair yields the inner text and the remainder;
    an unterminated open tag (truncated generation) yields everything after
    it with ``truncated=True``; otherwise the whole text is the answer.
    """
    start = raw.find(THINK_OPEN)
    if start < 0:
        return ThinkSplit(think=None, answer=raw, truncated=False)
    inner_start = start + len(THINK_OPEN)
    close = THINK_CLOSE_RE.search(raw, inner_start)
    if close is None:
        return ThinkSplit(think=raw[inner_start:].strip(), answer="", truncated=True)
    think = raw[inner_start : close.start()].strip()
    answer = raw[close.end() :].strip()
    return ThinkSplit(think=think, answer=answer, truncated=False)


def _clean_line(line: str, strictness: Strictness, warnings: list[str], line_no: int) -> str | None:
    """Strip markdown decoration (Lenient only). None drops the line."""
    stripped = line.strip()
    if strictness is Strictness.STRICT:
        return stripped
    if _MD_FENCE_RE.match(stripped):
        warnings.append(f"line {line_no}: stripped markdown fence")
        return None
    body = _MD_DECOR_RE.match(stripped).group("body")
    emphasized = _MD_EMPHASIS_RE.match(body)
    if emphasized:
        body = emphasized.group("body").strip()
    if body != stripped:
        warnings.append(f"line {line_no}: stripped markdown decoration")
    return body


def _parse_span_line(line: str) -> tuple[str, str] | None:
    """Return (category, span_text) if the line looks like an error span."""
    if line[:1] in "-*•#":  # markdown decoration, not a category
        return None
    m = _BRACKET_SPAN_RE.match(line)
    if m:
        return m.group("cat").strip(), _unquote(m.group("span").strip())
    m = _PLAIN_SPAN_RE.match(line)
    if m:
        return m.group("cat").strip(), _unquote(m.group("span").strip())
    # A bare known category (e.g. "non-translation") is a span with empty text.
    if line.split("/", 1)[0].strip().lower().rstrip("!") in TAXONOMY_TOPS and not _NO_ERROR_RE.match(line):
        return line.strip(), ""
    return None


def _unquote(text: str) -> str:
    if len(text) >= 2 and text[0] == '"' and text[-1] == '"':
        return text[1:-1]
    return text


def parse_error_spans(answer: str, strictness: Strictness = Strictness.LENIENT) -> ParsedJudgment:
    """Scan the three Critical/Major/Minor blocks for error spans.

    Raises :class:`ParseError` if no severity header is found, or (Strict
    only) when a block contains a line matching neither the span pattern
    nor ``no-error``.
    """
    warnings: list[str] = []
    spans: list[ErrorSpan] = []
    current: Severity | None = None
    seen_headers: set[Severity] = set()
    found_any_header = False

    for line_no, raw_line in enumerate(answer.splitlines(), start=1):
        line = _clean_line(raw_line, strictness, warnings, line_no)
        if line is None or not line or _THINK_TAG_RE.match(line):
            continue
        header = _HEADER_RE.match(line)
        if header:
            severity = Severity.parse(header.group(1))
            if severity in seen_headers:
                msg = f"duplicate {severity.value} header"
                if strictness is Strictness.STRICT:
                    raise ParseError(msg, line_no)
                warnings.append(f"line {line_no}: {msg}; blocks merged")
            seen_headers.add(severity)
            current = severity
            found_any_header = True
            continue
        if _TERMINATOR_RE.match(line):
            current = None
            continue
        if current is None:
            continue  # free text outside any block
        if _NO_ERROR_RE.match(line):
            continue
        parsed = _parse_span_line(line)
        if parsed is None:
            msg = f"unparseable line in {current.value} block: {line!r}"
            if strictness is Strictness.STRICT:
                raise ParseError(msg, line_no)
            warnings.append(f"line {line_no}: {msg}")
            continue
        raw_category, span_text = parsed
        category = normalize_category(raw_category)
        if category.startswith("other/") and raw_category.split("/", 1)[0].strip().lower() != "other":
            msg = f"unknown category {raw_category!r} filed under 'other'"
            if strictness is Strictness.STRICT:
                raise ParseError(msg, line_no)
            warnings.append(f"line {line_no}: {msg}")
        spans.append(ErrorSpan(severity=current, category=category, span=span_text))

    if not found_any_header:
        raise ParseError(NO_BLOCKS_MESSAGE)
    return ParsedJudgment(spans=tuple(spans), warnings=tuple(warnings), strictness=strictness)


def parse_record_blocks(
    think: str | None, answer: str, strictness: Strictness = Strictness.LENIENT
) -> ParsedJudgment:
    """Parse severity blocks from a split completion.

    The answer section is authoritative; completions that keep their blocks
    inside the think section (trajectory-style outputs whose answer is just
    the score line) fall back to the think text when the answer has no
    blocks at all.
    """
    try:
        return parse_error_spans(answer, strictness)
    except ParseError as exc:
        if think and NO_BLOCKS_MESSAGE in str(exc):
            return parse_error_spans(think, strictness)
        raise


_SCORE_RE = re.compile(
    r"score(?:\s*\(0\s*-\s*100\))?\s*(?:[:=]|\bis\b|\bof\b)?\s*(?P<num>[-+]?\d+(?:\.\d+)?)",
    re.IGNORECASE,
)
_BARE_NUMBER_RE = re.compile(r"^[-+]?\d+(?:\.\d+)?$")
_MD_CHARS_RE = re.compile(r"[*_`#]")


def parse_direct_score(answer: str, scale: ScoreScale) -> float:
    """Extract the final numeric score from an answer.

    The last number following a "Score" marker wins (reasoning text often
    mentions intermediate scores). An answer that is nothing but a number
    is accepted as-is. MQM-scale positives are sign-normalized to
    penalties; ESA scores must lie in [0, 100].
    """
    text = _MD_CHARS_RE.sub("", answer)
    matches = list(_SCORE_RE.finditer(text))
    if matches:
        value = float(matches[-1].group("num"))
    else:
        stripped = text.strip()
        if _BARE_NUMBER_RE.match(stripped):
            value = float(stripped)
        else:
            raise ParseError("no score marker found in answer")
    if scale is ScoreScale.MQM:
        return -value if value > 0 else value
    if not 0 <= value <= 100:
        raise DataError(f"ESA score out of range [0, 100]: {value!r}")
    return value


def format_number(x: float) -> str:
    """Minimal decimal rendering: integral floats lose the trailing .0."""
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def format_annotation_blocks(spans) -> str:
    """Render spans as the canonical three-block Critical/Major/Minor text.

    This is the inverse of :func:`parse_error_spans` for normalized
    annotations, and the shared formatter used by prompt demos and
    trajectory synthesis.
    """
    by_severity = {Severity.CRITICAL: [], Severity.MAJOR: [], Severity.MINOR: []}
    for span in spans:
        by_severity[span.severity].append(span)
    blocks = []
    for severity in (Severity.CRITICAL, Severity.MAJOR, Severity.MINOR):
        lines = [f"{severity.value}:"]
        members = by_severity[severity]
        if not members:
            lines.append("no-error")
        else:
            lines.extend(f'{span.category} - "{span.span}"' for span in members)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)
