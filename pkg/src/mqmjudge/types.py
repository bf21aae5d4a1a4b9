"""Core domain types for MQM judging and meta-evaluation.

All types are immutable after construction and safe to share across
threads. Categories follow the closed judge taxonomy; use
:func:`normalize_category` at ingestion boundaries before constructing
:class:`ErrorSpan` objects.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import DataError

# Top-level error categories a judge may emit. Sub-categories are free-form
# and preserved verbatim below the top level.
TAXONOMY_TOPS = (
    "accuracy",
    "fluency",
    "style",
    "terminology",
    "non-translation",
    "other",
    "no-error",
)


class Severity(str, enum.Enum):
    CRITICAL = "Critical"
    MAJOR = "Major"
    MINOR = "Minor"

    @classmethod
    def parse(cls, text: str) -> "Severity":
        t = text.strip().lower()
        for sev in cls:
            if t == sev.value.lower():
                return sev
        raise DataError(f"unknown severity: {text!r}")


class MaterialsMode(str, enum.Enum):
    """Which evaluation materials a judge prompt may reference."""

    SRC = "src"
    REF = "ref"
    JOINT = "joint"

    @property
    def needs_reference(self) -> bool:
        return self in (MaterialsMode.REF, MaterialsMode.JOINT)

    @classmethod
    def parse(cls, text: str) -> "MaterialsMode":
        t = text.strip().lower().rstrip(".")
        for mode in cls:
            if t == mode.value:
                return mode
        raise DataError(f"unknown materials mode: {text!r}")


def normalize_category(path: str) -> str:
    """Map a raw category path onto the closed taxonomy.

    The top level is lowercased and matched against the taxonomy; wholly
    unknown top levels are filed under ``other/`` with the original path
    kept as the sub-category. Sub-categories are preserved verbatim
    (stripped). The function is idempotent.
    """
    cleaned = path.strip().strip("/")
    if not cleaned:
        return "other"
    parts = [p.strip() for p in cleaned.split("/")]
    top = parts[0].lower().rstrip("!").strip()
    if top in ("no error", "noerror", "no-errors", "none"):
        top = "no-error"
    if top in TAXONOMY_TOPS:
        sub = [p for p in parts[1:] if p]
        return "/".join([top] + sub)
    return "/".join(["other"] + parts)


class SegmentKey(NamedTuple):
    """Identifies one translated segment produced by one system."""

    lang_pair: str
    system_id: str
    doc_id: str
    seg_id: int

    @property
    def item(self) -> "ItemKey":
        return ItemKey(self.lang_pair, self.doc_id, self.seg_id)


class ItemKey(NamedTuple):
    """Identifies one source item (a ScoreMatrix column), system-agnostic."""

    lang_pair: str
    doc_id: str
    seg_id: int


@dataclass(frozen=True)
class Segment:
    """One translation instance: the unit a judge evaluates."""

    lang_pair: str
    system_id: str
    doc_id: str
    seg_id: int
    source: str
    hypothesis: str
    reference: str | None = None

    def __post_init__(self):
        if not self.hypothesis:
            raise DataError(f"segment {self.key} has an empty hypothesis")
        if self.seg_id < 0:
            raise DataError(f"segment {self.key} has a negative seg_id")

    @property
    def key(self) -> SegmentKey:
        return SegmentKey(self.lang_pair, self.system_id, self.doc_id, self.seg_id)

    def require_reference(self) -> str:
        if not self.reference:
            raise DataError(f"segment {self.key} has no reference but a reference-based mode was requested")
        return self.reference


@dataclass(frozen=True)
class ErrorSpan:
    """One annotated error: severity, hierarchical category, quoted span text."""

    severity: Severity
    category: str
    span: str = ""

    def __post_init__(self):
        top = self.category.split("/", 1)[0]
        if top not in TAXONOMY_TOPS:
            raise DataError(
                f"category top level {top!r} outside the judge taxonomy; "
                f"run normalize_category() first"
            )

    @property
    def category_top(self) -> str:
        return self.category.split("/", 1)[0]

    def is_fluency_punctuation(self) -> bool:
        return self.category.startswith("fluency/punctuation")


@dataclass(frozen=True)
class ErrorAnnotation:
    """All error spans one rater (human or judge) assigned to a segment."""

    key: SegmentKey
    spans: tuple[ErrorSpan, ...] = ()
    rater: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple(self.spans))

    @property
    def is_perfect(self) -> bool:
        return not self.spans


class TokenUsage(NamedTuple):
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class JudgeRecord:
    """One raw judge completion plus its split think/answer parts."""

    key: SegmentKey
    fingerprint: str = ""
    raw_completion: str = ""
    think: str | None = None
    answer: str = ""
    usage: TokenUsage | None = None
    run_index: int = 0
    think_truncated: bool = False
    response_truncated: bool = False
    retries: int = 0
    error: str | None = None

    @classmethod
    def from_completion(
        cls,
        key: SegmentKey,
        raw_completion: str,
        fingerprint: str = "",
        usage: TokenUsage | None = None,
        run_index: int = 0,
        response_truncated: bool = False,
        retries: int = 0,
    ) -> "JudgeRecord":
        # Imported here to avoid a module cycle with parsing.
        from .parsing import split_think_answer

        split = split_think_answer(raw_completion)
        return cls(
            key=key,
            fingerprint=fingerprint,
            raw_completion=raw_completion,
            think=split.think,
            answer=split.answer,
            usage=usage,
            run_index=run_index,
            think_truncated=split.truncated,
            response_truncated=response_truncated,
            retries=retries,
        )


@dataclass(frozen=True)
class ScoreMatrix:
    """systems x segments score table; NaN marks a missing entry."""

    systems: tuple[str, ...]
    segments: tuple[ItemKey, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.systems), len(self.segments)):
            raise DataError(
                f"score matrix shape {vals.shape} does not match "
                f"{len(self.systems)} systems x {len(self.segments)} segments"
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "systems", tuple(self.systems))
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def n_systems(self) -> int:
        return len(self.systems)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def system_index(self, system_id: str) -> int:
        try:
            return self.systems.index(system_id)
        except ValueError:
            raise DataError(f"unknown system {system_id!r}") from None

    def row(self, system_id: str) -> np.ndarray:
        return self.values[self.system_index(system_id)]

    def cell(self, system_id: str, segment: ItemKey) -> float | None:
        try:
            j = self.segments.index(segment)
        except ValueError:
            raise DataError(f"unknown segment {segment!r}") from None
        v = self.values[self.system_index(system_id), j]
        return None if math.isnan(v) else float(v)

    def language_pairs(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for seg in self.segments:
            seen.setdefault(seg.lang_pair, None)
        return tuple(sorted(seen))

    def restrict_language(self, lang_pair: str) -> "ScoreMatrix":
        cols = [j for j, seg in enumerate(self.segments) if seg.lang_pair == lang_pair]
        if not cols:
            raise DataError(f"no segments for language pair {lang_pair!r}")
        return ScoreMatrix(
            systems=self.systems,
            segments=tuple(self.segments[j] for j in cols),
            values=self.values[:, cols],
        )

    def system_means(self) -> dict[str, float]:
        """Per-system mean over non-missing cells, in fixed segment order."""
        means: dict[str, float] = {}
        for i, sys_id in enumerate(self.systems):
            vals = [float(v) for v in self.values[i] if not math.isnan(v)]
            if not vals:
                raise DataError(f"system {sys_id!r} has no scores")
            means[sys_id] = math.fsum(vals) / len(vals)
        return means

    def transform(self, alpha: float, beta: float) -> "ScoreMatrix":
        """Positive-affine transform alpha * value + beta (missing preserved)."""
        if alpha <= 0:
            raise DataError("affine transform requires alpha > 0")
        return ScoreMatrix(self.systems, self.segments, alpha * self.values + beta)


def build_score_matrix(
    scores: Iterable[tuple[ItemKey | tuple, str, float]],
) -> ScoreMatrix:
    """Assemble a ScoreMatrix from (segment key, system id, score) triples.

    Ordering is deterministic and independent of input order: systems
    lexicographic, segments by (lang_pair, doc_id, seg_id). Duplicate
    (system, segment) entries are averaged.
    """
    cells: dict[tuple[str, ItemKey], list[float]] = {}
    for seg_key, system_id, value in scores:
        item = ItemKey(*seg_key)
        cells.setdefault((system_id, item), []).append(float(value))
    systems = tuple(sorted({s for s, _ in cells}))
    segments = tuple(sorted({i for _, i in cells}))
    sys_idx = {s: i for i, s in enumerate(systems)}
    seg_idx = {k: j for j, k in enumerate(segments)}
    values = np.full((len(systems), len(segments)), np.nan)
    for (system_id, item), vals in cells.items():
        values[sys_idx[system_id], seg_idx[item]] = math.fsum(vals) / len(vals)
    return ScoreMatrix(systems=systems, segments=segments, values=values)


def annotations_by_key(
    annotations: Iterable[ErrorAnnotation],
) -> dict[SegmentKey, list[ErrorAnnotation]]:
    """Group annotations by segment key (one entry per rater/run)."""
    grouped: dict[SegmentKey, list[ErrorAnnotation]] = {}
    for ann in annotations:
        grouped.setdefault(ann.key, []).append(ann)
    return grouped


def language_names(overrides: Mapping[str, str] | None = None) -> dict[str, str]:
    """Display names for language tags, with optional user overrides."""
    table = dict(_LANGUAGE_NAMES)
    if overrides:
        table.update({k.lower(): v for k, v in overrides.items()})
    return table


_LANGUAGE_NAMES = {
    "ar": "Arabic",
    "cs": "Czech",
    "de": "German",
    "en": "English",
    "es": "Spanish",
    "et": "Estonian",
    "fi": "Finnish",
    "fr": "French",
    "gu": "Gujarati",
    "he": "Hebrew",
    "hi": "Hindi",
    "is": "Icelandic",
    "it": "Italian",
    "ja": "Japanese",
    "kk": "Kazakh",
    "km": "Khmer",
    "ko": "Korean",
    "lt": "Lithuanian",
    "lv": "Latvian",
    "nl": "Dutch",
    "pl": "Polish",
    "ps": "Pashto",
    "pt": "Portuguese",
    "ro": "Romanian",
    "ru": "Russian",
    "ta": "Tamil",
    "tr": "Turkish",
    "uk": "Ukrainian",
    "vi": "Vietnamese",
    "zh": "Chinese",
}


def split_lang_pair(lang_pair: str) -> tuple[str, str]:
    parts = lang_pair.replace("_", "-").split("-")
    if len(parts) != 2 or not all(parts):
        raise DataError(f"cannot split language pair tag {lang_pair!r}")
    return parts[0].lower(), parts[1].lower()


def display_name(tag: str, overrides: Mapping[str, str] | None = None) -> str:
    """Human-readable language name for a tag; falls back to the tag itself."""
    return language_names(overrides).get(tag.lower(), tag)
