"""Shared test helpers: randomized domain-object generators."""

from __future__ import annotations

import random

from mqmjudge import ErrorAnnotation, ErrorSpan, SegmentKey, Severity

CANONICAL_TOPS = ("accuracy", "fluency", "style", "terminology", "non-translation", "other")

SUBCATEGORIES = {
    "accuracy": ["mistranslation", "omission", "addition", "untranslated text"],
    "fluency": ["grammar", "punctuation", "spelling", "register", "inconsistency", "character encoding"],
    "style": ["awkward"],
    "terminology": ["inappropriate for context", "inconsistent use"],
    "non-translation": [],
    "other": ["hallucinated detail", "unknown"],
}

_SPAN_ALPHABET = 'abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,;:!?()-"\'/'


def random_span_text(rng: random.Random, max_len: int = 24) -> str:
    # Span texts mimic quoted excerpts: printable, single line, stripped.
    n = rng.randint(0, max_len)
    return "".join(rng.choice(_SPAN_ALPHABET) for _ in range(n)).strip()


def random_category(rng: random.Random) -> str:
    top = rng.choice(CANONICAL_TOPS)
    subs = SUBCATEGORIES[top]
    if subs and rng.random() < 0.8:
        return f"{top}/{rng.choice(subs)}"
    return top


def random_error_span(rng: random.Random, allow_fluency_punct: bool = True) -> ErrorSpan:
    severity = rng.choices(
        [Severity.CRITICAL, Severity.MAJOR, Severity.MINOR], weights=[1, 4, 6]
    )[0]
    while True:
        category = random_category(rng)
        if allow_fluency_punct or not category.startswith("fluency/punctuation"):
            break
    return ErrorSpan(severity=severity, category=category, span=random_span_text(rng))


def random_annotation(
    rng: random.Random,
    key: SegmentKey | None = None,
    max_spans: int = 8,
    rater: str | None = None,
    allow_fluency_punct: bool = True,
) -> ErrorAnnotation:
    if key is None:
        key = SegmentKey("en-de", f"sys{rng.randint(0, 9)}", f"doc{rng.randint(0, 9)}", rng.randint(0, 99))
    n = rng.randint(0, max_spans)
    spans = tuple(random_error_span(rng, allow_fluency_punct) for _ in range(n))
    return ErrorAnnotation(key=key, spans=spans, rater=rater)
