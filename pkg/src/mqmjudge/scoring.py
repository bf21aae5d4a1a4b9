"""Rule-based MQM scoring: error annotations -> scalar penalty scores.

Scores are non-positive penalties (0 = perfect translation). Totals are
computed with exact summation (``math.fsum``), so a score is always the
correctly rounded value of the true penalty sum and is independent of span
order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import ConfigError, DataError
from .types import ErrorAnnotation, ScoreMatrix, SegmentKey, build_score_matrix


@dataclass(frozen=True)
class WeightScheme:
    """Severity -> penalty mapping.

    ``minor_fluency_punct`` applies to Minor spans whose category starts
    with ``fluency/punctuation``. ``cap`` optionally clips totals at a
    most-negative value. Weights must be non-positive and ordered
    |critical| >= |major| >= |minor| >= |minor_fluency_punct| so that the
    ordinal structure of severities is preserved.
    """

    critical: float = -25.0
    major: float = -5.0
    minor: float = -1.0
    minor_fluency_punct: float = -0.1
    cap: float | None = None

    def __post_init__(self):
        weights = (self.critical, self.major, self.minor, self.minor_fluency_punct)
        if any(w > 0 for w in weights):
            raise ConfigError("severity weights must be <= 0")
        mags = [abs(w) for w in weights]
        if any(a < b for a, b in zip(mags, mags[1:])):
            raise ConfigError(
                "weights must satisfy |critical| >= |major| >= |minor| >= |minor_fluency_punct|"
            )
        if self.cap is not None and self.cap > 0:
            raise ConfigError("cap must be <= 0")

    def weight_for(self, span) -> float:
        from .types import Severity

        if span.severity is Severity.CRITICAL:
            return self.critical
        if span.severity is Severity.MAJOR:
            return self.major
        if span.is_fluency_punctuation():
            return self.minor_fluency_punct
        return self.minor

    def scaled(self, factor: float) -> "WeightScheme":
        if factor <= 0:
            raise ConfigError("scale factor must be > 0")
        return WeightScheme(
            critical=self.critical * factor,
            major=self.major * factor,
            minor=self.minor * factor,
            minor_fluency_punct=self.minor_fluency_punct * factor,
            cap=None if self.cap is None else self.cap * factor,
        )

    def to_dict(self) -> dict:
        d = {
            "critical": self.critical,
            "major": self.major,
            "minor": self.minor,
            "minor_fluency_punct": self.minor_fluency_punct,
        }
        if self.cap is not None:
            d["cap"] = self.cap
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "WeightScheme":
        unknown = set(d) - {"critical", "major", "minor", "minor_fluency_punct", "cap"}
        if unknown:
            raise ConfigError(f"unknown weight fields: {sorted(unknown)}")
        try:
            return cls(**{k: (None if v is None else float(v)) for k, v in d.items()})
        except TypeError as exc:
            raise ConfigError(f"incomplete weight scheme: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "WeightScheme":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


DEFAULT_WEIGHTS = WeightScheme()
# Flatter alternative used for rule-robustness studies; the
# fluency/punctuation discount is kept unless overridden.
ALT321_WEIGHTS = WeightScheme(critical=-3.0, major=-2.0, minor=-1.0, minor_fluency_punct=-0.1)

WEIGHT_PRESETS = {"default": DEFAULT_WEIGHTS, "alt321": ALT321_WEIGHTS}


def resolve_weights(spec: str) -> WeightScheme:
    """Resolve a preset name or a JSON config path into a WeightScheme."""
    if spec in WEIGHT_PRESETS:
        return WEIGHT_PRESETS[spec]
    try:
        return WeightScheme.from_json(spec)
    except OSError as exc:
        raise ConfigError(
            f"--weights must be one of {sorted(WEIGHT_PRESETS)} or a readable JSON path: {exc}"
        ) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"weight config {spec!r} is not valid JSON: {exc}") from exc


@dataclass(frozen=True)
class MqmScore:
    """Scalar MQM penalty plus severity counts."""

    value: float
    n_critical: int
    n_major: int
    n_minor: int

    @property
    def n_errors(self) -> int:
        return self.n_critical + self.n_major + self.n_minor


def score_annotation(annotation: ErrorAnnotation, weights: WeightScheme = DEFAULT_WEIGHTS) -> MqmScore:
    """Aggregate the penalties of all annotated errors into one score."""
    from .types import Severity

    penalties = [weights.weight_for(span) for span in annotation.spans]
    value = math.fsum(penalties)
    if weights.cap is not None:
        value = max(value, weights.cap)
    counts = {Severity.CRITICAL: 0, Severity.MAJOR: 0, Severity.MINOR: 0}
    for span in annotation.spans:
        counts[span.severity] += 1
    return MqmScore(
        value=value,
        n_critical=counts[Severity.CRITICAL],
        n_major=counts[Severity.MAJOR],
        n_minor=counts[Severity.MINOR],
    )


def aggregate_rater_scores(per_rater: Iterable[MqmScore | float]) -> float:
    """Arithmetic mean of per-rater scores for one segment."""
    values = [s.value if isinstance(s, MqmScore) else float(s) for s in per_rater]
    if not values:
        raise DataError("cannot aggregate an empty list of rater scores")
    return math.fsum(values) / len(values)


def rescore_matrix(
    annotations: Iterable[ErrorAnnotation],
    weights: WeightScheme = DEFAULT_WEIGHTS,
) -> ScoreMatrix:
    """Score every annotation under ``weights`` and assemble a ScoreMatrix.

    Multiple annotations of the same (system, segment) cell (e.g. several
    raters) are averaged by the matrix builder. Calling this twice with two
    schemes supports weight-robustness delta studies.
    """
    entries = []
    for ann in annotations:
        key: SegmentKey = ann.key
        entries.append((key.item, key.system_id, score_annotation(ann, weights).value))
    return build_score_matrix(entries)
