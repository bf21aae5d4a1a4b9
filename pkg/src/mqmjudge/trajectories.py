"""Synthesize structured thinking-trajectory training instances.

Each instance pairs a judge prompt (source- or reference-based) with a
target that walks through the human evaluation procedure: the three
severity blocks of error spans, a narrated penalty calculation, and the
final score line. Targets are parseable by design, so every instance can
be validated by round-tripping it through the judge parser and the
rule-based scorer.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import ConfigError, DataError
from .parsing import (
    ParsedJudgment,
    ScoreScale,
    Strictness,
    format_annotation_blocks,
    format_number,
    parse_direct_score,
    parse_error_spans,
    split_think_answer,
)
from .prompts import PromptTemplate, build_judge_prompt
from .scoring import DEFAULT_WEIGHTS, WeightScheme, score_annotation
from .seeding import derive_seed
from .types import ErrorAnnotation, MaterialsMode, Segment, Severity

logger = logging.getLogger(__name__)

THINK_PREAMBLE = (
    "Okay, let's tackle this translation quality assessment task.\n"
    "First, I need to analyze the translation and classify the errors."
)
CALCULATION_INTRO = "Finally, I can calculate the final score:"


@dataclass(frozen=True)
class TrainingInstance:
    """One prompt/target pair with provenance back to the human annotation."""

    prompt: str
    target: str
    lang_pair: str
    provenance: Mapping[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "prompt": self.prompt,
            "target": self.target,
            "lang_pair": self.lang_pair,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainingInstance":
        return cls(
            prompt=d["prompt"],
            target=d["target"],
            lang_pair=d["lang_pair"],
            provenance=dict(d.get("provenance", {})),
        )


def _calculation_lines(annotation: ErrorAnnotation, weights: WeightScheme, total: float) -> str:
    if not annotation.spans:
        return "There are no errors, so the final score is 0."
    ordered = sorted(
        annotation.spans,
        key=lambda s: (s.severity is not Severity.CRITICAL, s.severity is Severity.MINOR),
    )
    lines = [
        f"{span.severity.value} {span.category}: {format_number(weights.weight_for(span))}"
        for span in ordered
    ]
    expr = " + ".join(f"({format_number(weights.weight_for(s))})" for s in ordered)
    raw_total = math.fsum(weights.weight_for(s) for s in ordered)
    if raw_total != total:  # cap applied
        lines.append(f"Total: {expr} = {format_number(raw_total)}, capped to {format_number(total)}")
    else:
        lines.append(f"Total: {expr} = {format_number(total)}")
    return "\n".join(lines)


def render_target(annotation: ErrorAnnotation, weights: WeightScheme = DEFAULT_WEIGHTS) -> str:
    """Render the thinking-trajectory target text for one annotation."""
    score = score_annotation(annotation, weights)
    blocks = format_annotation_blocks(annotation.spans)
    calculation = _calculation_lines(annotation, weights, score.value)
    return (
        "<think>\n"
        f"{THINK_PREAMBLE}\n\n"
        f"{blocks}\n\n"
        f"{CALCULATION_INTRO}\n"
        f"{calculation}\n"
        "</think>\n\n"
        f"Score: {format_number(score.value)}"
    )


def synthesize_trajectory(
    segment: Segment,
    annotation: ErrorAnnotation,
    weights: WeightScheme = DEFAULT_WEIGHTS,
    mode: MaterialsMode = MaterialsMode.SRC,
    template: PromptTemplate | None = None,
) -> TrainingInstance:
    """Build one training instance from a human-annotated segment.

    Only source- or reference-based prompts are used for training data;
    Joint mode is rejected. The target embeds exactly the spans of
    ``annotation`` and the score they imply under ``weights``.
    """
    if mode is MaterialsMode.JOINT:
        raise ConfigError("training instances use src or ref mode, not joint")
    if annotation.key != segment.key:
        raise DataError(f"annotation key {annotation.key} does not match segment {segment.key}")
    if template is None:
        template = PromptTemplate(mode=mode, name=f"thinmqm-{mode.value}")
    elif template.mode is not mode:
        raise ConfigError("template mode does not match requested mode")
    prompt = build_judge_prompt(segment, template, weights=weights)
    target = render_target(annotation, weights)
    provenance = {
        "lang_pair": segment.lang_pair,
        "system_id": segment.system_id,
        "doc_id": segment.doc_id,
        "seg_id": segment.seg_id,
        "rater": annotation.rater,
        "mode": mode.value,
        "template": template.template_id,
    }
    return TrainingInstance(
        prompt=prompt.text,
        target=target,
        lang_pair=segment.lang_pair,
        provenance=provenance,
    )


def validate_instance(instance: TrainingInstance, weights: WeightScheme = DEFAULT_WEIGHTS) -> list[str]:
    """Check template conformance, score consistency, and block ordering.

    Returns a list of violation descriptions; an empty list means the
    instance is well-formed. Violations are data, not exceptions.
    """
    violations: list[str] = []
    split = split_think_answer(instance.target)
    if split.think is None:
        violations.append("conformance: target has no think block")
        return violations
    if split.truncated:
        violations.append("conformance: think block is unterminated")
        return violations

    try:
        judgment: ParsedJudgment = parse_error_spans(split.think, Strictness.STRICT)
    except DataError as exc:
        violations.append(f"conformance: {exc}")
        return violations

    lowered = split.think.lower()
    positions = [lowered.find("critical"), lowered.find("major"), lowered.find("minor")]
    if any(p < 0 for p in positions):
        violations.append("conformance: missing severity block")
    elif positions != sorted(positions):
        violations.append("ordering: severity blocks out of Critical/Major/Minor order")

    try:
        stated = parse_direct_score(split.answer, ScoreScale.MQM)
    except DataError as exc:
        violations.append(f"conformance: {exc}")
        return violations
    recomputed = score_annotation(
        ErrorAnnotation(key=_provenance_key(instance), spans=judgment.spans), weights
    ).value
    if stated != recomputed:
        violations.append(
            f"score-consistency: target states {stated} but spans sum to {recomputed}"
        )
    return violations


def _provenance_key(instance: TrainingInstance):
    from .types import SegmentKey

    p = instance.provenance
    return SegmentKey(
        str(p.get("lang_pair", instance.lang_pair)),
        str(p.get("system_id", "")),
        str(p.get("doc_id", "")),
        int(p.get("seg_id", 0) or 0),
    )


def balance_dataset(
    groups: Mapping[str, Sequence[TrainingInstance]],
    target_n: int | None = None,
    seed: int = 0,
) -> dict[str, list[TrainingInstance]]:
    """Downsample larger language-pair groups to a common size.

    Without ``target_n`` the smallest group size is used. Sampling is
    uniform without replacement and deterministic given the seed; each
    group draws from its own derived stream, so results do not depend on
    group iteration order. Groups already at or below the target are kept
    whole (with a warning entry when the target exceeds their size).
    """
    if not groups:
        raise DataError("no language-pair groups to balance")
    if target_n is not None and target_n <= 0:
        raise DataError("target_n must be positive")
    n = target_n if target_n is not None else min(len(g) for g in groups.values())
    balanced: dict[str, list[TrainingInstance]] = {}
    for lang_pair in sorted(groups):
        instances = list(groups[lang_pair])
        if len(instances) <= n:
            if len(instances) < n:
                logger.warning(
                    "group %s has only %d instances (< target %d); kept whole",
                    lang_pair, len(instances), n,
                )
            balanced[lang_pair] = instances
            continue
        rng = random.Random(derive_seed(seed, "balance", lang_pair))
        keep = sorted(rng.sample(range(len(instances)), n))
        balanced[lang_pair] = [instances[i] for i in keep]
    return balanced


def dataset_sizes(groups: Mapping[str, Sequence[TrainingInstance]]) -> dict:
    sizes = {lang: len(g) for lang, g in sorted(groups.items())}
    sizes["total"] = sum(sizes.values())
    return sizes


def write_dataset(instances: Iterable[TrainingInstance], path) -> int:
    """Write instances as JSON Lines; returns the number written."""
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(json.dumps(inst.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


def read_dataset(path) -> list[TrainingInstance]:
    instances = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                instances.append(TrainingInstance.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{line_no}: bad training instance: {exc}") from exc
    return instances


def validation_report(
    instances: Sequence[TrainingInstance], weights: WeightScheme = DEFAULT_WEIGHTS
) -> dict:
    """Violation counts by kind over a dataset."""
    counts: dict[str, int] = {}
    clean = 0
    for inst in instances:
        violations = validate_instance(inst, weights)
        if not violations:
            clean += 1
        for v in violations:
            kind = v.split(":", 1)[0]
            counts[kind] = counts.get(kind, 0) + 1
    return {
        "instances": len(instances),
        "clean": clean,
        "violations_by_kind": dict(sorted(counts.items())),
    }
