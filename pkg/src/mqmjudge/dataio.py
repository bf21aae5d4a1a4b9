"""File ingestion and serialization.

Readers: human MQM annotation tables (tab-separated, header-keyed), judge
output records (JSON Lines), score matrices (TSV), annotation files (JSON
Lines). Writers mirror the readers so every pipeline stage is
independently re-runnable from files.

MQM tables vary across releases, so columns are keyed by header name, not
position. Malformed rows are collected into a row-error report and do not
abort the load.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import DataError
from .types import (
    ErrorAnnotation,
    ErrorSpan,
    ItemKey,
    JudgeRecord,
    ScoreMatrix,
    Segment,
    SegmentKey,
    Severity,
    TokenUsage,
    build_score_matrix,
    normalize_category,
)

_SPAN_MARKER_RE = re.compile(r"<v>(?P<inner>.*?)</v>", re.DOTALL)
_NO_ERROR_CATEGORY_RE = re.compile(r"^no[-_\s]?error$", re.IGNORECASE)
_NO_ERROR_SEVERITY = {"no-error", "no_error", "noerror", "neutral", ""}

_SEG_ID_ALIASES = ("seg_id", "doc_id", "segment_id")
_LANG_COLUMN_ALIASES = ("lang_pair", "lp", "lang")


@dataclass
class RowError:
    line_no: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line_no}: {self.message}"


@dataclass
class MqmLoadResult:
    """Annotations and segments recovered from one MQM table."""

    annotations: list[ErrorAnnotation]
    segments: list[Segment]
    errors: list[RowError] = field(default_factory=list)


def _sniff_lang_pair(path: Path) -> str | None:
    from .types import language_names

    known = language_names()
    stem = path.stem.lower()
    for m in re.finditer(r"(?:^|[._-])([a-z]{2})[-_]?([a-z]{2})(?=[._-]|$)", stem):
        src, tgt = m.group(1), m.group(2)
        if src in known and tgt in known:
            return f"{src}-{tgt}"
    return None


def load_mqm_tsv(path, lang_pair: str | None = None) -> MqmLoadResult:
    """Load a human MQM annotation table.

    One ErrorAnnotation is produced per (segment, rater) row group;
    ``no-error``/``neutral`` rows contribute empty span lists. Error spans
    marked inline in the target text with <v>...</v> are extracted
    verbatim; the markers are stripped from the stored hypothesis. The
    language pair comes from a lang_pair/lp column when present, then the
    ``lang_pair`` argument, then the file name.
    """
    path = Path(path)
    errors: list[RowError] = []
    spans_by_group: dict[tuple[SegmentKey, str], list[ErrorSpan]] = {}
    segments: dict[SegmentKey, Segment] = {}

    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file, expected a header row")
        fields = {name.strip().lower(): name for name in reader.fieldnames}

        def pick(*aliases: str) -> str | None:
            for a in aliases:
                if a in fields:
                    return fields[a]
            return None

        col_system = pick("system")
        col_doc = pick("doc")
        col_seg = pick(*_SEG_ID_ALIASES)
        col_rater = pick("rater")
        col_source = pick("source")
        col_target = pick("target")
        col_category = pick("category")
        col_severity = pick("severity")
        missing = [
            name
            for name, col in [
                ("system", col_system), ("doc", col_doc), ("seg_id", col_seg),
                ("rater", col_rater), ("source", col_source), ("target", col_target),
                ("category", col_category), ("severity", col_severity),
            ]
            if col is None
        ]
        if missing:
            raise DataError(f"{path}: header is missing required columns: {missing}")
        col_lang = pick(*_LANG_COLUMN_ALIASES)
        file_lang = lang_pair or _sniff_lang_pair(path)
        if col_lang is None and file_lang is None:
            raise DataError(
                f"{path}: no language-pair column and none could be derived; pass lang_pair="
            )

        for line_no, row in enumerate(reader, start=2):
            try:
                lp = (row.get(col_lang) or "").strip() if col_lang else ""
                lp = lp or file_lang
                if not lp:
                    raise DataError("missing language pair")
                system = (row[col_system] or "").strip()
                doc = (row[col_doc] or "").strip()
                rater = (row[col_rater] or "").strip()
                target = row[col_target] or ""
                source = row[col_source] or ""
                if not system or not doc:
                    raise DataError("missing system or doc id")
                try:
                    seg_id = int((row[col_seg] or "").strip())
                except ValueError:
                    raise DataError(f"bad seg_id {row[col_seg]!r}") from None

                severity_raw = (row[col_severity] or "").strip().lower()
                category_raw = (row[col_category] or "").strip()
                key = SegmentKey(lp, system, doc, seg_id)
                group = (key, rater)

                hypothesis = _SPAN_MARKER_RE.sub(lambda m: m.group("inner"), target)
                if key not in segments:
                    segments[key] = Segment(
                        lang_pair=lp, system_id=system, doc_id=doc, seg_id=seg_id,
                        source=source, hypothesis=hypothesis,
                    )
                elif segments[key].hypothesis != hypothesis:
                    errors.append(RowError(line_no, f"inconsistent target text for {key}"))

                if severity_raw in _NO_ERROR_SEVERITY or _NO_ERROR_CATEGORY_RE.match(category_raw):
                    spans_by_group.setdefault(group, [])
                    continue
                # Severity is parsed before the group exists, so a rejected
                # row cannot fabricate an empty (= perfect) annotation.
                severity = Severity.parse(severity_raw)
                marker = _SPAN_MARKER_RE.search(target)
                span_text = marker.group("inner") if marker else ""
                spans_by_group.setdefault(group, []).append(
                    ErrorSpan(
                        severity=severity,
                        category=normalize_category(category_raw),
                        span=span_text,
                    )
                )
            except DataError as exc:
                errors.append(RowError(line_no, str(exc)))

    annotations = [
        ErrorAnnotation(key=key, spans=tuple(spans), rater=rater or None)
        for (key, rater), spans in sorted(spans_by_group.items())
    ]
    ordered_segments = [segments[k] for k in sorted(segments)]
    return MqmLoadResult(annotations=annotations, segments=ordered_segments, errors=errors)


# ---------------------------------------------------------------------------
# Judge records (JSON Lines)


def _key_from_obj(obj: dict) -> SegmentKey:
    try:
        return SegmentKey(
            str(obj["lang_pair"]), str(obj["system_id"]), str(obj["doc_id"]), int(obj["seg_id"])
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"record is missing a valid segment key: {exc}") from exc


def judge_record_to_dict(record: JudgeRecord) -> dict:
    d = {
        "lang_pair": record.key.lang_pair,
        "system_id": record.key.system_id,
        "doc_id": record.key.doc_id,
        "seg_id": record.key.seg_id,
        "fingerprint": record.fingerprint,
        "completion": record.raw_completion,
        "run_index": record.run_index,
    }
    if record.usage is not None:
        d["usage"] = {
            "prompt_tokens": record.usage.prompt_tokens,
            "completion_tokens": record.usage.completion_tokens,
        }
    if record.response_truncated:
        d["response_truncated"] = True
    if record.retries:
        d["retries"] = record.retries
    if record.error is not None:
        d["error"] = record.error
    return d


def judge_record_from_dict(obj: dict, run_index: int | None = None) -> JudgeRecord:
    key = _key_from_obj(obj)
    completion = obj.get("completion", obj.get("raw_completion"))
    if completion is None and "error" not in obj:
        raise DataError("record has neither completion nor error")
    usage = None
    if isinstance(obj.get("usage"), dict):
        u = obj["usage"]
        usage = TokenUsage(
            prompt_tokens=int(u.get("prompt_tokens", 0)),
            completion_tokens=int(u.get("completion_tokens", 0)),
        )
    record = JudgeRecord.from_completion(
        key=key,
        raw_completion=completion or "",
        fingerprint=str(obj.get("fingerprint", "")),
        usage=usage,
        run_index=int(obj["run_index"]) if run_index is None and "run_index" in obj else (run_index or 0),
        response_truncated=bool(obj.get("response_truncated", False)),
        retries=int(obj.get("retries", 0)),
    )
    if obj.get("error") is not None:
        record = dataclasses.replace(record, error=str(obj["error"]))
    return record


def load_judge_jsonl(path) -> list[JudgeRecord]:
    """Load judge records in file order.

    Duplicate segment keys are allowed (multi-run evaluation) and tagged
    with an incrementing run index. Unknown fields are ignored; an invalid
    JSON line or a record without a usable key is an error naming the line.
    """
    records: list[JudgeRecord] = []
    runs_seen: dict[SegmentKey, int] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            try:
                explicit_run = obj.get("run_index")
                key = _key_from_obj(obj)
                run = int(explicit_run) if explicit_run is not None else runs_seen.get(key, 0)
                record = judge_record_from_dict(obj, run_index=run)
            except DataError as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
            runs_seen[key] = max(runs_seen.get(key, 0), run) + 1
            records.append(record)
    return records


def write_judge_jsonl(records: Iterable[JudgeRecord], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(judge_record_to_dict(record), ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


# ---------------------------------------------------------------------------
# Annotations (JSON Lines)


def annotation_to_dict(ann: ErrorAnnotation) -> dict:
    return {
        "lang_pair": ann.key.lang_pair,
        "system_id": ann.key.system_id,
        "doc_id": ann.key.doc_id,
        "seg_id": ann.key.seg_id,
        "rater": ann.rater,
        "spans": [
            {"severity": s.severity.value, "category": s.category, "span": s.span}
            for s in ann.spans
        ],
    }


def annotation_from_dict(obj: dict) -> ErrorAnnotation:
    key = _key_from_obj(obj)
    spans = tuple(
        ErrorSpan(
            severity=Severity.parse(s["severity"]),
            category=normalize_category(s["category"]),
            span=s.get("span", ""),
        )
        for s in obj.get("spans", [])
    )
    rater = obj.get("rater")
    return ErrorAnnotation(key=key, spans=spans, rater=None if rater is None else str(rater))


def load_annotations_jsonl(path) -> list[ErrorAnnotation]:
    annotations = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                annotations.append(annotation_from_dict(json.loads(line)))
            except (json.JSONDecodeError, DataError, KeyError) as exc:
                raise DataError(f"{path}:{line_no}: bad annotation: {exc}") from exc
    return annotations


def write_annotations_jsonl(annotations: Iterable[ErrorAnnotation], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for ann in annotations:
            f.write(json.dumps(annotation_to_dict(ann), ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


# ---------------------------------------------------------------------------
# Score matrices (TSV)

_MATRIX_HEADER = ("system", "lang_pair", "doc_id", "seg_id", "score")


def write_score_matrix(matrix: ScoreMatrix, path) -> None:
    """TSV with one row per present (system, segment) cell, sorted."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(_MATRIX_HEADER)
        for i, system in enumerate(matrix.systems):
            for j, seg in enumerate(matrix.segments):
                v = matrix.values[i, j]
                if math.isnan(v):
                    continue
                writer.writerow([system, seg.lang_pair, seg.doc_id, seg.seg_id, repr(float(v))])


def load_score_matrix(path, negate: bool = False) -> ScoreMatrix:
    """Read a score-matrix TSV; ``negate`` flips stored positive penalty sums."""
    entries: list[tuple[ItemKey, str, float]] = []
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t")
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != list(_MATRIX_HEADER):
            raise DataError(f"{path}: expected header {_MATRIX_HEADER}")
        for line_no, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise DataError(f"{path}:{line_no}: expected 5 columns, got {len(row)}")
            system, lp, doc, seg, score = row
            try:
                value = float(score)
                item = ItemKey(lp, doc, int(seg))
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from exc
            entries.append((item, system, -value if negate else value))
    if not entries:
        raise DataError(f"{path}: no score rows")
    return build_score_matrix(entries)


# ---------------------------------------------------------------------------
# Segments and prompts (JSON Lines)


def segment_to_dict(seg: Segment) -> dict:
    d = {
        "lang_pair": seg.lang_pair,
        "system_id": seg.system_id,
        "doc_id": seg.doc_id,
        "seg_id": seg.seg_id,
        "source": seg.source,
        "hypothesis": seg.hypothesis,
    }
    if seg.reference is not None:
        d["reference"] = seg.reference
    return d


def segment_from_dict(obj: dict) -> Segment:
    key = _key_from_obj(obj)
    return Segment(
        lang_pair=key.lang_pair,
        system_id=key.system_id,
        doc_id=key.doc_id,
        seg_id=key.seg_id,
        source=str(obj.get("source", "")),
        hypothesis=str(obj["hypothesis"]),
        reference=None if obj.get("reference") is None else str(obj["reference"]),
    )


def load_segments_jsonl(path) -> list[Segment]:
    segments = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                segments.append(segment_from_dict(json.loads(line)))
            except (json.JSONDecodeError, DataError, KeyError) as exc:
                raise DataError(f"{path}:{line_no}: bad segment: {exc}") from exc
    return segments


def write_segments_jsonl(segments: Iterable[Segment], path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for seg in segments:
            f.write(json.dumps(segment_to_dict(seg), ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


def write_prompts_jsonl(prompts: Iterable, path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for p in prompts:
            obj = {
                "lang_pair": p.key.lang_pair,
                "system_id": p.key.system_id,
                "doc_id": p.key.doc_id,
                "seg_id": p.key.seg_id,
                "mode": p.mode.value,
                "template_id": p.template_id,
                "fingerprint": p.fingerprint,
                "text": p.text,
            }
            f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


def load_prompts_jsonl(path) -> list:
    from .prompts import RenderedPrompt
    from .types import MaterialsMode

    prompts = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                prompts.append(
                    RenderedPrompt(
                        text=obj["text"],
                        fingerprint=obj["fingerprint"],
                        key=_key_from_obj(obj),
                        mode=MaterialsMode.parse(obj.get("mode", "src")),
                        template_id=obj.get("template_id", ""),
                    )
                )
            except (json.JSONDecodeError, DataError, KeyError) as exc:
                raise DataError(f"{path}:{line_no}: bad prompt record: {exc}") from exc
    return prompts


def canonical_json(obj) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
