"""Domain types and file ingestion."""

from __future__ import annotations

import random

import numpy as np
import pytest

from mqmjudge import (
    DataError,
    ErrorSpan,
    ItemKey,
    Segment,
    SegmentKey,
    Severity,
    build_score_matrix,
    normalize_category,
)
from mqmjudge import dataio

MQM_HEADER = "system\tdoc\tseg_id\trater\tsource\ttarget\tcategory\tseverity\n"


def write_tsv(tmp_path, rows, name="ratings.ende.tsv", header=MQM_HEADER):
    path = tmp_path / name
    path.write_text(header + "".join(r + "\n" for r in rows), encoding="utf-8")
    return path


class TestNormalizeCategory:
    def test_known_tops_pass_through(self):
        assert normalize_category("accuracy/mistranslation") == "accuracy/mistranslation"
        assert normalize_category("Fluency/Punctuation") == "fluency/Punctuation"
        assert normalize_category("non-translation!") == "non-translation"

    def test_unknown_top_goes_under_other(self):
        assert normalize_category("locale convention/punctuation") == "other/locale convention/punctuation"

    def test_idempotent(self):
        rng = random.Random(1)
        samples = ["accuracy/x", "weird thing/sub", "STYLE", "no error", "other/anything"]
        for s in samples:
            once = normalize_category(s)
            assert normalize_category(once) == once


class TestDomainTypes:
    def test_segment_requires_hypothesis(self):
        with pytest.raises(DataError):
            Segment("en-de", "sysA", "d0", 0, source="s", hypothesis="")

    def test_error_span_validates_taxonomy(self):
        with pytest.raises(DataError):
            ErrorSpan(Severity.MAJOR, "madeup/cat", "x")

    def test_segment_key_item(self):
        key = SegmentKey("en-de", "sysA", "d0", 4)
        assert key.item == ItemKey("en-de", "d0", 4)


class TestLoadMqmTsv:
    def test_basic_grouping_and_severities(self, tmp_path):
        rows = [
            "sysA\tdoc1\t1\tr1\tsrc one\tDas <v>Haus</v> ist rot.\taccuracy/mistranslation\tmajor",
            "sysA\tdoc1\t1\tr1\tsrc one\tDas Haus ist <v>rot.</v>\tfluency/punctuation\tMinor",
            "sysA\tdoc1\t2\tr1\tsrc two\tAlles gut.\tno-error\tno-error",
            "sysB\tdoc1\t1\tr1\tsrc one\tHaus rot.\tnon-translation\tcritical",
        ]
        result = dataio.load_mqm_tsv(write_tsv(tmp_path, rows))
        assert not result.errors
        by_key = {(a.key, a.rater): a for a in result.annotations}
        a = by_key[(SegmentKey("en-de", "sysA", "doc1", 1), "r1")]
        assert [(s.severity, s.category, s.span) for s in a.spans] == [
            (Severity.MAJOR, "accuracy/mistranslation", "Haus"),
            (Severity.MINOR, "fluency/punctuation", "rot."),
        ]
        empty = by_key[(SegmentKey("en-de", "sysA", "doc1", 2), "r1")]
        assert empty.spans == ()
        segments = {s.key: s for s in result.segments}
        assert segments[SegmentKey("en-de", "sysA", "doc1", 1)].hypothesis == "Das Haus ist rot."

    def test_two_raters_two_annotations(self, tmp_path):
        rows = [
            "sysA\tdoc1\t1\tr1\ts\tt\taccuracy\tmajor",
            "sysA\tdoc1\t1\tr2\ts\tt\tfluency\tminor",
        ]
        result = dataio.load_mqm_tsv(write_tsv(tmp_path, rows))
        raters = sorted(a.rater for a in result.annotations)
        assert raters == ["r1", "r2"]

    def test_unknown_severity_rejected_row_keeps_loading(self, tmp_path):
        rows = [
            "sysA\tdoc1\t1\tr1\ts\tt\taccuracy\tcatastrophic",
            "sysA\tdoc1\t2\tr1\ts\tt\taccuracy\tmajor",
        ]
        result = dataio.load_mqm_tsv(write_tsv(tmp_path, rows))
        assert len(result.errors) == 1
        assert "line 2" in str(result.errors[0])
        assert any(a.key.seg_id == 2 and a.spans for a in result.annotations)
        # a rejected row must not fabricate an empty (perfect) annotation
        assert not any(a.key.seg_id == 1 for a in result.annotations)

    def test_malformed_seg_id_collected(self, tmp_path):
        rows = ["sysA\tdoc1\tnotanint\tr1\ts\tt\taccuracy\tmajor"]
        result = dataio.load_mqm_tsv(write_tsv(tmp_path, rows))
        assert len(result.errors) == 1

    def test_header_keyed_not_positional(self, tmp_path):
        header = "severity\tcategory\ttarget\tsource\trater\tseg_id\tdoc\tsystem\n"
        rows = ["major\taccuracy\tt\ts\tr1\t1\tdoc1\tsysA"]
        result = dataio.load_mqm_tsv(write_tsv(tmp_path, rows, header=header))
        assert len(result.annotations) == 1
        assert result.annotations[0].spans[0].severity is Severity.MAJOR

    def test_missing_columns_raise(self, tmp_path):
        path = tmp_path / "bad.ende.tsv"
        path.write_text("system\tdoc\n", encoding="utf-8")
        with pytest.raises(DataError):
            dataio.load_mqm_tsv(path)

    def test_lang_pair_sources(self, tmp_path):
        rows = ["sysA\tdoc1\t1\tr1\ts\tt\taccuracy\tmajor"]
        result = dataio.load_mqm_tsv(write_tsv(tmp_path, rows, name="mqm.generalMT.en-de.tsv"))
        assert result.annotations[0].key.lang_pair == "en-de"
        result = dataio.load_mqm_tsv(write_tsv(tmp_path, rows, name="nolang.tsv"), lang_pair="ja-zh")
        assert result.annotations[0].key.lang_pair == "ja-zh"
        with pytest.raises(DataError):
            dataio.load_mqm_tsv(write_tsv(tmp_path, rows, name="nolang.tsv"))

    def test_idempotent_load(self, tmp_path):
        rng = random.Random(2)
        rows = []
        for i in range(30):
            sev = rng.choice(["major", "minor", "critical", "no-error"])
            cat = "no-error" if sev == "no-error" else rng.choice(["accuracy/omission", "fluency"])
            rows.append(f"sys{rng.randint(0,2)}\tdoc{rng.randint(0,1)}\t{i % 7}\tr{rng.randint(1,2)}\tsrc\tword <v>mark</v> end\t{cat}\t{sev}")
        path = write_tsv(tmp_path, rows)
        r1 = dataio.load_mqm_tsv(path)
        r2 = dataio.load_mqm_tsv(path)
        assert r1.annotations == r2.annotations
        assert r1.segments == r2.segments

    def test_all_severities_in_closed_set(self, tmp_path):
        rows = [
            "sysA\tdoc1\t1\tr1\ts\tt\taccuracy\tMAJOR",
            "sysA\tdoc1\t2\tr1\ts\tt\taccuracy\tCritical",
            "sysA\tdoc1\t3\tr1\ts\tt\taccuracy\tminor",
        ]
        result = dataio.load_mqm_tsv(write_tsv(tmp_path, rows))
        for a in result.annotations:
            for s in a.spans:
                assert s.severity in (Severity.CRITICAL, Severity.MAJOR, Severity.MINOR)


class TestJudgeJsonl:
    def test_round_trip_and_think_split(self, tmp_path):
        path = tmp_path / "records.jsonl"
        path.write_text(
            '{"lang_pair": "en-de", "system_id": "sysA", "doc_id": "d0", "seg_id": 1, '
            '"completion": "<think>hmm</think>\\nCritical:\\nno-error", "extra_field": 1}\n'
            "\n"
            '{"lang_pair": "en-de", "system_id": "sysA", "doc_id": "d0", "seg_id": 1, '
            '"completion": "second run"}\n',
            encoding="utf-8",
        )
        records = dataio.load_judge_jsonl(path)
        assert len(records) == 2
        assert records[0].think == "hmm"
        assert records[0].answer.startswith("Critical:")
        assert records[0].run_index == 0
        assert records[1].run_index == 1  # duplicate key tagged with run index

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert dataio.load_judge_jsonl(path) == []

    def test_invalid_json_line_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"lang_pair": "en-de"\n', encoding="utf-8")
        with pytest.raises(DataError) as exc_info:
            dataio.load_judge_jsonl(path)
        assert ":1:" in str(exc_info.value)

    def test_missing_key_field_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"completion": "x"}\n', encoding="utf-8")
        with pytest.raises(DataError):
            dataio.load_judge_jsonl(path)

    def test_usage_and_error_records(self, tmp_path):
        path = tmp_path / "records.jsonl"
        path.write_text(
            '{"lang_pair": "en-de", "system_id": "a", "doc_id": "d", "seg_id": 0, '
            '"completion": "x", "usage": {"prompt_tokens": 10, "completion_tokens": 20}}\n'
            '{"lang_pair": "en-de", "system_id": "a", "doc_id": "d", "seg_id": 1, '
            '"error": "HTTP 500", "fingerprint": "ff"}\n',
            encoding="utf-8",
        )
        records = dataio.load_judge_jsonl(path)
        assert records[0].usage.completion_tokens == 20
        assert records[1].error == "HTTP 500"


class TestBuildScoreMatrix:
    def test_dense_and_missing(self):
        entries = [
            (ItemKey("en-de", "d0", 0), "sysB", -1.0),
            (ItemKey("en-de", "d0", 0), "sysA", -2.0),
            (ItemKey("en-de", "d0", 1), "sysA", 0.0),
            (ItemKey("en-de", "d0", 1), "sysB", -3.0),
        ]
        m = build_score_matrix(entries)
        assert m.systems == ("sysA", "sysB")
        assert m.cell("sysA", ItemKey("en-de", "d0", 0)) == -2.0
        sparse = build_score_matrix(entries[:3])
        assert sparse.cell("sysB", ItemKey("en-de", "d0", 1)) is None

    def test_duplicates_averaged(self):
        item = ItemKey("en-de", "d0", 0)
        m = build_score_matrix([(item, "x", 1.0), (item, "x", 3.0)])
        assert m.cell("x", item) == 2.0

    def test_order_independence(self):
        rng = random.Random(3)
        entries = [
            (ItemKey("en-de", f"d{rng.randint(0,2)}", rng.randint(0, 5)), f"sys{rng.randint(0,2)}",
             float(rng.randint(-5, 0)))
            for _ in range(40)
        ]
        m1 = build_score_matrix(entries)
        shuffled = entries[:]
        rng.shuffle(shuffled)
        m2 = build_score_matrix(shuffled)
        assert m1.systems == m2.systems and m1.segments == m2.segments
        assert np.array_equal(m1.values, m2.values, equal_nan=True)

    def test_matrix_tsv_round_trip(self, tmp_path):
        rng = random.Random(4)
        entries = [
            (ItemKey("en-de", "d0", j), f"sys{i}", float(rng.randint(-9, 0)))
            for i in range(3)
            for j in range(5)
            if rng.random() > 0.2
        ]
        m = build_score_matrix(entries)
        path = tmp_path / "matrix.tsv"
        dataio.write_score_matrix(m, path)
        loaded = dataio.load_score_matrix(path)
        assert loaded.systems == m.systems
        assert loaded.segments == m.segments
        assert np.array_equal(loaded.values, m.values, equal_nan=True)

    def test_negate_on_load(self, tmp_path):
        m = build_score_matrix([(ItemKey("en-de", "d0", 0), "x", 5.0)])
        path = tmp_path / "matrix.tsv"
        dataio.write_score_matrix(m, path)
        loaded = dataio.load_score_matrix(path, negate=True)
        assert loaded.cell("x", ItemKey("en-de", "d0", 0)) == -5.0


class TestAnnotationsJsonl:
    def test_round_trip(self, tmp_path):
        rng = random.Random(5)
        from conftest import random_annotation

        annotations = [random_annotation(rng, rater=f"r{i % 2}") for i in range(25)]
        path = tmp_path / "annotations.jsonl"
        dataio.write_annotations_jsonl(annotations, path)
        loaded = dataio.load_annotations_jsonl(path)
        assert loaded == annotations


class TestScoreMatrixType:
    def test_transform_requires_positive_alpha(self):
        m = build_score_matrix([(ItemKey("en-de", "d0", 0), "x", -1.0)])
        with pytest.raises(DataError):
            m.transform(-1.0, 0.0)

    def test_restrict_language(self):
        entries = [
            (ItemKey("en-de", "d0", 0), "x", -1.0),
            (ItemKey("ja-zh", "d0", 0), "x", -2.0),
        ]
        m = build_score_matrix(entries)
        de = m.restrict_language("en-de")
        assert de.segments == (ItemKey("en-de", "d0", 0),)
        with pytest.raises(DataError):
            m.restrict_language("xx-yy")

    def test_values_are_read_only(self):
        m = build_score_matrix([(ItemKey("en-de", "d0", 0), "x", -1.0)])
        with pytest.raises(ValueError):
            m.values[0, 0] = 5.0

    def test_system_means_fixed_order(self):
        m = build_score_matrix(
            [
                (ItemKey("en-de", "d0", 0), "x", -1.0),
                (ItemKey("en-de", "d0", 1), "x", -2.0),
                (ItemKey("en-de", "d0", 0), "y", 0.0),
            ]
        )
        means = m.system_means()
        assert means["x"] == -1.5 and means["y"] == 0.0
