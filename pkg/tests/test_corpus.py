import json

import pytest

from citeimpact.corpus import (PaperRecord, Section, SectionTagError,
                               corpus_stats, parse_corpus, record_to_dict,
                               segment_sections, validate_record, write_corpus)


def make_record(doi="10.1/a", year=2015, abstract="abs", n_sections=1, fields=()):
    sections = tuple(
        Section(heading=f"h{i}", text=f"text {i}", order=i) for i in range(n_sections)
    )
    return PaperRecord(doi=doi, pub_year=year, title="t", abstract=abstract,
                       sections=sections, fields=tuple(fields))


class TestParseCorpus:
    def test_empty_file(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text("")
        records, report = parse_corpus(p)
        assert records == []
        assert report.parsed == 0 and report.excluded == 0

    def test_single_record_sections_ordered(self, tmp_path):
        p = tmp_path / "c.jsonl"
        obj = {"doi": "10.1/x", "year": 2014, "title": "t", "abstract": "a",
               "sections": [{"heading": "A", "text": "1"},
                            {"heading": "B", "text": "2"},
                            {"heading": "C", "text": "3"}]}
        p.write_text(json.dumps(obj) + "\n")
        records, report = parse_corpus(p)
        assert len(records) == 1
        assert [s.order for s in records[0].sections] == [0, 1, 2]

    def test_bad_record_reported_with_line(self, tmp_path):
        p = tmp_path / "c.jsonl"
        good = json.dumps({"doi": "10.1/x", "year": 2014, "abstract": "a", "sections": []})
        bad = json.dumps({"year": 2014, "abstract": "a"})  # no doi
        p.write_text(good + "\n" + good.replace("10.1/x", "10.1/y") + "\n" + bad + "\n")
        records, report = parse_corpus(p)
        assert len(records) == 2
        assert report.excluded == 1
        assert report.reasons[0]["where"] == "line 3"

    def test_roundtrip_identity(self, tmp_path):
        records = [make_record(doi=f"10.1/{i}", n_sections=2, fields=["F"]) for i in range(3)]
        p = tmp_path / "c.jsonl"
        write_corpus(records, p)
        back, _ = parse_corpus(p)
        assert back == records

    def test_unreadable_path(self, tmp_path):
        with pytest.raises(Exception, match="unreadable"):
            parse_corpus(tmp_path / "nope.jsonl")


class TestSegmentSections:
    def test_single_section(self):
        out = segment_sections("<sec><title>A</title>x</sec>")
        assert out == [Section(heading="A", text="x", order=0)]

    def test_two_sections_ordered(self):
        out = segment_sections(
            "<sec><title>A</title>one</sec><sec><title>B</title>two</sec>"
        )
        assert [s.order for s in out] == [0, 1]
        assert [s.heading for s in out] == ["A", "B"]

    def test_nested_markup_flattened(self):
        # hand-stripped fixture: concatenated character data
        raw = "<sec><title>T</title>alpha <i>beta</i> gamma <b>d<i>e</i></b>f</sec>"
        out = segment_sections(raw)
        assert out[0].text == "alpha beta gamma def"

    def test_unbalanced_tags_error_names_offset(self):
        with pytest.raises(SectionTagError) as exc:
            segment_sections("<sec>unclosed")
        assert exc.value.offset >= 0


class TestValidateRecord:
    def test_full_record_valid(self):
        assert validate_record(make_record()) == (True, None)

    def test_missing_abstract(self):
        ok, reason = validate_record(make_record(abstract=""))
        assert not ok and reason == "missing-abstract"

    def test_missing_body(self):
        ok, reason = validate_record(make_record(n_sections=0))
        assert not ok and reason == "missing-body"

    def test_year_out_of_range(self):
        ok, reason = validate_record(make_record(year=2011))
        assert not ok and reason == "year-out-of-range"


class TestCorpusStats:
    def test_empty(self):
        stats = corpus_stats([])
        assert stats.papers_per_year == {} and stats.papers_per_field == {}

    def test_hand_count(self):
        records = [make_record(doi="10.1/a", year=2014),
                   make_record(doi="10.1/b", year=2014),
                   make_record(doi="10.1/c", year=2015)]
        stats = corpus_stats(records)
        assert stats.papers_per_year == {2014: 2, 2015: 1}

    def test_multi_tagged_fields_may_exceed_corpus_size(self):
        records = [make_record(doi="10.1/a", fields=["X", "Y"]),
                   make_record(doi="10.1/b", fields=["X"])]
        stats = corpus_stats(records)
        assert stats.papers_per_field == {"X": 2, "Y": 1}
        assert sum(stats.papers_per_field.values()) > len(records)


def test_xml_directory_mode(tmp_path):
    (tmp_path / "p1.xml").write_text(
        "<paper><doi>10.1/x</doi><year>2013</year><title>T</title>"
        "<abstract>A</abstract><field>F</field>"
        "<body><sec><title>S</title>body text</sec></body></paper>"
    )
    records, report = parse_corpus(tmp_path, format="xml-directory")
    assert report.parsed == 1
    r = records[0]
    assert r.doi == "10.1/x" and r.pub_year == 2013
    assert r.sections[0].text == "body text"
    assert r.fields == ("F",)
