"""Corpus parsing, validation and summary statistics.

Records arrive either as JSON-lines (one paper object per line) or as a
directory of section-tagged XML files (one file per paper). No text
normalization happens here; tokenization lives in the embedding module.
"""

from __future__ import annotations

import json
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_YEAR_RANGE = (2012, 2020)


class CorpusError(Exception):
    """Unrecoverable container-level parse failure."""


class SectionTagError(CorpusError):
    """Unbalanced or malformed section markup; carries the byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Section:
    heading: str
    text: str
    order: int


@dataclass(frozen=True)
class PaperRecord:
    doi: str
    pub_year: int
    title: str
    abstract: str
    sections: tuple[Section, ...]
    fields: tuple[str, ...] = ()


@dataclass
class ParseReport:
    parsed: int = 0
    excluded: int = 0
    reasons: list[dict] = field(default_factory=list)

    def add(self, where, reason):
        self.excluded += 1
        self.reasons.append({"where": where, "reason": reason})

    def to_json(self):
        return json.dumps(
            {"parsed": self.parsed, "excluded": self.excluded, "reasons": self.reasons},
            ensure_ascii=False,
        )


@dataclass
class CohortStats:
    papers_per_year: dict[int, int]
    papers_per_field: dict[str, int]


def segment_sections(raw: str) -> list[Section]:
    """Split section-tagged full text into ordered Sections.

    One Section per top-level ``<sec>`` element, document order preserved.
    An optional leading ``<title>`` child becomes the heading; all other
    markup is flattened to its character data. No lowercasing, no stop-word
    removal.
    """
    try:
        root = ET.fromstring(f"<__doc__>{raw}</__doc__>")
    except ET.ParseError as exc:
        # expat positions are (line, column); recover a byte offset
        line, col = exc.position
        offset = sum(len(l.encode()) + 1 for l in raw.splitlines()[: line - 1]) + col
        raise SectionTagError(f"malformed section markup: {exc}", offset) from exc

    sections = []
    for elem in root:
        if elem.tag != "sec":
            continue
        heading = ""
        parts = [elem.text or ""]
        for child in elem:
            if child.tag == "title" and not heading:
                heading = "".join(child.itertext()).strip()
            else:
                parts.append("".join(child.itertext()))
            parts.append(child.tail or "")
        text = "".join(parts).strip()
        sections.append(Section(heading=heading, text=text, order=len(sections)))
    return sections


def _record_from_dict(obj: dict) -> PaperRecord:
    doi = obj.get("doi")
    if not doi or not isinstance(doi, str):
        raise ValueError("missing or empty doi")
    year = obj.get("year", obj.get("pub_year"))
    if not isinstance(year, int):
        raise ValueError("missing or non-integer year")
    sections = tuple(
        Section(heading=s.get("heading", ""), text=s["text"], order=i)
        for i, s in enumerate(obj.get("sections", []))
    )
    return PaperRecord(
        doi=doi,
        pub_year=year,
        title=obj.get("title", ""),
        abstract=obj.get("abstract", ""),
        sections=sections,
        fields=tuple(obj.get("fields", [])),
    )


def record_to_dict(r: PaperRecord) -> dict:
    return {
        "doi": r.doi,
        "year": r.pub_year,
        "title": r.title,
        "abstract": r.abstract,
        "sections": [{"heading": s.heading, "text": s.text} for s in r.sections],
        "fields": list(r.fields),
    }


def _parse_jsonl(path: Path, report: ParseReport) -> list[PaperRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(_record_from_dict(obj))
                report.parsed += 1
            except (ValueError, KeyError, TypeError) as exc:
                report.add(f"line {lineno}", str(exc))
    return records


def _parse_xml_dir(path: Path, report: ParseReport) -> list[PaperRecord]:
    records = []
    for name in sorted(os.listdir(path)):
        if not name.endswith(".xml"):
            continue
        fpath = path / name
        try:
            root = ET.parse(fpath).getroot()
            body = root.find("body")
            inner = (
                "".join(ET.tostring(c, encoding="unicode") for c in body)
                if body is not None
                else ""
            )
            records.append(
                _record_from_dict(
                    {
                        "doi": root.findtext("doi"),
                        "year": int(root.findtext("year", default="0")),
                        "title": root.findtext("title", default=""),
                        "abstract": root.findtext("abstract", default=""),
                        "sections": [
                            {"heading": s.heading, "text": s.text}
                            for s in segment_sections(inner)
                        ],
                        "fields": [f.text for f in root.findall("field") if f.text],
                    }
                )
            )
            report.parsed += 1
        except (ET.ParseError, ValueError, SectionTagError) as exc:
            report.add(name, str(exc))
    return records


def parse_corpus(path, format: str = "json-lines") -> tuple[list[PaperRecord], ParseReport]:
    """Parse a corpus container; schema failures go to the report, not /dev/null."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"unreadable path: {path}")
    report = ParseReport()
    if format == "json-lines":
        return _parse_jsonl(path, report), report
    if format == "xml-directory":
        if not path.is_dir():
            raise CorpusError(f"xml-directory format requires a directory: {path}")
        return _parse_xml_dir(path, report), report
    raise CorpusError(f"unknown corpus format: {format}")


def validate_record(r: PaperRecord, year_range=DEFAULT_YEAR_RANGE):
    """Return (True, None) or (False, reason); the first failing rule names the reason."""
    if not r.abstract:
        return False, "missing-abstract"
    if not r.sections:
        return False, "missing-body"
    if not (year_range[0] <= r.pub_year <= year_range[1]):
        return False, "year-out-of-range"
    return True, None


def corpus_stats(records) -> CohortStats:
    per_year: dict[int, int] = {}
    per_field: dict[str, int] = {}
    for r in records:
        per_year[r.pub_year] = per_year.get(r.pub_year, 0) + 1
        for f in r.fields:
            per_field[f] = per_field.get(f, 0) + 1
    return CohortStats(papers_per_year=per_year, papers_per_field=per_field)


def write_corpus(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(record_to_dict(r), ensure_ascii=False) + "\n")
