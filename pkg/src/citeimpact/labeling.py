"""Citation-count targets: ACC/YCC per years-ahead offset and top-q binary labels.

Papers are only compared within their publication-year cohort at a fixed
years-ahead offset. t = 0 is the publication calendar year. Ties at the
top-q boundary break by ascending DOI so labels are reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

from .citations import CitationSeries


@dataclass
class LabelTable:
    metric: str  # "ACC" | "YCC"
    q: float
    # (doi, years_ahead) -> (count, label)
    entries: dict[tuple[str, int], tuple[int, int]] = field(default_factory=dict)
    cohort: dict[int, list[str]] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)  # DOIs without a series

    def labels_at(self, years_ahead: int) -> dict[str, int]:
        return {
            doi: lab
            for (doi, t), (_, lab) in self.entries.items()
            if t == years_ahead
        }

    def horizons(self) -> list[int]:
        return sorted({t for (_, t) in self.entries})


def ycc_at(series: CitationSeries, pub_year: int, years_ahead: int) -> int:
    year = pub_year + years_ahead
    if year not in series.counts_by_year:
        raise ValueError(f"year {year} beyond series horizon for {series.doi}")
    return series.counts_by_year[year]


def acc_at(series: CitationSeries, pub_year: int, years_ahead: int) -> int:
    return sum(ycc_at(series, pub_year, t) for t in range(years_ahead + 1))


def top_q_labels(counts: dict[str, int], q: float) -> dict[str, int]:
    """Label exactly round(q*n) top-count DOIs 1; boundary ties break by DOI."""
    if not counts:
        raise ValueError("counts must be non-empty")
    if not 0 < q < 1:
        raise ValueError(f"q must be in (0,1), got {q}")
    k = math.floor(q * len(counts) + 0.5)  # half-up
    ranked = sorted(counts, key=lambda d: (-counts[d], d))
    top = set(ranked[:k])
    return {doi: int(doi in top) for doi in counts}


def build_label_table(records, series_by_doi, metric: str, q: float,
                      horizons, horizon_year: int) -> LabelTable:
    """Compute per-(cohort, t) counts and labels for every feasible cell."""
    if metric not in ("ACC", "YCC"):
        raise ValueError(f"metric must be ACC or YCC, got {metric!r}")
    count_fn = acc_at if metric == "ACC" else ycc_at
    table = LabelTable(metric=metric, q=q)

    cohorts: dict[int, list] = {}
    for r in records:
        if r.doi not in series_by_doi:
            table.excluded.append(r.doi)
            continue
        cohorts.setdefault(r.pub_year, []).append(r)
    for year in sorted(cohorts):
        table.cohort[year] = [r.doi for r in cohorts[year]]

    for year, cohort in sorted(cohorts.items()):
        for t in horizons:
            if year + t > horizon_year:
                continue
            counts = {
                r.doi: count_fn(series_by_doi[r.doi], year, t) for r in cohort
            }
            labels = top_q_labels(counts, q)
            for doi in counts:
                table.entries[(doi, t)] = (counts[doi], labels[doi])
    return table


def write_label_csv(table: LabelTable, path):
    pub_year_of = {
        doi: year for year, dois in table.cohort.items() for doi in dois
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["doi", "pub_year", "metric", "q", "years_ahead", "count", "label"])
        for (doi, t), (count, label) in sorted(table.entries.items()):
            w.writerow([doi, pub_year_of[doi], table.metric, table.q, t, count, label])


def read_label_csv(path) -> LabelTable:
    table = None
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if table is None:
                table = LabelTable(metric=row["metric"], q=float(row["q"]))
            doi, year = row["doi"], int(row["pub_year"])
            table.entries[(doi, int(row["years_ahead"]))] = (
                int(row["count"]),
                int(row["label"]),
            )
            if doi not in table.cohort.setdefault(year, []):
                table.cohort[year].append(doi)
    if table is None:
        raise ValueError(f"empty label table: {path}")
    return table
