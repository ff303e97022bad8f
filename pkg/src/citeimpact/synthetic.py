"""Synthetic corpus generator for end-to-end tests and demos.

A configurable fraction of papers is "planted" as future top performers:
their abstracts carry each signal token with high probability, and their
citation series are drawn from a higher-rate regime so the planted set is
exactly the per-cohort top-q set.
"""

from __future__ import annotations

import numpy as np

from .citations import CitationSeries
from .corpus import PaperRecord, Section

SIGNAL_TOKENS = [f"signaltok{i}" for i in range(20)]
FILLER_TOKENS = [f"filler{i}" for i in range(200)]


def make_synthetic_corpus(n_papers: int = 2000, top_fraction: float = 0.20,
                          p_signal_top: float = 0.9, p_signal_rest: float = 0.3,
                          years=(2012, 2020), horizon_year: int = 2023,
                          seed: int = 0, abstract_len: int = 60):
    """Returns (records, series_by_doi, planted_top_dois)."""
    rng = np.random.default_rng(seed)
    year_list = list(range(years[0], years[1] + 1))
    records, series = [], {}
    planted = set()

    # equal-sized cohorts, exact top_fraction planted per cohort
    cohort_of = [year_list[i % len(year_list)] for i in range(n_papers)]
    per_year: dict[int, list[int]] = {}
    for i, y in enumerate(cohort_of):
        per_year.setdefault(y, []).append(i)
    is_top = np.zeros(n_papers, dtype=bool)
    for y, idxs in per_year.items():
        k = int(round(top_fraction * len(idxs)))
        chosen = rng.choice(len(idxs), size=k, replace=False)
        for c in chosen:
            is_top[idxs[c]] = True

    for i in range(n_papers):
        doi = f"10.9999/synth.{i:05d}"
        year = cohort_of[i]
        top = bool(is_top[i])
        if top:
            planted.add(doi)
        p = p_signal_top if top else p_signal_rest
        words = []
        for tok in SIGNAL_TOKENS:
            if rng.random() < p:
                words.append(tok)
        words.extend(rng.choice(FILLER_TOKENS, size=abstract_len))
        rng.shuffle(words)
        abstract = " ".join(words)
        body_words = rng.choice(FILLER_TOKENS, size=abstract_len)
        records.append(PaperRecord(
            doi=doi, pub_year=year, title=f"Synthetic paper {i}",
            abstract=abstract,
            sections=(
                Section(heading="Introduction", text=abstract, order=0),
                Section(heading="Methods", text=" ".join(body_words), order=1),
            ),
            fields=("Synthetic",),
        ))
        # higher citation regime for planted papers; gap large enough that
        # per-cohort top-q by count recovers the planted set exactly
        base = 100 if top else 10
        counts = {
            y: int(base + rng.integers(0, 5))
            for y in range(year, horizon_year + 1)
        }
        series[doi] = CitationSeries(doi=doi, counts_by_year=counts, retrieved_at="")
    return records, series, planted


GRADED_TOKENS = [f"graded{i}" for i in range(80)]


def make_graded_corpus(n_papers: int = 3000, years=(2012, 2020),
                       horizon_year: int = 2023, seed: int = 0,
                       abstract_len: int = 40):
    """Corpus whose text signal tracks citation propensity continuously.

    Each paper gets a latent quality u in [0, 1]; its abstract carries each
    graded token with probability 0.2 + 0.7*u and its yearly citations scale
    with u, so the top-q set is text-predictable for any q.
    """
    rng = np.random.default_rng(seed)
    year_list = list(range(years[0], years[1] + 1))
    records, series = [], {}
    quality = {}
    for i in range(n_papers):
        doi = f"10.9999/graded.{i:05d}"
        year = year_list[i % len(year_list)]
        u = float(rng.random())
        quality[doi] = u
        p = 0.2 + 0.7 * u
        words = [tok for tok in GRADED_TOKENS if rng.random() < p]
        words.extend(rng.choice(FILLER_TOKENS, size=abstract_len))
        rng.shuffle(words)
        abstract = " ".join(words)
        records.append(PaperRecord(
            doi=doi, pub_year=year, title=f"Graded paper {i}", abstract=abstract,
            sections=(Section(heading="Body", text=abstract, order=0),),
            fields=("Synthetic",),
        ))
        rate = 5 + 95 * u
        counts = {
            y: int(round(rate + rng.normal(0, 2)))
            for y in range(year, horizon_year + 1)
        }
        counts = {y: max(0, c) for y, c in counts.items()}
        series[doi] = CitationSeries(doi=doi, counts_by_year=counts, retrieved_at="")
    return records, series, quality
