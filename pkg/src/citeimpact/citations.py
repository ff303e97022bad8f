"""Per-DOI citation time series from the OpenAlex works API, with a local cache.

Cache format: JSON-lines, one series per line, UTF-8, LF-terminated,
append-only. Env vars: IMPACT_OPENALEX_MAILTO (polite pool),
IMPACT_HTTP_TIMEOUT_MS.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import requests

OPENALEX_WORKS_URL = "https://api.openalex.org/works/doi:{doi}"
DEFAULT_HORIZON_YEAR = 2023
_DOI_RE = re.compile(r"^10\.\d+/\S+$")


class CitationError(Exception):
    pass


class DoiNotFoundError(CitationError):
    """DOI unknown upstream (or syntactically invalid)."""


class RateLimitedError(CitationError):
    """Still rate-limited after all retries."""


class CacheCorruptionError(CitationError):
    def __init__(self, path, lineno, cause):
        super().__init__(f"corrupt cache line {lineno} in {path}: {cause}")
        self.lineno = lineno


@dataclass(frozen=True)
class CitationSeries:
    doi: str
    counts_by_year: dict[int, int]
    retrieved_at: str  # ISO-8601 UTC


def normalize_series(s: CitationSeries, pub_year: int, horizon_year: int) -> CitationSeries:
    """Densify over [pub_year, horizon_year]: missing years 0, out-of-range dropped."""
    if horizon_year < pub_year:
        raise ValueError(f"horizon_year {horizon_year} < pub_year {pub_year}")
    counts = {
        y: s.counts_by_year.get(y, 0) for y in range(pub_year, horizon_year + 1)
    }
    return replace(s, counts_by_year=counts)


def _now_iso():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class OpenAlexClient:
    """Thin client around the works endpoint with retry/backoff and rate ceiling.

    ``session`` is injectable for tests (anything with a ``get`` method).
    """

    def __init__(self, session=None, rate_per_second: float = 10.0,
                 mailto: str | None = None, timeout_ms: int | None = None,
                 max_attempts: int = 3, backoff_base: float = 0.5, sleep=time.sleep):
        self.session = session or requests.Session()
        self.min_interval = 1.0 / rate_per_second if rate_per_second > 0 else 0.0
        self.mailto = mailto if mailto is not None else os.environ.get("IMPACT_OPENALEX_MAILTO")
        timeout_ms = timeout_ms or int(os.environ.get("IMPACT_HTTP_TIMEOUT_MS", "30000"))
        self.timeout = timeout_ms / 1000.0
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.sleep = sleep
        self._last_request = 0.0

    def _throttle(self):
        wait = self._last_request + self.min_interval - time.monotonic()
        if wait > 0:
            self.sleep(wait)
        self._last_request = time.monotonic()

    def fetch_citation_series(self, doi: str, horizon_year: int = DEFAULT_HORIZON_YEAR) -> CitationSeries:
        if not _DOI_RE.match(doi):
            raise DoiNotFoundError(f"syntactically invalid DOI: {doi!r}")
        url = OPENALEX_WORKS_URL.format(doi=doi)
        params = {"select": "doi,publication_year,counts_by_year"}
        if self.mailto:
            params["mailto"] = self.mailto
        last_exc = None
        for attempt in range(self.max_attempts):
            self._throttle()
            try:
                resp = self.session.get(url, params=params, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                self.sleep(self.backoff_base * 2**attempt)
                continue
            if resp.status_code == 404:
                raise DoiNotFoundError(f"DOI not found upstream: {doi}")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_exc = CitationError(f"HTTP {resp.status_code} for {doi}")
                self.sleep(self.backoff_base * 2**attempt)
                continue
            resp.raise_for_status()
            payload = resp.json()
            counts = {
                int(row["year"]): int(row["cited_by_count"])
                for row in payload.get("counts_by_year", [])
                if int(row["year"]) <= horizon_year
            }
            return CitationSeries(doi=doi, counts_by_year=counts, retrieved_at=_now_iso())
        if isinstance(last_exc, CitationError) and "429" in str(last_exc):
            raise RateLimitedError(str(last_exc))
        raise RateLimitedError(f"gave up after {self.max_attempts} attempts: {last_exc}")


def _series_to_json(s: CitationSeries) -> str:
    return json.dumps(
        {
            "doi": s.doi,
            "counts_by_year": {str(y): c for y, c in sorted(s.counts_by_year.items())},
            "retrieved_at": s.retrieved_at,
        },
        ensure_ascii=False,
    )


def read_cache(cache_path) -> dict[str, CitationSeries]:
    cached: dict[str, CitationSeries] = {}
    if not os.path.exists(cache_path):
        return cached
    with open(cache_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                s = CitationSeries(
                    doi=obj["doi"],
                    counts_by_year={int(y): int(c) for y, c in obj["counts_by_year"].items()},
                    retrieved_at=obj.get("retrieved_at", ""),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise CacheCorruptionError(cache_path, lineno, exc) from exc
            cached.setdefault(s.doi, s)  # first entry wins; cache is append-only
    return cached


def load_or_fetch(dois, cache_path, horizon_year: int = DEFAULT_HORIZON_YEAR,
                  client: OpenAlexClient | None = None):
    """Resolve every DOI from cache or network.

    Returns (series_by_doi, missing) where missing maps doi -> failure reason.
    Misses are appended to the cache; existing cache lines are never rewritten.
    """
    cached = read_cache(cache_path)
    result: dict[str, CitationSeries] = {}
    missing: dict[str, str] = {}
    to_fetch = []
    for doi in dois:
        if doi in cached:
            result[doi] = cached[doi]
        else:
            to_fetch.append(doi)
    if to_fetch:
        if client is None:
            client = OpenAlexClient()
        with open(cache_path, "a", encoding="utf-8") as out:
            for doi in to_fetch:
                try:
                    s = client.fetch_citation_series(doi, horizon_year)
                except CitationError as exc:
                    missing[doi] = str(exc)
                    continue
                out.write(_series_to_json(s) + "\n")
                result[doi] = s
    return result, missing


def append_to_cache(series_list, cache_path):
    with open(cache_path, "a", encoding="utf-8") as out:
        for s in series_list:
            out.write(_series_to_json(s) + "\n")
