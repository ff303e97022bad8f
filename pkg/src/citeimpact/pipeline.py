"""End-to-end pipeline orchestration: ingest -> citations -> label -> embed
-> train-eval -> report.

Each stage is idempotent: it stores a content hash of its inputs and is
skipped ("up-to-date") when nothing changed. Artifacts from a different
configuration are refused unless forced.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import yaml

from . import charts
from .citations import DEFAULT_HORIZON_YEAR, OpenAlexClient, load_or_fetch
from .corpus import (DEFAULT_YEAR_RANGE, parse_corpus, record_to_dict,
                     validate_record, write_corpus)
from .embedding import (EmbeddingMatrix, RemoteEmbedder,
                        average_section_vectors, build_tfidf_svd_matrix,
                        import_vectors, write_vectors)
from .evaluation import (REPORTED_BANDS, aggregate_median, read_report_csv,
                         sweep, write_report_csv, write_report_json)
from .labeling import build_label_table, read_label_csv, write_label_csv

STAGES = ["ingest", "citations", "label", "embed", "train-eval", "report"]

STAGE_ALIASES = {"fetch-citations": "citations"}


class PipelineError(Exception):
    pass


class ConfigError(PipelineError):
    pass


class MissingArtifactError(PipelineError):
    def __init__(self, stage_needed, detail=""):
        super().__init__(
            f"missing artifact; run stage '{stage_needed}' first" +
            (f" ({detail})" if detail else "")
        )
        self.stage_needed = stage_needed


class NetworkError(PipelineError):
    pass


@dataclass
class PipelineConfig:
    corpus: str = ""
    corpus_format: str = "json-lines"
    citation_cache: str = ""
    horizon_year: int = DEFAULT_HORIZON_YEAR
    year_range: tuple = DEFAULT_YEAR_RANGE
    strict_fulltext: bool = False
    seed: int = 0
    out: str = "out"
    embeddings: list = dc_field(default_factory=lambda: [
        {"provider": "tfidf-svd", "model_id": "tfidf-svd-4096", "k": 4096,
         "scope": "abstract"},
    ])
    grid: dict = dc_field(default_factory=lambda: {
        "classifiers": ["random-forest", "gradient-boosted-trees",
                        "logistic-regression", "k-nearest-neighbors"],
        "classifier_overrides": {},
        "metrics": ["ACC", "YCC"],
        "years_ahead": list(range(0, 12)),
        "balance": ["balanced", "skewed"],
        "q": [0.20],
    })

    @classmethod
    def from_file(cls, path, **overrides):
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config must be a mapping, got {type(raw).__name__}")
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        cfg = cls(**raw)
        cfg.year_range = tuple(cfg.year_range)
        if not cfg.corpus:
            raise ConfigError("config must name a corpus path")
        return cfg

    def to_canonical_json(self) -> str:
        doc = dict(self.__dict__)
        doc["year_range"] = list(self.year_range)
        return json.dumps(doc, sort_keys=True)

    def hash(self) -> str:
        return hashlib.sha256(self.to_canonical_json().encode()).hexdigest()


def _file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _State:
    """Per-output-directory stage bookkeeping."""

    def __init__(self, out_dir: Path):
        self.path = out_dir / "state.json"
        self.data = {}
        if self.path.exists():
            self.data = json.loads(self.path.read_text())

    def signature(self, stage):
        return self.data.get(stage)

    def record(self, stage, signature):
        self.data[stage] = signature
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


class Pipeline:
    def __init__(self, config: PipelineConfig, force: bool = False,
                 citation_client: OpenAlexClient | None = None,
                 remote_transport=None, log=print):
        self.cfg = config
        self.force = force
        self.citation_client = citation_client
        self.remote_transport = remote_transport
        self.log = log
        self.out = Path(config.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self._check_config_hash()
        self.state = _State(self.out)

    def _check_config_hash(self):
        hash_file = self.out / "config.hash"
        current = self.cfg.hash()
        if hash_file.exists():
            stored = hash_file.read_text().strip()
            if stored != current and not self.force:
                raise ConfigError(
                    "output directory holds artifacts from a different config; "
                    "use --force to overwrite"
                )
        hash_file.write_text(current + "\n")

    # -------------------------------------------------------------- paths

    @property
    def corpus_valid_path(self):
        return self.out / "ingest" / "corpus.valid.jsonl"

    @property
    def cache_path(self):
        return Path(self.cfg.citation_cache or self.out / "citations" / "cache.jsonl")

    def label_path(self, metric, q):
        return self.out / "label" / f"labels_{metric}_q{q}.csv"

    def emb_path(self, model_id):
        return self.out / "embed" / f"{model_id}.emb"

    @property
    def results_csv(self):
        return self.out / "train-eval" / "results.csv"

    # -------------------------------------------------------------- stages

    def run(self, stages):
        stages = [STAGE_ALIASES.get(s, s) for s in stages]
        for s in stages:
            if s not in STAGES:
                raise ConfigError(f"unknown stage: {s}")
        artifacts = {}
        for stage in STAGES:
            if stage in stages:
                artifacts[stage] = getattr(self, "stage_" + stage.replace("-", "_"))()
        return artifacts

    def _up_to_date(self, stage, signature, outputs):
        if self.state.signature(stage) == signature and all(
            Path(p).exists() for p in outputs
        ):
            self.log(f"[{stage}] up-to-date")
            return True
        return False

    def stage_ingest(self):
        sig = _file_hash(self.cfg.corpus) + self.cfg.hash()
        report_path = self.out / "ingest" / "report.json"
        if self._up_to_date("ingest", sig, [self.corpus_valid_path, report_path]):
            return {"skipped": True}
        (self.out / "ingest").mkdir(exist_ok=True)
        records, report = parse_corpus(self.cfg.corpus, self.cfg.corpus_format)
        valid, excluded = [], []
        for r in records:
            ok, reason = validate_record(r, self.cfg.year_range)
            if ok:
                valid.append(r)
            elif not self.cfg.strict_fulltext and reason == "missing-body" and r.abstract:
                # kept for abstract-only experiments, logged
                valid.append(r)
                excluded.append({"doi": r.doi, "reason": reason, "kept_for": "abstract"})
            else:
                excluded.append({"doi": r.doi, "reason": reason})
        write_corpus(valid, self.corpus_valid_path)
        doc = json.loads(report.to_json())
        doc["validated"] = len(valid)
        doc["validation_excluded"] = excluded
        report_path.write_text(json.dumps(doc, indent=2) + "\n")
        self.state.record("ingest", sig)
        self.log(f"[ingest] {len(valid)} valid records, {len(excluded)} excluded")
        return {"valid": len(valid), "excluded": len(excluded)}

    def _load_valid_corpus(self):
        if not self.corpus_valid_path.exists():
            raise MissingArtifactError("ingest")
        records, _ = parse_corpus(self.corpus_valid_path, "json-lines")
        return records

    def stage_citations(self):
        records = self._load_valid_corpus()
        sig = _file_hash(self.corpus_valid_path) + self.cfg.hash()
        missing_path = self.out / "citations" / "missing.json"
        if self._up_to_date("citations", sig, [self.cache_path, missing_path]):
            return {"skipped": True}
        (self.out / "citations").mkdir(exist_ok=True)
        self.cache_path.parent.mkdir(parents=True, exist_ok=True)
        self.cache_path.touch()
        series, missing = load_or_fetch(
            [r.doi for r in records], self.cache_path,
            horizon_year=self.cfg.horizon_year, client=self.citation_client,
        )
        missing_path.write_text(json.dumps(missing, indent=2, sort_keys=True) + "\n")
        self.state.record("citations", sig)
        self.log(f"[citations] {len(series)} series, {len(missing)} missing")
        return {"resolved": len(series), "missing": len(missing)}

    def _load_series(self, records):
        from .citations import normalize_series, read_cache

        if not self.cache_path.exists():
            raise MissingArtifactError("fetch-citations")
        cached = read_cache(self.cache_path)
        series = {}
        for r in records:
            if r.doi in cached:
                series[r.doi] = normalize_series(
                    cached[r.doi], r.pub_year, self.cfg.horizon_year
                )
        return series

    def stage_label(self):
        records = self._load_valid_corpus()
        series = self._load_series(records)
        sig = (_file_hash(self.corpus_valid_path) + _file_hash(self.cache_path)
               + self.cfg.hash())
        grid = self.cfg.grid
        outputs = [
            self.label_path(m, q) for m in grid["metrics"] for q in grid["q"]
        ]
        if self._up_to_date("label", sig, outputs):
            return {"skipped": True}
        (self.out / "label").mkdir(exist_ok=True)
        n_entries = 0
        for metric in grid["metrics"]:
            for q in grid["q"]:
                table = build_label_table(
                    records, series, metric, q,
                    horizons=grid["years_ahead"],
                    horizon_year=self.cfg.horizon_year,
                )
                write_label_csv(table, self.label_path(metric, q))
                n_entries += len(table.entries)
        self.state.record("label", sig)
        self.log(f"[label] {n_entries} label entries")
        return {"entries": n_entries}

    def _text_for_scope(self, record, scope):
        if scope == "full-text":
            return "\n\n".join(s.text for s in record.sections)
        return record.abstract

    def stage_embed(self):
        records = self._load_valid_corpus()
        sig = _file_hash(self.corpus_valid_path) + self.cfg.hash()
        outputs = [self.emb_path(e["model_id"]) for e in self.cfg.embeddings]
        if self._up_to_date("embed", sig, outputs):
            return {"skipped": True}
        (self.out / "embed").mkdir(exist_ok=True)
        built = {}
        for emb_cfg in self.cfg.embeddings:
            provider = emb_cfg["provider"]
            model_id = emb_cfg["model_id"]
            scope = emb_cfg.get("scope", "abstract")
            if provider == "tfidf-svd":
                texts = {
                    r.doi: self._text_for_scope(r, scope)
                    for r in records
                    if scope == "abstract" or r.sections
                }
                matrix, _, _ = build_tfidf_svd_matrix(
                    texts, k=emb_cfg.get("k", 4096), seed=self.cfg.seed,
                    model_id=model_id,
                )
            elif provider == "remote":
                embedder = RemoteEmbedder(
                    model_id=model_id, dim=emb_cfg.get("dim", 1536),
                    transport=self.remote_transport,
                    cache_path=self.out / "embed" / f"{model_id}.cache.jsonl",
                )
                matrix = self._remote_matrix(embedder, records, scope, emb_cfg)
            elif provider == "import":
                matrix = import_vectors(emb_cfg["path"], emb_cfg.get("dim"))
                matrix.model_id = model_id
            else:
                raise ConfigError(f"unknown embedding provider: {provider}")
            write_vectors(matrix, self.emb_path(model_id))
            built[model_id] = matrix.dim
        self.state.record("embed", sig)
        self.log(f"[embed] built {sorted(built)}")
        return built

    def _remote_matrix(self, embedder, records, scope, emb_cfg):
        vectors = {}
        if scope == "full-text":
            for r in records:
                if not r.sections:
                    continue
                vecs = embedder.embed_batch(
                    [s.text for s in r.sections if s.text],
                    batch_size=emb_cfg.get("batch_size", 64),
                )
                vectors[r.doi] = average_section_vectors(vecs)
        else:
            dois = [r.doi for r in records if r.abstract]
            texts = [r.abstract for r in records if r.abstract]
            for doi, vec in zip(
                dois, embedder.embed_batch(texts, batch_size=emb_cfg.get("batch_size", 64))
            ):
                vectors[doi] = vec
        return EmbeddingMatrix(model_id=embedder.model_id, dim=embedder.dim,
                               vectors=vectors)

    def stage_train_eval(self):
        grid = self.cfg.grid
        emb_paths = {e["model_id"]: self.emb_path(e["model_id"])
                     for e in self.cfg.embeddings}
        for model_id, p in emb_paths.items():
            if not p.exists():
                raise MissingArtifactError("embed", model_id)
        label_paths = {
            (m, q): self.label_path(m, q)
            for m in grid["metrics"] for q in grid["q"]
        }
        for key, p in label_paths.items():
            if not p.exists():
                raise MissingArtifactError("label", str(key))
        sig = self.cfg.hash() + "".join(
            _file_hash(p) for p in sorted(map(str, list(emb_paths.values())
                                              + list(label_paths.values())))
        )
        json_path = self.out / "train-eval" / "results.json"
        if self._up_to_date("train-eval", sig, [self.results_csv, json_path]):
            return {"skipped": True}
        (self.out / "train-eval").mkdir(exist_ok=True)

        embeddings = {mid: import_vectors(p) for mid, p in emb_paths.items()}
        label_tables = {key: read_label_csv(p) for key, p in label_paths.items()}
        text_scopes = {
            e["model_id"]: e.get("scope", "abstract") for e in self.cfg.embeddings
        }
        records, skips = sweep(
            embeddings, label_tables, grid["classifiers"], grid["years_ahead"],
            grid["balance"], seed=self.cfg.seed,
            classifier_overrides=grid.get("classifier_overrides"),
            text_scopes=text_scopes,
        )
        write_report_csv(records, skips, self.results_csv)
        write_report_json(records, skips, json_path,
                          metadata={"config_hash": self.cfg.hash(),
                                    "reported_bands": REPORTED_BANDS})
        self.state.record("train-eval", sig)
        self.log(f"[train-eval] {len(records)} records, {len(skips)} skipped cells")
        return {"records": len(records), "skips": len(skips)}

    def stage_report(self):
        if not self.results_csv.exists():
            raise MissingArtifactError("train-eval")
        sig = _file_hash(self.results_csv) + self.cfg.hash()
        report_dir = self.out / "report"
        summary_csv = report_dir / "summary.csv"
        if self._up_to_date("report", sig, [summary_csv]):
            return {"skipped": True}
        report_dir.mkdir(exist_ok=True)
        records, _ = read_report_csv(self.results_csv)

        written = []
        for value in ("auc_roc", "auc_pr"):
            for axis, name in (("embedding_id", "by_embedding"),
                               ("classifier_id", "by_classifier")):
                stats = aggregate_median(records, ("balance", axis), value=value)
                svg = charts.box_plot(
                    stats, title=f"{value} medians grouped by {axis}", y_label=value
                )
                path = report_dir / f"box_{name}_{value}.svg"
                path.write_text(svg)
                written.append(path.name)
            series = {}
            for r in records:
                if r.balance != "balanced":
                    continue
                series.setdefault(r.embedding_id, {}).setdefault(
                    r.years_ahead, []
                ).append(getattr(r, value))
            lines = {
                emb: sorted(
                    (t, sorted(vals)[len(vals) // 2]) for t, vals in by_t.items()
                )
                for emb, by_t in series.items()
            }
            svg = charts.line_chart(
                lines, title=f"balanced {value} by years ahead", y_label=value
            )
            path = report_dir / f"yearly_{value}.svg"
            path.write_text(svg)
            written.append(path.name)

        with open(summary_csv, "w", encoding="utf-8", newline="") as fh:
            fh.write("group_by,group,value,median,q1,q3,min,max,count\n")
            for value in ("auc_roc", "auc_pr"):
                for s in aggregate_median(
                    records, ("balance", "target_metric", "embedding_id"), value=value
                ):
                    fh.write(
                        ",".join([
                            "balance/target_metric/embedding_id",
                            "/".join(map(str, s.group)), value,
                            repr(s.median), repr(s.q1), repr(s.q3),
                            repr(s.min), repr(s.max), str(s.count),
                        ]) + "\n"
                    )
            # reported-only sanity bands, printed beside measurements
            for key, band in REPORTED_BANDS.items():
                text = "..".join(map(str, band)) if isinstance(band, tuple) else str(band)
                fh.write(f"reported-band,{key},auc_roc,{text},,,,,\n")
        self.state.record("report", sig)
        self.log(f"[report] wrote {len(written)} charts + summary.csv")
        return {"charts": written}


def run_pipeline(config: PipelineConfig, stages, force: bool = False, **kwargs):
    return Pipeline(config, force=force, **kwargs).run(stages)
