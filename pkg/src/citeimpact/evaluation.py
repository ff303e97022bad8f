"""Exact ranking metrics and the experiment grid.

AUC-ROC is the Mann-Whitney statistic computed from midranks (no binning).
AUC-PR is tie-grouped average precision: each group of equal scores
contributes its positives times the precision at the end of the group,
which makes a constant scorer score exactly the prevalence.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict, field
from itertools import product

import numpy as np

from . import classifiers as clf
from .datasets import RNG_ALGORITHM, balance_undersample, shuffle_split

REPORT_COLUMNS = [
    "embedding_id", "classifier_id", "target_metric", "q", "years_ahead",
    "balance", "text_scope", "seed", "n_test", "prevalence", "auc_roc",
    "auc_pr", "skip_reason",
]


class SingleClassError(Exception):
    """Metric undefined: only one class present."""


@dataclass
class EvalRecord:
    embedding_id: str
    classifier_id: str
    target_metric: str
    years_ahead: int
    balance: str
    q: float
    text_scope: str
    auc_roc: float
    auc_pr: float
    n_test: int
    prevalence: float
    seed: int


@dataclass
class SummaryStats:
    group: tuple
    median: float
    q1: float
    q3: float
    min: float
    max: float
    count: int


def auc_roc(scores, labels) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("auc_roc needs both classes")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = ranks[labels == 1].sum()
    return float((rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auc_pr(scores, labels) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise SingleClassError("auc_pr needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    total = 0.0
    seen = 0   # items walked so far
    tp = 0     # positives walked so far
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        group_pos = int(y[i : j + 1].sum())
        seen += j - i + 1
        tp += group_pos
        total += group_pos * (tp / seen)
        i = j + 1
    return float(total / n_pos)


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    preds = np.asarray(scores) >= threshold
    return float(np.mean(preds == np.asarray(labels).astype(bool)))


@dataclass
class ExperimentCell:
    embedding_id: str
    classifier_variant: str
    target_metric: str
    years_ahead: int
    balance: str
    q: float
    text_scope: str = "abstract"
    seed: int = 0
    classifier_overrides: dict = field(default_factory=dict)


@dataclass
class SkipEntry:
    cell: dict
    reason: str


def run_experiment(cell: ExperimentCell, embeddings, label_table,
                   test_fraction: float = 0.30):
    """Evaluate one grid cell; returns EvalRecord or SkipEntry.

    ``embeddings`` maps embedding_id -> EmbeddingMatrix. Balanced cells
    undersample both split sides; skewed cells touch neither.
    """
    matrix = embeddings[cell.embedding_id]
    labels = label_table.labels_at(cell.years_ahead)
    eligible = sorted(d for d in labels if d in matrix.vectors)
    if len(eligible) < 2:
        return SkipEntry(cell=asdict(cell), reason="horizon-exceeded-or-empty")

    split = shuffle_split(eligible, test_fraction=test_fraction, seed=cell.seed)
    train, test = list(split.train_dois), list(split.test_dois)
    if cell.balance == "balanced":
        try:
            train = balance_undersample(train, labels, seed=cell.seed)
            test = balance_undersample(test, labels, seed=cell.seed + 1)
        except ValueError:
            return SkipEntry(cell=asdict(cell), reason="single-class-side")

    y_train = np.array([labels[d] for d in train])
    y_test = np.array([labels[d] for d in test])
    if len(set(y_train)) < 2 or len(set(y_test)) < 2:
        return SkipEntry(cell=asdict(cell), reason="single-class-side")

    spec = clf.ClassifierSpec.default(
        cell.classifier_variant, seed=cell.seed, **cell.classifier_overrides
    )
    model = clf.train_classifier(spec, matrix.matrix_for(train), y_train)
    scores = clf.predict_scores(model, matrix.matrix_for(test))
    return EvalRecord(
        embedding_id=cell.embedding_id,
        classifier_id=cell.classifier_variant,
        target_metric=cell.target_metric,
        years_ahead=cell.years_ahead,
        balance=cell.balance,
        q=cell.q,
        text_scope=cell.text_scope,
        auc_roc=auc_roc(scores, y_test),
        auc_pr=auc_pr(scores, y_test),
        n_test=len(test),
        prevalence=float(np.mean(y_test)),
        seed=cell.seed,
    )


def sweep(embeddings, label_tables, classifier_variants, years_ahead_list,
          balances, seed: int = 0, classifier_overrides=None,
          text_scopes=None):
    """Cartesian product over the grid; infeasible cells go to the skip list.

    ``label_tables`` maps (target_metric, q) -> LabelTable; embedding ids may
    carry a text scope via ``text_scopes`` (embedding_id -> scope).
    """
    records, skips = [], []
    text_scopes = text_scopes or {}
    for (emb_id, variant, (metric, q), t, balance) in product(
        sorted(embeddings), classifier_variants, sorted(label_tables),
        years_ahead_list, balances,
    ):
        cell = ExperimentCell(
            embedding_id=emb_id, classifier_variant=variant,
            target_metric=metric, years_ahead=t, balance=balance, q=q,
            text_scope=text_scopes.get(emb_id, "abstract"), seed=seed,
            classifier_overrides=dict(classifier_overrides or {}).get(variant, {}),
        )
        out = run_experiment(cell, embeddings, label_tables[(metric, q)])
        (records if isinstance(out, EvalRecord) else skips).append(out)
    return records, skips


def _inclusive_quartiles(values):
    v = sorted(values)
    n = len(v)

    def med(seq):
        m = len(seq)
        return seq[m // 2] if m % 2 else (seq[m // 2 - 1] + seq[m // 2]) / 2.0

    median = med(v)
    if n == 1:
        return median, v[0], v[0]
    half = (n + 1) // 2  # inclusive convention: odd n keeps the median in both halves
    return median, med(v[:half]), med(v[n - half:])


def aggregate_median(records, group_by, value: str = "auc_roc"):
    """Median/quartile box stats per group; inclusive quartiles, min/max whiskers."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        key = tuple(getattr(r, a) for a in group_by)
        groups.setdefault(key, []).append(getattr(r, value))
    out = []
    for key in sorted(groups):
        vals = groups[key]
        median, q1, q3 = _inclusive_quartiles(vals)
        out.append(
            SummaryStats(group=key, median=median, q1=q1, q3=q3,
                         min=min(vals), max=max(vals), count=len(vals))
        )
    return out


def write_report_csv(records, skips, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in sorted(records, key=_record_key):
            w.writerow([
                r.embedding_id, r.classifier_id, r.target_metric, r.q,
                r.years_ahead, r.balance, r.text_scope, r.seed, r.n_test,
                repr(r.prevalence), repr(r.auc_roc), repr(r.auc_pr), "",
            ])
        for s in sorted(skips, key=lambda s: _cell_key(s.cell)):
            c = s.cell
            w.writerow([
                c["embedding_id"], c["classifier_variant"], c["target_metric"],
                c["q"], c["years_ahead"], c["balance"], c["text_scope"],
                c["seed"], "", "", "", "", s.reason,
            ])


def _record_key(r: EvalRecord):
    return (r.embedding_id, r.classifier_id, r.target_metric, r.q,
            r.years_ahead, r.balance, r.text_scope, r.seed)


def _cell_key(c: dict):
    return (c["embedding_id"], c["classifier_variant"], c["target_metric"],
            c["q"], c["years_ahead"], c["balance"], c["text_scope"], c["seed"])


def write_report_json(records, skips, path, metadata=None):
    meta = {
        "format_version": 1,
        "rng_algorithm": RNG_ALGORITHM,
        "auc_pr_convention": "tie-grouped average precision",
        "quartile_convention": "inclusive",
    }
    meta.update(metadata or {})
    doc = {
        "metadata": meta,
        "records": [asdict(r) for r in sorted(records, key=_record_key)],
        "skips": [asdict(s) for s in sorted(skips, key=lambda s: _cell_key(s.cell))],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report_csv(path):
    records, skips = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["skip_reason"]:
                skips.append(SkipEntry(cell=dict(row), reason=row["skip_reason"]))
            else:
                records.append(EvalRecord(
                    embedding_id=row["embedding_id"],
                    classifier_id=row["classifier_id"],
                    target_metric=row["target_metric"],
                    years_ahead=int(row["years_ahead"]),
                    balance=row["balance"],
                    q=float(row["q"]),
                    text_scope=row["text_scope"],
                    auc_roc=float(row["auc_roc"]),
                    auc_pr=float(row["auc_pr"]),
                    n_test=int(row["n_test"]),
                    prevalence=float(row["prevalence"]),
                    seed=int(row["seed"]),
                ))
    return records, skips


# Published reference ranges for balanced-ACC medians on a real journal
# corpus; printed beside measured values, never asserted.
REPORTED_BANDS = {
    "balanced_acc_auc_roc_median_range": (0.69, 0.76),
    "balanced_acc_auc_roc_best": 0.85,
    "tfidf_auc_roc_peak": 0.80,
}
