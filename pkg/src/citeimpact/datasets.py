"""Train/test splits and class-balance treatments, all seeded and reproducible.

RNG: numpy PCG64 via default_rng; the algorithm name is recorded in report
metadata so runs can be replayed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "numpy-pcg64"


@dataclass(frozen=True)
class DatasetSplit:
    train_dois: tuple[str, ...]
    test_dois: tuple[str, ...]
    seed: int
    scheme: str


def shuffle_split(dois, test_fraction: float = 0.30, seed: int = 0) -> DatasetSplit:
    """Uniform shuffle, |test| = round(test_fraction * n)."""
    dois = list(dois)
    if len(dois) < 2:
        raise ValueError("need at least 2 DOIs to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dois))
    n_test = math.floor(test_fraction * len(dois) + 0.5)
    test = tuple(dois[i] for i in order[:n_test])
    train = tuple(dois[i] for i in order[n_test:])
    return DatasetSplit(train_dois=train, test_dois=test, seed=seed, scheme="shuffle-70-30")


def year_proportional_split(records, test_fraction: float = 0.20, seed: int = 0) -> DatasetSplit:
    """Per publication-year stratum, round(test_fraction * stratum) DOIs to test."""
    strata: dict[int, list[str]] = {}
    for r in records:
        strata.setdefault(r.pub_year, []).append(r.doi)
    rng = np.random.default_rng(seed)
    train: list[str] = []
    test: list[str] = []
    for year in sorted(strata):
        dois = strata[year]
        order = rng.permutation(len(dois))
        n_test = math.floor(test_fraction * len(dois) + 0.5)
        test.extend(dois[i] for i in order[:n_test])
        train.extend(dois[i] for i in order[n_test:])
    return DatasetSplit(
        train_dois=tuple(train), test_dois=tuple(test), seed=seed,
        scheme="year-proportional-80-20",
    )


def balance_undersample(dois, labels: dict[str, int], seed: int = 0) -> list[str]:
    """Keep all positives; sample negatives without replacement to parity."""
    pos = [d for d in dois if labels[d] == 1]
    neg = [d for d in dois if labels[d] == 0]
    if not pos or not neg:
        raise ValueError("balance_undersample needs both classes present")
    if len(neg) <= len(pos):
        return list(dois)
    rng = np.random.default_rng(seed)
    kept = set(rng.choice(len(neg), size=len(pos), replace=False))
    kept_neg = {neg[i] for i in kept}
    return [d for d in dois if labels[d] == 1 or d in kept_neg]


def k_folds(dois, k: int = 5, seed: int = 0) -> list[DatasetSplit]:
    """k disjoint folds (sizes differ by at most 1); fold i is split i's test side."""
    dois = list(dois)
    if len(dois) < k:
        raise ValueError(f"need at least k={k} DOIs, got {len(dois)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dois))
    folds = np.array_split(order, k)
    splits = []
    for i, fold in enumerate(folds):
        test = tuple(dois[j] for j in fold)
        train = tuple(dois[j] for f in folds for j in f if f is not fold)
        splits.append(
            DatasetSplit(train_dois=train, test_dois=test, seed=seed,
                         scheme=f"kfold({i + 1} of {k})")
        )
    return splits


def write_split_csv(split: DatasetSplit, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["doi", "side", "scheme", "seed"])
        for doi in split.train_dois:
            w.writerow([doi, "train", split.scheme, split.seed])
        for doi in split.test_dois:
            w.writerow([doi, "test", split.scheme, split.seed])
