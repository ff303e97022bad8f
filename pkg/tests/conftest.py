import pytest
import yaml

from citeimpact.citations import append_to_cache
from citeimpact.corpus import write_corpus
from citeimpact.synthetic import make_synthetic_corpus


@pytest.fixture(scope="session")
def synthetic_world(tmp_path_factory):
    """200-paper synthetic corpus + fully populated citation cache on disk."""
    root = tmp_path_factory.mktemp("synth")
    records, series, planted = make_synthetic_corpus(n_papers=200, seed=11)
    corpus_path = root / "corpus.jsonl"
    cache_path = root / "cache.jsonl"
    write_corpus(records, corpus_path)
    append_to_cache(series.values(), cache_path)
    return {"root": root, "corpus": corpus_path, "cache": cache_path,
            "records": records, "series": series, "planted": planted}


def small_grid_config(world, out_dir, seed=7):
    return {
        "corpus": str(world["corpus"]),
        "citation_cache": str(world["cache"]),
        "out": str(out_dir),
        "seed": seed,
        "embeddings": [
            {"provider": "tfidf-svd", "model_id": "tfidf-svd-32", "k": 32,
             "scope": "abstract"},
        ],
        "grid": {
            "classifiers": ["random-forest", "logistic-regression"],
            "classifier_overrides": {"random-forest": {"trees": 30}},
            "metrics": ["ACC", "YCC"],
            "years_ahead": [1, 3],
            "balance": ["balanced", "skewed"],
            "q": [0.2],
        },
    }


@pytest.fixture()
def config_file(synthetic_world, tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(small_grid_config(synthetic_world, tmp_path / "out")))
    return path
