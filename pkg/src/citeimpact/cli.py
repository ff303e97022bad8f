"""Command-line entry points.

Exit codes: 0 success, 2 config error, 3 missing artifact, 4 upstream or
network failure.
"""

from __future__ import annotations

import sys

import click

from .citations import CitationError
from .embedding import EmbeddingError
from .pipeline import (ConfigError, MissingArtifactError, NetworkError,
                       PipelineConfig, run_pipeline)

EXIT_CONFIG = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_NETWORK = 4


def _load_config(config_path, seed, out):
    if config_path is None:
        raise ConfigError("a --config file is required")
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out"] = out
    return PipelineConfig.from_file(config_path, **overrides)


def _run(stages, config, seed, out, force):
    try:
        cfg = _load_config(config, seed, out)
        run_pipeline(cfg, stages, force=force)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except MissingArtifactError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_MISSING_ARTIFACT)
    except (NetworkError, CitationError, EmbeddingError) as exc:
        click.echo(f"upstream failure: {exc}", err=True)
        sys.exit(EXIT_NETWORK)


GLOBAL_OPTIONS = [
    click.option("--config", type=click.Path(), help="pipeline config file (YAML)"),
    click.option("--seed", type=int, default=None, help="master RNG seed override"),
    click.option("--out", type=click.Path(), default=None, help="output directory override"),
    click.option("--force", is_flag=True, help="overwrite artifacts from a different config"),
]


def _with_global_options(fn):
    for opt in reversed(GLOBAL_OPTIONS):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Text-based citation-impact prediction pipeline."""


def _make_stage_command(name, stages, help_text):
    @main.command(name=name, help=help_text)
    @_with_global_options
    def _cmd(config, seed, out, force):
        _run(stages, config, seed, out, force)

    return _cmd


_make_stage_command("ingest", ["ingest"], "Parse and validate the corpus.")
_make_stage_command("fetch-citations", ["citations"],
                    "Resolve per-DOI citation series from cache or OpenAlex.")
_make_stage_command("label", ["label"], "Build ACC/YCC top-q label tables.")
_make_stage_command("embed", ["embed"], "Build document embeddings per provider.")
_make_stage_command("train-eval", ["train-eval"],
                    "Run the classifier grid and write the results report.")
_make_stage_command("report", ["report"],
                    "Render SVG charts and the summary table from results.")
_make_stage_command("all", ["ingest", "citations", "label", "embed",
                            "train-eval", "report"],
                    "Run every stage in order.")


if __name__ == "__main__":
    main()
