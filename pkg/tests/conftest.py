"""Shared fixtures: the example corpus, its traces and models fitted on them."""

import dataclasses
from pathlib import Path

import numpy as np
import pytest

from goalsynth.config import Config
from goalsynth.exemplars import EXEMPLAR_FILE
from goalsynth.features import build_feature_context, fit_normalizers, raw_features
from goalsynth.fitness import FitnessModel
from goalsynth.parser import load_games, parse_games
from goalsynth.pcfg import fit_pcfg
from goalsynth.pipeline import Trained
from goalsynth.predicates import build_predicate_db
from goalsynth.trace import load_trace, load_traces

REPO_ROOT = Path(__file__).resolve().parents[1]
EXAMPLE_DIR = REPO_ROOT / "example"


@pytest.fixture(scope="session")
def example_games():
    return [g for _, g in load_games(EXAMPLE_DIR / "games")]


@pytest.fixture(scope="session")
def exemplar_games():
    return parse_games(EXEMPLAR_FILE.read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def corpus(example_games, exemplar_games):
    """Every game shipped with the package, used as a small training corpus."""
    return list(example_games) + list(exemplar_games)


@pytest.fixture(scope="session")
def games_by_name(corpus):
    return {g.name: g for g in corpus}


@pytest.fixture(scope="session")
def two_throws():
    return load_trace(EXAMPLE_DIR / "traces" / "two-throws.trace")


@pytest.fixture(scope="session")
def traces():
    return load_traces(EXAMPLE_DIR / "traces")


@pytest.fixture(scope="session")
def pcfg(corpus):
    return fit_pcfg(corpus, smoothing=1.0, max_depth=16)


@pytest.fixture(scope="session")
def feature_ctx(corpus, traces):
    return build_feature_context(corpus, build_predicate_db(traces), n=5, discount=0.4)


@pytest.fixture(scope="session")
def ngram_fitness(feature_ctx, corpus, pcfg):
    """Fitness that rewards n-gram likelihood, over a normalizer fitted on the corpus."""
    registry = feature_ctx.registry
    normalizer = fit_normalizers([raw_features(g, feature_ctx) for g in corpus], registry)
    ctx = dataclasses.replace(feature_ctx, normalizer=normalizer)
    theta = np.array([1.0 if name.startswith("ast_ngram_") else 0.0 for name in registry.names])
    model = FitnessModel(registry.names, theta, registry.version, normalizer, ctx.ngrams)
    return Trained(model, ctx, pcfg)


@pytest.fixture
def config(monkeypatch):
    """Default configuration with path environment variables cleared."""
    for names in Config.ENV_MAPPINGS.values():
        for name in names:
            monkeypatch.delenv(name, raising=False)
    return Config()
