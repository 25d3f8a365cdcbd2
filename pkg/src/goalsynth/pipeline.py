"""End-to-end stages shared by the command line and the ablation driver."""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .archive import Archive
from .config import Config
from .exceptions import ValidationError
from .exemplars import ExemplarSet, load_exemplars
from .features import FeatureContext, build_feature_context
from .fitness import Dataset, FitnessModel, TrainConfig, build_dataset, fit_model, gen_negatives
from .logger import get_logger
from .mutation import MutationConfig
from .parser import load_games
from .pcfg import Pcfg, fit_pcfg
from .predicates import EvalContext, PredicateDatabase, build_predicate_db
from .search import (
    Evaluator, SearchConfig, init_archive, pcfg_only_archive, run_map_elites,
)
from .syntax import Game
from .trace import Trace, load_traces

logger = get_logger(__name__)


@dataclass
class Trained:
    """A fitted model with the grammar and feature context it was trained against."""
    model: FitnessModel
    ctx: FeatureContext
    pcfg: Pcfg
    dataset: Optional[Dataset] = None


def load_corpus(path: Optional[Path]) -> List[Game]:
    """
    Raises:
        ValidationError: If no corpus path is configured or it holds no games
    """
    if path is None:
        raise ValidationError("no corpus given (use --corpus or GOALSYNTH_CORPUS_DIR)")
    games = [g for _, g in load_games(Path(path))]
    if not games:
        raise ValidationError(f"no games found under {path}")
    return games


def load_trace_set(path: Optional[Path]) -> List[Trace]:
    """Traces for the play-trace database; none configured means an empty database."""
    if path is None:
        logger.warning("No trace directory configured; play-trace features will be constant")
        return []
    return load_traces(Path(path))


def fit_grammar(corpus: Sequence[Game], config: Config) -> Pcfg:
    section = config.section("pcfg")
    return fit_pcfg(corpus, section["smoothing"], section["max_depth"])


def predicate_db(traces: Sequence[Trace], config: Config) -> PredicateDatabase:
    return build_predicate_db(traces, ctx=EvalContext.from_config(config))


def feature_context(corpus: Sequence[Game], db: Optional[PredicateDatabase], config: Config,
                    exclude_groups: Optional[Sequence[str]] = None) -> FeatureContext:
    section = config.section("features")
    if exclude_groups is None:
        exclude_groups = section["exclude_groups"]
    return build_feature_context(corpus, db, section["n"], section["discount"], exclude_groups,
                                 section["max_truth_table_atoms"],
                                 section["max_logical_children"])


def train_pipeline(corpus: Sequence[Game], traces: Sequence[Trace], config: Config,
                   exclude_groups: Optional[Sequence[str]] = None,
                   train_config: Optional[TrainConfig] = None) -> Trained:
    """Grammar, regrowth negatives, features, dataset and a trained fitness model."""
    train_config = train_config or TrainConfig.from_config(config)
    train_config.validate()
    pcfg = fit_grammar(corpus, config)
    negatives = gen_negatives(corpus, pcfg, train_config.m, config.rng("negatives"))
    ctx = feature_context(corpus, predicate_db(traces, config), config, exclude_groups)
    dataset, normalizer = build_dataset(corpus, negatives, ctx)
    model = fit_model(dataset, normalizer, ctx, train_config)
    model.metadata.update({"seed": config["seed"], "config_hash": config.config_hash()})
    ctx.normalizer = normalizer
    return Trained(model, ctx, pcfg, dataset)


def load_trained(model_path: Path, corpus: Sequence[Game], traces: Sequence[Trace],
                 config: Config) -> Trained:
    """A saved model with its grammar refitted on the corpus it was trained against.

    Raises:
        VersionMismatchError: If the model's registry differs from this build's
    """
    model = FitnessModel.load(model_path)
    section = config.section("features")
    ctx = model.feature_context(predicate_db(traces, config),
                                max_truth_table_atoms=section["max_truth_table_atoms"],
                                max_logical_children=section["max_logical_children"])
    saved_hash = model.metadata.get("config_hash")
    if saved_hash and saved_hash != config.config_hash():
        logger.warning(f"Model {model_path} was trained with config {saved_hash}, "
                       f"current config is {config.config_hash()}")
    return Trained(model, ctx, fit_grammar(corpus, config))


def search_settings(config: Config) -> Tuple[SearchConfig, MutationConfig, ExemplarSet]:
    exemplars = load_exemplars(names=config["search.exemplars"])
    return SearchConfig.from_config(config), MutationConfig.from_config(config), exemplars


def artifact_header(config: Config, registry_version: str, **extra) -> Dict[str, object]:
    """Seed, config hash and profiles stamped into every written artifact."""
    header = {"registry_version": registry_version, "seed": config["seed"],
              "config_hash": config.config_hash(), "profiles": list(config.profiles)}
    header.update(extra)
    return header


def search_pipeline(trained: Trained, config: Config, archive: Optional[Archive] = None,
                    generations: Optional[int] = None,
                    checkpoint_path: Optional[Path] = None,
                    stats_path: Optional[Path] = None,
                    mutation: Optional[MutationConfig] = None) -> Tuple[Archive, List[dict]]:
    """Initialize (unless resuming from `archive`) and run MAP-Elites."""
    search, default_mutation, exemplars = search_settings(config)
    mutation = mutation or default_mutation
    evaluator = Evaluator(trained.model, trained.ctx, search.workers)
    if archive is None:
        archive = init_archive(trained.pcfg, evaluator, exemplars, search, mutation)
    checkpoint: Optional[Callable[[Archive], None]] = None
    if checkpoint_path is not None:
        header = artifact_header(config, trained.model.registry_version)

        def checkpoint(a: Archive):
            a.save(checkpoint_path, header)

    history = run_map_elites(archive, evaluator, trained.pcfg, exemplars, search, mutation,
                             generations, checkpoint, stats_path)
    return archive, history


def pcfg_only_pipeline(trained: Trained, config: Config) -> Archive:
    """Pure grammar sampling with the candidate budget of a full search run."""
    search, mutation, exemplars = search_settings(config)
    budget = search.init_samples + search.generations * search.updates
    evaluator = Evaluator(trained.model, trained.ctx, search.workers)
    return pcfg_only_archive(trained.pcfg, evaluator, exemplars, search, mutation, budget)
