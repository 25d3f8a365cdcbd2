"""MAP-Elites search over games: archive initialization, the generation loop and statistics."""

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .archive import COHERENT, INCOHERENT, Archive, Elite
from .config import rng_for
from .exceptions import GoalSynthError
from .exemplars import ExemplarSet, assign_exemplars, key_from_assignment
from .features import GRAMMAR_MISUSE, SCORING_MISUSE, FeatureContext, raw_features
from .fitness import FitnessModel, score
from .logger import get_logger
from .mutation import MutationConfig, MutationContext, acceptable, mutate
from .pcfg import Pcfg, sample_game, with_name
from .syntax import Game

logger = get_logger(__name__)

COHERENCE_CRITERIA: Tuple[Tuple[str, float], ...] = (
    (("variables_used_all", 1.0), ("preferences_used_all", 1.0))
    + tuple((name, 0.0) for name in GRAMMAR_MISUSE)
    + tuple((name, 0.0) for name in SCORING_MISUSE)
    + (("disjoint_preferences_found", 0.0),)
)

COHERENCE_GROUPS = ("defined_and_used", "grammar_misuse", "scoring_grammar_misuse",
                    "game_element_disjointness")

STATS_COLUMNS = ("generation", "coherent_cells", "incoherent_cells", "inserted", "noops",
                 "fitness_mean", "fitness_q1", "fitness_median", "fitness_q3", "fitness_max")


def coherence_check(raw: Mapping[str, float],
                    criteria: Sequence[Tuple[str, float]] = COHERENCE_CRITERIA) -> bool:
    """True iff every criterion feature holds its required value."""
    return all(raw.get(name) == required for name, required in criteria)


@dataclass(frozen=True)
class SearchConfig:
    generations: int = 8192
    updates: int = 750
    init_samples: int = 1024
    init_cap: int = 128
    min_preferences: int = 1
    max_preferences: int = 4
    checkpoint_every: int = 100
    log_every: int = 10
    workers: int = 1
    seed: int = 0

    @classmethod
    def from_config(cls, config) -> "SearchConfig":
        s = config.section("search")
        return cls(s["generations"], s["updates"], s["init_samples"], s["init_cap"],
                   s["min_preferences"], s["max_preferences"], s["checkpoint_every"],
                   s["log_every"], config["workers"], config["seed"])


# --- evaluation --------------------------------------------------------------------

_WORKER: Optional["Evaluator"] = None


def _init_worker(evaluator: "Evaluator"):
    global _WORKER
    _WORKER = evaluator


def _evaluate_in_worker(game: Game) -> Tuple[float, bool]:
    return _WORKER.evaluate(game)


class Evaluator:
    """Features, fitness and coherence for candidate games, optionally over a process pool."""

    def __init__(self, model: FitnessModel, ctx: FeatureContext, workers: int = 1,
                 criteria: Sequence[Tuple[str, float]] = COHERENCE_CRITERIA):
        self.model = model
        self.ctx = ctx
        self.workers = workers
        self.criteria = tuple(criteria)
        self._extra_groups = tuple(g for g in COHERENCE_GROUPS if g not in ctx.registry.groups)

    def evaluate(self, game: Game) -> Tuple[float, bool]:
        raw = raw_features(game, self.ctx)
        if self._extra_groups:
            raw.update(raw_features(game, self.ctx, self._extra_groups))
        vector = self.ctx.normalizer.transform(raw, self.ctx.registry)
        return score(self.model, vector), coherence_check(raw, self.criteria)

    def map(self, games: Sequence[Game]) -> List[Tuple[float, bool]]:
        if self.workers <= 1 or len(games) < 2:
            return [self.evaluate(g) for g in games]
        chunk = max(1, math.ceil(len(games) / (4 * self.workers)))
        with ProcessPoolExecutor(max_workers=self.workers, initializer=_init_worker,
                                 initargs=(self,)) as pool:
            return list(pool.map(_evaluate_in_worker, games, chunksize=chunk))


# --- archive -----------------------------------------------------------------------


def _covers_every_value(archive: Archive, exemplars: ExemplarSet, config: SearchConfig) -> bool:
    """Every exemplar matched somewhere, both setup values and every preference count present."""
    keys = [e.key for e in archive]
    matched = {i for k in keys for i, c in enumerate(k.counts) if c > 0}
    return (len(matched) == len(exemplars)
            and {k.setup for k in keys} == {False, True}
            and {k.total for k in keys} >= set(range(config.min_preferences,
                                                     config.max_preferences + 1)))


def _insert_batch(archive: Archive, games: Sequence[Game], evaluations, exemplars: ExemplarSet,
                  rng: np.random.Generator, generation: int,
                  stop: Optional[Callable[[], bool]] = None) -> int:
    inserted = 0
    for game, (fitness, coherent) in zip(games, evaluations):
        if stop is not None and stop():
            break
        assignment = tuple(assign_exemplars(game, exemplars, rng))
        key = key_from_assignment(game, assignment, len(exemplars))
        inserted += archive.insert(Elite(game, fitness, generation, key, assignment), coherent)
    return inserted


def _sample_acceptable(pcfg: Pcfg, rng: np.random.Generator, n: int, prefix: str,
                       mutation: MutationConfig) -> List[Game]:
    """Up to `n` grammar samples, keeping those a mutation would also accept."""
    games = []
    for i in range(n):
        try:
            game = with_name(sample_game(pcfg, rng), f"{prefix}-{i}")
        except GoalSynthError as e:
            logger.debug(f"Sample {i} discarded: {e}")
            continue
        if acceptable(game, mutation):
            games.append(game)
    return games


def init_archive(pcfg: Pcfg, evaluator: Evaluator, exemplars: ExemplarSet,
                 config: SearchConfig, mutation: MutationConfig,
                 rng: Optional[np.random.Generator] = None) -> Archive:
    """Seed the archive with the fittest of `init_samples` grammar samples.

    Samples are inserted in descending fitness order until `init_cap` cells
    are occupied or every behavioral-characteristic value is represented.
    """
    rng = rng if rng is not None else rng_for(config.seed, "init")
    games = _sample_acceptable(pcfg, rng, config.init_samples, "init", mutation)
    evaluations = evaluator.map(games)
    order = sorted(range(len(games)), key=lambda i: -evaluations[i][0])

    archive = Archive()
    _insert_batch(archive, [games[i] for i in order], [evaluations[i] for i in order], exemplars,
                  rng, 0, stop=lambda: len(archive) >= config.init_cap
                  or _covers_every_value(archive, exemplars, config))
    logger.info(f"Initialized archive from {len(games)}/{config.init_samples} usable samples: "
                f"{archive.occupancy(COHERENT)} coherent, {archive.occupancy(INCOHERENT)} "
                f"incoherent cells")
    return archive


def generation_stats(archive: Archive, generation: int, inserted: int,
                     noops: int) -> Dict[str, float]:
    summary = archive.fitness_summary(COHERENT)
    return {
        "generation": generation,
        "coherent_cells": archive.occupancy(COHERENT),
        "incoherent_cells": archive.occupancy(INCOHERENT),
        "inserted": inserted,
        "noops": noops,
        "fitness_mean": summary["mean"],
        "fitness_q1": summary["q1"],
        "fitness_median": summary["median"],
        "fitness_q3": summary["q3"],
        "fitness_max": summary["max"],
    }


def run_generation(archive: Archive, generation: int, evaluator: Evaluator, pcfg: Pcfg,
                   exemplars: ExemplarSet, config: SearchConfig,
                   mutation: MutationConfig) -> Dict[str, float]:
    """One batch of `updates` mutations, evaluated together and inserted in candidate order."""
    rng = rng_for(config.seed, "search", generation)
    partners = [e.game for e in archive]
    children, noops = [], 0
    for i in range(config.updates):
        parent = archive.sample(rng)
        result = mutate(parent.game, MutationContext(pcfg, rng, partners, mutation))
        if result.noop:
            noops += 1
            continue
        children.append(with_name(result.game, f"g{generation}-{i}"))
    inserted = _insert_batch(archive, children, evaluator.map(children), exemplars, rng,
                             generation)
    archive.generation = generation
    return generation_stats(archive, generation, inserted, noops)


def run_map_elites(archive: Archive, evaluator: Evaluator, pcfg: Pcfg, exemplars: ExemplarSet,
                   config: SearchConfig, mutation: MutationConfig,
                   generations: Optional[int] = None,
                   checkpoint: Optional[Callable[[Archive], None]] = None,
                   stats_path: Optional[Path] = None) -> List[Dict[str, float]]:
    """Continue the search from `archive.generation` for `generations` generations.

    Every generation draws from its own seeded stream, so a run resumed from a
    checkpoint continues exactly as the uninterrupted run would have.
    """
    generations = config.generations if generations is None else generations
    start = archive.generation
    history = []
    for generation in range(start + 1, start + generations + 1):
        stats = run_generation(archive, generation, evaluator, pcfg, exemplars, config, mutation)
        history.append(stats)
        if stats_path is not None:
            append_stats(stats_path, [stats])
        if generation % config.log_every == 0:
            logger.info(f"generation {generation}: {stats['coherent_cells']} coherent cells, "
                        f"mean fitness {stats['fitness_mean']:.3f}, "
                        f"{stats['inserted']} inserted")
        if checkpoint is not None and generation % config.checkpoint_every == 0:
            checkpoint(archive)
    if checkpoint is not None and generations > 0 and archive.generation % config.checkpoint_every:
        checkpoint(archive)
    return history


def pcfg_only_archive(pcfg: Pcfg, evaluator: Evaluator, exemplars: ExemplarSet,
                      config: SearchConfig, mutation: MutationConfig, n: int,
                      rng: Optional[np.random.Generator] = None) -> Archive:
    """Archive filled by inserting `n` plain grammar samples under the usual elite rule."""
    rng = rng if rng is not None else rng_for(config.seed, "pcfg_only")
    games = _sample_acceptable(pcfg, rng, n, "pcfg", mutation)
    archive = Archive()
    _insert_batch(archive, games, evaluator.map(games), exemplars, rng, 0)
    return archive


# --- stats files -------------------------------------------------------------------


def append_stats(path: Path, rows: Sequence[Mapping[str, float]]):
    """Append rows to a tab-separated stats series, writing the header for a new file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    new = not path.exists()
    with path.open("a", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STATS_COLUMNS, delimiter="\t",
                                lineterminator="\n")
        if new:
            writer.writeheader()
        writer.writerows(rows)


def read_stats(path: Path) -> List[Dict[str, float]]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return [{k: float(v) for k, v in row.items()}
                for row in csv.DictReader(fh, delimiter="\t")]
