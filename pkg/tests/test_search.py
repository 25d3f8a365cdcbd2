"""Behavioral keys, the elite archive, mutation operators and the MAP-Elites loop."""

import math

import numpy as np
import pytest

from goalsynth.archive import COHERENT, INCOHERENT, Archive, Elite
from goalsynth.exceptions import ValidationError, VersionMismatchError
from goalsynth.exemplars import (
    ArchiveKey, assign_exemplars, behavioral_key, enumerate_keys, key_from_assignment,
    load_exemplars,
)
from goalsynth.features import raw_features
from goalsynth.mutation import (
    OPERATORS, MutationConfig, MutationContext, acceptable, has_unique_preferences, mutate,
)
from goalsynth.parser import parse_game
from goalsynth.printer import print_game
from goalsynth.search import (
    Evaluator, SearchConfig, append_stats, coherence_check, init_archive, pcfg_only_archive,
    read_stats, run_map_elites,
)
from goalsynth.validator import validate

DESK_EXEMPLARS = ["throwAttempt", "itemInClosedDrawerAtEnd", "watchOnShelf"]

TINY = SearchConfig(generations=3, updates=6, init_samples=24, init_cap=10, min_preferences=1,
                    max_preferences=2, checkpoint_every=2, log_every=1, workers=1, seed=17)
TINY_MUTATION = MutationConfig(min_preferences=1, max_preferences=2)
DESK = SearchConfig(generations=200, updates=100, init_samples=256, init_cap=28,
                    min_preferences=1, max_preferences=2, checkpoint_every=50, log_every=50,
                    workers=1, seed=0)


@pytest.fixture(scope="module")
def evaluator(ngram_fitness):
    return Evaluator(ngram_fitness.model, ngram_fitness.ctx, workers=1)


@pytest.fixture(scope="module")
def desk_exemplars():
    return load_exemplars(names=DESK_EXEMPLARS)


def _elite(fitness, key=None, name="g"):
    game = parse_game(
        f"(define (game {name}) (:domain many-objects-room-v1) (:constraints (and "
        "(preference p (exists (?b - ball) (then (once (agent_holds ?b)) "
        "(once (not (agent_holds ?b)))))))) (:scoring (count p)))")
    return Elite(game, fitness, 0, key or ArchiveKey((1, 0, 0), 0, False))


def _seeded_archive(evaluator, exemplars, extra=()):
    """The exemplar games themselves (and `extra` games), placed as the initial elites."""
    archive = Archive()
    rng = np.random.default_rng(0)
    for game in [e.game for e in exemplars.exemplars] + list(extra):
        fitness, coherent = evaluator.evaluate(game)
        assignment = tuple(assign_exemplars(game, exemplars, rng))
        key = key_from_assignment(game, assignment, len(exemplars))
        archive.insert(Elite(game, fitness, 0, key, assignment), coherent)
    return archive


def _snapshot(archive):
    return [(h, e.key, e.fitness, print_game(e.game)) for h in (COHERENT, INCOHERENT)
            for e in archive.elites(h)]


class TestExemplars:

    def test_full_archive_capacity(self):
        keys = enumerate_keys(9, 1, 4)
        assert len(keys) == 2000
        by_total = [sum(1 for k in keys if k.total == n) for n in range(1, 5)]
        assert by_total == [20, 110, 440, 1430]
        assert len(set(keys)) == 2000

    def test_desk_capacity(self):
        assert len(enumerate_keys(3, 1, 2)) == 28

    def test_every_exemplar_matches_itself(self):
        exemplars = load_exemplars()
        assert len(exemplars) == 9
        for i, exemplar in enumerate(exemplars.exemplars):
            assert i in exemplars.matches(np.asarray(exemplar.vector))

    def test_key_string_round_trip(self):
        key = ArchiveKey((0, 2, 1), 1, True)
        assert key.to_str() == "1:0,2,1:1"
        assert ArchiveKey.from_str(key.to_str()) == key

    def test_behavioral_key_of_an_exemplar_game(self, desk_exemplars):
        game = desk_exemplars.exemplars[0].game
        key = behavioral_key(game, desk_exemplars, np.random.default_rng(0))
        assert key.total == 1
        assert key.no_match == 0
        assert key.setup is False

    def test_preference_count_outside_range(self, games_by_name, desk_exemplars):
        with pytest.raises(ValidationError):
            behavioral_key(games_by_name["bin-throws"], desk_exemplars,
                           np.random.default_rng(0), max_preferences=1)

    def test_unknown_exemplar_name(self):
        with pytest.raises(ValidationError):
            load_exemplars(names=["noSuchPreference"])


class TestArchive:

    def test_strictly_fitter_elite_replaces(self):
        archive = Archive()
        assert archive.insert(_elite(1.0, name="first"), coherent=True)
        assert not archive.insert(_elite(1.0, name="tie"), coherent=True)
        assert not archive.insert(_elite(0.5, name="worse"), coherent=True)
        assert archive.insert(_elite(2.0, name="better"), coherent=True)
        assert archive.occupancy(COHERENT) == 1
        assert archive.elites(COHERENT)[0].game.name == "better"
        assert (archive.stats.inserted, archive.stats.replaced, archive.stats.rejected) == (1, 1, 2)

    def test_halves_are_independent(self):
        archive = Archive()
        archive.insert(_elite(1.0), coherent=True)
        archive.insert(_elite(5.0), coherent=False)
        assert archive.occupancy(COHERENT) == 1
        assert archive.occupancy(INCOHERENT) == 1
        assert [e.fitness for e in archive.outputs()] == [1.0]

    def test_sampling_an_empty_archive(self):
        with pytest.raises(ValidationError):
            Archive().sample(np.random.default_rng(0))

    def test_fitness_summary(self):
        archive = Archive()
        for i, fitness in enumerate([1.0, 2.0, 3.0]):
            archive.insert(_elite(fitness, ArchiveKey((i, 0, 0), 1, False)), coherent=True)
        summary = archive.fitness_summary(COHERENT)
        assert summary["mean"] == pytest.approx(2.0)
        assert summary["median"] == pytest.approx(2.0)
        assert summary["max"] == 3.0
        assert math.isnan(archive.fitness_summary(INCOHERENT)["mean"])

    def test_checkpoint_round_trip(self, tmp_path):
        archive = Archive(generation=7)
        archive.insert(_elite(1.5), coherent=True)
        archive.insert(_elite(-0.5, ArchiveKey((0, 0, 0), 1, True)), coherent=False)
        path = tmp_path / "archive.yml"
        archive.save(path, {"registry_version": "r1", "seed": 3})
        loaded, header = Archive.load(path, "r1")
        assert header["seed"] == 3
        assert loaded.generation == 7
        assert _snapshot(loaded) == _snapshot(archive)

    def test_checkpoint_registry_mismatch(self, tmp_path):
        path = tmp_path / "archive.yml"
        Archive().save(path, {"registry_version": "r1"})
        with pytest.raises(VersionMismatchError):
            Archive.load(path, "r2")


class TestMutation:

    def test_children_are_acceptable_or_noops(self, games_by_name, pcfg, corpus):
        parent = games_by_name["bin-throws"]
        config = MutationConfig()
        rng = np.random.default_rng(2)
        for _ in range(20):
            result = mutate(parent, MutationContext(pcfg, rng, corpus, config))
            assert result.noop or acceptable(result.game, config)
            if result.noop:
                assert result.game is parent

    def test_single_operator_is_used(self, games_by_name, pcfg):
        only_delete = MutationConfig().without([op for op in OPERATORS if op != "delete"])
        result = mutate(games_by_name["bin-throws"],
                        MutationContext(pcfg, np.random.default_rng(0), (), only_delete))
        assert result.operator in ("delete", "none")

    def test_duplicate_preferences_are_rejected(self):
        pref = ("(preference {} (exists (?b - ball) (then (once (agent_holds ?b)) "
                "(once (not (agent_holds ?b))))))")
        game = parse_game(
            "(define (game twins) (:domain many-objects-room-v1) (:constraints (and "
            f"{pref.format('a')} {pref.format('b')})) (:scoring (+ (count a) (count b))))")
        assert not has_unique_preferences(game)
        assert not acceptable(game, MutationConfig())


class TestCoherence:

    def test_corpus_games_are_coherent(self, feature_ctx, games_by_name):
        for name in ("throwAttempt", "bin-throws"):
            assert coherence_check(raw_features(games_by_name[name], feature_ctx))

    def test_unreferenced_preference_is_incoherent(self, feature_ctx):
        game = parse_game(
            "(define (game g) (:domain many-objects-room-v1) (:constraints (and "
            "(preference a (exists (?b - ball) (then (once (agent_holds ?b)) "
            "(once (not (agent_holds ?b)))))) "
            "(preference b (exists (?d - drawer) (then (once (not (open ?d))) "
            "(once (open ?d))))))) (:scoring (count a)))")
        assert not coherence_check(raw_features(game, feature_ctx))


class TestMapElites:

    def test_initialization_respects_cap(self, pcfg, evaluator, desk_exemplars):
        archive = init_archive(pcfg, evaluator, desk_exemplars, TINY, TINY_MUTATION)
        assert len(archive) <= TINY.init_cap
        for elite in archive:
            assert 1 <= len(elite.game.preferences) <= 2
            assert elite.key.total == len(elite.game.preferences)

    def test_cells_are_only_added(self, pcfg, evaluator, desk_exemplars, tmp_path):
        archive = _seeded_archive(evaluator, desk_exemplars)
        checkpoints = []
        stats_path = tmp_path / "stats.tsv"
        history = run_map_elites(archive, evaluator, pcfg, desk_exemplars, TINY, TINY_MUTATION,
                                 3, checkpoints.append, stats_path)
        assert [row["generation"] for row in history] == [1, 2, 3]
        assert [row["generation"] for row in read_stats(stats_path)] == [1.0, 2.0, 3.0]
        # generation 2 and once more at the end
        assert len(checkpoints) == 2
        occupied = [row["coherent_cells"] + row["incoherent_cells"] for row in history]
        assert occupied == sorted(occupied)
        assert archive.generation == 3
        for elite in archive:
            assert acceptable(elite.game, TINY_MUTATION)

    @pytest.mark.slow
    def test_seeded_runs_are_identical(self, pcfg, evaluator, desk_exemplars):
        snapshots = []
        for _ in range(2):
            archive = _seeded_archive(evaluator, desk_exemplars)
            run_map_elites(archive, evaluator, pcfg, desk_exemplars, TINY, TINY_MUTATION)
            snapshots.append(_snapshot(archive))
        assert snapshots[0] == snapshots[1]

    @pytest.mark.slow
    def test_resumed_run_matches_uninterrupted_run(self, pcfg, evaluator, desk_exemplars,
                                                   tmp_path):
        straight = _seeded_archive(evaluator, desk_exemplars)
        run_map_elites(straight, evaluator, pcfg, desk_exemplars, TINY, TINY_MUTATION, 3)

        first = _seeded_archive(evaluator, desk_exemplars)
        run_map_elites(first, evaluator, pcfg, desk_exemplars, TINY, TINY_MUTATION, 2)
        first.save(tmp_path / "archive.yml")
        resumed, _ = Archive.load(tmp_path / "archive.yml")
        run_map_elites(resumed, evaluator, pcfg, desk_exemplars, TINY, TINY_MUTATION, 1)

        assert resumed.generation == straight.generation == 3
        assert _snapshot(resumed) == _snapshot(straight)

    def test_stats_header_written_once(self, tmp_path):
        path = tmp_path / "stats.tsv"
        row = {"generation": 1, "coherent_cells": 2, "incoherent_cells": 0, "inserted": 1,
               "noops": 0, "fitness_mean": 0.5, "fitness_q1": 0.5, "fitness_median": 0.5,
               "fitness_q3": 0.5, "fitness_max": 0.5}
        append_stats(path, [row])
        append_stats(path, [dict(row, generation=2)])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("generation\t")


@pytest.fixture(scope="module")
def desk_run(pcfg, evaluator, desk_exemplars, example_games):
    """The desk-scale search, with the coherent elites' fitness at every checkpoint."""
    archive = _seeded_archive(evaluator, desk_exemplars, example_games)
    checkpoints = []

    def record(a):
        checkpoints.append({e.key: e.fitness for e in a.elites(COHERENT)})

    run_map_elites(archive, evaluator, pcfg, desk_exemplars, DESK, TINY_MUTATION, None, record)
    return archive, checkpoints


@pytest.mark.slow
class TestDeskRun:
    """200 generations of 100 updates over the 28-cell desk key space."""

    def test_every_coherent_cell_is_filled(self, desk_run):
        archive, _ = desk_run
        assert archive.occupancy(COHERENT) == 28

    def test_cell_fitness_never_drops(self, desk_run):
        _, checkpoints = desk_run
        assert len(checkpoints) == 4
        for before, after in zip(checkpoints, checkpoints[1:]):
            for key, fitness in before.items():
                assert after[key] >= fitness

    def test_reported_elites_are_coherent_and_valid(self, desk_run, evaluator):
        archive, _ = desk_run
        for elite in archive.outputs():
            assert coherence_check(raw_features(elite.game, evaluator.ctx))
            assert validate(elite.game) == []

    def test_grammar_sampling_alone_does_worse(self, desk_run, pcfg, evaluator,
                                               desk_exemplars):
        archive, _ = desk_run
        budget = DESK.init_samples + DESK.generations * DESK.updates
        sampled = pcfg_only_archive(pcfg, evaluator, desk_exemplars, DESK, TINY_MUTATION,
                                    budget, np.random.default_rng(1))
        assert sampled.occupancy(COHERENT) < archive.occupancy(COHERENT)
        if sampled.occupancy(COHERENT):
            assert (sampled.fitness_summary(COHERENT)["mean"]
                    < archive.fitness_summary(COHERENT)["mean"])
