"""Corpus analyses: abstract structures, motifs, role fillers and edit distance."""

import math

import numpy as np
import pytest

from goalsynth.analysis import (
    OTHER, PLACEMENT, STACKING, THROWING, THROWING_ONLY, abstract_structures, classify_motifs,
    compare_archives, edit_distance, levenshtein, mean_activation_jaccard, motif_split,
    nearest_real, preprocess, role_filler_rows, role_filler_stats, run_ablation, write_table,
)
from goalsynth.archive import COHERENT, Archive, Elite
from goalsynth.config import Config
from goalsynth.exceptions import ConfigurationError, ValidationError
from goalsynth.exemplars import ArchiveKey
from goalsynth.interpreter import InterpConfig
from goalsynth.parser import parse_game
from goalsynth.pcfg import sample_game
from goalsynth.printer import print_game


class TestLevenshtein:

    def test_known_distances(self):
        assert levenshtein("kitten", "sitting") == 3
        assert levenshtein("", "abc") == 3
        assert levenshtein("abc", "abc") == 0
        assert levenshtein("flaw", "lawn") == 2

    def test_symmetry_and_triangle_inequality(self):
        words = ["once", "hold", "hold-while", "at-end", "then"]
        for a in words:
            for b in words:
                assert levenshtein(a, b) == levenshtein(b, a)
                for c in words:
                    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)

    def test_preprocess_drops_name_and_domain(self, games_by_name):
        text = preprocess(games_by_name["bin-throws"])
        assert "bin-throws" not in text
        assert ":domain" not in text
        assert text.startswith("(:setup")

    def test_renamed_game_is_at_distance_zero(self, games_by_name):
        game = games_by_name["bed-throws"]
        renamed = print_game(game).replace("bed-throws", "another-name")
        assert edit_distance(game, renamed) == 0

    def test_nearest_real_of_a_corpus_game_is_itself(self, example_games):
        for game in example_games:
            nearest, distance = nearest_real(game, example_games)
            assert nearest is game
            assert distance == 0

    def test_nearest_real_needs_a_corpus(self, example_games):
        with pytest.raises(ValidationError):
            nearest_real(example_games[0], [])

    def test_metric_axioms_on_random_strings(self):
        rng = np.random.default_rng(6)

        def word():
            return "".join(rng.choice(list("abcd"), size=int(rng.integers(0, 9))))

        for _ in range(1000):
            a, b, c = word(), word(), word()
            assert (levenshtein(a, b) == 0) == (a == b)
            assert levenshtein(a, b) == levenshtein(b, a)
            assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)

    def test_nearest_real_agrees_with_a_full_scan(self, corpus, pcfg):
        rng = np.random.default_rng(9)
        for _ in range(20):
            sample = sample_game(pcfg, rng)
            best, distance = nearest_real(sample, corpus)
            assert distance == min(edit_distance(sample, g) for g in corpus)
            assert edit_distance(sample, best) == distance


class TestStructures:

    def test_counts_every_modal(self, example_games):
        counts = abstract_structures(example_games)
        # three stages in each throw preference, one at-end in each placement preference
        assert counts.total == 3 * 3 + 4
        assert counts.unique <= counts.total
        assert counts.rows()[0]["count"] == max(counts.counts.values())

    def test_variable_names_do_not_matter(self, games_by_name):
        game = games_by_name["bed-throws"]
        renamed = parse_game(print_game(game).replace("?b", "?x"))
        assert abstract_structures([game]).counts == abstract_structures([renamed]).counts

    def test_head_share_of_empty_corpus(self):
        assert math.isnan(abstract_structures([]).head_share())


class TestMotifs:

    def test_throwing_and_placement(self, games_by_name):
        assert classify_motifs(games_by_name["bin-throws"]) == {THROWING, PLACEMENT}
        assert motif_split(games_by_name["bin-throws"]) == OTHER

    def test_pure_throwing(self, games_by_name):
        assert motif_split(games_by_name["throwAttempt"]) == THROWING_ONLY

    def test_stacking(self, games_by_name):
        assert STACKING in classify_motifs(games_by_name["tower-builder"])
        assert THROWING not in classify_motifs(games_by_name["tower-builder"])

    def test_role_fillers_count_games(self, games_by_name):
        table = role_filler_stats([games_by_name["throwAttempt"], games_by_name["bin-throws"]])
        assert table[(THROWING_ONLY, "agent_holds", "balls")] == 1
        assert table[(OTHER, "agent_holds", "balls")] == 1
        assert table[(OTHER, "in", "receptacles")] == 1
        rows = role_filler_rows(table)
        assert {"split", "predicate", "category", "count"} == set(rows[0])


class TestTraceOverlap:

    def test_identical_games_overlap_fully(self, games_by_name, traces):
        game = games_by_name["bin-throws"]
        assert mean_activation_jaccard([game, game], traces) == 1.0

    def test_single_game_has_no_pairs(self, games_by_name, traces):
        assert math.isnan(mean_activation_jaccard([games_by_name["bin-throws"]], traces))


class TestTables:

    def test_tab_separated_with_header(self, tmp_path):
        path = tmp_path / "out" / "table.tsv"
        write_table(path, [{"name": "a", "value": 0.1}, {"name": "b", "value": float("nan")}])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines == ["name\tvalue", "a\t0.1", "b\tnan"]


class TestAblations:

    @pytest.fixture
    def archives(self, exemplar_games, pcfg):
        """Exemplar games against grammar samples, cell for cell."""
        full, ablated = Archive(), Archive()
        rng = np.random.default_rng(3)
        for i, game in enumerate(exemplar_games):
            key = ArchiveKey((i,), 0, False)
            full.insert(Elite(game, 0.0, 0, key), coherent=True)
            ablated.insert(Elite(sample_game(pcfg, rng), 0.0, 0, key), coherent=True)
        return full, ablated

    def test_paired_comparison_finds_the_weaker_archive(self, archives, ngram_fitness, traces):
        full, ablated = archives
        report = compare_archives("no_crossover", ngram_fitness, full, ablated, traces,
                                  InterpConfig())
        metrics = report.metrics
        assert report.test == "paired_t"
        assert metrics["paired_cells"] == 9
        assert metrics["full_occupancy"] == metrics["ablated_occupancy"] == 9
        assert metrics["full_mean_fitness"] > metrics["ablated_mean_fitness"]
        assert metrics["statistic"] > 0
        assert metrics["p_value"] < 0.05
        for name in ("full_satisfaction", "ablated_satisfaction"):
            assert 0.0 <= metrics[name] <= 1.0

    def test_no_shared_cells(self, archives, ngram_fitness):
        full, _ = archives
        report = compare_archives("no_crossover", ngram_fitness, full, Archive(), [],
                                  InterpConfig())
        assert report.metrics["paired_cells"] == 0
        assert math.isnan(report.metrics["p_value"])
        assert "full_satisfaction" not in report.metrics

    def test_unknown_ablation(self, corpus, traces):
        with pytest.raises(ConfigurationError):
            run_ablation("no_grammar", corpus, traces, Config())

    @pytest.mark.slow
    @pytest.mark.parametrize("profile", ["no_crossover", "pcfg_only"])
    def test_short_rerun(self, profile, archives, corpus, traces, ngram_fitness):
        full, _ = archives
        config = Config(profiles=["desk"], cli_args={
            "search.generations": 2, "search.updates": 5, "search.init_samples": 16,
            "search.init_cap": 8, "search.log_every": 1})
        report = run_ablation(profile, corpus, traces, config, ngram_fitness, full)
        assert report.profile == profile
        assert report.metrics["full_occupancy"] == full.occupancy(COHERENT)
        assert 0 <= report.metrics["ablated_occupancy"] <= 16 + 2 * 5
        assert [row["metric"] for row in report.rows()] == list(report.metrics)
