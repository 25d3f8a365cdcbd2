"""Grammar fitting, sampling and subtree regrowth."""

import numpy as np
import pytest

from goalsynth import pcfg as pcfg_module
from goalsynth.analysis import edit_distance, regrowth_distance_correlation
from goalsynth.exceptions import GoalSynthError, NodeNotFoundError
from goalsynth.fitness import gen_negatives
from goalsynth.parser import parse_game
from goalsynth.pcfg import fit_pcfg, regrow, sample_game
from goalsynth.printer import print_game
from goalsynth.syntax import NumberLiteral, get_at, iter_nodes, replace_at


def _grafted(before, after, path):
    """`before` with the subtree at `path` taken from `after`."""
    return replace_at(before, path, get_at(after, path))


class TestFit:

    def test_empty_corpus(self):
        with pytest.raises(GoalSynthError):
            fit_pcfg([])

    def test_smoothed_weights_are_positive(self, pcfg):
        pcfg.check()
        for counts in pcfg.rules.values():
            assert all(w > 0 for w in counts.values())


class TestSampling:

    def test_samples_print_and_parse_back(self, pcfg):
        rng = np.random.default_rng(11)
        for _ in range(200):
            game = sample_game(pcfg, rng)
            text = print_game(game)
            assert parse_game(text) == game
            assert print_game(parse_game(text)) == text

    def test_seeded_samples_are_identical(self, pcfg):
        a = [print_game(sample_game(pcfg, np.random.default_rng(5))) for _ in range(3)]
        b = [print_game(sample_game(pcfg, np.random.default_rng(5))) for _ in range(3)]
        assert a == b


class TestRegrow:

    def test_scoring_root_leaves_other_sections_alone(self, games_by_name, pcfg):
        game = games_by_name["bin-throws"]
        rng = np.random.default_rng(3)
        for _ in range(10):
            regrown = regrow(game, game.scoring.node_id, pcfg, rng)
            assert regrown.setup == game.setup
            assert regrown.preferences == game.preferences
            assert regrown.terminal == game.terminal

    def test_number_leaf(self, games_by_name, pcfg):
        game = games_by_name["bin-throws"]
        ref = next(r for r in iter_nodes(game) if isinstance(r.node, NumberLiteral))
        regrown = regrow(game, ref.node.node_id, pcfg, np.random.default_rng(4))
        assert isinstance(get_at(regrown, ref.path), NumberLiteral)
        assert _grafted(game, regrown, ref.path) == regrown

    def test_nodes_outside_the_subtree_are_unchanged(self, corpus, pcfg):
        rng = np.random.default_rng(8)
        for game in corpus:
            refs = [r for r in iter_nodes(game) if r.category != "game"]
            for ref in (refs[int(i)] for i in rng.choice(len(refs), size=5)):
                regrown = regrow(game, ref.node.node_id, pcfg, rng)
                assert _grafted(game, regrown, ref.path) == regrown
                assert parse_game(print_game(regrown)) == regrown

    def test_unknown_node(self, games_by_name, pcfg):
        with pytest.raises(NodeNotFoundError):
            regrow(games_by_name["bin-throws"], 10_000, pcfg, np.random.default_rng(0))

    def test_draws_over_the_depth_cap_are_never_kept(self, games_by_name, pcfg, monkeypatch):
        monkeypatch.setattr(pcfg_module, "_within_cap", lambda node, depth, cap: False)
        game = games_by_name["bin-throws"]
        with pytest.raises(GoalSynthError, match="depth cap"):
            regrow(game, game.scoring.node_id, pcfg, np.random.default_rng(0))


@pytest.mark.slow
class TestRegrowthNegatives:
    """A thousand corruptions of ten games."""

    @pytest.fixture(scope="class")
    def sources(self, corpus):
        assert len(corpus) >= 10
        return list(corpus[:10])

    @pytest.fixture(scope="class")
    def negatives(self, sources, pcfg):
        return gen_negatives(sources, pcfg, 100, np.random.default_rng(21))

    def test_corruptions_parse_and_differ(self, sources, negatives):
        flat = [n for group in negatives for n in group]
        assert len(flat) == 1000
        changed = 0
        for negative in flat:
            assert parse_game(print_game(negative.game)) == negative.game
            changed += edit_distance(sources[negative.source], negative.game) > 0
        assert changed >= 950

    def test_bigger_regrowths_move_further(self, sources, negatives):
        assert regrowth_distance_correlation(sources, negatives) > 0.3
