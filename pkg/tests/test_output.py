"""Templated descriptions, syntax-tree graphs and the run report."""

import pytest

from goalsynth.archive import Archive, Elite
from goalsynth.describe import body_steps, describe
from goalsynth.exceptions import ConfigurationError
from goalsynth.exemplars import ArchiveKey
from goalsynth.graph import node_label, occupancy_graph, tree_graph
from goalsynth.report import write_run_report
from goalsynth.syntax import iter_nodes
from goalsynth.templates import TemplateManager


class TestDescribe:

    def test_sections_in_order(self, games_by_name):
        text = describe(games_by_name["bin-throws"])
        setup = text.index("The setup of the game is:")
        prefs = text.index("The preferences of the game are:")
        end = text.index("The game ends when")
        score = text.index("At the end of the game, the score is")
        assert setup < prefs < end < score

    def test_staged_preference(self, games_by_name):
        text = describe(games_by_name["bin-throws"])
        assert "-----Preference 1-----" in text
        assert "This preference is satisfied when:" in text
        assert "- first, there is a state where the agent is holding" in text
        assert "- finally, there is a state where" in text
        assert "the number of times 'throwToBin' has been satisfied" in text

    def test_step_words(self, games_by_name):
        steps = body_steps(games_by_name["bin-throws"].preferences[0].body)
        assert [s.split(",")[0] for s in steps] == ["first", "next", "finally"]

    def test_at_end_is_a_single_step(self, games_by_name):
        steps = body_steps(games_by_name["tower-builder"].preferences[0].body)
        assert len(steps) == 1
        assert steps[0].startswith("in the final game state,")

    def test_absent_sections_are_omitted(self, games_by_name):
        text = describe(games_by_name["bed-throws"])
        assert "The setup of the game is:" not in text
        assert "The game ends when" not in text

    def test_description_is_deterministic(self, corpus):
        for game in corpus:
            assert describe(game) == describe(game)


class TestTemplates:

    def test_missing_custom_dir_falls_back(self, tmp_path, games_by_name):
        manager = TemplateManager(tmp_path / "does-not-exist")
        assert describe(games_by_name["bed-throws"], manager) == describe(
            games_by_name["bed-throws"])

    def test_custom_template_overrides(self, tmp_path, games_by_name):
        (tmp_path / "description.txt.j2").write_text("{{ name }}: {{ preferences|length }}\n")
        manager = TemplateManager(tmp_path)
        assert describe(games_by_name["bin-throws"], manager) == "bin-throws: 2\n"

    def test_unknown_template(self):
        with pytest.raises(ConfigurationError):
            TemplateManager().get_template("missing.j2")


class TestGraphs:

    def test_one_graph_node_per_syntax_node(self, games_by_name):
        game = games_by_name["bin-throws"]
        source = tree_graph(game).source
        n = len(list(iter_nodes(game)))
        assert f"n{n - 1} [" in source
        assert f"n{n} [" not in source
        assert source.count("->") == n - 1

    def test_labels(self, games_by_name):
        game = games_by_name["bin-throws"]
        source = tree_graph(game).source
        assert '"game bin-throws"' in source
        assert '"preference throwToBin"' in source
        assert node_label(game.preferences[0].body) == "Then"

    def test_occupancy_clusters(self, games_by_name):
        archive = Archive()
        game = games_by_name["throwAttempt"]
        archive.insert(Elite(game, 1.0, 0, ArchiveKey((1, 0, 0), 0, False)), coherent=True)
        archive.insert(Elite(game, 2.0, 0, ArchiveKey((1, 1, 0), 0, True)), coherent=True)
        source = occupancy_graph(archive, ["throwAttempt", "drawer", "watch"]).source
        assert "cluster_1" in source
        assert "cluster_2" in source
        assert "throwAttempt x1" in source


class TestRunReport:

    def test_report_with_plots(self, tmp_path, games_by_name):
        archive = Archive(generation=2)
        archive.insert(Elite(games_by_name["throwAttempt"], 0.75, 1,
                             ArchiveKey((1, 0, 0), 0, False)), coherent=True)
        stats = [{"generation": g, "coherent_cells": 1, "incoherent_cells": 0, "inserted": 1,
                  "noops": 0, "fitness_mean": 0.75, "fitness_q1": 0.75,
                  "fitness_median": 0.75, "fitness_q3": 0.75, "fitness_max": 0.75}
                 for g in (1, 2)]
        header = {"seed": 5, "registry_version": "1-abc", "config_hash": "f00"}
        path = write_run_report(archive, stats, header, tmp_path, ["a", "b", "c"], 1, 2)
        html = path.read_text(encoding="utf-8")
        assert path.name == "report.html"
        assert (tmp_path / "occupancy.png").exists()
        assert (tmp_path / "fitness.png").exists()
        assert "1/28" in html
        assert "seed 5" in html
        assert "0.7500" in html
