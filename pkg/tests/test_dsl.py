"""Parsing, canonical printing and structural validation of game programs."""

import pytest

from goalsynth.exceptions import ArityError, GameParseError, UnknownNameError, ValidationError
from goalsynth.parser import load_games, parse_game, parse_games, tokenize
from goalsynth.printer import format_game, print_game
from goalsynth.syntax import OnceMeasure, find_node, iter_nodes
from goalsynth.validator import (
    DUPLICATE_PREFERENCE, UNDEFINED_PREFERENCE, UNKNOWN_VARIABLE, validate,
)

MINIMAL = """
(define (game minimal) (:domain many-objects-room-v1)
(:constraints (and
  (preference ballHeld
    (exists (?b - ball)
      (then (once (agent_holds ?b)) (once (not (agent_holds ?b))))))))
(:scoring (count ballHeld)))
"""


def _minimal(constraints: str = None, scoring: str = "(count ballHeld)") -> str:
    constraints = constraints or (
        "(preference ballHeld (exists (?b - ball) (then (once (agent_holds ?b)) "
        "(once (not (agent_holds ?b))))))")
    return (f"(define (game g) (:domain many-objects-room-v1) "
            f"(:constraints (and {constraints})) (:scoring {scoring}))")


class TestRoundTrip:
    """parse(print(g)) reproduces the tree and printing is a fixpoint."""

    def test_corpus_round_trips(self, corpus):
        for game in corpus:
            text = print_game(game)
            assert parse_game(text) == game
            assert print_game(parse_game(text)) == text

    def test_formatted_output_parses_to_same_tree(self, corpus):
        for game in corpus:
            assert parse_game(format_game(game)) == game

    def test_canonical_form_is_one_line(self, example_games):
        for game in example_games:
            assert "\n" not in print_game(game)
            assert "  " not in print_game(game)

    def test_whitespace_and_comments_do_not_matter(self):
        spaced = MINIMAL.replace(" ", "   ").replace("(once", "; a comment\n(once")
        assert parse_game(spaced) == parse_game(MINIMAL)

    def test_maximize_keyword_is_accepted(self):
        text = _minimal(scoring="maximize (count ballHeld)")
        assert print_game(parse_game(text)) == print_game(parse_game(_minimal()))

    def test_node_ids_are_preorder(self, example_games):
        game = example_games[0]
        ids = [ref.node.node_id for ref in iter_nodes(game)]
        assert ids == list(range(len(ids)))
        assert find_node(game, ids[-1]).node.node_id == ids[-1]

    def test_parse_games_reads_every_definition(self, example_games):
        text = "\n".join(print_game(g) for g in example_games)
        assert parse_games(text) == example_games


class TestParseErrors:
    """Malformed programs raise with a position."""

    def test_unbalanced_parentheses(self):
        with pytest.raises(GameParseError) as exc:
            tokenize("(define (game g)")
        assert exc.value.position == 0

    def test_stray_close_paren(self):
        with pytest.raises(GameParseError) as exc:
            tokenize("(a))")
        assert exc.value.position == 3

    def test_missing_scoring_section(self):
        text = MINIMAL.replace("(:scoring (count ballHeld))", "")
        with pytest.raises(GameParseError, match="missing :scoring"):
            parse_game(text)

    def test_duplicate_section(self):
        text = MINIMAL.replace("(:scoring", "(:domain other) (:scoring")
        with pytest.raises(GameParseError, match="duplicate section"):
            parse_game(text)

    def test_two_games_in_single_parse(self):
        with pytest.raises(GameParseError, match="exactly one game"):
            parse_game(MINIMAL + MINIMAL)

    def test_unknown_predicate(self):
        text = MINIMAL.replace("agent_holds ?b", "juggles ?b")
        with pytest.raises(UnknownNameError):
            parse_game(text)

    def test_unknown_type(self):
        text = MINIMAL.replace("?b - ball", "?b - unicorn")
        with pytest.raises(UnknownNameError):
            parse_game(text)

    def test_wrong_arity(self):
        text = MINIMAL.replace("(agent_holds ?b)", "(agent_holds ?b desk)")
        with pytest.raises(ArityError):
            parse_game(text)

    def test_then_needs_two_stages(self):
        with pytest.raises(GameParseError):
            parse_game(MINIMAL.replace("(once (not (agent_holds ?b)))", ""))


class TestLoading:

    def test_unparseable_files_are_skipped(self, tmp_path):
        (tmp_path / "good.pddl").write_text(MINIMAL, encoding="utf-8")
        (tmp_path / "nested").mkdir()
        (tmp_path / "nested" / "broken.dsl").write_text("(define (game", encoding="utf-8")
        (tmp_path / "notes.txt").write_text("not a game", encoding="utf-8")
        loaded = load_games(tmp_path)
        assert [(p.name, g.name) for p, g in loaded] == [("good.pddl", "minimal")]

    def test_nothing_parses(self, tmp_path):
        (tmp_path / "broken.pddl").write_text("(define (game", encoding="utf-8")
        with pytest.raises(GameParseError):
            load_games(tmp_path)

    @pytest.mark.parametrize("name", ["absent", "empty", "games.txt"])
    def test_bad_paths(self, tmp_path, name):
        (tmp_path / "empty").mkdir()
        (tmp_path / "games.txt").write_text(MINIMAL, encoding="utf-8")
        with pytest.raises(ValidationError):
            load_games(tmp_path / name)


class TestSequenceFunctions:

    def test_once_measure(self):
        pref = ("(preference farThrow (exists (?b - ball) (then (once-measure (agent_holds ?b) "
                "(distance agent ?b)) (once (not (agent_holds ?b))))))")
        game = parse_game(_minimal(pref, "(count-measure farThrow)"))
        seq = game.preferences[0].body.seq_funcs[0]
        assert isinstance(seq, OnceMeasure)
        assert "(once-measure (agent_holds ?b) (distance agent ?b))" in print_game(game)

    def test_count_with_type_qualifier_prints_name_and_type(self):
        game = parse_game(_minimal(scoring="(count ballHeld:dodgeball)"))
        assert print_game(game).endswith("(:scoring (count ballHeld:dodgeball)))")


class TestValidator:

    def test_corpus_is_clean(self, corpus):
        for game in corpus:
            assert validate(game) == []

    def test_unbound_variable(self):
        game = parse_game(MINIMAL.replace("(once (agent_holds ?b))", "(once (agent_holds ?c))"))
        kinds = [v.kind for v in validate(game)]
        assert kinds == [UNKNOWN_VARIABLE]

    def test_undefined_preference_reference(self):
        game = parse_game(_minimal(scoring="(+ (count ballHeld) (count missing))"))
        violations = validate(game)
        assert [v.kind for v in violations] == [UNDEFINED_PREFERENCE]
        assert "missing" in violations[0].message

    def test_duplicate_preference_names(self):
        pref = ("(preference ballHeld (exists (?b - ball) (then (once (agent_holds ?b)) "
                "(once (not (agent_holds ?b))))))")
        game = parse_game(_minimal(pref + " " + pref))
        assert DUPLICATE_PREFERENCE in [v.kind for v in validate(game)]
