"""Trace parsing, preference matching, count modes and game scoring."""

import pytest

from goalsynth.exceptions import ScoringError, TraceFormatError
from goalsynth.interpreter import (
    CountContext, Satisfaction, activating_components, activation_jaccard, compile_preference,
    count_mode, non_overlapping, replay_report, run_preference, score_game,
)
from goalsynth.parser import parse_game
from goalsynth.trace import parse_trace

THROW_THROUGH_BIN = "\n".join([
    "{trace: through-bin, objects: [{id: ball1, type: dodgeball}, "
    "{id: bin1, type: hexagonal_bin}]}",
    "{state: 0, agent: {position: [0, 0, 0]}, "
    "objects: {ball1: {position: [0, 0, 0], held: true}, bin1: {position: [2, 0, 0]}}}",
    "{state: 1, objects: {ball1: {position: [1, 1, 0], held: false, in_motion: true}}}",
    "{state: 2, objects: {ball1: {position: [2, 0.5, 0]}}, touch: [[ball1, bin1]]}",
    "{state: 3, objects: {ball1: {position: [2, 0, 0], in_motion: false}}, in: [[bin1, ball1]]}",
])

HOLD_WHILE_GAME = """
(define (game bounce) (:domain many-objects-room-v1)
(:constraints (and
  (preference bounceThrow
    (exists (?b - dodgeball ?h - hexagonal_bin)
      (then
        (once (agent_holds ?b))
        (hold-while (and (not (agent_holds ?b)) (in_motion ?b)) (touch ?b ?h))
        (once (not (in_motion ?b))))))
  (preference crouchThrow
    (exists (?b - dodgeball)
      (then
        (once (agent_holds ?b))
        (hold-while (and (not (agent_holds ?b)) (in_motion ?b)) (agent_crouches))
        (once (not (in_motion ?b))))))))
(:scoring (+ (count bounceThrow) (count crouchThrow))))
"""

TERMINAL_GAME = """
(define (game first-throw) (:domain many-objects-room-v1)
(:constraints (and
  (preference throwAttempt
    (exists (?d - dodgeball)
      (then
        (once (agent_holds ?d))
        (hold (and (not (agent_holds ?d)) (in_motion ?d)))
        (once (not (in_motion ?d))))))))
(:terminal (>= (count throwAttempt) 1))
(:scoring (count throwAttempt)))
"""


def _sat(start, end, binding=(("?d", "ball1"),), measure=None):
    return Satisfaction("p", binding, start, end, measure)


class TestTraceFormat:

    def test_example_trace_loads(self, two_throws):
        assert two_throws.id == "two-throws"
        assert len(two_throws) == 6
        assert two_throws.states[0].is_first_state
        assert two_throws.states[-1].is_last_state

    def test_fluents_persist_between_states(self, two_throws):
        # state 2 only updates position and in_motion; held stays false from state 1
        assert two_throws.states[2].objects["ball1"].held is False
        assert two_throws.states[3].objects["ball1"].held is True

    def test_colored_variant_matches_base_type(self, two_throws):
        assert two_throws.candidates(["dodgeball"]) == ["ball1"]
        assert two_throws.candidates(["ball"]) == ["ball1"]

    def test_missing_header(self):
        with pytest.raises(TraceFormatError) as exc:
            parse_trace("{state: 0, objects: {}}")
        assert exc.value.line == 1

    def test_undeclared_object(self):
        text = ("{trace: t, objects: [{id: ball1, type: dodgeball}]}\n"
                "{state: 0, objects: {ball1: {position: [0, 0, 0]}, ghost: {held: true}}}\n")
        with pytest.raises(TraceFormatError, match="undeclared object ghost") as exc:
            parse_trace(text)
        assert exc.value.line == 2

    def test_state_indices_must_increase(self):
        text = ("{trace: t, objects: [{id: ball1, type: dodgeball}]}\n"
                "{state: 0, objects: {ball1: {position: [0, 0, 0]}}}\n"
                "{state: 0}\n")
        with pytest.raises(TraceFormatError, match="does not increase"):
            parse_trace(text)

    def test_first_state_snapshots_every_object(self):
        text = ("{trace: t, objects: [{id: ball1, type: dodgeball}, "
                "{id: bin1, type: hexagonal_bin}]}\n"
                "{state: 0, objects: {ball1: {position: [0, 0, 0]}}}\n")
        with pytest.raises(TraceFormatError, match="missing bin1"):
            parse_trace(text)

    def test_unknown_object_type(self):
        with pytest.raises(TraceFormatError, match="unknown object type"):
            parse_trace("{trace: t, objects: [{id: x, type: spaceship}]}\n")

    def test_no_states(self):
        with pytest.raises(TraceFormatError, match="no states"):
            parse_trace("{trace: t, objects: []}\n")


class TestPreferenceMatching:

    def test_two_throws_counted(self, games_by_name, two_throws):
        game = games_by_name["bin-throws"]
        automaton = compile_preference(game.preferences[1])
        sats = run_preference(automaton, two_throws)
        assert [(s.start, s.end) for s in sats] == [(0, 2), (3, 5)]
        assert count_mode("count", sats) == 2
        assert count_mode("count-once", sats) == 1
        assert count_mode("count-once-per-objects", sats) == 1

    def test_only_second_throw_lands_in_bin(self, games_by_name, two_throws):
        report = score_game(games_by_name["bin-throws"], two_throws)
        assert report.error is None
        assert report.total == 1.0
        assert report.counts["(count throwToBin)"] == 1.0
        assert report.terminal_state is None

    def test_hold_while_requires_every_while_clause(self):
        game = parse_game(HOLD_WHILE_GAME)
        trace = parse_trace(THROW_THROUGH_BIN)
        report = score_game(game, trace)
        assert report.counts["(count bounceThrow)"] == 1.0
        assert report.counts["(count crouchThrow)"] == 0.0
        sats = report.satisfactions["bounceThrow"]
        assert [(s.start, s.end) for s in sats] == [(0, 3)]
        assert sats[0].binding_map == {"?b": "ball1", "?h": "bin1"}

    def test_terminal_truncates_the_trace(self, two_throws):
        report = score_game(parse_game(TERMINAL_GAME), two_throws)
        assert report.terminal_state == 2
        assert report.total == 1.0

    def test_replay_report_is_plain_data(self, games_by_name, two_throws):
        data = replay_report(score_game(games_by_name["bin-throws"], two_throws))
        assert data["game"] == "bin-throws"
        assert data["trace"] == "two-throws"
        names = [p["name"] for p in data["preferences"]]
        assert names == ["throwToBin", "throwAttempt"]
        assert data["preferences"][1]["count"] == 2
        assert data["total"] == 1.0


class TestCountModes:

    def test_overlapping_satisfactions_are_thinned(self):
        sats = [_sat(0, 3), _sat(1, 2), _sat(4, 5)]
        chosen = non_overlapping(sats)
        assert [(s.start, s.end) for s in chosen] == [(1, 2), (4, 5)]
        assert count_mode("count", sats) == 2
        assert count_mode("count-overlapping", sats) == 3

    def test_disjoint_across_bindings(self):
        ball2 = (("?d", "ball2"),)
        sats = [_sat(0, 3), _sat(1, 2, ball2), _sat(2, 4), _sat(3, 6, ball2), _sat(5, 7)]
        chosen = non_overlapping(sats)
        assert [(s.start, s.end) for s in chosen] == [(1, 2), (3, 6)]
        assert chosen[0].binding == ball2
        for a, b in zip(chosen, chosen[1:]):
            assert a.end < b.start
        assert count_mode("count", sats) == 2
        assert count_mode("count-once-per-objects", sats) == 2

    def test_once_per_objects_counts_distinct_bindings(self):
        sats = [_sat(0, 1), _sat(2, 3), _sat(0, 1, (("?d", "ball2"),))]
        assert count_mode("count-once-per-objects", sats) == 2

    def test_count_measure_sums_measures(self):
        sats = [_sat(0, 1, measure=1.5), _sat(2, 3, measure=2.0)]
        context = CountContext(has_measure=True)
        assert count_mode("count-measure", sats, context) == pytest.approx(3.5)

    def test_count_measure_without_measure_stage(self):
        with pytest.raises(ScoringError):
            count_mode("count-measure", [_sat(0, 1)], CountContext(has_measure=False))

    def test_empty_satisfactions(self):
        for mode in ("count", "count-once", "count-overlapping", "count-once-per-objects"):
            assert count_mode(mode, []) == 0


class TestActivation:

    def test_components_activated_per_trace(self, games_by_name, traces):
        components = activating_components(games_by_name["bin-throws"], traces)
        assert set(components) == {"setup", "throwToBin", "throwAttempt"}
        assert "two-throws" in components["throwAttempt"]

    def test_jaccard(self):
        assert activation_jaccard({"a": {"t1", "t2"}}, {"b": {"t2", "t3"}}) == pytest.approx(1 / 3)
        assert activation_jaccard({"a": set()}, {"b": set()}) == 1.0
