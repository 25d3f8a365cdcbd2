"""Reward-machine interpreter: compile preferences, run them over traces, score games."""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

from . import vocabulary as vocab
from .exceptions import EvaluationError, ScoringError
from .logger import get_logger
from .predicates import DEFAULT_CONTEXT, EvalContext, compare, enumerate_bindings, eval_function, \
    eval_super
from .printer import to_text
from .syntax import (
    AtEnd, BinaryOp, ExternalMaximize, ExternalMinimize, FunctionEval, Game, GameConserved,
    GameOptional, Hold, HoldWhile, MultiOp, Negate, Node, NumberLiteral, Once, OnceMeasure,
    PrefForall, Preference, PreferenceEval, ScoringComparison, SetupAnd, SetupExists, SetupForall,
    SetupNot, SetupOr, TerminalAnd, TerminalComparison, TerminalNot, TerminalOr, Then, TotalScore,
    TotalTime, VariableList, iter_nodes,
)
from .trace import Trace, WorldState

logger = get_logger(__name__)

ONCE = "once"
HOLD = "hold"
HOLD_WHILE = "hold_while"


@dataclass(frozen=True)
class Stage:
    kind: str
    predicate: Node
    whiles: Tuple[Node, ...] = ()
    measure: Optional[FunctionEval] = None


@dataclass(frozen=True)
class PreferenceAutomaton:
    """Compiled preference: ordered stages, or a single final-state check."""
    name: str
    external: Dict[str, Tuple[str, ...]]
    variables: Dict[str, Tuple[str, ...]]
    stages: Tuple[Stage, ...] = ()
    at_end: Optional[Node] = None

    @property
    def has_measure(self) -> bool:
        return any(s.measure is not None for s in self.stages)

    @property
    def variable_order(self) -> List[str]:
        return list(self.external) + [v for v in self.variables if v not in self.external]


@dataclass(frozen=True)
class Satisfaction:
    preference: str
    binding: Tuple[Tuple[str, str], ...]
    start: int
    end: int
    measure: Optional[float] = None

    @property
    def binding_map(self) -> Dict[str, str]:
        return dict(self.binding)


@dataclass
class InterpConfig:
    """Position thresholds (meters) and the per-preference binding cap."""
    stationary_threshold: float = 0.05
    same_position_threshold: float = 0.25
    binding_cap: int = 10000
    eval_context: EvalContext = DEFAULT_CONTEXT

    @classmethod
    def from_config(cls, config) -> "InterpConfig":
        section = config.section("interp")
        return cls(
            stationary_threshold=section["stationary_threshold"],
            same_position_threshold=section["same_position_threshold"],
            binding_cap=section["binding_cap"],
            eval_context=EvalContext.from_config(config),
        )


@dataclass
class ScoreReport:
    game: str
    trace: str
    total: Optional[float]
    counts: Dict[str, float] = field(default_factory=dict)
    terminal_state: Optional[int] = None
    setup_satisfied: bool = False
    setup_state: Optional[int] = None
    conserved_ok: bool = False
    satisfactions: Dict[str, List[Satisfaction]] = field(default_factory=dict)
    error: Optional[str] = None


def compile_preference(pref_def: Node) -> PreferenceAutomaton:
    """Compile a preference definition (Preference or PrefForall) into stages."""
    external: Dict[str, Tuple[str, ...]] = {}
    pref = pref_def
    if isinstance(pref_def, PrefForall):
        external = pref_def.variables.variables()
        pref = pref_def.preference
    if not isinstance(pref, Preference):
        raise EvaluationError(f"cannot compile {type(pref).__name__} as a preference")

    variables = dict(external)
    if pref.variables is not None:
        variables.update(pref.variables.variables())

    body = pref.body
    if isinstance(body, AtEnd):
        return PreferenceAutomaton(pref.name, external, variables, at_end=body.child)
    if not isinstance(body, Then):
        raise EvaluationError(f"unsupported preference body {type(body).__name__}")

    stages = []
    for seq in body.seq_funcs:
        if isinstance(seq, Once):
            stages.append(Stage(ONCE, seq.child))
        elif isinstance(seq, OnceMeasure):
            stages.append(Stage(ONCE, seq.child, measure=seq.measure))
        elif isinstance(seq, Hold):
            stages.append(Stage(HOLD, seq.child))
        elif isinstance(seq, HoldWhile):
            stages.append(Stage(HOLD_WHILE, seq.child, whiles=tuple(seq.whiles)))
        else:
            raise EvaluationError(f"unsupported sequence function {type(seq).__name__}")
    return PreferenceAutomaton(pref.name, external, variables, stages=tuple(stages))


Match = Tuple[int, Optional[float]]


class _Matcher:
    """Earliest-end matching of a stage list for one binding over one trace.

    A match is (end state, measure) where the measure is the value of the
    first once-measure stage along the chosen path.
    """

    def __init__(self, automaton: PreferenceAutomaton, trace: Trace, binding: Dict[str, str],
                 ctx: EvalContext):
        self.stages = automaton.stages
        self.trace = trace
        self.binding = binding
        self.ctx = ctx
        self.n = len(trace.states)
        self._truth: Dict[Tuple[int, int, int], bool] = {}
        self._memo: Dict[Tuple[int, int], Optional[Match]] = {}

    def _true(self, i: int, j: int, t: int) -> bool:
        """Stage i's predicate (j = -1) or its j-th while clause at state t."""
        key = (i, j, t)
        if key not in self._truth:
            stage = self.stages[i]
            node = stage.predicate if j < 0 else stage.whiles[j]
            self._truth[key] = eval_super(self.trace.states[t], node, self.binding, self.ctx)
        return self._truth[key]

    def match(self, i: int, t: int) -> Optional[Match]:
        """Earliest match of stages i.. when stage i begins at state t."""
        key = (i, t)
        if key not in self._memo:
            self._memo[key] = self._match(i, t)
        return self._memo[key]

    def _after(self, i: int, t: int) -> Optional[Match]:
        """Continue with stage i + 1 at state t, or finish at t - 1 after the last stage."""
        if i == len(self.stages) - 1:
            return t - 1, None
        return self.match(i + 1, t)

    def _match(self, i: int, t: int) -> Optional[Match]:
        if t >= self.n:
            return None
        last = len(self.stages) - 1
        stage = self.stages[i]

        if stage.kind == ONCE:
            if not self._true(i, -1, t):
                return None
            rest = self._after(i, t + 1)
            if rest is None:
                return None
            if stage.measure is not None:
                value = eval_function(self.trace.states[t], stage.measure, self.binding, self.ctx)
                return rest[0], value
            return rest

        best: Optional[Match] = None
        # a hold strictly inside the sequence may be empty
        if stage.kind == HOLD and 0 < i < last:
            best = self.match(i + 1, t)

        pending = 0
        for u in range(t, self.n):
            if not self._true(i, -1, u):
                break
            if stage.kind == HOLD_WHILE:
                if pending < len(stage.whiles) and self._true(i, pending, u):
                    pending += 1
                if pending < len(stage.whiles):
                    continue
            candidate = self._after(i, u + 1)
            if candidate is not None and (best is None or candidate[0] < best[0]):
                best = candidate
                if i == last:
                    break
        return best


def _bindings(automaton: PreferenceAutomaton, trace: Trace, cap: int) -> List[Dict[str, str]]:
    if not automaton.variables:
        return [{}]
    return list(enumerate_bindings(trace, automaton.variables, limit=cap))


def run_preference(automaton: PreferenceAutomaton, trace: Trace,
                   config: Optional[InterpConfig] = None,
                   end_state: Optional[int] = None) -> List[Satisfaction]:
    """Every satisfaction of the preference over the trace, overlapping ones included.

    For each binding and each start state, the satisfaction ending earliest is
    reported. `end_state` treats that state as the final one (used after a
    terminal condition fires).

    Raises:
        BindingLimitError: If the quantified variables admit too many bindings
    """
    config = config or InterpConfig()
    ctx = config.eval_context
    last = len(trace.states) - 1 if end_state is None else end_state
    out: List[Satisfaction] = []

    for binding in _bindings(automaton, trace, config.binding_cap):
        frozen = tuple(sorted(binding.items()))
        if automaton.at_end is not None:
            state = trace.states[last]
            if eval_super(state, automaton.at_end, binding, ctx):
                out.append(Satisfaction(automaton.name, frozen, last, last))
            continue

        matcher = _Matcher(automaton, trace, binding, ctx)
        for start in range(last + 1):
            found = matcher.match(0, start)
            if found is None or found[0] > last:
                continue
            out.append(Satisfaction(automaton.name, frozen, start, found[0], found[1]))

    out.sort(key=lambda s: (s.end, s.start, s.binding))
    logger.debug(f"{automaton.name} on {trace.id}: {len(out)} satisfactions")
    return out


def non_overlapping(satisfactions: Sequence[Satisfaction]) -> List[Satisfaction]:
    """Greedy earliest-end selection of pairwise disjoint satisfactions.

    One pass over every binding, so intervals chosen for different
    bindings never overlap either.
    """
    chosen: List[Satisfaction] = []
    last_end = -1
    for s in sorted(satisfactions, key=lambda s: (s.end, s.start, s.binding)):
        if s.start > last_end:
            chosen.append(s)
            last_end = s.end
    return chosen


@dataclass
class CountContext:
    """What a count mode needs beyond the satisfactions themselves."""
    trace: Optional[Trace] = None
    external_variables: Tuple[str, ...] = ()
    has_measure: bool = True
    config: InterpConfig = field(default_factory=InterpConfig)


def _objects_position(trace: Trace, s: Satisfaction, index: int):
    state = trace.states[index]
    positions = [state.position(o) for v, o in s.binding
                 if vocab.variable_class(v) == vocab.OBJ and state.position(o) is not None]
    if not positions:
        return None
    return tuple(sum(p[i] for p in positions) / len(positions) for i in range(3))


def _stationary_positions(satisfactions: Sequence[Satisfaction], ctx: CountContext):
    out = []
    for s in satisfactions:
        start = _objects_position(ctx.trace, s, s.start)
        if start is None:
            continue
        stationary = all(
            math.dist(start, _objects_position(ctx.trace, s, t)) < ctx.config.stationary_threshold
            for t in range(s.start, s.end + 1)
        )
        if stationary:
            out.append(_objects_position(ctx.trace, s, s.end))
    return out


def _position_clusters(positions, threshold: float) -> List[int]:
    centers: List[Tuple] = []
    sizes: List[int] = []
    for p in positions:
        for i, c in enumerate(centers):
            if math.dist(p, c) <= threshold:
                sizes[i] += 1
                break
        else:
            centers.append(p)
            sizes.append(1)
    return sizes


def count_mode(mode: str, satisfactions: Sequence[Satisfaction],
               context: Optional[CountContext] = None) -> float:
    """Reduce a satisfaction set to the number a count mode reports.

    Raises:
        ScoringError: For count-measure on a preference without a once-measure,
            or a positional mode without a trace
    """
    context = context or CountContext()
    disjoint = non_overlapping(satisfactions)
    if mode == "count":
        return float(len(disjoint))
    if mode == "count-overlapping":
        return float(len(satisfactions))
    if mode == "count-once":
        return float(min(len(disjoint), 1))
    if mode == "count-once-per-objects":
        return float(len({s.binding for s in satisfactions}))
    if mode == "count-once-per-external-objects":
        external = set(context.external_variables)
        return float(len({tuple((v, o) for v, o in s.binding if v in external)
                          for s in satisfactions}))
    if mode == "count-measure":
        if not context.has_measure:
            raise ScoringError("count-measure used on a preference without once-measure")
        return float(sum(s.measure for s in disjoint
                         if s.measure is not None and not math.isnan(s.measure)))
    if mode in ("count-unique-positions", "count-same-positions"):
        if context.trace is None:
            raise ScoringError(f"{mode} needs the trace")
        positions = _stationary_positions(disjoint, context)
        sizes = _position_clusters(positions, context.config.same_position_threshold)
        if mode == "count-unique-positions":
            return float(len(sizes))
        return float(max(sizes, default=0))
    raise ScoringError(f"unknown count mode {mode}")


def _qualifier_matches(trace: Trace, obj: str, qualifier: str) -> bool:
    if qualifier in vocab.COLORS:
        entry = trace.catalog.get(obj)
        return obj == qualifier or (entry is not None and entry.color == qualifier)
    type_name = trace.type_of(obj)
    return type_name is not None and vocab.is_subtype(type_name, qualifier)


def filter_qualified(satisfactions: Sequence[Satisfaction], automaton: PreferenceAutomaton,
                     qualifiers: Sequence[str], trace: Trace) -> List[Satisfaction]:
    """Keep satisfactions whose leading variables bind objects of the qualifier types."""
    if not qualifiers:
        return list(satisfactions)
    order = automaton.variable_order
    out = []
    for s in satisfactions:
        binding = s.binding_map
        if all(i < len(order) and _qualifier_matches(trace, binding.get(order[i], ""), q)
               for i, q in enumerate(qualifiers)):
            out.append(s)
    return out


# --- setup ------------------------------------------------------------------------


def _eval_setup_at(node: Node, state: WorldState, binding: Dict[str, str], ctx: EvalContext,
                   optional_true: bool) -> bool:
    if isinstance(node, GameOptional):
        return optional_true or eval_super(state, node.child, binding, ctx)
    if isinstance(node, GameConserved):
        return eval_super(state, node.child, binding, ctx)
    if isinstance(node, SetupAnd):
        return all(_eval_setup_at(c, state, binding, ctx, optional_true) for c in node.children)
    if isinstance(node, SetupOr):
        return any(_eval_setup_at(c, state, binding, ctx, optional_true) for c in node.children)
    if isinstance(node, SetupNot):
        return not _eval_setup_at(node.child, state, binding, ctx, optional_true)
    if isinstance(node, (SetupExists, SetupForall)):
        quantify = any if isinstance(node, SetupExists) else all
        return quantify(
            _eval_setup_at(node.child, state, b, ctx, optional_true)
            for b in enumerate_bindings(state, node.variables.variables(), binding)
        )
    raise EvaluationError(f"cannot evaluate {type(node).__name__} in the setup")


def eval_setup(setup: Node, trace: Trace,
               ctx: EvalContext = DEFAULT_CONTEXT) -> Tuple[Optional[int], bool]:
    """First state at which the setup holds, and whether its conserved parts persist.

    Returns:
        (satisfied_at, conserved_ok); satisfied_at is None if the setup never holds
    """
    satisfied_at = None
    for state in trace.states:
        if _eval_setup_at(setup, state, {}, ctx, optional_true=False):
            satisfied_at = state.index
            break
    if satisfied_at is None:
        return None, False
    conserved_ok = all(
        _eval_setup_at(setup, state, {}, ctx, optional_true=True)
        for state in trace.states if state.index >= satisfied_at
    )
    return satisfied_at, conserved_ok


def setup_objects(game: Game, trace: Trace) -> Set[str]:
    """Objects whose type is quantified in the setup."""
    if game.setup is None:
        return set()
    types: List[str] = []
    for ref in iter_nodes(game.setup, "setup"):
        if isinstance(ref.node, VariableList):
            for t in ref.node.variables().values():
                types.extend(t)
    if not types:
        return set()
    return set(trace.candidates(types))


# --- scoring ----------------------------------------------------------------------


class _Scorer:
    """Evaluates terminal and scoring trees against per-preference satisfactions."""

    def __init__(self, game: Game, trace: Trace, automata: Dict[str, PreferenceAutomaton],
                 sats: Dict[str, List[Satisfaction]], config: InterpConfig):
        self.game = game
        self.trace = trace
        self.automata = automata
        self.sats = sats
        self.config = config
        self.counts: Dict[str, float] = {}
        self.final_state = len(trace.states) - 1

    def pref_value(self, ev: PreferenceEval, upto: int, external: Optional[Tuple] = None) -> float:
        automaton = self.automata.get(ev.pref_name)
        if automaton is None:
            raise ScoringError(f"preference {ev.pref_name} is not defined")
        sats = [s for s in self.sats[ev.pref_name] if s.end <= upto]
        if automaton.at_end is not None and upto != self.final_state:
            sats = []
        sats = filter_qualified(sats, automaton, ev.type_qualifiers, self.trace)
        if external is not None and automaton.external:
            sats = [s for s in sats
                    if tuple(o for v, o in s.binding if v in automaton.external) == external]
        context = CountContext(self.trace, tuple(automaton.external), automaton.has_measure,
                               self.config)
        value = count_mode(ev.mode, sats, context)
        if external is None and upto == self.final_state:
            self.counts[to_text(ev)] = value
        return value

    def external_values(self) -> List[Tuple]:
        values = set()
        for name, automaton in self.automata.items():
            if automaton.external:
                for s in self.sats[name]:
                    values.add(tuple(o for v, o in s.binding if v in automaton.external))
        return sorted(values)

    def evaluate(self, node: Node, upto: int, external: Optional[Tuple] = None,
                 in_scoring: bool = True) -> float:
        ev = self.evaluate
        if isinstance(node, NumberLiteral):
            return node.number
        if isinstance(node, PreferenceEval):
            return self.pref_value(node, upto, external)
        if isinstance(node, MultiOp):
            values = [ev(c, upto, external, in_scoring) for c in node.children]
            return float(sum(values)) if node.op == "+" else float(math.prod(values))
        if isinstance(node, BinaryOp):
            lhs, rhs = ev(node.lhs, upto, external, in_scoring), ev(node.rhs, upto, external,
                                                                     in_scoring)
            if node.op == "-":
                return lhs - rhs
            if rhs == 0:
                raise ScoringError("division by zero in scoring")
            return lhs / rhs
        if isinstance(node, Negate):
            return -ev(node.child, upto, external, in_scoring)
        if isinstance(node, TotalTime):
            return float(upto)
        if isinstance(node, TotalScore):
            if in_scoring:
                raise ScoringError("(total-score) cannot appear inside the scoring expression")
            return self.evaluate(self.game.scoring, upto)
        if isinstance(node, ScoringComparison):
            values = [ev(a, upto, external, in_scoring) for a in node.args]
            return 1.0 if compare(node.op, values) else 0.0
        if isinstance(node, (ExternalMaximize, ExternalMinimize)):
            values = [ev(node.child, upto, b, in_scoring) for b in self.external_values()]
            if not values:
                return ev(node.child, upto, external, in_scoring)
            return max(values) if isinstance(node, ExternalMaximize) else min(values)
        raise ScoringError(f"cannot evaluate {type(node).__name__} in scoring")

    def terminal(self, node: Node, upto: int) -> bool:
        if isinstance(node, TerminalAnd):
            return all(self.terminal(c, upto) for c in node.children)
        if isinstance(node, TerminalOr):
            return any(self.terminal(c, upto) for c in node.children)
        if isinstance(node, TerminalNot):
            return not self.terminal(node.child, upto)
        if isinstance(node, TerminalComparison):
            return compare(node.op, [self.evaluate(node.lhs, upto, in_scoring=False),
                                     node.rhs.number])
        raise ScoringError(f"cannot evaluate {type(node).__name__} as a terminal condition")


def score_game(game: Game, trace: Trace, config: Optional[InterpConfig] = None) -> ScoreReport:
    """Run every preference, apply the terminal condition and evaluate the scoring tree.

    Scoring errors (division by zero, count-measure without a measure) leave
    ``total`` as None and are recorded in ``error``.
    """
    config = config or InterpConfig()
    ctx = EvalContext(
        adjacent_threshold=config.eval_context.adjacent_threshold,
        near_threshold=config.eval_context.near_threshold,
        equal_position_threshold=config.eval_context.equal_position_threshold,
        setup_objects=frozenset(setup_objects(game, trace)),
    )
    run_config = InterpConfig(config.stationary_threshold, config.same_position_threshold,
                              config.binding_cap, ctx)
    report = ScoreReport(game.name, trace.id, None)

    if game.setup is not None:
        report.setup_state, report.conserved_ok = eval_setup(game.setup, trace, ctx)
        report.setup_satisfied = report.setup_state is not None

    automata = {}
    for pref_def in game.preferences:
        automaton = compile_preference(pref_def)
        automata[automaton.name] = automaton
    sats = {name: run_preference(a, trace, run_config) for name, a in automata.items()}

    scorer = _Scorer(game, trace, automata, sats, run_config)
    final = len(trace.states) - 1
    try:
        if game.terminal is not None:
            for i in range(final):
                if scorer.terminal(game.terminal, i):
                    report.terminal_state = i
                    final = i
                    break
        if final != len(trace.states) - 1:
            for name, automaton in automata.items():
                if automaton.at_end is not None:
                    sats[name] = run_preference(automaton, trace, run_config, end_state=final)
                else:
                    sats[name] = [s for s in sats[name] if s.end <= final]
        scorer.final_state = final
        scorer.counts = {}
        report.total = scorer.evaluate(game.scoring, final)
    except (ScoringError, EvaluationError) as e:
        report.error = str(e)
        logger.debug(f"Scoring {game.name} on {trace.id} failed: {e}")
    report.counts = dict(scorer.counts)
    report.satisfactions = sats
    return report


def rescore(game: Game, counts: Mapping[str, float]) -> float:
    """Re-evaluate the scoring tree from reported counts alone (no external quantifiers)."""

    def walk(node: Node) -> float:
        if isinstance(node, NumberLiteral):
            return node.number
        if isinstance(node, PreferenceEval):
            return counts[to_text(node)]
        if isinstance(node, MultiOp):
            values = [walk(c) for c in node.children]
            return float(sum(values)) if node.op == "+" else float(math.prod(values))
        if isinstance(node, BinaryOp):
            lhs, rhs = walk(node.lhs), walk(node.rhs)
            if node.op == "-":
                return lhs - rhs
            if rhs == 0:
                raise ScoringError("division by zero in scoring")
            return lhs / rhs
        if isinstance(node, Negate):
            return -walk(node.child)
        if isinstance(node, ScoringComparison):
            return 1.0 if compare(node.op, [walk(a) for a in node.args]) else 0.0
        if isinstance(node, (ExternalMaximize, ExternalMinimize)):
            return walk(node.child)
        raise ScoringError(f"cannot rescore {type(node).__name__}")

    return walk(game.scoring)


def replay_report(report: ScoreReport) -> dict:
    """Plain mapping of a score report with stable key order."""
    return {
        "game": report.game,
        "trace": report.trace,
        "setup": {
            "satisfied": report.setup_satisfied,
            "state": report.setup_state,
            "conserved": report.conserved_ok,
        },
        "terminal_state": report.terminal_state,
        "preferences": [
            {
                "name": name,
                "satisfactions": [
                    {"binding": dict(s.binding), "start": s.start, "end": s.end,
                     **({"measure": s.measure} if s.measure is not None else {})}
                    for s in sats
                ],
                "count": len(non_overlapping(sats)),
            }
            for name, sats in report.satisfactions.items()
        ],
        "counts": dict(report.counts),
        "total": report.total,
        "error": report.error,
    }


# --- activation -------------------------------------------------------------------


def activating_components(game: Game, traces: Sequence[Trace],
                          config: Optional[InterpConfig] = None) -> Dict[str, Set[str]]:
    """For each component (setup and each preference), the traces that satisfy it."""
    config = config or InterpConfig()
    components: Dict[str, Set[str]] = {}
    if game.setup is not None:
        components["setup"] = set()
    automata = [compile_preference(p) for p in game.preferences]
    for a in automata:
        components[a.name] = set()

    for trace in traces:
        if game.setup is not None:
            satisfied_at, _ = eval_setup(game.setup, trace, config.eval_context)
            if satisfied_at is not None:
                components["setup"].add(trace.id)
        for a in automata:
            try:
                if run_preference(a, trace, config):
                    components[a.name].add(trace.id)
            except EvaluationError as e:
                logger.debug(f"Skipping {a.name} on {trace.id}: {e}")
    return components


def activated_traces(components: Mapping[str, Set[str]]) -> Set[str]:
    out: Set[str] = set()
    for ids in components.values():
        out |= ids
    return out


def activation_jaccard(a: Mapping[str, Set[str]], b: Mapping[str, Set[str]]) -> float:
    """Jaccard overlap of the traces activating two games; two empty sets count as identical."""
    sa, sb = activated_traces(a), activated_traces(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)
