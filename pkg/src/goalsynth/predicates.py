"""Grounded predicate and function evaluation, and the play-trace predicate database."""

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from . import vocabulary as vocab
from .exceptions import BindingLimitError, EvaluationError
from .logger import get_logger
from .syntax import (
    And, Exists, Forall, FunctionComparison, FunctionEval, Node, Not, NumberLiteral, Or,
    Predicate, Term,
)
from .trace import AGENT, Trace, WorldState

logger = get_logger(__name__)

Binding = Mapping[str, str]
DbKey = Tuple[str, Tuple[str, ...]]
Witness = Tuple[str, int]


@dataclass(frozen=True)
class EvalContext:
    """Geometric thresholds (meters) and game-level facts used during evaluation."""
    adjacent_threshold: float = 0.4
    near_threshold: float = 1.0
    equal_position_threshold: float = 0.1
    setup_objects: FrozenSet[str] = frozenset()

    @classmethod
    def from_config(cls, config, setup_objects: Iterable[str] = ()) -> "EvalContext":
        section = config.section("trace")
        return cls(
            adjacent_threshold=section["adjacent_threshold"],
            near_threshold=section["near_threshold"],
            equal_position_threshold=section["equal_position_threshold"],
            setup_objects=frozenset(setup_objects),
        )


DEFAULT_CONTEXT = EvalContext()


def _resolve(term: Term, binding: Binding) -> str:
    if term.is_variable:
        if term.value not in binding:
            raise EvaluationError(f"unbound variable {term.value}")
        return binding[term.value]
    return term.value


def _check_arity(name: str, args: Sequence[Term], table) -> None:
    if len(args) not in vocab.signature_arities(name, table):
        raise EvaluationError(f"{name} does not take {len(args)} arguments")


def _distance(state: WorldState, a: str, b: str) -> float:
    pa, pb = state.position(a), state.position(b)
    if pa is None or pb is None:
        return math.nan
    return math.dist(pa, pb)


def _above(state: WorldState, top: str, base: str) -> bool:
    """`top` rests on `base` through a chain of direct support pairs."""
    frontier = [base]
    seen = {base}
    while frontier:
        current = frontier.pop()
        for b, t in state.supports:
            if b == current and t not in seen:
                if t == top:
                    return True
                seen.add(t)
                frontier.append(t)
    return False


def _color(state: WorldState, value: str) -> Optional[str]:
    return value if value in vocab.COLORS else state.color_of(value)


def eval_predicate(state: WorldState, pred: Predicate, binding: Binding,
                   ctx: EvalContext = DEFAULT_CONTEXT) -> bool:
    """Truth of a grounded predicate in one state.

    Predicates without grounded semantics evaluate to False; so does any
    predicate over an object absent from the state.

    Raises:
        EvaluationError: On an unbound variable or an arity mismatch
    """
    name = pred.name
    if name not in vocab.PREDICATES:
        raise EvaluationError(f"unknown predicate {name}")
    _check_arity(name, pred.args, vocab.PREDICATES)
    args = [_resolve(t, binding) for t in pred.args]

    if name in vocab.UNIMPLEMENTED_PREDICATES:
        return False
    if name == "game_start":
        return state.is_first_state
    if name == "game_over":
        return state.is_last_state
    if name == "agent_crouches":
        return state.crouching

    a = args[0]
    if name == "same_type":
        if not state.has(a):
            return False
        kind = args[1]
        if kind in vocab.TYPE_PARENTS and not state.has(kind):
            return vocab.is_subtype(state.type_of(a), kind)
        return state.has(kind) and state.type_of(a) == state.type_of(kind)
    if name == "same_color":
        return state.has(a) and _color(state, a) is not None and _color(state, a) == _color(
            state, args[1])

    if any(not state.has(o) for o in args
           if not (o in vocab.ORIENTATIONS or o in vocab.SIDES or o in vocab.COLORS)):
        return False

    obj = state.objects.get(a)
    if name == "agent_holds":
        return obj is not None and obj.held
    if name == "in_motion":
        return obj is not None and obj.in_motion
    if name == "open":
        return obj is not None and obj.open
    if name == "toggled_on":
        return obj is not None and obj.toggled_on
    if name == "broken":
        return obj is not None and obj.broken
    if name == "object_orientation":
        return obj is not None and obj.orientation == args[1]
    if name == "is_setup_object":
        return a in ctx.setup_objects

    b = args[1]
    if name == "in":
        if a in state.buildings:
            return b in state.buildings[a]
        return (a, b) in state.contains
    if name == "on":
        return (a, b) in state.supports
    if name == "touch":
        return (a, b) in state.touches
    if name == "above":
        return _above(state, a, b)
    if name == "adjacent":
        return _distance(state, a, b) <= ctx.adjacent_threshold
    if name == "near":
        return _distance(state, a, b) <= ctx.near_threshold
    if name in ("equal_x_position", "equal_z_position"):
        axis = 0 if name == "equal_x_position" else 2
        return abs(state.position(a)[axis] - state.position(b)[axis]) <= \
            ctx.equal_position_threshold
    if name == "same_object":
        return a == b
    raise EvaluationError(f"no semantics for predicate {name}")


def eval_function(state: WorldState, fn: FunctionEval, binding: Binding,
                  ctx: EvalContext = DEFAULT_CONTEXT) -> float:
    """Numeric value of a grounded function; NaN when it cannot be measured.

    Raises:
        EvaluationError: On an unbound variable or an arity mismatch
    """
    if fn.name not in vocab.FUNCTIONS:
        raise EvaluationError(f"unknown function {fn.name}")
    _check_arity(fn.name, fn.args, vocab.FUNCTIONS)
    args = [_resolve(t, binding) for t in fn.args]

    if fn.name in vocab.UNIMPLEMENTED_FUNCTIONS:
        return math.nan
    if fn.name == "distance":
        return _distance(state, args[0], args[1])
    if fn.name == "x_position":
        position = state.position(args[0])
        return position[0] if position is not None else math.nan
    if fn.name == "building_size":
        return float(len(state.buildings.get(args[0], ())))
    raise EvaluationError(f"no semantics for function {fn.name}")


def compare(op: str, values: Sequence[float]) -> bool:
    """Chained comparison; any NaN operand makes it false."""
    if any(math.isnan(v) for v in values):
        return False
    if op == "=":
        return all(math.isclose(values[0], v, abs_tol=1e-9) for v in values[1:])
    check = {"<": lambda x, y: x < y, "<=": lambda x, y: x <= y,
             ">": lambda x, y: x > y, ">=": lambda x, y: x >= y}[op]
    return all(check(x, y) for x, y in zip(values, values[1:]))


def _value(state: WorldState, node: Node, binding: Binding, ctx: EvalContext) -> float:
    if isinstance(node, NumberLiteral):
        return node.number
    return eval_function(state, node, binding, ctx)


def candidate_values(state_or_trace, types: Sequence[str]) -> List[str]:
    """Values a variable declared with `types` can take."""
    cls = vocab.type_class(types[0])
    if cls == vocab.COLOR:
        return [c for c in vocab.COLORS if any(t in ("color", c) for t in types)]
    if cls == vocab.ORIENTATION:
        return [o for o in vocab.ORIENTATIONS if any(t in ("orientation", o) for t in types)]
    if cls == vocab.SIDE:
        return [s for s in vocab.SIDES if any(t in ("side", s) for t in types)]
    values = state_or_trace.candidates(types)
    if any(vocab.is_subtype(AGENT, t) for t in types) and AGENT not in values:
        values.append(AGENT)
    return values


def eval_super(state: WorldState, node: Node, binding: Binding,
               ctx: EvalContext = DEFAULT_CONTEXT) -> bool:
    """Evaluate a super-predicate (logic, quantifiers, comparisons) in one state."""
    if isinstance(node, Predicate):
        return eval_predicate(state, node, binding, ctx)
    if isinstance(node, And):
        return all(eval_super(state, c, binding, ctx) for c in node.children)
    if isinstance(node, Or):
        return any(eval_super(state, c, binding, ctx) for c in node.children)
    if isinstance(node, Not):
        return not eval_super(state, node.child, binding, ctx)
    if isinstance(node, (Exists, Forall)):
        quantify = any if isinstance(node, Exists) else all
        return quantify(eval_super(state, node.child, b, ctx)
                        for b in enumerate_bindings(state, node.variables.variables(), binding))
    if isinstance(node, FunctionComparison):
        return compare(node.op, [_value(state, a, binding, ctx) for a in node.args])
    raise EvaluationError(f"cannot evaluate {type(node).__name__} as a predicate")


def enumerate_bindings(source, variables: Mapping[str, Sequence[str]], base: Binding = None,
                       limit: Optional[int] = None) -> Iterable[Dict[str, str]]:
    """All assignments of distinct objects to `variables`, extending `base`.

    `source` is a WorldState or a Trace. Color, orientation and side variables
    take literal values and need not be distinct.
    """
    base = dict(base or {})
    names = list(variables)
    pools = [candidate_values(source, variables[n]) for n in names]
    if limit is not None:
        total = math.prod(len(p) for p in pools)
        if total > limit:
            raise BindingLimitError(
                f"{total} bindings for {', '.join(names)} exceed the limit of {limit}")
    for combo in itertools.product(*pools):
        objects = [v for n, v in zip(names, combo) if vocab.variable_class(n) == vocab.OBJ]
        if len(set(objects)) != len(objects):
            continue
        binding = dict(base)
        binding.update(zip(names, combo))
        yield binding


# --- play-trace predicate database ---------------------------------------------


def coarsen(type_name: str) -> Tuple[str, ...]:
    """DB key types for one argument: the exact type and all its ancestors."""
    if type_name in vocab.ORIENTATIONS:
        return (type_name, "orientation")
    return vocab.type_ancestors(type_name)


@dataclass
class PredicateDatabase:
    """Witness states for every (predicate, argument types) combination seen true."""
    witnesses: Dict[DbKey, Set[Witness]] = field(default_factory=dict)
    states: Set[Witness] = field(default_factory=set)
    predicates: Tuple[str, ...] = vocab.DATABASE_PREDICATES

    def add(self, key: DbKey, witness: Witness):
        self.witnesses.setdefault(key, set()).add(witness)

    def lookup(self, name: str, arg_types: Sequence[str]) -> Set[Witness]:
        return self.witnesses.get((name, tuple(arg_types)), set())

    def __len__(self) -> int:
        return len(self.witnesses)


def _grounded_args(state: WorldState, name: str) -> Iterable[Tuple[str, ...]]:
    objects = [o for o in sorted(state.objects) if state.has(o)] + sorted(state.buildings)
    if name in ("agent_crouches", "game_start", "game_over"):
        yield ()
    elif name == "object_orientation":
        for o in sorted(state.objects):
            if state.objects[o].orientation is not None:
                yield (o, state.objects[o].orientation)
    elif name in ("in", "on", "touch"):
        pairs = {"on": state.supports, "touch": state.touches}.get(name)
        if pairs is None:
            pairs = set(state.contains) | {(b, m) for b, ms in state.buildings.items()
                                           for m in ms}
        yield from sorted(pairs)
    elif len(vocab.PREDICATES[name][0]) == 1:
        for o in objects:
            yield (o,)
    else:
        everything = objects + [AGENT]
        for a, b in itertools.permutations(everything, 2):
            yield (a, b)


def build_predicate_db(traces: Sequence[Trace], predicates: Optional[Sequence[str]] = None,
                       ctx: EvalContext = DEFAULT_CONTEXT) -> PredicateDatabase:
    """Record every state at which each DB predicate holds, keyed by coarsened argument types."""
    predicates = tuple(predicates or vocab.DATABASE_PREDICATES)
    db = PredicateDatabase(predicates=predicates)
    for trace in traces:
        for state in trace.states:
            witness = (trace.id, state.index)
            db.states.add(witness)
            for name in predicates:
                for args in _grounded_args(state, name):
                    pred = Predicate(name, tuple(Term(a) for a in args))
                    if not eval_predicate(state, pred, {}, ctx):
                        continue
                    arg_types = [coarsen(a if a in vocab.ORIENTATIONS else state.type_of(a))
                                 for a in args]
                    for combo in itertools.product(*arg_types):
                        db.add((name, combo), witness)
    logger.info(f"Built predicate database: {len(db)} keys over {len(db.states)} states")
    return db


def _arg_types(term: Term, scope: Mapping[str, Sequence[str]]) -> Optional[Tuple[str, ...]]:
    """Candidate DB types for one argument; None means unconstrained."""
    value = term.value
    if term.is_variable:
        types = scope.get(value)
        if not types:
            return None
        cls = vocab.variable_class(value)
        if cls == vocab.ORIENTATION:
            return tuple(t if t in vocab.ORIENTATIONS else "orientation" for t in types)
        return tuple(types)
    return (value,)


def _atom_witnesses(db: PredicateDatabase, pred: Predicate,
                    scope: Mapping[str, Sequence[str]]) -> Set[Witness]:
    if pred.name not in db.predicates:
        return set(db.states)
    options = [_arg_types(a, scope) for a in pred.args]
    if any(o is None for o in options):
        return set(db.states)
    found: Set[Witness] = set()
    for combo in itertools.product(*options):
        found |= db.lookup(pred.name, combo)
    return found


def _witnesses(db: PredicateDatabase, node: Node,
               scope: Mapping[str, Sequence[str]]) -> Set[Witness]:
    if isinstance(node, Predicate):
        return _atom_witnesses(db, node, scope)
    if isinstance(node, And):
        out = set(db.states)
        for c in node.children:
            out &= _witnesses(db, c, scope)
        return out
    if isinstance(node, Or):
        out: Set[Witness] = set()
        for c in node.children:
            out |= _witnesses(db, c, scope)
        return out
    if isinstance(node, Not):
        return set(db.states) - _witnesses(db, node.child, scope)
    if isinstance(node, (Exists, Forall)):
        inner = dict(scope)
        inner.update(node.variables.variables())
        return _witnesses(db, node.child, inner)
    return set(db.states)


def db_feasible(db: PredicateDatabase, expr: Node,
                scope: Optional[Mapping[str, Sequence[str]]] = None) -> bool:
    """True iff some single recorded state witnesses `expr`.

    Arguments are matched by type: variables through their declared types in
    `scope`, constants (object or type names) directly. Predicates outside the
    database, function comparisons and unconstrained variables count as
    satisfiable everywhere.
    """
    return bool(_witnesses(db, expr, scope or {}))
