"""Rule-based templated English for game programs."""

from functools import singledispatch
from typing import Dict, List, Optional, Sequence

from .logger import get_logger
from .syntax import (
    And, AtEnd, BinaryOp, Exists, ExternalMaximize, ExternalMinimize, Forall, FunctionComparison,
    FunctionEval, Game, GameConserved, GameOptional, Hold, HoldWhile, MultiOp, Negate, Node, Not,
    NumberLiteral, Once, OnceMeasure, Or, PrefForall, PreferenceEval, Predicate,
    ScoringComparison, SetupAnd, SetupExists, SetupForall, SetupNot, SetupOr, TerminalAnd,
    TerminalComparison, TerminalNot, TerminalOr, Term, Then, TotalScore, TotalTime, VariableList,
)
from .templates import TemplateManager

logger = get_logger(__name__)

PREDICATE_PHRASES: Dict[str, str] = {
    "above": "{0} is above {1}",
    "adjacent": "{0} is adjacent to {1}",
    "adjacent_side": "the {1} side of {0} is adjacent to {2}",
    "agent_crouches": "the agent is crouching",
    "agent_holds": "the agent is holding {0}",
    "between": "{1} is between {0} and {2}",
    "broken": "{0} is broken",
    "equal_x_position": "{0} and {1} have the same x position",
    "equal_z_position": "{0} and {1} have the same z position",
    "faces": "{0} is facing {1}",
    "game_over": "it is the last state of the game",
    "game_start": "it is the first state of the game",
    "in": "{1} is inside of {0}",
    "in_motion": "{0} is in motion",
    "is_setup_object": "{0} is used in the setup",
    "near": "{0} is near {1}",
    "object_orientation": "{0} is oriented {1}",
    "on": "{1} is on {0}",
    "open": "{0} is open",
    "opposite": "{0} is opposite {1}",
    "rug_color_under": "the rug under {0} is {1}",
    "same_color": "{0} is the same color as {1}",
    "same_object": "{0} is the same object as {1}",
    "same_type": "{0} is of the same type as {1}",
    "toggled_on": "{0} is toggled on",
    "touch": "{0} touches {1}",
}

FUNCTION_PHRASES: Dict[str, str] = {
    "building_size": "the number of objects in {0}",
    "distance": "the distance between {0} and {1}",
    "distance_side": "the distance between the {1} side of {0} and {2}",
    "x_position": "the x position of {0}",
}

COMPARISON_PHRASES: Dict[str, str] = {
    "=": "is equal to",
    "<": "is less than",
    "<=": "is less than or equal to",
    ">": "is greater than",
    ">=": "is greater than or equal to",
}

COUNT_PHRASES: Dict[str, str] = {
    "count": "the number of times '{0}' has been satisfied",
    "count-overlapping": "the number of times '{0}' has been satisfied in overlapping intervals",
    "count-once": "whether '{0}' has been satisfied at least once",
    "count-once-per-objects": "the number of times '{0}' has been satisfied with different "
                              "objects",
    "count-once-per-external-objects": "the number of times '{0}' has been satisfied with "
                                       "different objects for the external variables",
    "count-measure": "the sum of the values measured when '{0}' was satisfied",
    "count-unique-positions": "the number of distinct positions where '{0}' was satisfied",
    "count-same-positions": "the largest number of times '{0}' was satisfied at one position",
}


def _phrase(table: Dict[str, str], name: str, args: Sequence[str]) -> str:
    template = table.get(name)
    if template is None:
        return f"{name}({', '.join(args)})"
    try:
        return template.format(*args)
    except IndexError:
        return f"{name}({', '.join(args)})"


def _join(parts: Sequence[str], word: str) -> str:
    """(a) and (b); (a), (b), and (c)."""
    wrapped = [f"({p})" for p in parts]
    if len(wrapped) <= 2:
        return f" {word} ".join(wrapped)
    return ", ".join(wrapped[:-1]) + f", {word} " + wrapped[-1]


def _variables(variables: VariableList) -> str:
    return ", ".join(f"{name} of type {_types(types)}"
                     for name, types in variables.variables().items())


def _types(types: Sequence[str]) -> str:
    return " or ".join(types)


@singledispatch
def phrase(node: Node) -> str:
    """Templated English for one node."""
    raise TypeError(f"cannot describe {type(node).__name__}")


@phrase.register
def _(node: Term) -> str:
    return node.value


@phrase.register
def _(node: NumberLiteral) -> str:
    return node.value


@phrase.register
def _(node: Predicate) -> str:
    return _phrase(PREDICATE_PHRASES, node.name, [phrase(a) for a in node.args])


@phrase.register
def _(node: FunctionEval) -> str:
    return _phrase(FUNCTION_PHRASES, node.name, [phrase(a) for a in node.args])


@phrase.register
def _(node: FunctionComparison) -> str:
    return _comparison(node.op, [phrase(a) for a in node.args])


def _comparison(op: str, args: Sequence[str]) -> str:
    words = COMPARISON_PHRASES[op]
    return f" {words} ".join(args) if len(args) == 2 else f"{', '.join(args)} are all equal"


@phrase.register(And)
@phrase.register(SetupAnd)
@phrase.register(TerminalAnd)
def _(node) -> str:
    return _join([phrase(c) for c in node.children], "and")


@phrase.register(Or)
@phrase.register(SetupOr)
@phrase.register(TerminalOr)
def _(node) -> str:
    return _join([phrase(c) for c in node.children], "or")


@phrase.register(Not)
@phrase.register(SetupNot)
@phrase.register(TerminalNot)
def _(node) -> str:
    return f"it's not the case that {phrase(node.child)}"


@phrase.register(Exists)
@phrase.register(SetupExists)
def _(node) -> str:
    return f"there exists {_variables(node.variables)}, such that {phrase(node.child)}"


@phrase.register(Forall)
@phrase.register(SetupForall)
def _(node) -> str:
    return f"for any {_variables(node.variables)}, {phrase(node.child)}"


@phrase.register
def _(node: GameConserved) -> str:
    return f"the following holds for the entire game: {phrase(node.child)}"


@phrase.register
def _(node: GameOptional) -> str:
    return f"the following holds at some point before play: {phrase(node.child)}"


@phrase.register
def _(node: Once) -> str:
    return f"there is a state where {phrase(node.child)}"


@phrase.register
def _(node: OnceMeasure) -> str:
    return (f"there is a state where {phrase(node.child)}. "
            f"In addition, measure and record {phrase(node.measure)}")


@phrase.register
def _(node: Hold) -> str:
    return f"there is a sequence of one or more states where {phrase(node.child)}"


@phrase.register
def _(node: HoldWhile) -> str:
    whiles = _join([phrase(w) for w in node.whiles], "then") if len(node.whiles) > 1 \
        else phrase(node.whiles[0])
    return (f"there is a sequence of one or more states where {phrase(node.child)}. "
            f"During this sequence, there is a state where {whiles}")


@phrase.register
def _(node: AtEnd) -> str:
    return f"in the final game state, {phrase(node.child)}"


@phrase.register
def _(node: TerminalComparison) -> str:
    return _comparison(node.op, [phrase(node.lhs), phrase(node.rhs)])


@phrase.register
def _(node: MultiOp) -> str:
    word = "the sum of" if node.op == "+" else "the product of"
    return f"{word} {_join([phrase(c) for c in node.children], 'and')}"


@phrase.register
def _(node: BinaryOp) -> str:
    word = "minus" if node.op == "-" else "divided by"
    return f"({phrase(node.lhs)}) {word} ({phrase(node.rhs)})"


@phrase.register
def _(node: Negate) -> str:
    return f"negative ({phrase(node.child)})"


@phrase.register
def _(node: TotalTime) -> str:
    return "the total time of the game"


@phrase.register
def _(node: TotalScore) -> str:
    return "the total score"


@phrase.register
def _(node: ScoringComparison) -> str:
    return f"1 if {_comparison(node.op, [phrase(a) for a in node.args])}, otherwise 0"


@phrase.register
def _(node: PreferenceEval) -> str:
    text = _phrase(COUNT_PHRASES, node.mode, [node.pref_name])
    if node.type_qualifiers:
        text += f" with objects of type {', '.join(node.type_qualifiers)}"
    return text


@phrase.register
def _(node: ExternalMaximize) -> str:
    return f"the maximum over the external objects of {phrase(node.child)}"


@phrase.register
def _(node: ExternalMinimize) -> str:
    return f"the minimum over the external objects of {phrase(node.child)}"


# --- whole games ------------------------------------------------------------------

_ORDER_WORDS = ("first", "next", "finally")


def body_steps(body: Node) -> List[str]:
    """One line per stage: first, next ..., finally; or the final-state condition."""
    if isinstance(body, AtEnd):
        return [phrase(body)]
    funcs = body.seq_funcs if isinstance(body, Then) else (body,)
    steps = []
    for i, func in enumerate(funcs):
        word = _ORDER_WORDS[0] if i == 0 else (_ORDER_WORDS[2] if i == len(funcs) - 1
                                               else _ORDER_WORDS[1])
        steps.append(f"{word}, {phrase(func)}")
    return steps


def _preference_context(pref_def: Node) -> Dict[str, object]:
    variables = []
    if isinstance(pref_def, PrefForall):
        variables.extend(pref_def.variables.variables().items())
        pref = pref_def.preference
    else:
        pref = pref_def
    if pref.variables is not None:
        variables.extend(pref.variables.variables().items())
    return {
        "name": pref.name,
        "variables": [(name, _types(types)) for name, types in variables],
        "steps": body_steps(pref.body),
    }


def description_context(game: Game) -> Dict[str, object]:
    return {
        "name": game.name,
        "setup": [phrase(game.setup)] if game.setup is not None else [],
        "preferences": [_preference_context(p) for p in game.preferences],
        "terminal": phrase(game.terminal) if game.terminal is not None else None,
        "scoring": phrase(game.scoring),
    }


def describe(game: Game, templates: Optional[TemplateManager] = None) -> str:
    """Templated description of every section of a game; deterministic per tree."""
    templates = templates or TemplateManager()
    return templates.render_description(description_context(game))
