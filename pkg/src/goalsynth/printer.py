"""Canonical printer for game programs."""

from functools import singledispatch
from typing import List

from .syntax import (
    And, AtEnd, BinaryOp, Exists, ExternalMaximize, ExternalMinimize, Forall, FunctionComparison,
    FunctionEval, Game, GameConserved, GameOptional, Hold, HoldWhile, MultiOp, Negate, Node, Not,
    NumberLiteral, Once, OnceMeasure, Or, PrefForall, Preference, PreferenceEval, Predicate,
    ScoringComparison, SetupAnd, SetupExists, SetupForall, SetupNot, SetupOr, TerminalAnd,
    TerminalComparison, TerminalNot, TerminalOr, Term, Then, TotalScore, TotalTime, VariableDef,
    VariableList,
)


def _wrap(*parts: str) -> str:
    return "(" + " ".join(p for p in parts if p != "") + ")"


@singledispatch
def to_text(node: Node) -> str:
    """Canonical single-line text of any node."""
    raise TypeError(f"cannot print {type(node).__name__}")


@to_text.register
def _(node: Term) -> str:
    return node.value


@to_text.register
def _(node: NumberLiteral) -> str:
    return node.value


@to_text.register
def _(node: VariableDef) -> str:
    types = _wrap("either", *node.types) if node.either else node.types[0]
    return " ".join(node.names) + " - " + types


@to_text.register
def _(node: VariableList) -> str:
    return _wrap(*(to_text(d) for d in node.defs))


@to_text.register
def _(node: Predicate) -> str:
    return _wrap(node.name, *(to_text(a) for a in node.args))


@to_text.register
def _(node: FunctionEval) -> str:
    return _wrap(node.name, *(to_text(a) for a in node.args))


@to_text.register
def _(node: FunctionComparison) -> str:
    return _wrap(node.op, *(to_text(a) for a in node.args))


@to_text.register(And)
@to_text.register(SetupAnd)
@to_text.register(TerminalAnd)
def _(node) -> str:
    return _wrap("and", *(to_text(c) for c in node.children))


@to_text.register(Or)
@to_text.register(SetupOr)
@to_text.register(TerminalOr)
def _(node) -> str:
    return _wrap("or", *(to_text(c) for c in node.children))


@to_text.register(Not)
@to_text.register(SetupNot)
@to_text.register(TerminalNot)
def _(node) -> str:
    return _wrap("not", to_text(node.child))


@to_text.register(Exists)
@to_text.register(SetupExists)
def _(node) -> str:
    return _wrap("exists", to_text(node.variables), to_text(node.child))


@to_text.register(Forall)
@to_text.register(SetupForall)
def _(node) -> str:
    return _wrap("forall", to_text(node.variables), to_text(node.child))


@to_text.register
def _(node: GameConserved) -> str:
    return _wrap("game-conserved", to_text(node.child))


@to_text.register
def _(node: GameOptional) -> str:
    return _wrap("game-optional", to_text(node.child))


@to_text.register
def _(node: Once) -> str:
    return _wrap("once", to_text(node.child))


@to_text.register
def _(node: OnceMeasure) -> str:
    return _wrap("once-measure", to_text(node.child), to_text(node.measure))


@to_text.register
def _(node: Hold) -> str:
    return _wrap("hold", to_text(node.child))


@to_text.register
def _(node: HoldWhile) -> str:
    return _wrap("hold-while", to_text(node.child), *(to_text(w) for w in node.whiles))


@to_text.register
def _(node: Then) -> str:
    return _wrap("then", *(to_text(s) for s in node.seq_funcs))


@to_text.register
def _(node: AtEnd) -> str:
    return _wrap("at-end", to_text(node.child))


@to_text.register
def _(node: Preference) -> str:
    body = to_text(node.body)
    if node.quantifier is not None:
        body = _wrap(node.quantifier, to_text(node.variables), body)
    return _wrap("preference", node.name, body)


@to_text.register
def _(node: PrefForall) -> str:
    return _wrap("forall", to_text(node.variables), to_text(node.preference))


@to_text.register
def _(node: TerminalComparison) -> str:
    return _wrap(node.op, to_text(node.lhs), to_text(node.rhs))


@to_text.register
def _(node: MultiOp) -> str:
    return _wrap(node.op, *(to_text(c) for c in node.children))


@to_text.register
def _(node: BinaryOp) -> str:
    return _wrap(node.op, to_text(node.lhs), to_text(node.rhs))


@to_text.register
def _(node: Negate) -> str:
    return _wrap("-", to_text(node.child))


@to_text.register
def _(node: TotalTime) -> str:
    return "(total-time)"


@to_text.register
def _(node: TotalScore) -> str:
    return "(total-score)"


@to_text.register
def _(node: ScoringComparison) -> str:
    return _wrap(node.op, *(to_text(a) for a in node.args))


@to_text.register
def _(node: PreferenceEval) -> str:
    return _wrap(node.mode, ":".join((node.pref_name,) + node.type_qualifiers))


@to_text.register
def _(node: ExternalMaximize) -> str:
    return _wrap("external-forall-maximize", to_text(node.child))


@to_text.register
def _(node: ExternalMinimize) -> str:
    return _wrap("external-forall-minimize", to_text(node.child))


def _sections(game: Game) -> List[str]:
    parts = [_wrap(":domain", game.domain)]
    if game.setup is not None:
        parts.append(_wrap(":setup", to_text(game.setup)))
    parts.append(_wrap(":constraints", _wrap("and", *(to_text(p) for p in game.preferences))))
    if game.terminal is not None:
        parts.append(_wrap(":terminal", to_text(game.terminal)))
    parts.append(_wrap(":scoring", to_text(game.scoring)))
    return parts


@to_text.register
def _(node: Game) -> str:
    return _wrap("define", _wrap("game", node.name), *_sections(node))


def print_game(game: Game) -> str:
    """Canonical form: one line, single spaces, fixed section order, constraints under (and ...)."""
    return to_text(game)


def format_game(game: Game) -> str:
    """Readable multi-line form: one section per line and one preference per line.

    Parses to the same tree as `print_game`.
    """
    lines = [f"(define (game {game.name})", f"  (:domain {game.domain})"]
    if game.setup is not None:
        lines.append(f"  (:setup {to_text(game.setup)})")
    lines.append("  (:constraints (and")
    for pref in game.preferences:
        lines.append(f"    {to_text(pref)}")
    lines.append("  ))")
    if game.terminal is not None:
        lines.append(f"  (:terminal {to_text(game.terminal)})")
    lines.append(f"  (:scoring {to_text(game.scoring)})")
    lines.append(")")
    return "\n".join(lines)
