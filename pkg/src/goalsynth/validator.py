"""Structural checks for grammatical but ill-formed games."""

from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Tuple

from .syntax import Game, Node, Term, children, introduced_variables, pref_evals_in

UNKNOWN_VARIABLE = "unknown_variable"
UNDEFINED_PREFERENCE = "undefined_preference"
DUPLICATE_PREFERENCE = "duplicate_preference"


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    node_id: int = -1

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def _unbound_terms(node: Node, scope: Dict[str, Tuple[str, ...]], out: List[Violation]):
    if isinstance(node, Term):
        if node.is_variable and node.value not in scope:
            out.append(Violation(UNKNOWN_VARIABLE, f"variable {node.value} is not bound",
                                 node.node_id))
        return
    inner = dict(scope)
    inner.update(introduced_variables(node))
    for (name, _), child, _ in children(node):
        _unbound_terms(child, scope if name == "variables" else inner, out)


def validate(game: Game) -> List[Violation]:
    """Report unknown variables, undefined preference references and duplicate names.

    Returns:
        Violations in traversal order; empty for a well-formed game
    """
    violations: List[Violation] = []

    _unbound_terms(game, {}, violations)

    names = game.preference_names()
    for name, count in Counter(names).items():
        if count > 1:
            violations.append(Violation(DUPLICATE_PREFERENCE,
                                        f"preference {name} defined {count} times"))

    defined = set(names)
    for section in (game.terminal, game.scoring):
        for ev in pref_evals_in(section):
            if ev.pref_name not in defined:
                violations.append(Violation(UNDEFINED_PREFERENCE,
                                            f"preference {ev.pref_name} is not defined",
                                            ev.node_id))
    return violations
