"""Syntax tree for game programs.

Nodes are frozen dataclasses. Child nodes live in the fields listed in each
class's ``SLOTS``; every slot names the grammar category (nonterminal) it
holds, which is what regrowth, crossover and the sampler key on. ``node_id``
is excluded from equality, so two trees that differ only in numbering compare
equal.
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Any, ClassVar, Dict, Iterator, List, Optional, Tuple

from .exceptions import NodeNotFoundError

Path = Tuple[Tuple[str, Optional[int]], ...]


@dataclass(frozen=True)
class Slot:
    """A child position: field name, grammar category, and list/optional flags."""
    name: str
    category: str
    many: bool = False
    minimum: int = 1
    optional: bool = False


@dataclass(frozen=True)
class Node:
    SLOTS: ClassVar[Tuple[Slot, ...]] = ()

    node_id: int = field(default=-1, compare=False, repr=False, kw_only=True)


# --- variables and terms ---------------------------------------------------

@dataclass(frozen=True)
class Term(Node):
    value: str

    @property
    def is_variable(self) -> bool:
        return self.value.startswith("?")


@dataclass(frozen=True)
class NumberLiteral(Node):
    value: str

    @property
    def number(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class VariableDef(Node):
    names: Tuple[str, ...]
    types: Tuple[str, ...]
    either: bool = False


@dataclass(frozen=True)
class VariableList(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("defs", "variable_def", many=True),)
    defs: Tuple[VariableDef, ...]

    def variables(self) -> Dict[str, Tuple[str, ...]]:
        """Variable name -> allowed types."""
        out: Dict[str, Tuple[str, ...]] = {}
        for d in self.defs:
            for name in d.names:
                out[name] = d.types
        return out


# --- super-predicates ------------------------------------------------------

@dataclass(frozen=True)
class Predicate(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("args", "term", many=True, minimum=0),)
    name: str
    args: Tuple[Term, ...] = ()


@dataclass(frozen=True)
class FunctionEval(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("args", "term", many=True, minimum=0),)
    name: str
    args: Tuple[Term, ...] = ()


@dataclass(frozen=True)
class FunctionComparison(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("args", "comparison_arg", many=True, minimum=2),)
    op: str
    args: Tuple[Node, ...]


@dataclass(frozen=True)
class And(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("children", "super_predicate", many=True),)
    children: Tuple[Node, ...]


@dataclass(frozen=True)
class Or(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("children", "super_predicate", many=True),)
    children: Tuple[Node, ...]


@dataclass(frozen=True)
class Not(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "super_predicate"),)
    child: Node


@dataclass(frozen=True)
class Exists(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("variables", "variable_list"),
                                         Slot("child", "super_predicate"))
    variables: VariableList
    child: Node


@dataclass(frozen=True)
class Forall(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("variables", "variable_list"),
                                         Slot("child", "super_predicate"))
    variables: VariableList
    child: Node


# --- setup -----------------------------------------------------------------

@dataclass(frozen=True)
class SetupAnd(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("children", "setup", many=True),)
    children: Tuple[Node, ...]


@dataclass(frozen=True)
class SetupOr(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("children", "setup", many=True),)
    children: Tuple[Node, ...]


@dataclass(frozen=True)
class SetupNot(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "setup"),)
    child: Node


@dataclass(frozen=True)
class SetupExists(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("variables", "variable_list"), Slot("child", "setup"))
    variables: VariableList
    child: Node


@dataclass(frozen=True)
class SetupForall(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("variables", "variable_list"), Slot("child", "setup"))
    variables: VariableList
    child: Node


@dataclass(frozen=True)
class GameConserved(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "super_predicate"),)
    child: Node


@dataclass(frozen=True)
class GameOptional(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "super_predicate"),)
    child: Node


# --- preferences -----------------------------------------------------------

@dataclass(frozen=True)
class Once(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "super_predicate"),)
    child: Node


@dataclass(frozen=True)
class OnceMeasure(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "super_predicate"),
                                         Slot("measure", "function_eval"))
    child: Node
    measure: FunctionEval


@dataclass(frozen=True)
class Hold(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "super_predicate"),)
    child: Node


@dataclass(frozen=True)
class HoldWhile(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "super_predicate"),
                                         Slot("whiles", "super_predicate", many=True))
    child: Node
    whiles: Tuple[Node, ...]


@dataclass(frozen=True)
class Then(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("seq_funcs", "seq_func", many=True, minimum=2),)
    seq_funcs: Tuple[Node, ...]


@dataclass(frozen=True)
class AtEnd(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "super_predicate"),)
    child: Node


@dataclass(frozen=True)
class Preference(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("variables", "variable_list", optional=True),
                                         Slot("body", "preference_body"))
    name: str
    quantifier: Optional[str]
    variables: Optional[VariableList]
    body: Node


@dataclass(frozen=True)
class PrefForall(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("variables", "variable_list"),
                                         Slot("preference", "preference"))
    variables: VariableList
    preference: Preference


# --- terminal --------------------------------------------------------------

@dataclass(frozen=True)
class TerminalAnd(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("children", "terminal", many=True),)
    children: Tuple[Node, ...]


@dataclass(frozen=True)
class TerminalOr(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("children", "terminal", many=True),)
    children: Tuple[Node, ...]


@dataclass(frozen=True)
class TerminalNot(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "terminal"),)
    child: Node


@dataclass(frozen=True)
class TerminalComparison(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("lhs", "scoring_expr"), Slot("rhs", "number"))
    op: str
    lhs: Node
    rhs: NumberLiteral


# --- scoring ---------------------------------------------------------------

@dataclass(frozen=True)
class MultiOp(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("children", "scoring_expr", many=True),)
    op: str
    children: Tuple[Node, ...]


@dataclass(frozen=True)
class BinaryOp(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("lhs", "scoring_expr"), Slot("rhs", "scoring_expr"))
    op: str
    lhs: Node
    rhs: Node


@dataclass(frozen=True)
class Negate(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "scoring_expr"),)
    child: Node


@dataclass(frozen=True)
class TotalTime(Node):
    pass


@dataclass(frozen=True)
class TotalScore(Node):
    pass


@dataclass(frozen=True)
class ScoringComparison(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("args", "scoring_expr", many=True, minimum=2),)
    op: str
    args: Tuple[Node, ...]


@dataclass(frozen=True)
class PreferenceEval(Node):
    mode: str
    pref_name: str
    type_qualifiers: Tuple[str, ...] = ()


@dataclass(frozen=True)
class ExternalMaximize(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "scoring_expr"),)
    child: Node


@dataclass(frozen=True)
class ExternalMinimize(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (Slot("child", "scoring_expr"),)
    child: Node


# --- game ------------------------------------------------------------------

@dataclass(frozen=True)
class Game(Node):
    SLOTS: ClassVar[Tuple[Slot, ...]] = (
        Slot("setup", "setup", optional=True),
        Slot("preferences", "pref_def", many=True),
        Slot("terminal", "terminal", optional=True),
        Slot("scoring", "scoring_expr"),
    )
    name: str
    domain: str
    setup: Optional[Node]
    preferences: Tuple[Node, ...]
    terminal: Optional[Node]
    scoring: Node

    def preference_defs(self) -> List[Preference]:
        """Every Preference, unwrapping forall-over-preference blocks."""
        return [p.preference if isinstance(p, PrefForall) else p for p in self.preferences]

    def preference_names(self) -> List[str]:
        return [p.name for p in self.preference_defs()]


# Which node classes may fill a slot of each category
CATEGORY_CLASSES: Dict[str, Tuple[type, ...]] = {
    "game": (Game,),
    "setup": (SetupAnd, SetupOr, SetupNot, SetupExists, SetupForall, GameConserved, GameOptional),
    "super_predicate": (And, Or, Not, Exists, Forall, FunctionComparison, Predicate),
    "comparison_arg": (FunctionEval, NumberLiteral),
    "function_eval": (FunctionEval,),
    "term": (Term,),
    "number": (NumberLiteral,),
    "variable_list": (VariableList,),
    "variable_def": (VariableDef,),
    "pref_def": (Preference, PrefForall),
    "preference": (Preference,),
    "preference_body": (Then, AtEnd),
    "seq_func": (Once, OnceMeasure, Hold, HoldWhile),
    "terminal": (TerminalAnd, TerminalOr, TerminalNot, TerminalComparison),
    "scoring_expr": (
        ExternalMaximize, ExternalMinimize, MultiOp, BinaryOp, Negate, TotalTime, TotalScore,
        ScoringComparison, PreferenceEval, NumberLiteral,
    ),
}

LOGICAL_CLASSES = (And, Or, Not, SetupAnd, SetupOr, SetupNot, TerminalAnd, TerminalOr, TerminalNot)
QUANTIFIER_CLASSES = (Exists, Forall, SetupExists, SetupForall)
SECTIONS = ("setup", "constraints", "terminal", "scoring")


@dataclass(frozen=True)
class NodeRef:
    """A node located inside a tree."""
    node: Node
    category: str
    path: Path
    depth: int
    parent: Optional[Node]


def slot_values(node: Node) -> Iterator[Tuple[Slot, Any]]:
    for slot in node.SLOTS:
        yield slot, getattr(node, slot.name)


def children(node: Node) -> Iterator[Tuple[Tuple[str, Optional[int]], Node, str]]:
    """Direct children as ((field, index), child, category)."""
    for slot, value in slot_values(node):
        if value is None:
            continue
        if slot.many:
            for i, child in enumerate(value):
                yield (slot.name, i), child, slot.category
        else:
            yield (slot.name, None), value, slot.category


def iter_nodes(root: Node, category: str = "game") -> Iterator[NodeRef]:
    """Pre-order traversal yielding every node with its category and path."""
    stack: List[NodeRef] = [NodeRef(root, category, (), 0, None)]
    while stack:
        ref = stack.pop()
        yield ref
        kids = list(children(ref.node))
        for step, child, cat in reversed(kids):
            stack.append(NodeRef(child, cat, ref.path + (step,), ref.depth + 1, ref.node))


def subtree_size(node: Node) -> int:
    return sum(1 for _ in iter_nodes(node))


def subtree_height(node: Node) -> int:
    """Longest root-to-leaf edge count below `node`."""
    kids = [child for _, child, _ in children(node)]
    if not kids:
        return 0
    return 1 + max(subtree_height(k) for k in kids)


def get_at(root: Node, path: Path) -> Node:
    node = root
    for name, index in path:
        value = getattr(node, name)
        node = value[index] if index is not None else value
    return node


def replace_at(root: Node, path: Path, new: Optional[Node]) -> Node:
    """Return a copy of `root` with the node at `path` replaced (ids not renumbered).

    Passing None for a list element removes it; for an optional slot it clears it.
    """
    if not path:
        if new is None:
            raise ValueError("cannot remove the root")
        return new
    (name, index), rest = path[0], path[1:]
    value = getattr(root, name)
    if index is None:
        updated = replace_at(value, rest, new) if rest else new
        return dataclasses.replace(root, **{name: updated})
    items = list(value)
    if rest:
        items[index] = replace_at(items[index], rest, new)
    elif new is None:
        del items[index]
    else:
        items[index] = new
    return dataclasses.replace(root, **{name: tuple(items)})


def insert_at(root: Node, parent_path: Path, slot_name: str, index: int, new: Node) -> Node:
    """Insert `new` into the list slot `slot_name` of the node at `parent_path`."""
    parent = get_at(root, parent_path)
    items = list(getattr(parent, slot_name))
    items.insert(index, new)
    updated = dataclasses.replace(parent, **{slot_name: tuple(items)})
    return replace_at(root, parent_path, updated)


def renumber(root: Node, start: int = 0) -> Node:
    """Assign pre-order node ids starting at `start`."""
    counter = [start]

    def walk(node: Node) -> Node:
        node_id = counter[0]
        counter[0] += 1
        updates: Dict[str, Any] = {"node_id": node_id}
        for slot, value in slot_values(node):
            if value is None:
                continue
            if slot.many:
                updates[slot.name] = tuple(walk(v) for v in value)
            else:
                updates[slot.name] = walk(value)
        return dataclasses.replace(node, **updates)

    return walk(root)


def find_node(root: Node, node_id: int) -> NodeRef:
    """Locate a node by id.

    Raises:
        NodeNotFoundError: If no node carries `node_id`
    """
    for ref in iter_nodes(root):
        if ref.node.node_id == node_id:
            return ref
    raise NodeNotFoundError(f"No node with id {node_id}")


def category_of_node(node: Node) -> str:
    """Narrowest category a node class belongs to (used when the slot is unknown)."""
    for category in ("game", "setup", "super_predicate", "seq_func", "preference_body",
                     "pref_def", "terminal", "scoring_expr", "variable_list", "variable_def",
                     "term", "function_eval"):
        if isinstance(node, CATEGORY_CLASSES[category]):
            return category
    return "number"


def introduced_variables(node: Node) -> Dict[str, Tuple[str, ...]]:
    """Variables a quantifier-like node binds for its body."""
    if isinstance(node, QUANTIFIER_CLASSES) or isinstance(node, PrefForall):
        return node.variables.variables()
    if isinstance(node, Preference) and node.variables is not None:
        return node.variables.variables()
    return {}


def scope_at(root: Node, path: Path) -> Dict[str, Tuple[str, ...]]:
    """Variables in scope at `path`, innermost binding winning.

    Variables bound by a node are in scope only in slots other than its own
    variable list.
    """
    scope: Dict[str, Tuple[str, ...]] = {}
    node = root
    for name, index in path:
        if name != "variables":
            scope.update(introduced_variables(node))
        value = getattr(node, name)
        node = value[index] if index is not None else value
    return scope


def section_nodes(game: Game) -> Dict[str, List[Node]]:
    """Top-level nodes of each section; absent optional sections map to []."""
    return {
        "setup": [game.setup] if game.setup is not None else [],
        "constraints": list(game.preferences),
        "terminal": [game.terminal] if game.terminal is not None else [],
        "scoring": [game.scoring],
    }


def section_of_path(path: Path) -> Optional[str]:
    if not path:
        return None
    head = path[0][0]
    return {"setup": "setup", "preferences": "constraints", "terminal": "terminal",
            "scoring": "scoring"}.get(head)


def predicates_in(node: Node) -> Iterator[Predicate]:
    for ref in iter_nodes(node):
        if isinstance(ref.node, Predicate):
            yield ref.node


def pref_evals_in(node: Optional[Node]) -> Iterator[PreferenceEval]:
    if node is None:
        return
    for ref in iter_nodes(node):
        if isinstance(ref.node, PreferenceEval):
            yield ref.node
