"""Feature extraction: a fixed, versioned registry of structural and semantic game features.

Raw values come from `raw_features`; a fitted `Normalizer` maps them into the
unit interval (and the node-count / depth values into one-hot quintile bins).
"""

import csv
import hashlib
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from . import vocabulary as vocab
from .exceptions import ValidationError
from .logger import get_logger
from .ngram import SECTIONS as NGRAM_SECTIONS
from .ngram import NGramModel, section_tokens, train_section_models
from .predicates import PredicateDatabase, db_feasible
from .printer import to_text
from .syntax import (
    And, AtEnd, BinaryOp, ExternalMaximize, ExternalMinimize, FunctionEval, Game, Hold, HoldWhile,
    MultiOp, Negate, Node, Not, NumberLiteral, Once, OnceMeasure, Or, PrefForall, PreferenceEval,
    Predicate, ScoringComparison, SetupAnd, SetupNot, SetupOr, TerminalAnd, TerminalComparison,
    TerminalNot, TerminalOr, Term, Then, TotalScore, TotalTime, VariableDef, children,
    introduced_variables, iter_nodes, pref_evals_in, section_nodes, subtree_height, subtree_size,
)

logger = get_logger(__name__)

REGISTRY_VERSION = "1"

BINARY = "b"
PROPORTION = "p"
DISCRETE = "d"
FLOAT = "f"

COUNT_SECTIONS = ("setup", "constraints", "terminal", "scoring")
N_BINS = 5

LOGICAL_GROUPS = ((And, SetupAnd, TerminalAnd), (Or, SetupOr, TerminalOr),
                  (Not, SetupNot, TerminalNot))
SUPER_LOGICALS = (And, Or, Not)


@dataclass(frozen=True)
class FeatureDef:
    name: str
    group: str
    kind: str
    raw: str = ""

    @property
    def raw_name(self) -> str:
        return self.raw or self.name


def _default_defs(n: int = 5) -> List[FeatureDef]:
    defs = [FeatureDef(f"ast_ngram_{s}_n_{n}_score", "ngram", FLOAT) for s in NGRAM_SECTIONS]
    defs += [FeatureDef(name, "play_trace_database", PROPORTION) for name in (
        "predicate_found_in_data_prop", "predicate_found_in_data_small_logicals_prop")]
    defs += [
        FeatureDef("variables_used_all", "defined_and_used", BINARY),
        FeatureDef("variables_used_prop", "defined_and_used", PROPORTION),
        FeatureDef("preferences_used_all", "defined_and_used", BINARY),
        FeatureDef("preferences_used_prop", "defined_and_used", PROPORTION),
        FeatureDef("setup_quantified_objects_used", "defined_and_used", PROPORTION),
        FeatureDef("any_setup_objects_used", "defined_and_used", BINARY),
        FeatureDef("section_doesnt_exist_setup", "defined_and_used", BINARY),
        FeatureDef("section_doesnt_exist_terminal", "defined_and_used", BINARY),
    ]
    defs += [FeatureDef(name, "grammar_misuse", BINARY) for name in GRAMMAR_MISUSE]
    defs += [FeatureDef(name, "scoring_grammar_misuse", BINARY) for name in SCORING_MISUSE]
    defs += [
        FeatureDef("disjoint_preferences_found", "game_element_disjointness", BINARY),
        FeatureDef("disjoint_preferences_scoring_terminal_types", "game_element_disjointness",
                   PROPORTION),
        FeatureDef("disjoint_preferences_scoring_terminal_predicates",
                   "game_element_disjointness", PROPORTION),
        FeatureDef("disjoint_seq_funcs_found", "game_element_disjointness", BINARY),
        FeatureDef("disjoint_at_end_found", "game_element_disjointness", BINARY),
        FeatureDef("disjoint_modal_predicates_found", "game_element_disjointness", BINARY),
        FeatureDef("disjoint_modal_predicates_prop", "game_element_disjointness", PROPORTION),
    ]
    for measure in ("node_count", "max_depth"):
        for section in COUNT_SECTIONS:
            for b in range(N_BINS):
                defs.append(FeatureDef(f"{measure}_{section}_{b}", "counting", DISCRETE,
                                       raw=f"{measure}_{section}"))
    defs += [FeatureDef(f"pref_forall_{name}", "pref_forall", BINARY) for name in (
        "used_correct", "used_incorrect",
        "external_forall_used_correct", "external_forall_used_incorrect",
        "pref_forall_correct_arity_correct", "pref_forall_correct_arity_incorrect",
        "pref_forall_correct_types_correct", "pref_forall_correct_types_incorrect",
    )]
    return defs


GRAMMAR_MISUSE = (
    "adjacent_once_found", "adjacent_same_modal_found", "once_in_middle_of_pref_found",
    "pref_without_hold_found", "identical_consecutive_seq_func_predicates_found",
    "predicate_without_variables_or_agent", "nested_logicals_found",
    "identical_logical_children_found", "redundant_expression_found",
    "unnecessary_expression_found", "repeated_variables_found",
    "repeated_variable_type_in_either",
)

SCORING_MISUSE = (
    "identical_scoring_children_found", "redundant_scoring_terminal_expression_found",
    "unnecessary_scoring_terminal_expression_found", "total_score_non_positive",
    "scoring_preferences_used_identically", "two_number_operation_found",
)


@dataclass(frozen=True)
class FeatureRegistry:
    """Ordered feature definitions; the version changes whenever the name list does."""
    features: Tuple[FeatureDef, ...]

    @classmethod
    def default(cls, n: int = 5, exclude_groups: Iterable[str] = ()) -> "FeatureRegistry":
        return cls(tuple(_default_defs(n))).without_groups(exclude_groups)

    @property
    def names(self) -> List[str]:
        return [f.name for f in self.features]

    @property
    def groups(self) -> List[str]:
        return list(dict.fromkeys(f.group for f in self.features))

    @property
    def version(self) -> str:
        digest = hashlib.sha256("\n".join(self.names).encode("utf-8")).hexdigest()[:8]
        return f"{REGISTRY_VERSION}-{digest}"

    def without_groups(self, groups: Iterable[str]) -> "FeatureRegistry":
        groups = set(groups)
        return FeatureRegistry(tuple(f for f in self.features if f.group not in groups))

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __len__(self) -> int:
        return len(self.features)


# --- helpers -----------------------------------------------------------------------


def _quantifier_scopes(game: Game):
    """(binding node, variables it defines, nodes in which they are in scope)."""
    for ref in iter_nodes(game):
        defined = introduced_variables(ref.node)
        if defined:
            bodies = [child for (name, _), child, _ in children(ref.node) if name != "variables"]
            yield ref.node, defined, bodies


def _terms(node: Optional[Node]) -> Iterable[Term]:
    if node is None:
        return
    for ref in iter_nodes(node):
        if isinstance(ref.node, Term):
            yield ref.node


def _pref_types(pref_def: Node) -> Set[str]:
    """Object types a preference quantifies over plus the object constants it names."""
    types: Set[str] = set()
    for ref in iter_nodes(pref_def, "pref_def"):
        if isinstance(ref.node, VariableDef) and vocab.variable_class(ref.node.names[0]) == \
                vocab.OBJ:
            types.update(ref.node.types)
    for term in _terms(pref_def):
        if not term.is_variable and term.value in vocab.TYPE_PARENTS and term.value != "agent":
            types.add(term.value)
    return types


def _types_overlap(a: Set[str], b: Set[str]) -> bool:
    return any(vocab.is_subtype(x, y) or vocab.is_subtype(y, x) for x in a for y in b)


def _predicate_names(node: Node) -> Set[str]:
    out = set()
    for ref in iter_nodes(node):
        if isinstance(ref.node, (Predicate, FunctionEval)):
            out.add(ref.node.name)
    return out


def _refs(node: Node) -> Set[str]:
    """Variables and object constants referenced below `node` (the agent excluded)."""
    return {t.value for t in _terms(node) if t.value != "agent"
            and (t.is_variable or t.value in vocab.TYPE_PARENTS)}


def _isolated(sets: Sequence[Set[str]]) -> List[bool]:
    """For each non-empty set, whether it shares nothing with the union of the others."""
    out = []
    for i, s in enumerate(sets):
        others = set().union(*(o for j, o in enumerate(sets) if j != i)) if len(sets) > 1 else set()
        out.append(bool(s) and len(sets) > 1 and not (s & others))
    return out


def _pref_index(game: Game) -> Dict[str, Node]:
    return {(p.preference.name if isinstance(p, PrefForall) else p.name): p
            for p in game.preferences}


# --- truth tables ------------------------------------------------------------------


def _atoms(node: Node) -> List[Node]:
    if isinstance(node, SUPER_LOGICALS):
        kids = node.children if isinstance(node, (And, Or)) else (node.child,)
        out: List[Node] = []
        for k in kids:
            for a in _atoms(k):
                if a not in out:
                    out.append(a)
        return out
    return [node]


def _truth(node: Node, assignment: Mapping[Node, bool]) -> bool:
    if isinstance(node, And):
        return all(_truth(c, assignment) for c in node.children)
    if isinstance(node, Or):
        return any(_truth(c, assignment) for c in node.children)
    if isinstance(node, Not):
        return not _truth(node.child, assignment)
    return assignment[node]


def _table(node: Node, atoms: Sequence[Node]) -> Tuple[bool, ...]:
    return tuple(_truth(node, dict(zip(atoms, values)))
                 for values in itertools.product((False, True), repeat=len(atoms)))


def _logic_misuse(game: Game, max_atoms: int) -> Tuple[bool, bool]:
    """(redundant_expression_found, unnecessary_expression_found) over super-predicates."""
    redundant = unnecessary = False
    for ref in iter_nodes(game):
        node = ref.node
        if not isinstance(node, SUPER_LOGICALS):
            continue
        atoms = _atoms(node)
        if len(atoms) > max_atoms:
            continue
        table = _table(node, atoms)
        if all(table) or not any(table):
            unnecessary = True
        if isinstance(node, (And, Or)) and len(node.children) >= 2:
            for i in range(len(node.children)):
                reduced = type(node)(node.children[:i] + node.children[i + 1:])
                if _table(reduced, atoms) == table:
                    redundant = True
                    break
    return redundant, unnecessary


# --- scoring analysis --------------------------------------------------------------


def _interval(node: Node) -> Tuple[float, float]:
    """Bounds of a scoring expression over every possible play."""
    inf = math.inf
    if isinstance(node, NumberLiteral):
        return node.number, node.number
    if isinstance(node, (PreferenceEval, TotalTime)):
        return 0.0, inf
    if isinstance(node, TotalScore):
        return -inf, inf
    if isinstance(node, ScoringComparison):
        return 0.0, 1.0
    if isinstance(node, Negate):
        lo, hi = _interval(node.child)
        return -hi, -lo
    if isinstance(node, (ExternalMaximize, ExternalMinimize)):
        return _interval(node.child)
    if isinstance(node, MultiOp):
        bounds = [_interval(c) for c in node.children]
        if node.op == "+":
            return sum(b[0] for b in bounds), sum(b[1] for b in bounds)
        lo, hi = bounds[0]
        for b in bounds[1:]:
            lo, hi = _mul((lo, hi), b)
        return lo, hi
    if isinstance(node, BinaryOp):
        a, b = _interval(node.lhs), _interval(node.rhs)
        if node.op == "-":
            return a[0] - b[1], a[1] - b[0]
        if b[0] <= 0 <= b[1]:
            return -inf, inf
        return _mul(a, (1 / b[1], 1 / b[0]))
    return -inf, inf


def _mul(a: Tuple[float, float], b: Tuple[float, float]) -> Tuple[float, float]:
    products = []
    for x in a:
        for y in b:
            products.append(0.0 if x == 0 or y == 0 else x * y)
    return min(products), max(products)


def _non_negative(node: Node) -> bool:
    return _interval(node)[0] >= 0


def _scoring_redundant(node: Node) -> bool:
    if isinstance(node, MultiOp):
        if len(node.children) == 1:
            return True
        identity = 0.0 if node.op == "+" else 1.0
        if any(isinstance(c, NumberLiteral) and c.number == identity for c in node.children):
            return True
        if any(isinstance(c, MultiOp) and c.op == node.op for c in node.children):
            return True
    if isinstance(node, BinaryOp):
        if isinstance(node.rhs, NumberLiteral) and node.rhs.number == (0.0 if node.op == "-"
                                                                     else 1.0):
            return True
    if isinstance(node, Negate) and isinstance(node.child, Negate):
        return True
    if isinstance(node, ScoringComparison) and len(node.args) == 1:
        return True
    return False


def _terminal_constant(node: TerminalComparison) -> bool:
    """Comparison whose outcome is fixed whatever happens during play."""
    lo, hi = _interval(node.lhs)
    r = node.rhs.number
    op = node.op
    if op in (">=",):
        return lo >= r or hi < r
    if op == ">":
        return lo > r or hi <= r
    if op == "<=":
        return hi <= r or lo > r
    if op == "<":
        return hi < r or lo >= r
    return lo == hi or r < lo or r > hi


def _scoring_unnecessary(node: Node) -> bool:
    if isinstance(node, TerminalComparison):
        return _terminal_constant(node)
    if isinstance(node, BinaryOp) and node.lhs == node.rhs:
        return True
    if isinstance(node, MultiOp) and node.op == "*" and any(
            isinstance(c, NumberLiteral) and c.number == 0 for c in node.children):
        return True
    if isinstance(node, ScoringComparison) and len(node.args) >= 2 and all(
            a == node.args[0] for a in node.args[1:]):
        return True
    return False


def _additive_terms(node: Node) -> List[Node]:
    if isinstance(node, MultiOp) and node.op == "+":
        out = []
        for c in node.children:
            out.extend(_additive_terms(c))
        return out
    if isinstance(node, (ExternalMaximize, ExternalMinimize)):
        return _additive_terms(node.child)
    return [node]


def _preferences_used_identically(game: Game) -> bool:
    templates: Dict[str, Set[str]] = {}
    for term in _additive_terms(game.scoring):
        evals = list(pref_evals_in(term))
        names = {e.pref_name for e in evals}
        if len(names) != 1:
            continue
        text = to_text(term).replace(next(iter(names)), "\x00")
        templates.setdefault(next(iter(names)), set()).add(text)
    if len(templates) < 2:
        return False
    first = next(iter(templates.values()))
    return all(t == first for t in templates.values())


# --- raw extraction ----------------------------------------------------------------


@dataclass
class FeatureContext:
    """Everything extraction needs besides the game itself."""
    registry: FeatureRegistry
    ngrams: Dict[str, NGramModel] = field(default_factory=dict)
    db: Optional[PredicateDatabase] = None
    normalizer: Optional["Normalizer"] = None
    max_truth_table_atoms: int = 8
    max_logical_children: int = 4

    @property
    def n(self) -> int:
        first = next(iter(self.ngrams.values()), None)
        return first.n if first else 5


def build_feature_context(corpus: Sequence[Game], db: Optional[PredicateDatabase] = None,
                          n: int = 5, discount: float = 0.4,
                          exclude_groups: Iterable[str] = (),
                          max_truth_table_atoms: int = 8,
                          max_logical_children: int = 4) -> FeatureContext:
    """Train section n-gram models on the corpus and assemble an (unnormalized) context."""
    registry = FeatureRegistry.default(n, exclude_groups)
    ngrams = train_section_models(corpus, n, discount)
    logger.info(f"Feature context: {len(registry)} features, n-gram models for "
                f"{', '.join(sorted(ngrams))}")
    return FeatureContext(registry, ngrams, db, None, max_truth_table_atoms, max_logical_children)


def _ngram_features(game: Game, ctx: FeatureContext, out: Dict[str, float]):
    tokens = section_tokens(game)
    for section in NGRAM_SECTIONS:
        model = ctx.ngrams.get(section)
        name = f"ast_ngram_{section}_n_{ctx.n}_score"
        if model is None or not tokens[section]:
            out[name] = math.nan
        else:
            out[name] = model.score(tokens[section])


def _database_features(game: Game, ctx: FeatureContext, out: Dict[str, float]):
    if ctx.db is None:
        out["predicate_found_in_data_prop"] = 1.0
        out["predicate_found_in_data_small_logicals_prop"] = 1.0
        return
    preds, logicals = [], []
    for section in (game.setup, *game.preferences):
        if section is None:
            continue
        scope: Dict[str, Tuple[str, ...]] = {}
        _collect_scoped(section, scope, preds, logicals, ctx.max_logical_children)
    out["predicate_found_in_data_prop"] = (
        sum(db_feasible(ctx.db, p, s) for p, s in preds) / len(preds) if preds else 1.0)
    out["predicate_found_in_data_small_logicals_prop"] = (
        sum(db_feasible(ctx.db, e, s) for e, s in logicals) / len(logicals) if logicals else 1.0)


def _collect_scoped(node: Node, scope, preds, logicals, max_children: int):
    if isinstance(node, Predicate):
        preds.append((node, scope))
        return
    if isinstance(node, SUPER_LOGICALS):
        kids = node.children if isinstance(node, (And, Or)) else (node.child,)
        if len(kids) <= max_children:
            logicals.append((node, scope))
    inner = dict(scope)
    inner.update(introduced_variables(node))
    for (name, _), child, _ in children(node):
        _collect_scoped(child, scope if name == "variables" else inner, preds, logicals,
                        max_children)


def _defined_and_used(game: Game, out: Dict[str, float]):
    defined = used = 0
    for _, variables, bodies in _quantifier_scopes(game):
        referenced = set()
        for body in bodies:
            referenced |= {t.value for t in _terms(body) if t.is_variable}
        for v in variables:
            defined += 1
            used += v in referenced
    out["variables_used_all"] = float(used == defined)
    out["variables_used_prop"] = used / defined if defined else 1.0

    names = set(game.preference_names())
    referenced_prefs = {e.pref_name for sec in (game.terminal, game.scoring)
                        for e in pref_evals_in(sec)}
    used_prefs = names & referenced_prefs
    out["preferences_used_all"] = float(used_prefs == names)
    out["preferences_used_prop"] = len(used_prefs) / len(names) if names else 1.0

    setup_types: Set[str] = set()
    setup_objects: Set[str] = set()
    if game.setup is not None:
        for ref in iter_nodes(game.setup, "setup"):
            if isinstance(ref.node, VariableDef):
                setup_types.update(ref.node.types)
        setup_objects = setup_types | {t.value for t in _terms(game.setup)
                                       if not t.is_variable and t.value != "agent"}
    pref_objects: Set[str] = set()
    for pref in game.preferences:
        pref_objects |= _pref_types(pref)
        pref_objects |= {t.value for t in _terms(pref) if not t.is_variable}
    out["setup_quantified_objects_used"] = (
        len(setup_types & pref_objects) / len(setup_types) if setup_types else 0.0)
    out["any_setup_objects_used"] = float(bool(setup_objects & pref_objects))
    out["section_doesnt_exist_setup"] = float(game.setup is None)
    out["section_doesnt_exist_terminal"] = float(game.terminal is None)


def _grammar_misuse(game: Game, ctx: FeatureContext, out: Dict[str, float]):
    flags = dict.fromkeys(GRAMMAR_MISUSE, False)
    for ref in iter_nodes(game):
        node = ref.node
        if isinstance(node, Then):
            seq = node.seq_funcs
            once_like = [isinstance(s, (Once, OnceMeasure)) for s in seq]
            for i in range(1, len(seq)):
                if once_like[i] and once_like[i - 1]:
                    flags["adjacent_once_found"] = True
                if type(seq[i]) is type(seq[i - 1]):
                    flags["adjacent_same_modal_found"] = True
                if seq[i].child == seq[i - 1].child:
                    flags["identical_consecutive_seq_func_predicates_found"] = True
            if any(once_like[1:-1]):
                flags["once_in_middle_of_pref_found"] = True
            if not any(isinstance(s, (Hold, HoldWhile)) for s in seq):
                flags["pref_without_hold_found"] = True
        elif isinstance(node, (Predicate, FunctionEval)):
            # named room objects (top_drawer, bed, ...) ground a predicate like the agent does
            if isinstance(node, Predicate) and node.args and not any(
                    a.is_variable or a.value in vocab.OBJECT_NAMES for a in node.args):
                flags["predicate_without_variables_or_agent"] = True
            variables = [a.value for a in node.args if a.is_variable]
            if len(variables) != len(set(variables)):
                flags["repeated_variables_found"] = True
        elif isinstance(node, VariableDef):
            if node.either and len(node.types) != len(set(node.types)):
                flags["repeated_variable_type_in_either"] = True

        for group in LOGICAL_GROUPS:
            if isinstance(node, group):
                kids = node.children if hasattr(node, "children") else (node.child,)
                if any(isinstance(k, group) for k in kids):
                    flags["nested_logicals_found"] = True
                if len(kids) >= 2 and len(set(kids)) < len(kids):
                    flags["identical_logical_children_found"] = True

    redundant, unnecessary = _logic_misuse(game, ctx.max_truth_table_atoms)
    flags["redundant_expression_found"] = redundant
    flags["unnecessary_expression_found"] = unnecessary
    out.update({k: float(v) for k, v in flags.items()})


def _scoring_misuse(game: Game, out: Dict[str, float]):
    flags = dict.fromkeys(SCORING_MISUSE, False)
    for section in (game.terminal, game.scoring):
        if section is None:
            continue
        for ref in iter_nodes(section):
            node = ref.node
            kids = None
            if isinstance(node, (MultiOp, TerminalAnd, TerminalOr)):
                kids = node.children
            elif isinstance(node, ScoringComparison):
                kids = node.args
            elif isinstance(node, BinaryOp):
                kids = (node.lhs, node.rhs)
            if kids and len(kids) >= 2 and len(set(kids)) < len(kids):
                flags["identical_scoring_children_found"] = True
            if kids and len(kids) >= 2 and isinstance(node, (MultiOp, BinaryOp)) and all(
                    isinstance(k, NumberLiteral) for k in kids):
                flags["two_number_operation_found"] = True
            if _scoring_redundant(node):
                flags["redundant_scoring_terminal_expression_found"] = True
            if _scoring_unnecessary(node):
                flags["unnecessary_scoring_terminal_expression_found"] = True
    flags["total_score_non_positive"] = _interval(game.scoring)[1] <= 0
    flags["scoring_preferences_used_identically"] = _preferences_used_identically(game)
    out.update({k: float(v) for k, v in flags.items()})


def _pair_fraction(items: Sequence, disjoint) -> float:
    pairs = list(itertools.combinations(items, 2))
    if not pairs:
        return 0.0
    return sum(disjoint(a, b) for a, b in pairs) / len(pairs)


def _disjointness(game: Game, out: Dict[str, float]):
    prefs = list(game.preferences)
    type_sets = [_pref_types(p) for p in prefs]
    quantifying = [t for t in type_sets if t]
    out["disjoint_preferences_found"] = float(any(
        not _types_overlap(a, b) for a, b in itertools.combinations(quantifying, 2)))

    index = _pref_index(game)
    referenced = []
    for section in (game.terminal, game.scoring):
        for ev in pref_evals_in(section):
            if ev.pref_name in index and ev.pref_name not in referenced:
                referenced.append(ev.pref_name)
    ref_nodes = [index[n] for n in referenced]
    out["disjoint_preferences_scoring_terminal_types"] = _pair_fraction(
        [_pref_types(p) for p in ref_nodes], lambda a, b: not _types_overlap(a, b))
    out["disjoint_preferences_scoring_terminal_predicates"] = _pair_fraction(
        [_predicate_names(p) for p in ref_nodes], lambda a, b: not (a & b))

    seq_disjoint = at_end_disjoint = modal_disjoint = False
    modal_flags: List[bool] = []
    for ref in iter_nodes(game):
        node = ref.node
        if isinstance(node, Then):
            if any(_isolated([_refs(s) for s in node.seq_funcs])):
                seq_disjoint = True
            isolated = _isolated([_predicate_names(s) for s in node.seq_funcs])
            modal_flags.extend(isolated)
            modal_disjoint = modal_disjoint or any(isolated)
        elif isinstance(node, AtEnd) and isinstance(node.child, (And, Or)):
            if any(_isolated([_refs(c) for c in node.child.children])):
                at_end_disjoint = True
    out["disjoint_seq_funcs_found"] = float(seq_disjoint)
    out["disjoint_at_end_found"] = float(at_end_disjoint)
    out["disjoint_modal_predicates_found"] = float(modal_disjoint)
    out["disjoint_modal_predicates_prop"] = (
        sum(modal_flags) / len(modal_flags) if modal_flags else 0.0)


def _counting(game: Game, out: Dict[str, float]):
    sections = section_nodes(game)
    for section in COUNT_SECTIONS:
        nodes = sections[section]
        if not nodes:
            out[f"node_count_{section}"] = math.nan
            out[f"max_depth_{section}"] = math.nan
            continue
        out[f"node_count_{section}"] = float(sum(subtree_size(n) for n in nodes))
        out[f"max_depth_{section}"] = float(1 + max(subtree_height(n) for n in nodes))


def _qualifier_fits(qualifier: str, declared: Sequence[str]) -> bool:
    if qualifier in vocab.COLORS:
        return any(vocab.color_of_type(t) in (None, qualifier) for t in declared)
    if qualifier not in vocab.TYPE_PARENTS:
        return False
    return any(vocab.is_subtype(qualifier, t) or vocab.is_subtype(t, qualifier) for t in declared)


def _pref_forall(game: Game, out: Dict[str, float]):
    foralls = [p for p in game.preferences if isinstance(p, PrefForall)]
    index = _pref_index(game)

    def flag_pair(prefix: str, applicable: bool, correct: bool):
        out[f"pref_forall_{prefix}_correct"] = float(applicable and correct)
        out[f"pref_forall_{prefix}_incorrect"] = float(applicable and not correct)

    used_ok = all(
        set(p.variables.variables()) <= {t.value for t in _terms(p.preference) if t.is_variable}
        for p in foralls)
    flag_pair("used", bool(foralls), used_ok)

    external_refs = []
    qualified = []
    for section in (game.terminal, game.scoring):
        if section is None:
            continue
        for ref in iter_nodes(section):
            node = ref.node
            if isinstance(node, PreferenceEval):
                if node.mode == "count-once-per-external-objects":
                    external_refs.append(index.get(node.pref_name))
                if node.type_qualifiers:
                    qualified.append(node)
            elif isinstance(node, (ExternalMaximize, ExternalMinimize)):
                targets = [index.get(e.pref_name) for e in pref_evals_in(node.child)]
                external_refs.append(next((t for t in targets if isinstance(t, PrefForall)),
                                          targets[0] if targets else None))
    flag_pair("external_forall_used", bool(external_refs),
              all(isinstance(t, PrefForall) for t in external_refs))

    def arity_ok(ev: PreferenceEval) -> bool:
        target = index.get(ev.pref_name)
        return isinstance(target, PrefForall) and \
            len(ev.type_qualifiers) <= len(target.variables.variables())

    def types_ok(ev: PreferenceEval) -> bool:
        target = index.get(ev.pref_name)
        if not isinstance(target, PrefForall):
            return False
        declared = list(target.variables.variables().values())
        return all(i < len(declared) and _qualifier_fits(q, declared[i])
                   for i, q in enumerate(ev.type_qualifiers))

    flag_pair("pref_forall_correct_arity", bool(qualified), all(arity_ok(e) for e in qualified))
    flag_pair("pref_forall_correct_types", bool(qualified), all(types_ok(e) for e in qualified))


def raw_features(game: Game, ctx: FeatureContext,
                 groups: Optional[Iterable[str]] = None) -> Dict[str, float]:
    """Unnormalized feature values; counting features are raw counts and depths.

    Only `groups` are computed (default: the groups of the context's registry).
    NaN marks a value that does not apply (an absent section).
    """
    groups = set(ctx.registry.groups if groups is None else groups)
    out: Dict[str, float] = {}
    if "ngram" in groups:
        _ngram_features(game, ctx, out)
    if "play_trace_database" in groups:
        _database_features(game, ctx, out)
    if "defined_and_used" in groups:
        _defined_and_used(game, out)
    if "grammar_misuse" in groups:
        _grammar_misuse(game, ctx, out)
    if "scoring_grammar_misuse" in groups:
        _scoring_misuse(game, out)
    if "game_element_disjointness" in groups:
        _disjointness(game, out)
    if "counting" in groups:
        _counting(game, out)
    if "pref_forall" in groups:
        _pref_forall(game, out)
    return out


# --- normalization -----------------------------------------------------------------


@dataclass
class Normalizer:
    """Observed ranges for float features and quintile thresholds for counting features."""
    ranges: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    thresholds: Dict[str, Tuple[float, ...]] = field(default_factory=dict)

    def scale(self, name: str, value: float) -> float:
        if math.isnan(value):
            return 0.5
        lo, hi = self.ranges.get(name, (value, value))
        if hi <= lo:
            return 0.5
        return float(min(1.0, max(0.0, (value - lo) / (hi - lo))))

    def bin(self, raw_name: str, value: float) -> Optional[int]:
        if math.isnan(value):
            return None
        cuts = self.thresholds.get(raw_name, ())
        return int(np.searchsorted(np.asarray(cuts), value, side="right"))

    def transform(self, raw: Mapping[str, float], registry: FeatureRegistry) -> np.ndarray:
        values = np.zeros(len(registry))
        for i, f in enumerate(registry.features):
            if f.kind == FLOAT:
                values[i] = self.scale(f.name, raw[f.name])
            elif f.kind == DISCRETE:
                b = self.bin(f.raw_name, raw[f.raw_name])
                values[i] = float(b is not None and f.name == f"{f.raw_name}_{b}")
            else:
                values[i] = float(min(1.0, max(0.0, raw[f.name])))
        return values

    def to_dict(self) -> dict:
        return {"ranges": {k: [float(lo), float(hi)] for k, (lo, hi) in self.ranges.items()},
                "thresholds": {k: [float(c) for c in v] for k, v in self.thresholds.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "Normalizer":
        return cls({k: (v[0], v[1]) for k, v in data.get("ranges", {}).items()},
                   {k: tuple(v) for k, v in data.get("thresholds", {}).items()})


def fit_normalizers(rows: Sequence[Mapping[str, float]], registry: FeatureRegistry) -> Normalizer:
    """Fit min/max ranges and per-section quintile cut points over raw feature rows.

    Raises:
        ValidationError: If there are fewer than two rows
    """
    if len(rows) < 2:
        raise ValidationError("fitting normalizers needs at least two feature rows")
    normalizer = Normalizer()
    for f in registry.features:
        if f.kind == FLOAT:
            observed = [r[f.name] for r in rows if not math.isnan(r[f.name])]
            if observed:
                normalizer.ranges[f.name] = (min(observed), max(observed))
        elif f.kind == DISCRETE and f.raw_name not in normalizer.thresholds:
            observed = [r[f.raw_name] for r in rows if not math.isnan(r[f.raw_name])]
            if observed:
                cuts = np.quantile(np.asarray(observed), [0.2, 0.4, 0.6, 0.8])
                normalizer.thresholds[f.raw_name] = tuple(float(c) for c in cuts)
    return normalizer


def extract_features(game: Game, ctx: FeatureContext) -> np.ndarray:
    """Normalized feature vector in registry order.

    Raises:
        ValidationError: If the context has no fitted normalizer
    """
    if ctx.normalizer is None:
        raise ValidationError("feature context has no fitted normalizer")
    return ctx.normalizer.transform(raw_features(game, ctx), ctx.registry)


def write_features(path: Path, names: Sequence[str], rows: Sequence[Sequence[float]],
                   labels: Optional[Sequence[str]] = None):
    """Tab-separated feature table with a header row (and an optional leading label column)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow((["id"] if labels is not None else []) + list(names))
        for i, row in enumerate(rows):
            prefix = [labels[i]] if labels is not None else []
            writer.writerow(prefix + [f"{v:.6g}" for v in row])


def read_features(path: Path) -> Tuple[List[str], List[str], np.ndarray]:
    """Inverse of `write_features`; returns (labels, names, matrix)."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader)
        has_labels = header[0] == "id"
        names = header[1:] if has_labels else header
        labels, rows = [], []
        for row in reader:
            if has_labels:
                labels.append(row[0])
                row = row[1:]
            rows.append([float(v) for v in row])
    return labels, names, np.asarray(rows, dtype=float).reshape(len(rows), len(names))
