"""Probabilistic grammar over the game DSL: fitting, sampling and tree regrowth."""

import dataclasses
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import vocabulary as vocab
from .exceptions import GoalSynthError, TrainingError
from .logger import get_logger
from .syntax import (
    CATEGORY_CLASSES, And, AtEnd, BinaryOp, Exists, ExternalMaximize, ExternalMinimize, Forall,
    FunctionComparison, FunctionEval, Game, GameConserved, GameOptional, Hold, HoldWhile, MultiOp,
    Negate, Node, Not, NumberLiteral, Once, OnceMeasure, Or, PrefForall, Preference,
    PreferenceEval, Predicate, ScoringComparison, SetupAnd, SetupExists, SetupForall, SetupNot,
    SetupOr, TerminalAnd, TerminalComparison, TerminalNot, TerminalOr, Term, Then, TotalScore,
    TotalTime, VariableDef, VariableList, find_node, iter_nodes, renumber, replace_at, scope_at,
    subtree_height,
)

logger = get_logger(__name__)

Scope = Dict[str, Tuple[str, ...]]

ALTERNATIVES: Dict[str, Tuple[str, ...]] = {
    cat: tuple(cls.__name__ for cls in classes) for cat, classes in CATEGORY_CLASSES.items()
}

# Alternatives that expand into their own category
RECURSIVE = frozenset({
    "SetupAnd", "SetupOr", "SetupNot", "SetupExists", "SetupForall",
    "And", "Or", "Not", "Exists", "Forall",
    "TerminalAnd", "TerminalOr", "TerminalNot",
    "ExternalMaximize", "ExternalMinimize", "MultiOp", "BinaryOp", "Negate", "ScoringComparison",
})

# Nodes at or below (max_depth - LEAF_MARGIN) only use non-recursive alternatives
LEAF_MARGIN = 3

BASE_NUMBERS = ("-10", "-5", "-1", "0", "0.5", "1", "2", "3", "4", "5", "10", "20", "30", "50",
                "100", "300")

TERMINAL_VOCAB: Dict[str, Tuple[Hashable, ...]] = {
    "predicate_name": tuple(vocab.PREDICATES),
    "function_name": tuple(vocab.FUNCTIONS),
    "object_type": tuple(t for t in vocab.OBJECT_TYPES if t != "agent"),
    "object_name": vocab.OBJECT_NAMES,
    "color": vocab.COLORS,
    "orientation": vocab.ORIENTATIONS,
    "side": vocab.SIDES,
    "color_type": ("color",) + vocab.COLORS,
    "orientation_type": ("orientation",) + vocab.ORIENTATIONS,
    "side_type": ("side",) + vocab.SIDES,
    "comparison_op": vocab.COMPARISON_OPS,
    "multi_op": vocab.MULTI_OPS,
    "binary_op": vocab.BINARY_OPS,
    "count_mode": vocab.COUNT_MODES,
    "number": BASE_NUMBERS,
    "term_kind": ("variable", "constant"),
    "variable_class": (vocab.OBJ, vocab.COLOR, vocab.ORIENTATION, vocab.SIDE),
    "either": ("no", "yes"),
    "quantifier": ("exists", "forall", "none"),
    "optional:setup": ("present", "absent"),
    "optional:terminal": ("present", "absent"),
    "qualifier_count": (0, 1),
}

LENGTH_RANGES: Dict[str, Tuple[int, int]] = {
    "SetupAnd.children": (1, 4),
    "SetupOr.children": (1, 3),
    "And.children": (1, 4),
    "Or.children": (1, 3),
    "TerminalAnd.children": (1, 3),
    "TerminalOr.children": (1, 3),
    "MultiOp.children": (1, 4),
    "ScoringComparison.args": (2, 3),
    "FunctionComparison.args": (2, 3),
    "Then.seq_funcs": (2, 4),
    "HoldWhile.whiles": (1, 2),
    "VariableList.defs": (1, 3),
    "VariableDef.names": (1, 3),
    "VariableDef.types": (2, 3),
    "Game.preferences": (1, 4),
}

_TYPE_DIST = {
    vocab.OBJ: "object_type",
    vocab.COLOR: "color_type",
    vocab.ORIENTATION: "orientation_type",
    vocab.SIDE: "side_type",
}

_CONSTANT_DIST = {
    vocab.OBJ: "object_name",
    vocab.COLOR: "color",
    vocab.ORIENTATION: "orientation",
    vocab.SIDE: "side",
    vocab.COLOR_OR_OBJ: "color",
    vocab.TYPE_OR_OBJ: "object_type",
}


@dataclass
class Pcfg:
    """Weighted grammar: rule weights per category, token weights per terminal class."""
    rules: Dict[str, Counter] = field(default_factory=dict)
    terminals: Dict[str, Counter] = field(default_factory=dict)
    lengths: Dict[str, Counter] = field(default_factory=dict)
    names: Counter = field(default_factory=Counter)
    domains: Counter = field(default_factory=Counter)
    max_depth: int = 16
    smoothing: float = 1.0

    def check(self):
        """Raise if any weight is negative or a category has no positive rule."""
        for table in (self.rules, self.terminals, self.lengths):
            for key, counts in table.items():
                if any(w < 0 for w in counts.values()):
                    raise GoalSynthError(f"negative weight in {key}")
        for cat in ALTERNATIVES:
            if not any(w > 0 for w in self.rules.get(cat, {}).values()):
                raise GoalSynthError(f"category {cat} has no positive-weight rule")

    def probability(self, table: str, key: str, item: Hashable) -> float:
        counts = getattr(self, table)[key]
        total = sum(counts.values())
        return counts[item] / total if total else 0.0

    def to_dict(self) -> dict:
        def plain(table):
            return {k: {str(i): float(w) for i, w in v.items()} for k, v in table.items()}
        return {
            "max_depth": self.max_depth,
            "smoothing": self.smoothing,
            "rules": plain(self.rules),
            "terminals": plain(self.terminals),
            "lengths": {k: {int(i): float(w) for i, w in v.items()}
                        for k, v in self.lengths.items()},
            "names": dict(self.names),
            "domains": dict(self.domains),
        }


def _signature_for(name: str, args: Sequence[Term], table) -> Tuple[str, ...]:
    sigs = [s for s in table[name] if len(s) == len(args)]
    return sigs[0] if sigs else ()


class _Counts:
    """Accumulates raw observation counts over a corpus."""

    def __init__(self):
        self.rules: Dict[str, Counter] = {}
        self.terminals: Dict[str, Counter] = {}
        self.lengths: Dict[str, Counter] = {}
        self.names: Counter = Counter()
        self.domains: Counter = Counter()

    def rule(self, cat: str, alt: str):
        self.rules.setdefault(cat, Counter())[alt] += 1

    def token(self, dist: str, item: Hashable):
        self.terminals.setdefault(dist, Counter())[item] += 1

    def length(self, key: str, n: int):
        self.lengths.setdefault(key, Counter())[n] += 1

    def term(self, term: Term, kind: str):
        if term.is_variable:
            self.token("term_kind", "variable")
            return
        self.token("term_kind", "constant")
        value = term.value
        if kind in (vocab.COLOR_OR_OBJ,) and value not in vocab.COLORS:
            self.token("object_name", value)
        elif kind == vocab.TYPE_OR_OBJ and value in vocab.OBJECT_NAMES:
            self.token("object_name", value)
        elif kind == vocab.OBJ and value not in vocab.OBJECT_NAMES:
            self.token("object_type", value)
        else:
            self.token(_CONSTANT_DIST.get(kind, "object_name"), value)

    def game(self, game: Game):
        self.domains[game.domain] += 1
        self.token("optional:setup", "present" if game.setup is not None else "absent")
        self.token("optional:terminal", "present" if game.terminal is not None else "absent")
        for ref in iter_nodes(game):
            node = ref.node
            self.rule(ref.category, type(node).__name__)
            for slot in node.SLOTS:
                key = f"{type(node).__name__}.{slot.name}"
                if slot.many and key in LENGTH_RANGES:
                    if not (isinstance(node, (FunctionComparison, ScoringComparison))
                            and node.op != "="):
                        self.length(key, len(getattr(node, slot.name)))
            self._node(node)

    def _node(self, node: Node):
        if isinstance(node, Predicate):
            self.token("predicate_name", node.name)
            signature = _signature_for(node.name, node.args, vocab.PREDICATES)
            for term, kind in zip(node.args, signature):
                self.term(term, kind)
        elif isinstance(node, FunctionEval):
            self.token("function_name", node.name)
            for term, kind in zip(node.args, _signature_for(node.name, node.args, vocab.FUNCTIONS)):
                self.term(term, kind)
        elif isinstance(node, (FunctionComparison, ScoringComparison, TerminalComparison)):
            self.token("comparison_op", node.op)
        elif isinstance(node, MultiOp):
            self.token("multi_op", node.op)
        elif isinstance(node, BinaryOp):
            self.token("binary_op", node.op)
        elif isinstance(node, PreferenceEval):
            self.token("count_mode", node.mode)
            self.token("qualifier_count", min(len(node.type_qualifiers), 1))
            for q in node.type_qualifiers:
                if q in vocab.TYPE_PARENTS:
                    self.token("object_type", q)
        elif isinstance(node, NumberLiteral):
            self.token("number", node.value)
        elif isinstance(node, VariableDef):
            cls = vocab.variable_class(node.names[0]) or vocab.OBJ
            self.token("variable_class", cls)
            self.token("either", "yes" if node.either else "no")
            self.length("VariableDef.names", len(node.names))
            if node.either:
                self.length("VariableDef.types", len(node.types))
            for t in node.types:
                self.token(_TYPE_DIST[cls], t)
        elif isinstance(node, Preference):
            self.names[node.name] += 1
            self.token("quantifier", node.quantifier or "none")


def _smoothed(observed: Dict[str, Counter], vocabulary: Dict[str, Iterable[Hashable]],
              smoothing: float) -> Dict[str, Counter]:
    out: Dict[str, Counter] = {}
    for key in set(observed) | set(vocabulary):
        counts = Counter({item: float(w) for item, w in observed.get(key, {}).items()})
        for item in vocabulary.get(key, ()):
            counts[item] += smoothing
        out[key] = counts
    return out


def fit_pcfg(corpus: Sequence[Game], smoothing: float = 1.0, max_depth: int = 16) -> Pcfg:
    """Fit rule and terminal weights to a corpus with additive smoothing.

    Args:
        corpus: Parsed games
        smoothing: Constant added to every grammar rule and vocabulary token
        max_depth: Depth cap used when sampling

    Returns:
        Pcfg with weights = observed counts + smoothing

    Raises:
        TrainingError: If the corpus is empty
    """
    if not corpus:
        raise TrainingError("cannot fit a grammar to an empty corpus")

    counts = _Counts()
    for game in corpus:
        counts.game(game)

    length_vocab = {k: range(lo, hi + 1) for k, (lo, hi) in LENGTH_RANGES.items()}
    pcfg = Pcfg(
        rules=_smoothed(counts.rules, ALTERNATIVES, smoothing),
        terminals=_smoothed(counts.terminals, TERMINAL_VOCAB, smoothing),
        lengths=_smoothed(counts.lengths, length_vocab, smoothing),
        names=counts.names,
        domains=counts.domains,
        max_depth=max_depth,
        smoothing=smoothing,
    )
    pcfg.check()
    logger.info(f"Fitted grammar to {len(corpus)} games")
    return pcfg


def weighted_choice(pairs: Sequence[Tuple[Hashable, float]], rng: np.random.Generator):
    total = sum(w for _, w in pairs)
    r = rng.random() * total
    upto = 0.0
    for item, w in pairs:
        upto += w
        if upto >= r:
            return item
    return pairs[-1][0]


class _DepthExceeded(Exception):
    pass


class Sampler:
    """Draws grammatical subtrees from a fitted grammar."""

    def __init__(self, pcfg: Pcfg, rng: np.random.Generator,
                 pref_names: Sequence[str] = (), taken_names: Iterable[str] = ()):
        self.pcfg = pcfg
        self.rng = rng
        self.pref_names = list(pref_names)
        self.taken_names = set(taken_names)

    # --- primitive draws ----------------------------------------------------

    def _pick(self, counts: Counter, allowed: Optional[Iterable[Hashable]] = None):
        items = sorted(counts.items(), key=lambda kv: str(kv[0]))
        if allowed is not None:
            allowed = set(allowed)
            items = [(k, w) for k, w in items if k in allowed]
        items = [(k, w) for k, w in items if w > 0]
        if not items:
            raise GoalSynthError("no positive-weight choice available")
        return weighted_choice(items, self.rng)

    def token(self, dist: str, allowed: Optional[Iterable[Hashable]] = None):
        return self._pick(self.pcfg.terminals[dist], allowed)

    def length(self, key: str, minimum: int = 1) -> int:
        allowed = [n for n in self.pcfg.lengths[key] if n >= minimum]
        return int(self._pick(self.pcfg.lengths[key], allowed))

    def alternative(self, category: str, depth: int) -> str:
        allowed = ALTERNATIVES[category]
        if depth >= self.pcfg.max_depth - LEAF_MARGIN:
            leaves = [a for a in allowed if a not in RECURSIVE]
            allowed = leaves or allowed
        return self._pick(self.pcfg.rules[category], allowed)

    # --- variables and terms ------------------------------------------------

    def fresh_variable(self, cls: str, used: Iterable[str]) -> str:
        used = set(used)
        if cls == vocab.OBJ:
            for letter in "abcdefghijklmnopqrstuvw":
                if f"?{letter}" not in used:
                    return f"?{letter}"
            prefix = "?o"
        else:
            prefix = {vocab.COLOR: "?x", vocab.ORIENTATION: "?y", vocab.SIDE: "?z"}[cls]
            if prefix not in used:
                return prefix
        k = 0
        while f"{prefix}{k}" in used:
            k += 1
        return f"{prefix}{k}"

    def variable_types(self, cls: str) -> Tuple[Tuple[str, ...], bool]:
        dist = _TYPE_DIST[cls]
        if self.token("either") == "yes":
            n = self.length("VariableDef.types", 2)
            types: List[str] = []
            for _ in range(n * 4):
                t = self.token(dist)
                if t not in types:
                    types.append(t)
                if len(types) == n:
                    break
            if len(types) >= 2:
                return tuple(types), True
            return (types[0],), False
        return (self.token(dist),), False

    def variable_list(self, scope: Scope) -> VariableList:
        used = set(scope)
        defs = []
        for _ in range(self.length("VariableList.defs")):
            cls = self.token("variable_class")
            names = []
            for _ in range(self.length("VariableDef.names")):
                name = self.fresh_variable(cls, used)
                used.add(name)
                names.append(name)
            types, either = self.variable_types(cls)
            defs.append(VariableDef(tuple(names), types, either))
        return VariableList(tuple(defs))

    def term(self, kind: str, scope: Scope) -> Term:
        classes = {
            vocab.OBJ: (vocab.OBJ,),
            vocab.TYPE_OR_OBJ: (vocab.OBJ,),
            vocab.COLOR: (vocab.COLOR,),
            vocab.COLOR_OR_OBJ: (vocab.COLOR, vocab.OBJ),
            vocab.ORIENTATION: (vocab.ORIENTATION,),
            vocab.SIDE: (vocab.SIDE,),
        }[kind]
        candidates = sorted(v for v in scope if vocab.variable_class(v) in classes)
        if candidates and self.token("term_kind") == "variable":
            return Term(candidates[int(self.rng.integers(len(candidates)))])
        return Term(self.token(_CONSTANT_DIST[kind]))

    def call_args(self, name: str, table, scope: Scope) -> Tuple[Term, ...]:
        sigs = table[name]
        sig = sigs[int(self.rng.integers(len(sigs)))]
        return tuple(self.term(kind, scope) for kind in sig)

    def predicate(self, scope: Scope) -> Predicate:
        name = self.token("predicate_name")
        return Predicate(name, self.call_args(name, vocab.PREDICATES, scope))

    def function_eval(self, scope: Scope) -> FunctionEval:
        name = self.token("function_name")
        return FunctionEval(name, self.call_args(name, vocab.FUNCTIONS, scope))

    def number(self) -> NumberLiteral:
        return NumberLiteral(str(self.token("number")))

    # --- categories ---------------------------------------------------------

    def _many(self, key: str, category: str, scope: Scope, depth: int) -> Tuple[Node, ...]:
        return tuple(self.sample(category, scope, depth + 1) for _ in range(self.length(key)))

    def _comparison_args(self, op: str, key: str, category: str, scope: Scope, depth: int):
        n = self.length(key, 2) if op == "=" else 2
        return tuple(self.sample(category, scope, depth + 1) for _ in range(n))

    def sample(self, category: str, scope: Scope, depth: int, **hints) -> Node:
        """Sample a subtree of `category` rooted at `depth` with `scope` bound."""
        if depth > self.pcfg.max_depth:
            raise _DepthExceeded()

        if category == "term":
            return self.term(hints.get("kind", vocab.OBJ), scope)
        if category == "number":
            return self.number()
        if category == "variable_list":
            return self.variable_list(scope)
        if category == "variable_def":
            return self.variable_list(scope).defs[0]
        if category == "function_eval":
            return self.function_eval(scope)
        if category == "game":
            return self.game()

        alt = self.alternative(category, depth)
        d = depth

        if alt in ("And", "Or", "SetupAnd", "SetupOr", "TerminalAnd", "TerminalOr"):
            cls = {"And": And, "Or": Or, "SetupAnd": SetupAnd, "SetupOr": SetupOr,
                   "TerminalAnd": TerminalAnd, "TerminalOr": TerminalOr}[alt]
            return cls(self._many(f"{alt}.children", category, scope, d))
        if alt in ("Not", "SetupNot", "TerminalNot"):
            cls = {"Not": Not, "SetupNot": SetupNot, "TerminalNot": TerminalNot}[alt]
            return cls(self.sample(category, scope, d + 1))
        if alt in ("Exists", "Forall", "SetupExists", "SetupForall"):
            cls = {"Exists": Exists, "Forall": Forall, "SetupExists": SetupExists,
                   "SetupForall": SetupForall}[alt]
            variables = self.variable_list(scope)
            inner = dict(scope)
            inner.update(variables.variables())
            return cls(variables, self.sample(category, inner, d + 1))
        if alt == "Predicate":
            return self.predicate(scope)
        if alt == "FunctionComparison":
            op = self.token("comparison_op")
            return FunctionComparison(op, self._comparison_args(
                op, "FunctionComparison.args", "comparison_arg", scope, d))
        if alt == "FunctionEval":
            return self.function_eval(scope)
        if alt == "NumberLiteral":
            return self.number()
        if alt == "GameConserved":
            return GameConserved(self.sample("super_predicate", scope, d + 1))
        if alt == "GameOptional":
            return GameOptional(self.sample("super_predicate", scope, d + 1))
        if alt == "Once":
            return Once(self.sample("super_predicate", scope, d + 1))
        if alt == "OnceMeasure":
            return OnceMeasure(self.sample("super_predicate", scope, d + 1),
                               self.function_eval(scope))
        if alt == "Hold":
            return Hold(self.sample("super_predicate", scope, d + 1))
        if alt == "HoldWhile":
            return HoldWhile(self.sample("super_predicate", scope, d + 1),
                             self._many("HoldWhile.whiles", "super_predicate", scope, d))
        if alt == "Then":
            return Then(self._many("Then.seq_funcs", "seq_func", scope, d))
        if alt == "AtEnd":
            return AtEnd(self.sample("super_predicate", scope, d + 1))
        if alt == "Preference":
            return self.preference(scope, d, hints.get("name"))
        if alt == "PrefForall":
            variables = self.variable_list(scope)
            inner = dict(scope)
            inner.update(variables.variables())
            return PrefForall(variables, self.preference(inner, d + 1, hints.get("name")))
        if alt == "TerminalComparison":
            return TerminalComparison(self.token("comparison_op"),
                                      self.sample("scoring_expr", scope, d + 1), self.number())
        if alt == "MultiOp":
            return MultiOp(self.token("multi_op"),
                           self._many("MultiOp.children", "scoring_expr", scope, d))
        if alt == "BinaryOp":
            return BinaryOp(self.token("binary_op"), self.sample("scoring_expr", scope, d + 1),
                            self.sample("scoring_expr", scope, d + 1))
        if alt == "Negate":
            return Negate(self.sample("scoring_expr", scope, d + 1))
        if alt == "TotalTime":
            return TotalTime()
        if alt == "TotalScore":
            return TotalScore()
        if alt == "ScoringComparison":
            op = self.token("comparison_op")
            return ScoringComparison(op, self._comparison_args(
                op, "ScoringComparison.args", "scoring_expr", scope, d))
        if alt == "PreferenceEval":
            return self.preference_eval()
        if alt == "ExternalMaximize":
            return ExternalMaximize(self.sample("scoring_expr", scope, d + 1))
        if alt == "ExternalMinimize":
            return ExternalMinimize(self.sample("scoring_expr", scope, d + 1))
        raise GoalSynthError(f"no expansion for {alt} in {category}")

    def preference_name(self) -> str:
        unused = [(n, w) for n, w in sorted(self.pcfg.names.items()) if n not in self.taken_names]
        if unused and self.rng.random() < 0.5:
            name = weighted_choice(unused, self.rng)
        else:
            k = len(self.taken_names)
            while f"preference{k}" in self.taken_names:
                k += 1
            name = f"preference{k}"
        self.taken_names.add(name)
        return name

    def preference(self, scope: Scope, depth: int, name: Optional[str] = None) -> Preference:
        if name is None:
            name = self.preference_name()
        quantifier = self.token("quantifier")
        if quantifier == "none":
            return Preference(name, None, None, self.sample("preference_body", scope, depth + 1))
        variables = self.variable_list(scope)
        inner = dict(scope)
        inner.update(variables.variables())
        return Preference(name, quantifier, variables,
                          self.sample("preference_body", inner, depth + 1))

    def preference_eval(self) -> PreferenceEval:
        mode = self.token("count_mode")
        name = self.pref_names[int(self.rng.integers(len(self.pref_names)))] \
            if self.pref_names else "preference0"
        qualifiers: Tuple[str, ...] = ()
        if self.token("qualifier_count") == 1:
            qualifiers = (self.token("object_type"),)
        return PreferenceEval(mode, name, qualifiers)

    def game(self) -> Game:
        domains = sorted(self.pcfg.domains.items())
        domain = weighted_choice(domains, self.rng) if domains else "medium-objects-room-v1"
        setup = None
        if self.token("optional:setup") == "present":
            setup = self.sample("setup", {}, 1)
        preferences = self._many("Game.preferences", "pref_def", {}, 0)
        self.pref_names = [p.preference.name if isinstance(p, PrefForall) else p.name
                           for p in preferences]
        terminal = None
        if self.token("optional:terminal") == "present":
            terminal = self.sample("terminal", {}, 1)
        scoring = self.sample("scoring_expr", {}, 1)
        return Game("sampled", domain, setup, preferences, terminal, scoring)


def _within_cap(node: Node, depth: int, cap: int) -> bool:
    return depth + subtree_height(node) <= cap


def sample_game(pcfg: Pcfg, rng: np.random.Generator, max_tries: int = 50) -> Game:
    """Sample a grammatical game whose depth stays within the grammar's cap."""
    for _ in range(max_tries):
        try:
            game = Sampler(pcfg, rng).game()
        except _DepthExceeded:
            continue
        if _within_cap(game, 0, pcfg.max_depth):
            return renumber(game)
    raise GoalSynthError(f"could not sample a game within depth {pcfg.max_depth}")


def _term_kind(parent: Optional[Node], index: Optional[int]) -> str:
    if isinstance(parent, Predicate):
        sig = _signature_for(parent.name, parent.args, vocab.PREDICATES)
    elif isinstance(parent, FunctionEval):
        sig = _signature_for(parent.name, parent.args, vocab.FUNCTIONS)
    else:
        return vocab.OBJ
    return sig[index] if sig and index is not None else vocab.OBJ


def regrow(game: Game, node_id: int, pcfg: Pcfg, rng: np.random.Generator,
           max_tries: int = 20) -> Game:
    """Replace the subtree at `node_id` with a fresh sample of the same category.

    Preference definitions keep their name; variable declarations keep their
    variable names and redraw their types. Everything outside the subtree is
    left untouched. Draws repeat until the subtree differs from the original;
    when every in-cap draw reproduces it (a lone variable in scope, say) the
    unchanged subtree is returned.

    Raises:
        NodeNotFoundError: If `node_id` does not exist
        GoalSynthError: If no try fits within the depth cap
    """
    ref = find_node(game, node_id)
    if ref.category == "game":
        return sample_game(pcfg, rng)

    scope = scope_at(game, ref.path)
    others = [n for n in game.preference_names()]
    sampler = Sampler(pcfg, rng, pref_names=game.preference_names(), taken_names=others)
    node = ref.node

    hints = {}
    if ref.category == "term":
        hints["kind"] = _term_kind(ref.parent, ref.path[-1][1])
    elif isinstance(node, (Preference, PrefForall)):
        pref = node.preference if isinstance(node, PrefForall) else node
        hints["name"] = pref.name

    accepted: Optional[Node] = None
    for _ in range(max_tries):
        try:
            if isinstance(node, VariableDef):
                cls = vocab.variable_class(node.names[0]) or vocab.OBJ
                types, either = sampler.variable_types(cls)
                new = VariableDef(node.names, types, either)
            elif isinstance(node, VariableList):
                defs = []
                for d in node.defs:
                    cls = vocab.variable_class(d.names[0]) or vocab.OBJ
                    types, either = sampler.variable_types(cls)
                    defs.append(VariableDef(d.names, types, either))
                new = VariableList(tuple(defs))
            else:
                new = sampler.sample(ref.category, scope, ref.depth, **hints)
        except _DepthExceeded:
            continue
        if not _within_cap(new, ref.depth, max(pcfg.max_depth, ref.depth)):
            continue
        accepted = new
        if new != node:
            break
    if accepted is None:
        raise GoalSynthError(f"could not regrow node {node_id} within the depth cap")

    return renumber(replace_at(game, ref.path, accepted))


def regrow_random(game: Game, pcfg: Pcfg, rng: np.random.Generator) -> Tuple[Game, int]:
    """Regrow a uniformly chosen node (the root excluded); returns (game, node_id)."""
    ids = [ref.node.node_id for ref in iter_nodes(game) if ref.category != "game"]
    node_id = ids[int(rng.integers(len(ids)))]
    return regrow(game, node_id, pcfg, rng), node_id


def with_name(game: Game, name: str) -> Game:
    return dataclasses.replace(game, name=name)


def sample_subtree(pcfg: Pcfg, rng: np.random.Generator, category: str, scope: Scope,
                   depth: int, pref_names: Sequence[str] = (), taken_names: Iterable[str] = (),
                   max_tries: int = 20, **hints) -> Optional[Node]:
    """A fresh subtree of `category` that fits under the depth cap at `depth`, or None."""
    sampler = Sampler(pcfg, rng, pref_names=pref_names, taken_names=taken_names)
    for _ in range(max_tries):
        try:
            node = sampler.sample(category, scope, depth, **hints)
        except _DepthExceeded:
            continue
        if _within_cap(node, depth, max(pcfg.max_depth, depth)):
            return node
    return None
