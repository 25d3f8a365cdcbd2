"""Mutation operators over game syntax trees."""

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import OPERATORS
from .exceptions import GoalSynthError
from .logger import get_logger
from .pcfg import Pcfg, regrow, regrow_random, sample_subtree, weighted_choice
from .syntax import (
    And, Game, HoldWhile, MultiOp, NodeRef, Or, PrefForall, PreferenceEval, SetupAnd,
    SetupOr, TerminalAnd, TerminalOr, Then, VariableList, get_at, insert_at, introduced_variables,
    iter_nodes, pref_evals_in, renumber, replace_at, scope_at, subtree_height,
)
from .validator import validate

logger = get_logger(__name__)

# List slots whose length is free (within the slot minimum)
RESIZABLE_SLOTS = {
    (And, "children"), (Or, "children"), (SetupAnd, "children"), (SetupOr, "children"),
    (TerminalAnd, "children"), (TerminalOr, "children"), (MultiOp, "children"),
    (Then, "seq_funcs"), (HoldWhile, "whiles"), (Game, "preferences"),
}


@dataclass(frozen=True)
class MutationConfig:
    operator_weights: Tuple[Tuple[str, float], ...] = tuple((op, 1.0) for op in OPERATORS)
    min_preferences: int = 1
    max_preferences: int = 4
    max_retries: int = 10

    @classmethod
    def from_config(cls, config) -> "MutationConfig":
        search = config.section("search")
        weights = dict.fromkeys(OPERATORS, 1.0)
        weights.update(search["operator_weights"])
        return cls(tuple((op, float(weights[op])) for op in OPERATORS),
                   search["min_preferences"], search["max_preferences"], search["max_retries"])

    @property
    def active(self) -> List[Tuple[str, float]]:
        return [(op, w) for op, w in self.operator_weights if w > 0]

    def without(self, operators: Sequence[str]) -> "MutationConfig":
        weights = tuple((op, 0.0 if op in operators else w) for op, w in self.operator_weights)
        return dataclasses.replace(self, operator_weights=weights)


@dataclass
class MutationContext:
    pcfg: Pcfg
    rng: np.random.Generator
    partners: Sequence[Game] = ()
    config: MutationConfig = field(default_factory=MutationConfig)

    def choice(self, items: Sequence):
        return items[int(self.rng.integers(len(items)))]

    def partner(self) -> Optional[Game]:
        return self.choice(self.partners) if self.partners else None


@dataclass
class MutationResult:
    game: Game
    operator: str
    noop: bool = False


def _child_scope(game: Game, ref: NodeRef):
    scope = scope_at(game, ref.path)
    scope.update(introduced_variables(ref.node))
    return scope


def _resizable(game: Game) -> List[Tuple[NodeRef, str, str, int]]:
    """(parent ref, slot name, category, slot minimum) for every free-length list slot."""
    out = []
    for ref in iter_nodes(game):
        for slot in ref.node.SLOTS:
            if (type(ref.node), slot.name) in RESIZABLE_SLOTS:
                out.append((ref, slot.name, slot.category, slot.minimum))
    return out


def _referenced(game: Game) -> set:
    return {e.pref_name for section in (game.terminal, game.scoring)
            for e in pref_evals_in(section)}


def _pref_name(node) -> str:
    return node.preference.name if isinstance(node, PrefForall) else node.name


def _rename(pref_def, name: str):
    if isinstance(pref_def, PrefForall):
        return dataclasses.replace(pref_def, preference=dataclasses.replace(pref_def.preference,
                                                                          name=name))
    return dataclasses.replace(pref_def, name=name)


def _fits(ctx: MutationContext, depth: int, node) -> bool:
    return depth + subtree_height(node) <= ctx.pcfg.max_depth


# --- operators ---------------------------------------------------------------------


def op_regrow(game: Game, ctx: MutationContext) -> Optional[Game]:
    return regrow_random(game, ctx.pcfg, ctx.rng)[0]


def op_insert(game: Game, ctx: MutationContext) -> Optional[Game]:
    sites = [s for s in _resizable(game)
             if not (s[1] == "preferences" and len(game.preferences) >= ctx.config.max_preferences)]
    if not sites:
        return None
    ref, slot, category, _ = ctx.choice(sites)
    names = game.preference_names()
    new = sample_subtree(ctx.pcfg, ctx.rng, category, _child_scope(game, ref), ref.depth + 1,
                         pref_names=names, taken_names=names)
    if new is None:
        return None
    index = int(ctx.rng.integers(len(getattr(ref.node, slot)) + 1))
    child = insert_at(game, ref.path, slot, index, new)
    if slot == "preferences":
        # a new preference joins the score so that it is referenced
        count = PreferenceEval("count", _pref_name(new))
        scoring = child.scoring
        if isinstance(scoring, MultiOp) and scoring.op == "+":
            scoring = dataclasses.replace(scoring, children=scoring.children + (count,))
        else:
            scoring = MultiOp("+", (scoring, count))
        child = dataclasses.replace(child, scoring=scoring)
    return child


def op_delete(game: Game, ctx: MutationContext) -> Optional[Game]:
    referenced = _referenced(game)
    options = []
    for ref, slot, _, minimum in _resizable(game):
        items = getattr(ref.node, slot)
        if slot == "preferences":
            if len(items) <= max(minimum, ctx.config.min_preferences):
                continue
            options.extend((ref, slot, i) for i, p in enumerate(items)
                           if _pref_name(p) not in referenced)
        elif len(items) > minimum:
            options.extend((ref, slot, i) for i in range(len(items)))
    if not options:
        return None
    ref, slot, index = ctx.choice(options)
    return replace_at(game, ref.path + ((slot, index),), None)


def op_crossover(game: Game, ctx: MutationContext) -> Optional[Game]:
    """Swap in a subtree of the same grammar category from a partner game."""
    partner = ctx.partner()
    if partner is None:
        return None
    site = ctx.choice([r for r in iter_nodes(game) if r.category != "game"])
    donors = [r for r in iter_nodes(partner) if r.category == site.category]
    if not donors:
        return None
    new = ctx.choice(donors).node
    if site.category in ("pref_def", "preference"):
        new = _rename(new, _pref_name(site.node))
    if not _fits(ctx, site.depth, new):
        return None
    return replace_at(game, site.path, new)


def op_resample_variables(game: Game, ctx: MutationContext) -> Optional[Game]:
    sites = [r for r in iter_nodes(game) if isinstance(r.node, VariableList)]
    if not sites:
        return None
    return regrow(game, ctx.choice(sites).node.node_id, ctx.pcfg, ctx.rng)


def _resample_condition(game: Game, ctx: MutationContext, index: int) -> Optional[Game]:
    """Replace the first or last condition of a sequence, from a partner or freshly sampled."""
    sites = [r for r in iter_nodes(game) if isinstance(r.node, Then)]
    if not sites:
        return None
    site = ctx.choice(sites)
    position = index % len(site.node.seq_funcs)
    path = site.path + (("seq_funcs", position), ("child", None))
    partner = ctx.partner()
    donors = [r.node for r in iter_nodes(partner) if isinstance(r.node, Then)] if partner else []
    if donors and ctx.rng.random() < 0.5:
        donor = ctx.choice(donors).seq_funcs[index].child
        if not _fits(ctx, site.depth + 2, donor):
            return None
        return replace_at(game, path, donor)
    target = get_at(game, path)
    return regrow(game, target.node_id, ctx.pcfg, ctx.rng)


def op_resample_first_condition(game: Game, ctx: MutationContext) -> Optional[Game]:
    return _resample_condition(game, ctx, 0)


def op_resample_last_condition(game: Game, ctx: MutationContext) -> Optional[Game]:
    return _resample_condition(game, ctx, -1)


def _resample_section(game: Game, ctx: MutationContext, section: str) -> Optional[Game]:
    """Add, drop, regrow or copy in (from a partner) an optional section."""
    current = getattr(game, section)
    partner = ctx.partner()
    choices = ["sample", "partner"] if current is None else ["sample", "partner", "drop"]
    if partner is None or getattr(partner, section) is None:
        choices.remove("partner")
    action = ctx.choice(choices)
    if action == "drop":
        return dataclasses.replace(game, **{section: None})
    if action == "partner":
        return dataclasses.replace(game, **{section: getattr(partner, section)})
    names = game.preference_names()
    new = sample_subtree(ctx.pcfg, ctx.rng, section, {}, 1, pref_names=names, taken_names=names)
    if new is None:
        return None
    return dataclasses.replace(game, **{section: new})


def op_resample_setup(game: Game, ctx: MutationContext) -> Optional[Game]:
    return _resample_section(game, ctx, "setup")


def op_resample_terminal(game: Game, ctx: MutationContext) -> Optional[Game]:
    return _resample_section(game, ctx, "terminal")


OPERATOR_FUNCTIONS: Dict[str, Callable[[Game, MutationContext], Optional[Game]]] = {
    "regrow": op_regrow,
    "insert": op_insert,
    "delete": op_delete,
    "crossover": op_crossover,
    "resample_variables": op_resample_variables,
    "resample_first_condition": op_resample_first_condition,
    "resample_last_condition": op_resample_last_condition,
    "resample_setup": op_resample_setup,
    "resample_terminal": op_resample_terminal,
}


# --- driver ------------------------------------------------------------------------


def _anonymous(pref_def):
    return _rename(pref_def, "")


def has_unique_preferences(game: Game) -> bool:
    """No two preference definitions are identical apart from their names."""
    bodies = [_anonymous(p) for p in game.preferences]
    return all(a != b for i, a in enumerate(bodies) for b in bodies[i + 1:])


def acceptable(game: Game, config: MutationConfig) -> bool:
    return (config.min_preferences <= len(game.preferences) <= config.max_preferences
            and has_unique_preferences(game) and not validate(game))


def mutate(parent: Game, ctx: MutationContext) -> MutationResult:
    """Apply one weighted-random operator, resampling the operator on failure.

    Inapplicable operators and candidates that fail validation, fall outside
    the preference-count range or repeat a preference are retried up to
    `max_retries` times; after that the parent is returned flagged as a no-op.
    """
    active = ctx.config.active
    for _ in range(ctx.config.max_retries):
        operator = weighted_choice(active, ctx.rng)
        try:
            child = OPERATOR_FUNCTIONS[operator](parent, ctx)
        except GoalSynthError as e:
            logger.debug(f"{operator} failed: {e}")
            continue
        if child is None:
            continue
        child = renumber(child)
        if acceptable(child, ctx.config):
            return MutationResult(child, operator)
    return MutationResult(parent, "none", noop=True)
