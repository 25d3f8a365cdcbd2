"""Behavioral characteristics: preference bit vectors, exemplar matching and archive keys."""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import vocabulary as vocab
from .exceptions import ValidationError
from .logger import get_logger
from .parser import parse_games
from .syntax import Game, Node, Predicate, Term, VariableDef, iter_nodes

logger = get_logger(__name__)

EXEMPLAR_FILE = Path(__file__).parent / "data" / "exemplars.pddl"

PREDICATE_GROUPS: Tuple[Tuple[str, ...], ...] = (
    ("agent_holds", "in_motion"),
    ("in",),
    ("on",),
    ("adjacent", "near", "touch"),
)

CATEGORY_GROUPS: Tuple[Tuple[str, ...], ...] = (
    ("balls",),
    ("receptacles",),
    ("blocks", "building"),
    ("furniture", "room_features"),
    ("small_objects", "large_objects", "any_object"),
)

BIT_NAMES = tuple("|".join(g) for g in PREDICATE_GROUPS + CATEGORY_GROUPS)
MATCH_DISTANCE = 1


def _referenced_types(pref: Node) -> List[str]:
    types = []
    for ref in iter_nodes(pref, "pref_def"):
        node = ref.node
        if isinstance(node, VariableDef) and vocab.variable_class(node.names[0]) == vocab.OBJ:
            types.extend(node.types)
        elif isinstance(node, Term) and not node.is_variable and node.value != "agent":
            types.append(node.value)
    return types


def pref_bc_vector(pref: Node) -> np.ndarray:
    """Nine bits: which predicate groups and which object-category groups a preference uses."""
    predicates = {ref.node.name for ref in iter_nodes(pref, "pref_def")
                  if isinstance(ref.node, Predicate)}
    categories = {vocab.category_of(t) for t in _referenced_types(pref)}
    bits = [any(p in predicates for p in group) for group in PREDICATE_GROUPS]
    bits += [any(c in categories for c in group) for group in CATEGORY_GROUPS]
    return np.asarray(bits, dtype=np.int8)


@dataclass(frozen=True)
class Exemplar:
    name: str
    vector: Tuple[int, ...]
    game: Optional[Game] = None


class ExemplarSet:
    """Named exemplar bit vectors, in a fixed order."""

    def __init__(self, exemplars: Sequence[Exemplar]):
        names = [e.name for e in exemplars]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate exemplar names: {names}")
        self.exemplars = list(exemplars)
        self._matrix = np.asarray([e.vector for e in exemplars], dtype=np.int8).reshape(
            len(exemplars), len(BIT_NAMES))

    @property
    def names(self) -> List[str]:
        return [e.name for e in self.exemplars]

    def __len__(self) -> int:
        return len(self.exemplars)

    def matches(self, vector: np.ndarray) -> List[int]:
        """Indices of exemplars within L1 distance 1 of `vector`."""
        if not self.exemplars:
            return []
        distances = np.abs(self._matrix - np.asarray(vector, dtype=np.int8)).sum(axis=1)
        return [int(i) for i in np.flatnonzero(distances <= MATCH_DISTANCE)]

    def subset(self, names: Sequence[str]) -> "ExemplarSet":
        """
        Raises:
            ValidationError: If a name is not an exemplar
        """
        by_name = {e.name: e for e in self.exemplars}
        missing = [n for n in names if n not in by_name]
        if missing:
            raise ValidationError(f"unknown exemplars: {', '.join(missing)}")
        return ExemplarSet([by_name[n] for n in names])


def load_exemplars(path: Path = EXEMPLAR_FILE,
                   names: Optional[Sequence[str]] = None) -> ExemplarSet:
    """Exemplars from a file of single-preference games (the game name is the exemplar name)."""
    games = parse_games(Path(path).read_text(encoding="utf-8"))
    exemplars = [Exemplar(g.name, tuple(int(b) for b in pref_bc_vector(g.preferences[0])), g)
                 for g in games]
    logger.debug(f"Loaded {len(exemplars)} exemplars from {path}")
    exemplar_set = ExemplarSet(exemplars)
    return exemplar_set.subset(names) if names is not None else exemplar_set


@dataclass(frozen=True, order=True)
class ArchiveKey:
    """Per-exemplar match counts, unmatched count and whether the game has a setup."""
    counts: Tuple[int, ...]
    no_match: int
    setup: bool

    @property
    def total(self) -> int:
        return sum(self.counts) + self.no_match

    def to_str(self) -> str:
        return f"{int(self.setup)}:{','.join(map(str, self.counts))}:{self.no_match}"

    @classmethod
    def from_str(cls, text: str) -> "ArchiveKey":
        setup, counts, no_match = text.split(":")
        return cls(tuple(int(c) for c in counts.split(",") if c), int(no_match), setup == "1")


def assign_exemplars(game: Game, exemplars: ExemplarSet,
                     rng: np.random.Generator) -> List[Optional[int]]:
    """For each preference, the matched exemplar index (random among ties) or None."""
    out: List[Optional[int]] = []
    for pref in game.preferences:
        candidates = exemplars.matches(pref_bc_vector(pref))
        out.append(candidates[int(rng.integers(len(candidates)))] if candidates else None)
    return out


def key_from_assignment(game: Game, assignment: Sequence[Optional[int]],
                        n_exemplars: int) -> ArchiveKey:
    counts = [0] * n_exemplars
    for a in assignment:
        if a is not None:
            counts[a] += 1
    return ArchiveKey(tuple(counts), sum(a is None for a in assignment), game.setup is not None)


def behavioral_key(game: Game, exemplars: ExemplarSet, rng: np.random.Generator,
                   min_preferences: int = 1, max_preferences: int = 4) -> ArchiveKey:
    """
    Raises:
        ValidationError: If the preference count is outside [min_preferences, max_preferences]
    """
    n = len(game.preferences)
    if not min_preferences <= n <= max_preferences:
        raise ValidationError(f"{n} preferences outside [{min_preferences}, {max_preferences}]")
    return key_from_assignment(game, assign_exemplars(game, exemplars, rng), len(exemplars))


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_keys(n_exemplars: int, min_preferences: int = 1,
                   max_preferences: int = 4) -> List[ArchiveKey]:
    """Every reachable key: C(n + E, E) count vectors per preference count n, times setup."""
    keys = []
    for total in range(min_preferences, max_preferences + 1):
        for parts in _compositions(total, n_exemplars + 1):
            for setup in (False, True):
                keys.append(ArchiveKey(parts[:-1], parts[-1], setup))
    return keys


def bc_table(exemplars: ExemplarSet) -> Dict[str, Dict[str, int]]:
    """Exemplar name -> bit name -> value, for reports."""
    return {e.name: dict(zip(BIT_NAMES, e.vector)) for e in exemplars.exemplars}
