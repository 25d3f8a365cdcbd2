"""N-gram models over syntax-tree token streams, scored with stupid backoff."""

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from . import vocabulary as vocab
from .exceptions import ValidationError
from .syntax import (
    And, AtEnd, BinaryOp, Exists, ExternalMaximize, ExternalMinimize, Forall, FunctionComparison,
    FunctionEval, Game, GameConserved, GameOptional, Hold, HoldWhile, MultiOp, Negate, Node, Not,
    NumberLiteral, Once, OnceMeasure, Or, PrefForall, Preference, PreferenceEval, Predicate,
    ScoringComparison, SetupAnd, SetupExists, SetupForall, SetupNot, SetupOr, TerminalAnd,
    TerminalComparison, TerminalNot, TerminalOr, Term, Then, TotalScore, TotalTime, VariableDef,
    VariableList, iter_nodes,
)

START = "<s>"
END = "</s>"
SECTIONS = ("full", "setup", "constraints", "terminal", "scoring")

_LABELS = {
    Game: "game", VariableList: "variables",
    And: "and", SetupAnd: "and", TerminalAnd: "and",
    Or: "or", SetupOr: "or", TerminalOr: "or",
    Not: "not", SetupNot: "not", TerminalNot: "not",
    Exists: "exists", SetupExists: "exists",
    Forall: "forall", SetupForall: "forall", PrefForall: "forall",
    GameConserved: "game-conserved", GameOptional: "game-optional",
    Once: "once", OnceMeasure: "once-measure", Hold: "hold", HoldWhile: "hold-while",
    Then: "then", AtEnd: "at-end", Preference: "preference",
    Negate: "negate", TotalTime: "total-time", TotalScore: "total-score",
    ExternalMaximize: "external-forall-maximize", ExternalMinimize: "external-forall-minimize",
}

_CLASS_TOKENS = {vocab.OBJ: "VAR_OBJ", vocab.COLOR: "VAR_COLOR",
                 vocab.ORIENTATION: "VAR_ORIENTATION", vocab.SIDE: "VAR_SIDE"}


def _variable_token(name: str) -> str:
    return _CLASS_TOKENS.get(vocab.variable_class(name), "VAR")


def node_tokens(node: Node) -> List[str]:
    """Tokens a single node contributes (its children are visited separately)."""
    if isinstance(node, Term):
        return [_variable_token(node.value) if node.is_variable else node.value]
    if isinstance(node, NumberLiteral):
        return [node.value]
    if isinstance(node, VariableDef):
        tokens = [_variable_token(n) for n in node.names]
        if node.either:
            tokens.append("either")
        return tokens + list(node.types)
    if isinstance(node, (Predicate, FunctionEval)):
        return [node.name]
    if isinstance(node, (FunctionComparison, ScoringComparison, TerminalComparison, MultiOp,
                         BinaryOp)):
        return [node.op]
    if isinstance(node, Preference):
        tokens = ["preference", "PREF"]
        if node.quantifier:
            tokens.append(node.quantifier)
        return tokens
    if isinstance(node, PreferenceEval):
        return [node.mode, "PREF", *node.type_qualifiers]
    return [_LABELS.get(type(node), type(node).__name__.lower())]


def tokens_of(node: Optional[Node], category: str = "game") -> List[str]:
    """Pre-order token stream with variables replaced by their class token."""
    if node is None:
        return []
    out: List[str] = []
    for ref in iter_nodes(node, category):
        out.extend(node_tokens(ref.node))
    return out


def section_tokens(game: Game) -> Dict[str, List[str]]:
    """Token streams for the whole game and each section (empty for absent sections)."""
    constraints: List[str] = []
    for pref in game.preferences:
        constraints.extend(tokens_of(pref, "pref_def"))
    return {
        "full": tokens_of(game),
        "setup": tokens_of(game.setup, "setup"),
        "constraints": constraints,
        "terminal": tokens_of(game.terminal, "terminal"),
        "scoring": tokens_of(game.scoring, "scoring_expr"),
    }


def pad(tokens: Sequence[str], n: int) -> List[str]:
    return [START] * (n - 1) + list(tokens) + [END]


@dataclass
class NGramModel:
    """k-gram counts for k = 1..n over padded sequences."""
    n: int = 5
    discount: float = 0.4
    counts: Counter = field(default_factory=Counter)
    total: int = 0

    def count(self, gram: Tuple[str, ...]) -> int:
        if not gram:
            return self.total
        return self.counts.get(gram, 0)

    def backoff(self, context: Tuple[str, ...], token: str) -> float:
        """Stupid-backoff score of `token` after `context` (unnormalized)."""
        gram = context + (token,)
        if context:
            c = self.count(gram)
            if c > 0:
                return c / self.count(context)
            return self.discount * self.backoff(context[1:], token)
        c = self.count(gram)
        if c > 0:
            return c / self.total
        return 1.0 / (2 * self.total)

    def score(self, tokens: Sequence[str]) -> float:
        """Mean log stupid-backoff score over the tokens and the end symbol."""
        if not tokens:
            raise ValidationError("cannot score an empty token sequence")
        padded = pad(tokens, self.n)
        logs = []
        for i in range(self.n - 1, len(padded)):
            context = tuple(padded[i - self.n + 1:i])
            logs.append(math.log(self.backoff(context, padded[i])))
        return sum(logs) / len(logs)

    def to_dict(self) -> dict:
        return {"n": self.n, "discount": self.discount, "total": self.total,
                "counts": [[list(g), c] for g, c in sorted(self.counts.items())]}

    @classmethod
    def from_dict(cls, data: dict) -> "NGramModel":
        counts = Counter({tuple(g): c for g, c in data["counts"]})
        return cls(data["n"], data["discount"], counts, data["total"])


def train_ngram(sequences: Iterable[Sequence[str]], n: int = 5,
                discount: float = 0.4) -> NGramModel:
    """Count every k-gram (k = 1..n) of each padded non-empty sequence."""
    model = NGramModel(n=n, discount=discount)
    for tokens in sequences:
        if not tokens:
            continue
        padded = pad(tokens, n)
        model.total += len(padded)
        for k in range(1, n + 1):
            for i in range(len(padded) - k + 1):
                model.counts[tuple(padded[i:i + k])] += 1
    if model.total == 0:
        raise ValidationError("n-gram model needs at least one non-empty sequence")
    return model


def ngram_score(model: NGramModel, tokens: Sequence[str]) -> float:
    return model.score(tokens)


def train_section_models(corpus: Sequence[Game], n: int = 5,
                         discount: float = 0.4) -> Dict[str, NGramModel]:
    """One model per section; sections no corpus game has are skipped."""
    streams: Dict[str, List[List[str]]] = {s: [] for s in SECTIONS}
    for game in corpus:
        for section, tokens in section_tokens(game).items():
            if tokens:
                streams[section].append(tokens)
    return {s: train_ngram(seqs, n, discount) for s, seqs in streams.items() if seqs}
