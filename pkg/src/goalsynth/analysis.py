"""Corpus analyses: abstract structures, role fillers, edit distance, overlap and ablations."""

import copy
import csv
import dataclasses
import itertools
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from . import vocabulary as vocab
from .archive import COHERENT, Archive
from .config import Config
from .exceptions import ConfigurationError, ValidationError
from .fitness import Negative, score
from .interpreter import InterpConfig, activating_components, activation_jaccard
from .logger import get_logger
from .pipeline import Trained, pcfg_only_pipeline, search_pipeline, train_pipeline
from .printer import print_game, to_text
from .syntax import (
    AtEnd, Game, Hold, HoldWhile, Node, Not, Once, OnceMeasure, Predicate, Term, VariableDef,
    iter_nodes, predicates_in, scope_at,
)
from .trace import Trace

logger = get_logger(__name__)

PLACEHOLDER = "<obj>"
TYPE_PLACEHOLDER = "<type>"
MODAL_CLASSES = (Once, OnceMeasure, Hold, HoldWhile, AtEnd)

THROWING = "throwing"
STACKING = "stacking"
PLACEMENT = "placement"
THROWING_ONLY = "throwing_only"
OTHER = "other"

PLACEMENT_TARGETS = {"receptacles", "furniture", "room_features"}

CONFIG_ABLATIONS = ("no_common_sense", "no_coherence_features", "no_crossover", "no_custom_ops",
                    "no_custom_ops_no_crossover")
ABLATIONS = CONFIG_ABLATIONS + ("pcfg_only", "held_out")


# --- abstract structures -----------------------------------------------------------


def coarsen_node(node: Node) -> Node:
    """Copy of `node` with every variable and declared type replaced by a placeholder."""
    if isinstance(node, Term):
        return Term(PLACEHOLDER) if node.is_variable else node
    if isinstance(node, VariableDef):
        return VariableDef(tuple(PLACEHOLDER for _ in node.names), (TYPE_PLACEHOLDER,))
    updates = {}
    for slot in node.SLOTS:
        value = getattr(node, slot.name)
        if value is None:
            continue
        updates[slot.name] = (tuple(coarsen_node(v) for v in value) if slot.many
                              else coarsen_node(value))
    return dataclasses.replace(node, **updates)


def abstract_structure(node: Node) -> str:
    return to_text(coarsen_node(node))


@dataclass
class StructureCounts:
    counts: Counter = field(default_factory=Counter)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def unique(self) -> int:
        return len(self.counts)

    @property
    def singletons(self) -> int:
        return sum(1 for c in self.counts.values() if c == 1)

    @property
    def singleton_share(self) -> float:
        return self.singletons / self.unique if self.unique else float("nan")

    def head_share(self, k: int = 5) -> float:
        """Share of all modal expressions covered by the `k` most common structures."""
        if not self.total:
            return float("nan")
        return sum(c for _, c in self.counts.most_common(k)) / self.total

    def rows(self) -> List[Dict[str, object]]:
        return [{"structure": s, "count": c} for s, c in self.counts.most_common()]


def abstract_structures(corpus: Iterable[Game]) -> StructureCounts:
    """Count the coarsened modal expressions (once, hold, hold-while, at-end) of a corpus."""
    result = StructureCounts()
    for game in corpus:
        for pref in game.preferences:
            for ref in iter_nodes(pref, "pref_def"):
                if isinstance(ref.node, MODAL_CLASSES):
                    result.counts[abstract_structure(ref.node)] += 1
    return result


# --- role fillers and motifs -------------------------------------------------------


def _argument_categories(term: Term, scope: Mapping[str, Sequence[str]]) -> FrozenSet[str]:
    if term.is_variable:
        return frozenset(vocab.category_of(t) for t in scope.get(term.value, ()))
    return frozenset({vocab.category_of(term.value)})


def _preference_predicates(game: Game) -> Iterable[Tuple[Predicate, List[FrozenSet[str]]]]:
    """Every predicate in the preferences with the categories of each argument."""
    for ref in iter_nodes(game):
        if isinstance(ref.node, Predicate) and ref.path and ref.path[0][0] == "preferences":
            scope = scope_at(game, ref.path)
            yield ref.node, [_argument_categories(a, scope) for a in ref.node.args]


def _is_throw(hold_child: Node) -> bool:
    positive = {p.name for p in predicates_in(hold_child)}
    negated = {p.name for ref in iter_nodes(hold_child) if isinstance(ref.node, Not)
               for p in predicates_in(ref.node.child)}
    return "in_motion" in positive and "agent_holds" in negated


def classify_motifs(game: Game) -> FrozenSet[str]:
    """Throwing (a hold over in-motion and not-held), stacking (`on` between blocks) and
    placement (`in` / `on` with a receptacle or furniture)."""
    motifs = set()
    for ref in iter_nodes(game):
        if isinstance(ref.node, (Hold, HoldWhile)) and _is_throw(ref.node.child):
            motifs.add(THROWING)
    for pred, categories in _preference_predicates(game):
        if pred.name == "on" and len(categories) == 2 and all("blocks" in c for c in categories):
            motifs.add(STACKING)
        if pred.name in ("in", "on") and any(c & PLACEMENT_TARGETS for c in categories):
            motifs.add(PLACEMENT)
    return frozenset(motifs)


def motif_split(game: Game) -> str:
    return THROWING_ONLY if classify_motifs(game) == {THROWING} else OTHER


def role_filler_stats(corpus: Iterable[Game]) -> Counter:
    """(split, predicate, object category) -> number of games using that combination."""
    table: Counter = Counter()
    for game in corpus:
        split = motif_split(game)
        seen = {(pred.name, c) for pred, categories in _preference_predicates(game)
                for cats in categories for c in cats}
        for name, category in seen:
            table[(split, name, category)] += 1
    return table


# --- edit distance -----------------------------------------------------------------

_PREAMBLE_RE = re.compile(r"^\s*\(define\s+\(game\s+[^()]*\)\s*(\(:domain\s+[^()]*\))?")
_WHITESPACE_RE = re.compile(r"\s+")


def preprocess(text: Union[str, Game]) -> str:
    """Drop the game name and domain (and the closing paren) and collapse whitespace."""
    if isinstance(text, Game):
        text = print_game(text)
    stripped = _PREAMBLE_RE.sub("", text, count=1)
    if stripped != text:
        stripped = stripped.rstrip()
        if stripped.endswith(")"):
            stripped = stripped[:-1]
    return _WHITESPACE_RE.sub(" ", stripped).strip()


def levenshtein(a: str, b: str) -> int:
    """Wagner-Fischer distance computed one numpy row at a time."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    target = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    offsets = np.arange(len(b) + 1)
    previous = offsets.copy()
    for i, ch in enumerate(a, 1):
        cost = (target != ord(ch)).astype(np.int64)
        current = np.empty_like(previous)
        current[0] = i
        np.minimum(previous[1:] + 1, previous[:-1] + cost, out=current[1:])
        # insertions chain left to right within the row
        previous = np.minimum.accumulate(current - offsets) + offsets
    return int(previous[-1])


def edit_distance(a: Union[str, Game], b: Union[str, Game]) -> int:
    return levenshtein(preprocess(a), preprocess(b))


def nearest_real(sample: Union[str, Game], corpus: Sequence[Game]) -> Tuple[Game, int]:
    """The corpus game closest in edit distance (first in corpus order on ties).

    Raises:
        ValidationError: If the corpus is empty
    """
    if not corpus:
        raise ValidationError("nearest_real needs a non-empty corpus")
    text = preprocess(sample)
    best, best_distance = corpus[0], None
    for game in corpus:
        d = levenshtein(text, preprocess(game))
        if best_distance is None or d < best_distance:
            best, best_distance = game, d
    return best, best_distance


def regrowth_distance_correlation(corpus: Sequence[Game],
                                  negatives: Sequence[Sequence[Negative]]) -> float:
    """Spearman correlation between the regrown subtree's height and the edit distance."""
    heights, distances = [], []
    for group in negatives:
        for negative in group:
            heights.append(negative.height)
            distances.append(edit_distance(corpus[negative.source], negative.game))
    if len(set(heights)) < 2 or len(set(distances)) < 2:
        return float("nan")
    return float(stats.spearmanr(heights, distances).correlation)


# --- trace overlap -----------------------------------------------------------------


def component_satisfaction_rate(games: Sequence[Game], traces: Sequence[Trace],
                                config: Optional[InterpConfig] = None) -> float:
    """Share of game components (setup and preferences) satisfied by at least one trace."""
    satisfied = total = 0
    for game in games:
        components = activating_components(game, traces, config)
        satisfied += sum(1 for ids in components.values() if ids)
        total += len(components)
    return satisfied / total if total else float("nan")


def mean_activation_jaccard(games: Sequence[Game], traces: Sequence[Trace],
                            config: Optional[InterpConfig] = None) -> float:
    """Mean pairwise Jaccard overlap of the traces that activate each game."""
    components = [activating_components(g, traces, config) for g in games]
    values = [activation_jaccard(a, b) for a, b in itertools.combinations(components, 2)]
    return float(np.mean(values)) if values else float("nan")


# --- ablations ---------------------------------------------------------------------


@dataclass
class AblationReport:
    profile: str
    test: str
    metrics: Dict[str, float] = field(default_factory=dict)

    def rows(self) -> List[Dict[str, object]]:
        return [{"profile": self.profile, "metric": k, "value": v}
                for k, v in self.metrics.items()]


def paired_cells(full: Archive, ablated: Archive) -> List[Tuple[object, object]]:
    """Coherent elites of both archives that share a cell, in key order."""
    a, b = full.halves[COHERENT], ablated.halves[COHERENT]
    return [(a[k], b[k]) for k in sorted(set(a) & set(b))]


def _paired_test(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    if len(x) < 2 or np.allclose(np.subtract(x, y), 0.0):
        return float("nan"), float("nan")
    result = stats.ttest_rel(x, y)
    return float(result.statistic), float(result.pvalue)


def _rescore(games: Sequence[Game], reference: Trained) -> List[float]:
    return [score(reference.model, g, reference.ctx) for g in games]


def compare_archives(profile: str, full: Trained, full_archive: Archive, ablated_archive: Archive,
                     traces: Sequence[Trace], interp: InterpConfig) -> AblationReport:
    """Full-model fitness of both archives' outputs, paired over shared cells."""
    full_outputs = [e.game for e in full_archive.outputs()]
    ablated_outputs = [e.game for e in ablated_archive.outputs()]
    pairs = paired_cells(full_archive, ablated_archive)
    x = _rescore([p[0].game for p in pairs], full)
    y = _rescore([p[1].game for p in pairs], full)
    statistic, p_value = _paired_test(x, y)
    ablated_scores = _rescore(ablated_outputs, full)
    metrics = {
        "full_occupancy": full_archive.occupancy(COHERENT),
        "ablated_occupancy": ablated_archive.occupancy(COHERENT),
        "full_mean_fitness": float(np.mean(_rescore(full_outputs, full))) if full_outputs
        else float("nan"),
        "ablated_mean_fitness": float(np.mean(ablated_scores)) if ablated_scores
        else float("nan"),
        "paired_cells": len(pairs),
        "statistic": statistic,
        "p_value": p_value,
    }
    if traces:
        metrics["full_satisfaction"] = component_satisfaction_rate(full_outputs, traces, interp)
        metrics["ablated_satisfaction"] = component_satisfaction_rate(ablated_outputs, traces,
                                                                      interp)
    return AblationReport(profile, "paired_t", metrics)


def held_out_report(corpus: Sequence[Game], traces: Sequence[Trace], config: Config,
                    fraction: float = 0.2) -> AblationReport:
    """Train on a random split and compare held-out and training positives' fitness."""
    if len(corpus) < 4:
        raise ValidationError("held-out evaluation needs at least four games")
    order = config.rng("held_out").permutation(len(corpus))
    n_held = max(1, int(round(fraction * len(corpus))))
    held = [corpus[i] for i in order[:n_held]]
    kept = [corpus[i] for i in order[n_held:]]
    trained = train_pipeline(kept, traces, config)
    train_scores = _rescore(kept, trained)
    held_scores = _rescore(held, trained)
    result = stats.ttest_ind(held_scores, train_scores, equal_var=False)
    return AblationReport("held_out", "welch_t", {
        "train_positives": len(kept),
        "held_out_positives": len(held),
        "train_mean_fitness": float(np.mean(train_scores)),
        "held_out_mean_fitness": float(np.mean(held_scores)),
        "statistic": float(result.statistic),
        "p_value": float(result.pvalue),
    })


def run_ablation(profile: str, corpus: Sequence[Game], traces: Sequence[Trace], config: Config,
                 baseline: Optional[Trained] = None,
                 baseline_archive: Optional[Archive] = None) -> AblationReport:
    """Rerun the pipeline under `profile` and compare it against the full configuration.

    Args:
        profile: One of ABLATIONS
        baseline: Trained full model (trained here when None)
        baseline_archive: Full-model archive (searched here when None)

    Raises:
        ConfigurationError: If the profile is unknown
    """
    if profile not in ABLATIONS:
        raise ConfigurationError(f"Unknown ablation '{profile}'. Available: {', '.join(ABLATIONS)}")
    if profile == "held_out":
        return held_out_report(corpus, traces, config)

    interp = InterpConfig.from_config(config)
    baseline = baseline or train_pipeline(corpus, traces, config)
    if baseline_archive is None:
        baseline_archive, _ = search_pipeline(baseline, config)
    logger.info(f"Running ablation {profile}")

    if profile == "pcfg_only":
        ablated_archive = pcfg_only_pipeline(baseline, config)
    else:
        ablated_config = copy.deepcopy(config)
        ablated_config.apply_profile(profile)
        if ablated_config["features.exclude_groups"] != config["features.exclude_groups"]:
            ablated = train_pipeline(corpus, traces, ablated_config)
        else:
            ablated = baseline
        ablated_archive, _ = search_pipeline(ablated, ablated_config)
    report = compare_archives(profile, baseline, baseline_archive, ablated_archive, traces, interp)
    logger.info(f"Ablation {profile}: " + ", ".join(
        f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in report.metrics.items()))
    return report


# --- tables ------------------------------------------------------------------------


def write_table(path: Path, rows: Sequence[Mapping[str, object]],
                columns: Optional[Sequence[str]] = None):
    """Tab-separated table with a header row; floats written with repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(columns or (rows[0].keys() if rows else []))
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, delimiter="\t", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) and not math.isnan(v) else v)
                             for k, v in row.items()})
    logger.info(f"Wrote {len(rows)} rows to {path}")


def role_filler_rows(table: Counter) -> List[Dict[str, object]]:
    return [{"split": s, "predicate": p, "category": c, "count": n}
            for (s, p, c), n in sorted(table.items(), key=lambda kv: (kv[0][0], -kv[1], kv[0]))]
