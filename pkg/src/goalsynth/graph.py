"""Graphviz rendering of game syntax trees and archive occupancy."""

from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

from graphviz import Digraph

from .archive import COHERENT, Archive
from .exceptions import GraphRenderError
from .logger import get_logger
from .printer import to_text
from .syntax import (
    BinaryOp, FunctionComparison, FunctionEval, Game, MultiOp, Node, NumberLiteral, Predicate,
    Preference, PreferenceEval, ScoringComparison, TerminalComparison, Term, VariableDef,
    iter_nodes,
)

logger = get_logger(__name__)

# Border colors by grammar category
CATEGORY_COLORS = {
    "default": "#4A4A4A",
    "game": "#8B572A",
    "setup": "#F5A623",
    "pref_def": "#9013FE",
    "preference": "#9013FE",
    "preference_body": "#9013FE",
    "seq_func": "#4A90E2",
    "super_predicate": "#417505",
    "predicate": "#7ED321",
    "function_eval": "#50E3C2",
    "comparison_arg": "#50E3C2",
    "terminal": "#D0021B",
    "scoring_expr": "#BD10E0",
}

CATEGORY_SHAPES = {
    "default": "box",
    "game": "box",
    "term": "plaintext",
    "number": "plaintext",
    "variable_def": "note",
}

# Fill colors for occupancy cells, low to high fitness
FITNESS_PALETTE = ("#fde0dd", "#fa9fb5", "#f768a1", "#c51b8a", "#7a0177")


def style_for(category: str) -> Tuple[str, str]:
    return (CATEGORY_SHAPES.get(category, CATEGORY_SHAPES["default"]),
            CATEGORY_COLORS.get(category, CATEGORY_COLORS["default"]))


def node_label(node: Node) -> str:
    if isinstance(node, (Term, NumberLiteral, PreferenceEval, VariableDef)):
        return to_text(node)
    if isinstance(node, (Predicate, FunctionEval)):
        return node.name
    if isinstance(node, (FunctionComparison, MultiOp, BinaryOp, ScoringComparison,
                         TerminalComparison)):
        return node.op
    if isinstance(node, Preference):
        return f"preference {node.name}"
    if isinstance(node, Game):
        return f"game {node.name}"
    return type(node).__name__


def tree_graph(game: Game, direction: str = "TB", graph_format: str = "svg") -> Digraph:
    """One graph node per syntax node, styled by grammar category."""
    g = Digraph(comment=game.name, format=graph_format,
                graph_attr={"rankdir": direction, "labelloc": "t", "label": game.name,
                            "fontname": "Helvetica"},
                node_attr={"fontname": "Helvetica", "fontsize": "11"})
    ids: Dict[Tuple, str] = {}
    for i, ref in enumerate(iter_nodes(game)):
        node_id = f"n{i}"
        ids[ref.path] = node_id
        shape, color = style_for(ref.category)
        g.node(node_id, label=node_label(ref.node), shape=shape, style="rounded", color=color)
        if ref.path:
            g.edge(ids[ref.path[:-1]], node_id)
    return g


def _render(g: Digraph, output_path: Path) -> Path:
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    stem = output_path.with_suffix("")
    try:
        rendered = g.render(str(stem), cleanup=True)
    except Exception as e:
        raise GraphRenderError(f"Failed to render graph to {output_path}: {e}")
    logger.debug(f"Rendered graph to {rendered}")
    return Path(rendered)


def render_tree(game: Game, output_path: Path, graph_format: str = "svg",
                direction: str = "TB") -> Path:
    """
    Raises:
        GraphRenderError: If Graphviz fails (for example the dot binary is missing)
    """
    return _render(tree_graph(game, direction, graph_format), output_path)


def _fill(fitness: float, cuts: Sequence[float]) -> str:
    index = sum(1 for c in cuts if fitness > c)
    return FITNESS_PALETTE[min(index, len(FITNESS_PALETTE) - 1)]


def occupancy_graph(archive: Archive, exemplar_names: Sequence[str],
                    graph_format: str = "svg") -> Digraph:
    """Coherent cells clustered by preference count, shaded by fitness quintile."""
    elites = archive.elites(COHERENT)
    g = Digraph(comment="archive", format=graph_format,
                graph_attr={"rankdir": "LR", "fontname": "Helvetica",
                            "label": f"coherent occupancy ({len(elites)} cells)"},
                node_attr={"fontname": "Helvetica", "fontsize": "9", "shape": "box",
                           "style": "rounded,filled"})
    fitness = sorted(e.fitness for e in elites)
    cuts = [fitness[int(len(fitness) * q)] for q in (0.2, 0.4, 0.6, 0.8)] if fitness else []
    by_total: Dict[int, list] = {}
    for e in elites:
        by_total.setdefault(e.key.total, []).append(e)
    for total, members in sorted(by_total.items()):
        with g.subgraph(name=f"cluster_{total}") as sub:
            sub.attr(label=f"{total} preference{'s' if total != 1 else ''}")
            for e in members:
                cell_id = "cell_" + e.key.to_str().replace(":", "_").replace(",", "_")
                matched = [f"{n} x{c}" for n, c in zip(exemplar_names, e.key.counts) if c]
                if e.key.no_match:
                    matched.append(f"none x{e.key.no_match}")
                label = "\\n".join(matched + [f"setup={int(e.key.setup)}", f"{e.fitness:.3f}"])
                sub.node(cell_id, label=label, fillcolor=_fill(e.fitness, cuts))
    return g


def render_occupancy(archive: Archive, exemplar_names: Sequence[str], output_path: Path,
                     graph_format: Optional[str] = None) -> Path:
    graph_format = graph_format or Path(output_path).suffix.lstrip(".") or "svg"
    return _render(occupancy_graph(archive, exemplar_names, graph_format), output_path)
