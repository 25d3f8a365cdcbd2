"""Static plots of a search run and the HTML run report."""

from pathlib import Path
from typing import Any, List, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .archive import COHERENT, INCOHERENT, Archive  # noqa: E402
from .exemplars import enumerate_keys  # noqa: E402
from .logger import get_logger  # noqa: E402
from .printer import print_game  # noqa: E402
from .templates import TemplateManager, elite_rows  # noqa: E402

logger = get_logger(__name__)

PLOT_STYLE = {
    "axes.labelsize": 10,
    "font.size": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (6.4, 3.6),
}


def _column(stats: Sequence[Mapping[str, float]], name: str) -> List[float]:
    return [float(row[name]) for row in stats]


def plot_occupancy(stats: Sequence[Mapping[str, float]], output_path: Path,
                   capacity: Optional[int] = None) -> Path:
    """Occupied cells of both archive halves per generation."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    generations = _column(stats, "generation")
    with plt.rc_context(PLOT_STYLE):
        fig, ax = plt.subplots()
        ax.plot(generations, _column(stats, "coherent_cells"), label=COHERENT, color="#1a365d")
        ax.plot(generations, _column(stats, "incoherent_cells"), label=INCOHERENT,
                color="#a0aec0", linestyle="--")
        if capacity:
            ax.axhline(capacity, color="#c53030", linewidth=0.8, label="capacity")
        ax.set_xlabel("generation")
        ax.set_ylabel("occupied cells")
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(output_path, dpi=150)
        plt.close(fig)
    logger.debug(f"Wrote occupancy plot to {output_path}")
    return output_path


def plot_fitness(stats: Sequence[Mapping[str, float]], output_path: Path) -> Path:
    """Median coherent elite fitness with the interquartile band and the maximum."""
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    generations = _column(stats, "generation")
    with plt.rc_context(PLOT_STYLE):
        fig, ax = plt.subplots()
        ax.fill_between(generations, _column(stats, "fitness_q1"), _column(stats, "fitness_q3"),
                        color="#3182ce", alpha=0.25, label="q1-q3")
        ax.plot(generations, _column(stats, "fitness_median"), color="#3182ce", label="median")
        ax.plot(generations, _column(stats, "fitness_max"), color="#1a365d", linestyle=":",
                label="max")
        ax.set_xlabel("generation")
        ax.set_ylabel("elite fitness")
        ax.legend(loc="lower right")
        fig.tight_layout()
        fig.savefig(output_path, dpi=150)
        plt.close(fig)
    logger.debug(f"Wrote fitness plot to {output_path}")
    return output_path


def write_run_report(archive: Archive, stats: Sequence[Mapping[str, float]],
                     header: Mapping[str, Any], output_dir: Path,
                     exemplar_names: Sequence[str], min_preferences: int = 1,
                     max_preferences: int = 4,
                     templates: Optional[TemplateManager] = None) -> Path:
    """Plots plus `report.html` in `output_dir`; returns the report path."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    capacity = len(enumerate_keys(len(exemplar_names), min_preferences, max_preferences))
    plots = []
    if stats:
        plots.append(plot_occupancy(stats, output_dir / "occupancy.png", capacity).name)
        plots.append(plot_fitness(stats, output_dir / "fitness.png").name)
    else:
        logger.warning("No generation statistics; report has no plots")

    templates = templates or TemplateManager()
    elites = sorted(archive.outputs(), key=lambda e: -e.fitness)
    context = {
        "title": "MAP-Elites run",
        "header": header,
        "generation": archive.generation,
        "coherent": archive.occupancy(COHERENT),
        "incoherent": archive.occupancy(INCOHERENT),
        "capacity": capacity,
        "summary": archive.fitness_summary(COHERENT),
        "plots": plots,
        "elites": elite_rows(elites, print_game),
    }
    report_path = output_dir / "report.html"
    templates.render_run_report(context, report_path)
    return report_path
