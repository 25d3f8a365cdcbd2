#!/usr/bin/env python3
"""Command-line interface for goal-program synthesis."""

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .analysis import (
    ABLATIONS, abstract_structures, edit_distance, mean_activation_jaccard, nearest_real,
    regrowth_distance_correlation, role_filler_rows, role_filler_stats, run_ablation,
    write_table,
)
from .archive import Archive
from .config import Config
from .describe import describe
from .exceptions import ConfigurationError, GoalSynthError, GraphRenderError, ValidationError
from .features import FeatureRegistry, fit_normalizers, raw_features, write_features
from .fitness import (
    TrainConfig, auc, build_dataset, crossvalidate, gen_negatives, save_dataset, score,
)
from .graph import render_occupancy, render_tree
from .interpreter import InterpConfig, replay_report, score_game
from .logger import get_logger, setup_logging
from .parser import load_games
from .pcfg import sample_game, with_name
from .pipeline import (
    Trained, artifact_header, feature_context, fit_grammar, load_corpus, load_trace_set,
    load_trained, predicate_db, search_pipeline, search_settings, train_pipeline,
)
from .printer import format_game
from .report import write_run_report
from .search import read_stats
from .syntax import Game
from .templates import TemplateManager
from .trace import load_traces

logger = get_logger(__name__)

COMMANDS = ("sample", "corrupt", "features", "train", "cv", "search", "score", "replay",
            "describe", "analyze", "ablate")


def _common_options() -> argparse.ArgumentParser:
    """Flags accepted before or after the subcommand."""
    common = argparse.ArgumentParser(add_help=False)

    # Configuration
    common.add_argument(
        "--config",
        type=Path,
        default=argparse.SUPPRESS,
        help="Path to configuration file (.yml)"
    )
    common.add_argument(
        "--profile",
        action="append",
        dest="profiles",
        default=argparse.SUPPRESS,
        help="Apply a named configuration profile (can be used multiple times)"
    )
    common.add_argument(
        "--seed",
        type=int,
        default=argparse.SUPPRESS,
        help="Root seed for every random stream (default: 0)"
    )
    common.add_argument(
        "--workers",
        type=int,
        default=argparse.SUPPRESS,
        help="Processes for candidate evaluation; 0 means every available core (default: 1)"
    )

    # Paths
    common.add_argument("--corpus", type=Path, default=argparse.SUPPRESS,
                        help="Game file or directory of real games")
    common.add_argument("--traces", type=Path, default=argparse.SUPPRESS,
                        help="Trace file or directory of *.trace files")
    common.add_argument("--model", type=Path, default=argparse.SUPPRESS,
                        help="Fitness model file (default: model.yml)")
    common.add_argument("--archive", type=Path, default=argparse.SUPPRESS,
                        help="Archive checkpoint file (default: archive.yml)")
    common.add_argument("--outdir", type=Path, default=argparse.SUPPRESS,
                        help="Output directory (default: output)")
    common.add_argument("--template-dir", type=Path, default=argparse.SUPPRESS,
                        help="Custom template directory")

    # Logging
    common.add_argument(
        "--verbose", "-v",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Verbose output (debug logging)"
    )
    common.add_argument(
        "--quiet", "-q",
        action="store_true",
        default=argparse.SUPPRESS,
        help="Minimal output (warnings and errors only)"
    )
    common.add_argument("--log-file", type=Path, default=argparse.SUPPRESS,
                        help="Also append log records to this file")
    return common


def create_parser() -> argparse.ArgumentParser:
    """Create argument parser.

    Returns:
        Configured ArgumentParser
    """
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="goal-synth",
        description="Parse, interpret, score and synthesize goal programs for a 3D play room",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        parents=[common],
        epilog="""
Examples:
  # Draw ten games from the grammar fitted on a corpus
  goal-synth sample --corpus example/games --n 10 --seed 7

  # Train a fitness model with the desk-scale profile
  goal-synth train --corpus example/games --traces example/traces --profile desk

  # Run MAP-Elites, then continue the same run from its checkpoint
  goal-synth search --corpus example/games --profile desk --generations 100
  goal-synth search --corpus example/games --profile desk --resume --generations 100

  # Score and describe games
  goal-synth score --model output/model.yml --game my_game.pddl
  goal-synth describe --game my_game.pddl

  # Replay a game over recorded traces
  goal-synth replay --game my_game.pddl --traces example/traces

Environment Variables:
  GOALSYNTH_CORPUS_DIR    Game corpus path
  GOALSYNTH_TRACE_DIR     Trace directory
  GOALSYNTH_MODEL_FILE    Fitness model file
  GOALSYNTH_ARCHIVE_FILE  Archive checkpoint file
  GOALSYNTH_OUTPUT_DIR    Output directory
        """
    )

    parser.add_argument(
        "--version",
        action="version",
        version=f"%(prog)s {__version__}"
    )

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("sample", parents=[common], help="Sample games from the fitted grammar")
    p.add_argument("--n", type=int, default=10, help="Number of games (default: 10)")
    p.add_argument("--out", type=Path, help="Output game file (default: OUTDIR/samples.pddl)")

    p = sub.add_parser("corrupt", parents=[common],
                       help="Tree-regrowth corruptions of every corpus game")
    p.add_argument("--n", type=int, default=1, help="Corruptions per game (default: 1)")
    p.add_argument("--out", type=Path,
                   help="Output game file (default: OUTDIR/corruptions.pddl)")

    p = sub.add_parser("features", parents=[common], help="Write normalized feature rows")
    p.add_argument("--game", type=Path,
                   help="Games to featurize (default: the corpus itself)")
    p.add_argument("--out", type=Path, help="Output table (default: OUTDIR/features.tsv)")

    p = sub.add_parser("train", parents=[common], help="Train the fitness model")
    p.add_argument("--save-dataset", action="store_true",
                   help="Also write the feature dataset to OUTDIR/dataset.tsv")

    sub.add_parser("cv", parents=[common],
                   help="Cross-validate the training hyperparameter grid")

    p = sub.add_parser("search", parents=[common], help="Run MAP-Elites")
    p.add_argument("--generations", type=int, help="Generations to run (default: from config)")
    p.add_argument("--resume", action="store_true",
                   help="Continue from the archive checkpoint")
    p.add_argument("--graph", action="store_true",
                   help="Also render the coherent occupancy graph with Graphviz")

    p = sub.add_parser("score", parents=[common], help="Print the fitness of games")
    p.add_argument("--game", type=Path, required=True, help="Game file or directory")

    p = sub.add_parser("replay", parents=[common], help="Run games over play traces")
    p.add_argument("--game", type=Path, required=True, help="Game file or directory")
    p.add_argument("--out", type=Path, help="Write the YAML report here instead of stdout")

    p = sub.add_parser("describe", parents=[common], help="Templated English for games")
    p.add_argument("--game", type=Path, required=True, help="Game file or directory")
    p.add_argument("--graph", action="store_true",
                   help="Also render each syntax tree to OUTDIR/trees")
    p.add_argument("--format", choices=["svg", "png", "pdf"], default="svg",
                   dest="graph_format", help="Tree graph format (default: svg)")

    p = sub.add_parser("analyze", parents=[common], help="Corpus analyses")
    p.add_argument("--samples", type=Path,
                   help="Generated games to match against their nearest corpus game")
    p.add_argument("--regrowth", type=int, default=0, metavar="N",
                   help="Corruptions per game for the regrowth distance correlation")

    p = sub.add_parser("ablate", parents=[common], help="Ablation comparisons")
    p.add_argument("--ablation", action="append", dest="ablations", choices=ABLATIONS,
                   help="Ablation to run (can be used multiple times; default: all)")

    return parser


def _option(args: argparse.Namespace, name: str, default: Any = None) -> Any:
    return getattr(args, name, default)


def build_config(args: argparse.Namespace) -> Config:
    workers = _option(args, "workers")
    if workers == 0:
        workers = os.cpu_count() or 1
    cli_args = {
        "seed": _option(args, "seed"),
        "workers": workers,
        "paths.corpus_dir": _option(args, "corpus"),
        "paths.trace_dir": _option(args, "traces"),
        "paths.model_file": _option(args, "model"),
        "paths.archive_file": _option(args, "archive"),
        "paths.output_dir": _option(args, "outdir"),
    }
    cli_args = {k: (str(v) if isinstance(v, Path) else v) for k, v in cli_args.items()}
    return Config(config_file=_option(args, "config"), cli_args=cli_args,
                  profiles=_option(args, "profiles"))


# --- artifacts ---------------------------------------------------------------------


def _registry_version(config: Config) -> str:
    return FeatureRegistry.default(config["features.n"],
                                   config["features.exclude_groups"]).version


def _output_dir(config: Config) -> Path:
    path = config.path("output_dir") or Path("output")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _stamp(header: Mapping[str, Any]) -> str:
    fields = " ".join(f"{k}={v}" for k, v in header.items() if k != "profiles")
    profiles = ",".join(header.get("profiles", [])) or "-"
    return f"; goal-synth {__version__} {fields} profiles={profiles}\n"


def write_games(path: Path, games: Sequence[Game], header: Mapping[str, Any]):
    """Readable game file whose first line records tool version, seed and config hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(_stamp(header))
        for game in games:
            fh.write("\n" + format_game(game) + "\n")
    logger.info(f"Wrote {len(games)} games to {path}")


def record_artifact(output_dir: Path, artifact: Path, header: Mapping[str, Any]):
    """Merge `artifact`'s header into OUTDIR/manifest.yml."""
    manifest_path = Path(output_dir) / "manifest.yml"
    manifest: Dict[str, Any] = {}
    if manifest_path.exists():
        manifest = yaml.safe_load(manifest_path.read_text(encoding="utf-8")) or {}
    manifest[Path(artifact).name] = dict(header, tool_version=__version__)
    manifest_path.write_text(yaml.safe_dump(manifest, sort_keys=True), encoding="utf-8")


def _games(path: Path) -> List[Game]:
    games = [g for _, g in load_games(Path(path))]
    if not games:
        raise ValidationError(f"no games found under {path}")
    return games


def _model_path(config: Config) -> Path:
    return config.path("model_file") or Path("model.yml")


def _trained(config: Config, corpus: Sequence[Game], traces) -> Trained:
    """The saved model when one exists, otherwise a freshly trained one."""
    model_path = _model_path(config)
    if model_path.exists():
        logger.info(f"Using fitness model {model_path}")
        return load_trained(model_path, corpus, traces, config)
    logger.info(f"No model at {model_path}; training one")
    trained = train_pipeline(corpus, traces, config)
    trained.model.save(model_path, artifact_header(config, trained.model.registry_version))
    return trained


# --- commands ----------------------------------------------------------------------


def cmd_sample(args: argparse.Namespace, config: Config) -> int:
    if args.n < 1:
        raise ValidationError("--n must be >= 1")
    corpus = load_corpus(config.path("corpus_dir"))
    pcfg = fit_grammar(corpus, config)
    rng = config.rng("sample")
    games = [with_name(sample_game(pcfg, rng), f"sample-{i}") for i in range(args.n)]
    out = args.out or _output_dir(config) / "samples.pddl"
    header = artifact_header(config, _registry_version(config), corpus_size=len(corpus))
    write_games(out, games, header)
    return 0


def cmd_corrupt(args: argparse.Namespace, config: Config) -> int:
    if args.n < 1:
        raise ValidationError("--n must be >= 1")
    corpus = load_corpus(config.path("corpus_dir"))
    pcfg = fit_grammar(corpus, config)
    groups = gen_negatives(corpus, pcfg, args.n, config.rng("negatives"))
    output_dir = _output_dir(config)
    out = args.out or output_dir / "corruptions.pddl"
    header = artifact_header(config, _registry_version(config), corpus_size=len(corpus))
    write_games(out, [n.game for group in groups for n in group], header)
    table = output_dir / "corruptions.tsv"
    write_table(table, [{"game": n.game.name, "source": corpus[n.source].name,
                         "node_id": n.node_id, "height": n.height,
                         "edit_distance": edit_distance(corpus[n.source], n.game)}
                        for group in groups for n in group])
    record_artifact(output_dir, table, header)
    return 0


def cmd_features(args: argparse.Namespace, config: Config) -> int:
    corpus = load_corpus(config.path("corpus_dir"))
    traces = load_trace_set(config.path("trace_dir"))
    ctx = feature_context(corpus, predicate_db(traces, config), config)
    corpus_rows = [raw_features(g, ctx) for g in corpus]
    normalizer = fit_normalizers(corpus_rows, ctx.registry)
    games = _games(args.game) if args.game else corpus
    rows = corpus_rows if games is corpus else [raw_features(g, ctx) for g in games]
    matrix = [normalizer.transform(r, ctx.registry) for r in rows]
    output_dir = _output_dir(config)
    out = args.out or output_dir / "features.tsv"
    write_features(out, ctx.registry.names, matrix, [g.name for g in games])
    record_artifact(output_dir, out, artifact_header(config, ctx.registry.version))
    logger.info(f"Wrote {len(games)} x {len(ctx.registry)} features to {out}")
    return 0


def cmd_train(args: argparse.Namespace, config: Config) -> int:
    corpus = load_corpus(config.path("corpus_dir"))
    traces = load_trace_set(config.path("trace_dir"))
    trained = train_pipeline(corpus, traces, config)
    header = artifact_header(config, trained.model.registry_version)
    model_path = _model_path(config)
    trained.model.save(model_path, header)

    dataset = trained.dataset
    positives = [score(trained.model, row) for row in dataset.positives]
    negatives = [score(trained.model, row) for block in dataset.negatives for row in block]
    logger.info(f"Training AUC {auc(positives, negatives):.4f}; "
                f"{np.mean(np.asarray(positives) > np.median(negatives)):.1%} of positives "
                f"above the median negative")
    if args.save_dataset:
        dataset_path = _output_dir(config) / "dataset.tsv"
        save_dataset(dataset, dataset_path, trained.model.registry_version, header)
    return 0


def cmd_cv(args: argparse.Namespace, config: Config) -> int:
    corpus = load_corpus(config.path("corpus_dir"))
    traces = load_trace_set(config.path("trace_dir"))
    base = TrainConfig.from_config(config)
    base.validate()
    cv = config.section("cv")
    m = max(max(cv["grid"].get("k", [base.k])), base.m)
    pcfg = fit_grammar(corpus, config)
    negatives = gen_negatives(corpus, pcfg, m, config.rng("negatives"))
    ctx = feature_context(corpus, predicate_db(traces, config), config)
    dataset, _ = build_dataset(corpus, negatives, ctx)
    best, results = crossvalidate(dataset, TrainConfig(**dict(base.to_dict(), m=m)), cv["grid"],
                                  cv["folds"])
    output_dir = _output_dir(config)
    out = output_dir / "cv.tsv"
    write_table(out, [{"batch_size": c.batch_size, "k": c.k, "learning_rate": c.learning_rate,
                       "mean_loss": loss} for c, loss in results])
    record_artifact(output_dir, out, artifact_header(config, ctx.registry.version))
    logger.info(f"Best: batch_size={best.batch_size} k={best.k} "
                f"learning_rate={best.learning_rate}")
    return 0


def cmd_search(args: argparse.Namespace, config: Config) -> int:
    corpus = load_corpus(config.path("corpus_dir"))
    traces = load_trace_set(config.path("trace_dir"))
    trained = _trained(config, corpus, traces)
    registry_version = trained.model.registry_version
    archive_path = config.path("archive_file") or Path("archive.yml")
    output_dir = _output_dir(config)
    stats_path = output_dir / "stats.tsv"

    archive: Optional[Archive] = None
    if args.resume:
        if not archive_path.exists():
            raise ValidationError(f"no checkpoint to resume from at {archive_path}")
        archive, saved = Archive.load(archive_path, registry_version)
        if saved.get("seed") != config["seed"] or saved.get("config_hash") != config.config_hash():
            raise ConfigurationError(f"{archive_path} was written with seed {saved.get('seed')} "
                                     f"and config {saved.get('config_hash')}; resume with the "
                                     f"same settings")
        logger.info(f"Resuming from generation {archive.generation}")
    elif stats_path.exists():
        stats_path.unlink()

    archive, _ = search_pipeline(trained, config, archive, args.generations, archive_path,
                                 stats_path)
    header = artifact_header(config, registry_version)
    archive.save(archive_path, header)
    record_artifact(output_dir, stats_path, header)

    search, _, exemplars = search_settings(config)
    stats = read_stats(stats_path) if stats_path.exists() else []
    write_run_report(archive, stats, header, output_dir, exemplars.names,
                     search.min_preferences, search.max_preferences,
                     TemplateManager(_option(args, "template_dir")))
    if args.graph:
        try:
            render_occupancy(archive, exemplars.names, output_dir / "occupancy.svg")
        except GraphRenderError as e:
            logger.warning(f"Skipping occupancy graph: {e}")
    return 0


def cmd_score(args: argparse.Namespace, config: Config) -> int:
    games = _games(args.game)
    traces = load_trace_set(config.path("trace_dir"))
    corpus = load_corpus(config.path("corpus_dir")) if config.path("corpus_dir") else games
    trained = load_trained(_model_path(config), corpus, traces, config)
    for game in games:
        print(f"{game.name}\t{score(trained.model, game, trained.ctx):.6f}")
    return 0


def cmd_replay(args: argparse.Namespace, config: Config) -> int:
    games = _games(args.game)
    trace_dir = config.path("trace_dir")
    if trace_dir is None:
        raise ValidationError("replay needs --traces (or GOALSYNTH_TRACE_DIR)")
    traces = load_traces(trace_dir)
    interp = InterpConfig.from_config(config)
    reports = [replay_report(score_game(g, t, interp)) for g in games for t in traces]
    text = yaml.safe_dump_all(reports, sort_keys=False, explicit_start=True)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
        logger.info(f"Wrote {len(reports)} replay reports to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_describe(args: argparse.Namespace, config: Config) -> int:
    templates = TemplateManager(_option(args, "template_dir"))
    for game in _games(args.game):
        print(f"== {game.name} ==")
        print(describe(game, templates))
        if args.graph:
            out = _output_dir(config) / "trees" / f"{game.name}.{args.graph_format}"
            try:
                render_tree(game, out, args.graph_format)
            except GraphRenderError as e:
                logger.warning(f"Skipping tree graph for {game.name}: {e}")
    return 0


def cmd_analyze(args: argparse.Namespace, config: Config) -> int:
    corpus = load_corpus(config.path("corpus_dir"))
    traces = load_trace_set(config.path("trace_dir"))
    output_dir = _output_dir(config)
    header = artifact_header(config, _registry_version(config), corpus_size=len(corpus))
    written = []

    structures = abstract_structures(corpus)
    path = output_dir / "structures.tsv"
    write_table(path, structures.rows(), ["structure", "count"])
    written.append(path)
    summary: Dict[str, Any] = {
        "modal_expressions": structures.total,
        "unique_structures": structures.unique,
        "singletons": structures.singletons,
        "top5_share": structures.head_share(5),
    }

    path = output_dir / "role_fillers.tsv"
    write_table(path, role_filler_rows(role_filler_stats(corpus)),
                ["split", "predicate", "category", "count"])
    written.append(path)

    if args.samples:
        rows = []
        for sample in _games(args.samples):
            nearest, distance = nearest_real(sample, corpus)
            rows.append({"sample": sample.name, "nearest": nearest.name, "distance": distance})
        path = output_dir / "nearest.tsv"
        write_table(path, rows, ["sample", "nearest", "distance"])
        written.append(path)

    if args.regrowth > 0:
        negatives = gen_negatives(corpus, fit_grammar(corpus, config), args.regrowth,
                                  config.rng("negatives"))
        summary["regrowth_distance_spearman"] = regrowth_distance_correlation(corpus, negatives)

    if traces:
        summary["mean_activation_jaccard"] = mean_activation_jaccard(
            corpus, traces, InterpConfig.from_config(config))

    path = output_dir / "summary.tsv"
    write_table(path, [{"metric": k, "value": v} for k, v in summary.items()],
                ["metric", "value"])
    written.append(path)
    for path in written:
        record_artifact(output_dir, path, header)
    for k, v in summary.items():
        logger.info(f"{k}: {v}")
    return 0


def cmd_ablate(args: argparse.Namespace, config: Config) -> int:
    corpus = load_corpus(config.path("corpus_dir"))
    traces = load_trace_set(config.path("trace_dir"))
    ablations = args.ablations or list(ABLATIONS)
    baseline = baseline_archive = None
    if any(a != "held_out" for a in ablations):
        baseline = train_pipeline(corpus, traces, config)
        baseline_archive, _ = search_pipeline(baseline, config)
    rows = []
    for profile in ablations:
        report = run_ablation(profile, corpus, traces, config, baseline, baseline_archive)
        rows.extend(report.rows())
    output_dir = _output_dir(config)
    out = output_dir / "ablation.tsv"
    write_table(out, rows, ["profile", "metric", "value"])
    record_artifact(output_dir, out, artifact_header(config, _registry_version(config)))
    return 0


HANDLERS = {
    "sample": cmd_sample,
    "corrupt": cmd_corrupt,
    "features": cmd_features,
    "train": cmd_train,
    "cv": cmd_cv,
    "search": cmd_search,
    "score": cmd_score,
    "replay": cmd_replay,
    "describe": cmd_describe,
    "analyze": cmd_analyze,
    "ablate": cmd_ablate,
}


def main(argv=None):
    """Main entry point.

    Args:
        argv: Command-line arguments (defaults to sys.argv)

    Returns:
        Exit code (0 for success, 1 for error, 130 when interrupted)
    """
    parser = create_parser()
    args = parser.parse_args(argv)
    verbose = _option(args, "verbose", False)

    # Setup logging first
    setup_logging(verbose=verbose, quiet=_option(args, "quiet", False),
                  log_file=_option(args, "log_file"))

    if not args.command:
        logger.error("❌ Error: a command is required")
        logger.error("")
        logger.error(f"Commands: {', '.join(COMMANDS)}")
        logger.error("For help: goal-synth --help")
        return 1

    try:
        config = build_config(args)
        logger.debug(f"Configuration: {config.to_dict()}")
        return HANDLERS[args.command](args, config)

    except FileNotFoundError as e:
        logger.error(f"❌ File not found: {e}")
        logger.error("Please check that the path exists and is accessible.")
        return 1
    except PermissionError as e:
        logger.error(f"❌ Permission denied: {e}")
        return 1
    except GoalSynthError as e:
        logger.error(f"❌ {e}")
        if verbose:
            logger.exception("Detailed error information:")
        else:
            logger.error("")
            logger.error("💡 Tip: Run with --verbose for more details")
        return 1
    except KeyboardInterrupt:
        logger.warning("\n⚠️  Interrupted by user")
        return 130
    except Exception as e:
        logger.error(f"❌ Unexpected error: {e}")
        logger.error("")
        logger.error("This might be a bug. Please report it with the command you ran,")
        logger.error("the error message above and the output of a --verbose run.")
        if verbose:
            logger.exception("Stack trace:")
        return 1


if __name__ == "__main__":
    sys.exit(main())
