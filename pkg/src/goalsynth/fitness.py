"""Contrastive fitness model: negatives by regrowth, softmax loss, SGD training and scoring."""

import dataclasses
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from scipy import stats
from scipy.special import logsumexp

from . import __version__
from .exceptions import ConfigurationError, TrainingError, ValidationError, VersionMismatchError
from .features import (
    FeatureContext, FeatureRegistry, Normalizer, extract_features, fit_normalizers, raw_features,
)
from .logger import get_logger
from .ngram import NGramModel
from .pcfg import Pcfg, regrow_random, with_name
from .predicates import PredicateDatabase
from .syntax import Game, find_node, subtree_height

logger = get_logger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1
    k: int = 1024
    m: int = 1024
    learning_rate: float = 4e-3
    weight_decay: float = 3e-3
    max_epochs: int = 25000
    patience: int = 500
    validation_fraction: float = 0.1
    seed: int = 0

    @classmethod
    def from_config(cls, config) -> "TrainConfig":
        values = config.section("training")
        return cls(seed=config["seed"], **values)

    def validate(self):
        """
        Raises:
            ConfigurationError: On a rate <= 0, an empty batch or k outside [1, m]
        """
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not 1 <= self.k <= self.m:
            raise ConfigurationError(f"need 1 <= k <= m, got k={self.k}, m={self.m}")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigurationError("learning_rate must be > 0 and weight_decay >= 0")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("max_epochs and patience must be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigurationError("validation_fraction must be in [0, 1)")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class Negative:
    source: int
    game: Game
    node_id: int
    height: int


def gen_negatives(corpus: Sequence[Game], pcfg: Pcfg, m: int,
                  rng: np.random.Generator) -> List[List[Negative]]:
    """`m` corruptions of every positive, each one regrowth at a uniformly chosen node."""
    groups: List[List[Negative]] = []
    for i, game in enumerate(corpus):
        group = []
        for j in range(m):
            corrupted, node_id = regrow_random(game, pcfg, rng)
            height = subtree_height(find_node(game, node_id).node)
            group.append(Negative(i, with_name(corrupted, f"{game.name}-neg-{j}"), node_id,
                                  height))
        groups.append(group)
        logger.debug(f"Generated {m} negatives for {game.name}")
    logger.info(f"Generated {m * len(corpus)} negatives for {len(corpus)} positives")
    return groups


# --- objective ---------------------------------------------------------------------


def loss(positive: float, negatives: Sequence[float]) -> float:
    """-log softmax of the positive score against its negatives."""
    negatives = np.asarray(negatives, dtype=float)
    if negatives.size == 0:
        raise ValidationError("loss needs at least one negative score")
    scores = np.concatenate(([positive], negatives))
    return float(logsumexp(scores) - positive)


def loss_and_gradient(theta: np.ndarray, positive: np.ndarray,
                      negatives: np.ndarray) -> Tuple[float, np.ndarray]:
    """Loss for one positive row and a (K, F) negative matrix, and its gradient in theta."""
    rows = np.vstack([positive[None, :], negatives])
    scores = rows @ theta
    total = logsumexp(scores)
    weights = np.exp(scores - total)
    return float(total - scores[0]), weights @ rows - positive


def batch_loss_and_gradient(theta: np.ndarray, positives: np.ndarray,
                            negatives: Sequence[np.ndarray]) -> Tuple[float, np.ndarray]:
    losses, grads = zip(*(loss_and_gradient(theta, p, n) for p, n in zip(positives, negatives)))
    return float(np.mean(losses)), np.mean(grads, axis=0)


# --- data --------------------------------------------------------------------------


@dataclass
class Dataset:
    """Normalized feature rows: one per positive and an (M, F) block of negatives per positive."""
    names: List[str]
    positives: np.ndarray
    negatives: List[np.ndarray]
    ids: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.positives = np.asarray(self.positives, dtype=float)
        if len(self.negatives) != len(self.positives):
            raise ValidationError("every positive needs its own negative block")
        width = len(self.names)
        if self.positives.ndim != 2 or self.positives.shape[1] != width or any(
                n.ndim != 2 or n.shape[1] != width or n.shape[0] == 0 for n in self.negatives):
            raise ValidationError(f"feature rows must have {width} columns and blocks be non-empty")
        if not self.ids:
            self.ids = [str(i) for i in range(len(self.positives))]

    def __len__(self) -> int:
        return len(self.positives)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(self.names, self.positives[list(indices)],
                       [self.negatives[i] for i in indices], [self.ids[i] for i in indices])


def build_dataset(corpus: Sequence[Game], negatives: Sequence[Sequence[Negative]],
                  ctx: FeatureContext) -> Tuple[Dataset, Normalizer]:
    """Extract raw features, fit the normalizer over positives and negatives, normalize."""
    registry = ctx.registry
    pos_raw = [raw_features(g, ctx) for g in corpus]
    neg_raw = [[raw_features(n.game, ctx) for n in group] for group in negatives]
    normalizer = fit_normalizers(pos_raw + [r for group in neg_raw for r in group], registry)
    positives = np.vstack([normalizer.transform(r, registry) for r in pos_raw])
    blocks = [np.vstack([normalizer.transform(r, registry) for r in group]) for group in neg_raw]
    logger.info(f"Built dataset: {len(corpus)} positives, "
                f"{sum(len(b) for b in blocks)} negatives, {len(registry)} features")
    return Dataset(registry.names, positives, blocks, [g.name for g in corpus]), normalizer


def _header(kind: str, registry_version: str, extra: Optional[Mapping[str, Any]] = None) -> dict:
    header = {"kind": kind, "tool_version": __version__, "registry_version": registry_version}
    header.update(extra or {})
    return header


def save_dataset(dataset: Dataset, path: Path, registry_version: str,
                 extra: Optional[Mapping[str, Any]] = None):
    """YAML header document followed by tab-separated rows tagged pos:<i> / neg:<i>."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(yaml.safe_dump(_header("dataset", registry_version, extra), sort_keys=True))
        fh.write("---\n")
        fh.write("\t".join(["row", "id"] + dataset.names) + "\n")
        for i, row in enumerate(dataset.positives):
            fh.write("\t".join([f"pos:{i}", dataset.ids[i]] + [f"{v:.6g}" for v in row]) + "\n")
        for i, block in enumerate(dataset.negatives):
            for row in block:
                fh.write("\t".join([f"neg:{i}", dataset.ids[i]] + [f"{v:.6g}" for v in row])
                         + "\n")


def load_dataset(path: Path, registry_version: Optional[str] = None) -> Tuple[Dataset, dict]:
    """
    Raises:
        VersionMismatchError: If `registry_version` is given and differs from the file's
        ValidationError: If the file is malformed
    """
    text = Path(path).read_text(encoding="utf-8")
    head, sep, body = text.partition("---\n")
    if not sep:
        raise ValidationError(f"{path}: missing dataset header")
    header = yaml.safe_load(head) or {}
    _check_version(header, registry_version, path)
    lines = [line for line in body.splitlines() if line.strip()]
    names = lines[0].split("\t")[2:]
    positives: Dict[int, np.ndarray] = {}
    negatives: Dict[int, List[np.ndarray]] = {}
    ids: Dict[int, str] = {}
    for line in lines[1:]:
        tag, game_id, *values = line.split("\t")
        kind, _, index = tag.partition(":")
        row = np.asarray([float(v) for v in values])
        if kind == "pos":
            positives[int(index)] = row
            ids[int(index)] = game_id
        else:
            negatives.setdefault(int(index), []).append(row)
    order = sorted(positives)
    dataset = Dataset(names, np.vstack([positives[i] for i in order]),
                      [np.vstack(negatives.get(i, [])) if negatives.get(i) else np.empty((0,))
                       for i in order],
                      [ids[i] for i in order])
    return dataset, header


def _check_version(header: Mapping[str, Any], expected: Optional[str], path) -> None:
    found = header.get("registry_version")
    if expected is not None and found != expected:
        raise VersionMismatchError(
            f"{path}: feature registry version {found} does not match {expected}")


# --- training ----------------------------------------------------------------------


@dataclass
class TrainResult:
    theta: np.ndarray
    best_validation_loss: float
    epochs: int
    history: List[Tuple[int, float, float]]


def _split(n: int, fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_val = int(round(n * fraction))
    if fraction > 0 and n >= 2:
        n_val = min(max(n_val, 1), n - 1)
    if n_val == 0:
        return order, order
    return order[n_val:], order[:n_val]


def validation_loss(theta: np.ndarray, dataset: Dataset, indices: Sequence[int]) -> float:
    """Mean loss of each positive against all of its negatives."""
    return float(np.mean([loss_and_gradient(theta, dataset.positives[i], dataset.negatives[i])[0]
                          for i in indices]))


def train(dataset: Dataset, config: TrainConfig,
          validation: Optional[Dataset] = None) -> TrainResult:
    """SGD on the contrastive loss with L2 weight decay and best-snapshot early stopping.

    Each epoch reshuffles the positives and draws fresh K-subsets of their
    negatives. Training stops after `patience` epochs without a better
    validation loss, or at `max_epochs`. Without an explicit validation set a
    seeded `validation_fraction` of the positives is held out.

    Raises:
        ConfigurationError: If the configuration is invalid
        TrainingError: If the dataset is empty
    """
    config.validate()
    if len(dataset) == 0:
        raise TrainingError("cannot train on an empty dataset")
    rng = np.random.default_rng(config.seed)

    if validation is None:
        train_idx, val_idx = _split(len(dataset), config.validation_fraction, rng)
        val_set, val_idx = dataset, list(val_idx)
    else:
        train_idx, val_set, val_idx = np.arange(len(dataset)), validation, range(len(validation))

    theta = np.zeros(len(dataset.names))
    best_theta, best_loss, since_best = theta.copy(), validation_loss(theta, val_set, val_idx), 0
    history: List[Tuple[int, float, float]] = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(train_idx)
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start:start + config.batch_size]
            blocks = []
            for i in batch:
                block = dataset.negatives[i]
                k = min(config.k, len(block))
                blocks.append(block[rng.choice(len(block), size=k, replace=False)])
            value, grad = batch_loss_and_gradient(theta, dataset.positives[batch], blocks)
            theta = theta - config.learning_rate * (grad + config.weight_decay * theta)
            epoch_losses.append(value)

        current = validation_loss(theta, val_set, val_idx)
        if current < best_loss:
            best_theta, best_loss, since_best = theta.copy(), current, 0
        else:
            since_best += 1
        history.append((epoch, float(np.mean(epoch_losses)), best_loss))
        if epoch % 100 == 0:
            logger.debug(f"epoch {epoch}: train {history[-1][1]:.4f}, best validation "
                         f"{best_loss:.4f}")
        if since_best >= config.patience:
            logger.info(f"Validation loss plateaued after {epoch} epochs")
            break

    logger.info(f"Training finished: {epoch} epochs, best validation loss {best_loss:.4f}")
    return TrainResult(best_theta, best_loss, epoch, history)


def grid_configs(base: TrainConfig, grid: Mapping[str, Sequence[Any]]) -> List[TrainConfig]:
    """Cartesian product of the grid over `base`, in grid order, duplicates dropped."""
    keys = list(grid)
    configs: List[TrainConfig] = []
    for values in itertools.product(*(grid[k] for k in keys)):
        candidate = dataclasses.replace(base, **dict(zip(keys, values)))
        if candidate not in configs:
            configs.append(candidate)
    return configs


def kfold(n: int, folds: int, rng: np.random.Generator) -> List[np.ndarray]:
    if folds < 2 or n < folds:
        raise ValidationError(f"need at least {max(folds, 2)} positives for {folds}-fold CV")
    return np.array_split(rng.permutation(n), folds)


def crossvalidate(dataset: Dataset, base: TrainConfig, grid: Mapping[str, Sequence[Any]],
                  folds: int = 5) -> Tuple[TrainConfig, List[Tuple[TrainConfig, float]]]:
    """Pick the grid configuration with the lowest mean held-out loss (first wins ties).

    Folds split the positives; negatives follow their positive.

    Raises:
        ValidationError: If there are fewer positives than folds
    """
    splits = kfold(len(dataset), folds, np.random.default_rng(base.seed))
    results: List[Tuple[TrainConfig, float]] = []
    for config in grid_configs(base, grid):
        fold_losses = []
        for f, held_out in enumerate(splits):
            train_idx = np.concatenate([s for j, s in enumerate(splits) if j != f])
            result = train(dataset.subset(train_idx), config)
            fold_losses.append(validation_loss(result.theta, dataset, held_out))
        mean = float(np.mean(fold_losses))
        results.append((config, mean))
        logger.info(f"CV B={config.batch_size} K={config.k} lr={config.learning_rate}: "
                    f"mean loss {mean:.4f}")
    best = min(results, key=lambda r: r[1])
    return best[0], results


# --- model -------------------------------------------------------------------------


@dataclass
class FitnessModel:
    """Linear fitness θ·φ(g) plus everything needed to compute φ for new games."""
    names: List[str]
    theta: np.ndarray
    registry_version: str
    normalizer: Normalizer
    ngrams: Dict[str, NGramModel] = field(default_factory=dict)
    exclude_groups: Tuple[str, ...] = ()
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (len(self.names),):
            raise ValidationError(f"theta has {self.theta.size} weights for "
                                  f"{len(self.names)} features")

    @property
    def registry(self) -> FeatureRegistry:
        n = next(iter(self.ngrams.values())).n if self.ngrams else 5
        return FeatureRegistry.default(n, self.exclude_groups)

    def feature_context(self, db: Optional[PredicateDatabase] = None,
                        **options) -> FeatureContext:
        """
        Raises:
            VersionMismatchError: If this build's registry differs from the model's
        """
        registry = self.registry
        if registry.version != self.registry_version:
            raise VersionMismatchError(f"model registry {self.registry_version} does not match "
                                       f"feature registry {registry.version}")
        return FeatureContext(registry, self.ngrams, db, self.normalizer, **options)

    def save(self, path: Path, extra: Optional[Mapping[str, Any]] = None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = {
            "header": _header("fitness_model", self.registry_version, extra),
            "exclude_groups": list(self.exclude_groups),
            "metadata": self.metadata,
            "weights": {name: float(w) for name, w in zip(self.names, self.theta)},
            "normalizer": self.normalizer.to_dict(),
            "ngrams": {section: model.to_dict() for section, model in self.ngrams.items()},
        }
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
        logger.info(f"Saved fitness model to {path}")

    @classmethod
    def load(cls, path: Path, registry_version: Optional[str] = None) -> "FitnessModel":
        """
        Raises:
            VersionMismatchError: If `registry_version` is given and differs
            ValidationError: If the file is not a fitness model
        """
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        header = data.get("header", {})
        if header.get("kind") != "fitness_model":
            raise ValidationError(f"{path} is not a fitness model file")
        _check_version(header, registry_version, path)
        weights = data["weights"]
        return cls(list(weights), np.asarray(list(weights.values()), dtype=float),
                   header["registry_version"], Normalizer.from_dict(data["normalizer"]),
                   {s: NGramModel.from_dict(m) for s, m in data.get("ngrams", {}).items()},
                   tuple(data.get("exclude_groups", ())), data.get("metadata", {}))


def fit_model(dataset: Dataset, normalizer: Normalizer, ctx: FeatureContext,
              config: TrainConfig) -> FitnessModel:
    result = train(dataset, config)
    excluded = tuple(g for g in FeatureRegistry.default(ctx.n).groups
                     if g not in ctx.registry.groups)
    metadata = {"config": config.to_dict(), "best_validation_loss": result.best_validation_loss,
                "epochs": result.epochs}
    return FitnessModel(list(dataset.names), result.theta, ctx.registry.version, normalizer,
                        dict(ctx.ngrams), excluded, metadata)


def score(model: FitnessModel, game_or_vector: Union[Game, np.ndarray],
          ctx: Optional[FeatureContext] = None) -> float:
    """θ·φ(g) for a game (features extracted through `ctx`) or a ready vector.

    Raises:
        VersionMismatchError: If the vector length or context registry differs from the model
    """
    if isinstance(game_or_vector, Game):
        ctx = ctx or model.feature_context()
        if ctx.registry.version != model.registry_version:
            raise VersionMismatchError("feature context registry does not match the model")
        vector = extract_features(game_or_vector, ctx)
    else:
        vector = np.asarray(game_or_vector, dtype=float)
    if vector.shape != model.theta.shape:
        raise VersionMismatchError(f"feature vector of length {vector.size} for a model with "
                                   f"{model.theta.size} weights")
    return float(vector @ model.theta)


def auc(positive_scores: Sequence[float], negative_scores: Sequence[float]) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    if len(positive_scores) == 0 or len(negative_scores) == 0:
        raise ValidationError("auc needs positive and negative scores")
    u = stats.mannwhitneyu(positive_scores, negative_scores, alternative="two-sided").statistic
    return float(u) / (len(positive_scores) * len(negative_scores))
