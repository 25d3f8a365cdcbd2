"""Configuration management for goal-synth."""

import copy
import hashlib
import io
import os
import zlib
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import numpy as np
import yaml

from .exceptions import ConfigurationError
from .logger import get_logger

logger = get_logger(__name__)


EXEMPLAR_NAMES = [
    "throwAttempt", "throwInBin", "ballThrownToBed", "itemInClosedDrawerAtEnd", "watchOnShelf",
    "gameBlockFound", "matchingBuildingBuilt", "ballDroppedInBin", "pillowMovedToRoomCenter",
]

OPERATORS = [
    "regrow", "insert", "delete", "crossover", "resample_variables", "resample_first_condition",
    "resample_last_condition", "resample_setup", "resample_terminal",
]

CUSTOM_OPERATORS = [op for op in OPERATORS if op.startswith("resample_")]


class LoaderWithInclude(yaml.SafeLoader):
    """YAML loader that understands !include and resolves relative to the current file."""

    def __init__(self, stream, root_dir: Path):
        if isinstance(stream, (str, bytes)):
            stream = io.StringIO(stream if isinstance(stream, str) else stream.decode("utf-8"))
        super().__init__(stream)
        self._root_dir = Path(root_dir)


def _include_constructor(loader: LoaderWithInclude, node):
    """Handle `key: !include relative/path.yml`.

    YAML targets are parsed (recursively supporting !include); anything else is
    returned as raw text.

    Raises:
        ConfigurationError: If the included file doesn't exist
    """
    rel_path = loader.construct_scalar(node)
    target = (loader._root_dir / rel_path).resolve()

    if not target.exists():
        raise ConfigurationError(f"!include file not found: {target}")

    if target.suffix.lower() in (".yml", ".yaml"):
        return load_yaml(target)
    return target.read_text(encoding="utf-8")


yaml.add_constructor("!include", _include_constructor, Loader=LoaderWithInclude)


def load_yaml(path: Path) -> Any:
    """Load a single YAML document with !include support."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return yaml.load(text, Loader=lambda s: LoaderWithInclude(s, path.parent))


def dump_yaml(data: Any) -> str:
    """Dump YAML with stable key order (insertion order, not sorted)."""
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=False, allow_unicode=True)


def deep_merge(base: Dict[str, Any], delta: Dict[str, Any]) -> Dict[str, Any]:
    """Return `base` with `delta` merged in; nested dicts merge, everything else replaces."""
    merged = copy.deepcopy(base)
    for key, value in (delta or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def rng_for(seed: int, stream: str, *extra: int) -> np.random.Generator:
    """Independent generator for a named sub-stream of the root seed.

    Args:
        seed: Root seed
        stream: Stream name, e.g. "pcfg", "negatives", "search"
        *extra: Further integers (generation number, fold index, ...)

    Returns:
        numpy Generator seeded from (seed, crc32(stream), *extra)
    """
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(stream.encode("utf-8"))]
    entropy.extend(int(e) & 0xFFFFFFFF for e in extra)
    return np.random.default_rng(entropy)


class Config:
    """Configuration manager supporting CLI args, env vars, config files and profiles."""

    DEFAULTS: Dict[str, Any] = {
        'paths': {
            'corpus_dir': None,
            'trace_dir': None,
            'model_file': 'model.yml',
            'archive_file': 'archive.yml',
            'output_dir': 'output',
        },
        'seed': 0,
        'workers': 1,
        'trace': {
            'adjacent_threshold': 0.4,
            'near_threshold': 1.0,
            'equal_position_threshold': 0.1,
        },
        'interp': {
            'stationary_threshold': 0.05,
            'same_position_threshold': 0.25,
            'binding_cap': 10000,
        },
        'pcfg': {
            'max_depth': 16,
            'smoothing': 1.0,
        },
        'features': {
            'n': 5,
            'discount': 0.4,
            'exclude_groups': [],
            'max_truth_table_atoms': 8,
            'max_logical_children': 4,
        },
        'training': {
            'batch_size': 1,
            'k': 1024,
            'm': 1024,
            'learning_rate': 4e-3,
            'weight_decay': 3e-3,
            'max_epochs': 25000,
            'patience': 500,
            'validation_fraction': 0.1,
        },
        'cv': {
            'folds': 5,
            'grid': {
                'batch_size': [1, 2, 4],
                'k': [256, 512, 1024],
                'learning_rate': [1e-3, 4e-3],
            },
        },
        'search': {
            'generations': 8192,
            'updates': 750,
            'exemplars': list(EXEMPLAR_NAMES),
            'min_preferences': 1,
            'max_preferences': 4,
            'init_samples': 1024,
            'init_cap': 128,
            'max_retries': 10,
            'checkpoint_every': 100,
            'log_every': 10,
            'operator_weights': {op: 1.0 for op in OPERATORS},
        },
        'profiles': {
            'desk': {
                'training': {'k': 32, 'm': 64, 'max_epochs': 2000, 'patience': 200},
                'cv': {'folds': 3, 'grid': {'batch_size': [1, 2], 'k': [16, 32],
                                            'learning_rate': [4e-3]}},
                'search': {
                    'generations': 200,
                    'updates': 100,
                    'exemplars': ['throwAttempt', 'itemInClosedDrawerAtEnd', 'watchOnShelf'],
                    'max_preferences': 2,
                    'init_samples': 256,
                    'init_cap': 28,
                    'checkpoint_every': 50,
                },
            },
            'no_crossover': {'search': {'operator_weights': {'crossover': 0.0}}},
            'no_custom_ops': {'search': {'operator_weights': {op: 0.0 for op in CUSTOM_OPERATORS}}},
            'no_custom_ops_no_crossover': {
                'search': {'operator_weights': dict({op: 0.0 for op in CUSTOM_OPERATORS},
                                                    crossover=0.0)},
            },
            'no_common_sense': {'features': {'exclude_groups': ['play_trace_database']}},
            'no_coherence_features': {
                'features': {'exclude_groups': ['game_element_disjointness']},
            },
        },
    }

    # Environment variables override paths only
    ENV_MAPPINGS = {
        'corpus_dir': ['GOALSYNTH_CORPUS_DIR'],
        'trace_dir': ['GOALSYNTH_TRACE_DIR'],
        'model_file': ['GOALSYNTH_MODEL_FILE'],
        'archive_file': ['GOALSYNTH_ARCHIVE_FILE'],
        'output_dir': ['GOALSYNTH_OUTPUT_DIR'],
    }

    def __init__(
        self,
        config_file: Optional[Path] = None,
        cli_args: Optional[Dict[str, Any]] = None,
        profiles: Optional[Iterable[str]] = None,
    ):
        """Initialize configuration.

        Priority: CLI args > Environment vars > Profiles > Config file > Defaults

        Args:
            config_file: Path to YAML configuration file
            cli_args: Dotted keys (`training.learning_rate`) to values; None values are ignored
            profiles: Names of profiles to apply, in order
        """
        self.config = copy.deepcopy(self.DEFAULTS)
        self.profiles = list(profiles or [])

        if config_file:
            self._load_config_file(Path(config_file))

        for name in self.profiles:
            self.apply_profile(name)

        self._load_from_env()

        if cli_args:
            self._load_from_cli(cli_args)

        self._validate()

    def _load_config_file(self, config_file: Path):
        if not config_file.exists():
            raise ConfigurationError(f"Configuration file not found: {config_file}")

        try:
            file_config = load_yaml(config_file) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Error parsing configuration file: {e}")

        if not isinstance(file_config, dict):
            raise ConfigurationError(f"Configuration file must hold a mapping: {config_file}")

        unknown = set(file_config) - set(self.DEFAULTS)
        if unknown:
            logger.warning(f"Ignoring unknown configuration sections: {', '.join(sorted(unknown))}")
            file_config = {k: v for k, v in file_config.items() if k in self.DEFAULTS}

        self.config = deep_merge(self.config, file_config)
        logger.debug(f"Loaded configuration from {config_file}")

    def apply_profile(self, name: str):
        """Merge the named profile delta into the configuration."""
        profiles = self.config.get('profiles', {})
        if name not in profiles:
            raise ConfigurationError(
                f"Unknown profile '{name}'. Available: {', '.join(sorted(profiles))}"
            )
        delta = {k: v for k, v in profiles[name].items() if k != 'profiles'}
        self.config = deep_merge(self.config, delta)
        if name not in self.profiles:
            self.profiles.append(name)
        logger.debug(f"Applied profile {name}")

    def _load_from_env(self):
        for key, env_vars in self.ENV_MAPPINGS.items():
            for env_var in env_vars:
                value = os.getenv(env_var)
                if value is not None:
                    self.config['paths'][key] = value
                    break

    def _load_from_cli(self, cli_args: Dict[str, Any]):
        for key, value in cli_args.items():
            if value is not None:
                self.set(key, value)

    def _validate(self):
        weights = self.config['search']['operator_weights']
        unknown = set(weights) - set(OPERATORS)
        if unknown:
            raise ConfigurationError(f"Unknown mutation operators: {', '.join(sorted(unknown))}")
        if any(w < 0 for w in weights.values()) or not any(w > 0 for w in weights.values()):
            raise ConfigurationError("Operator weights must be >= 0 with at least one positive")

        search = self.config['search']
        if not 1 <= search['min_preferences'] <= search['max_preferences']:
            raise ConfigurationError("Preference count range must satisfy 1 <= min <= max")
        unknown = set(search['exemplars']) - set(EXEMPLAR_NAMES)
        if unknown:
            raise ConfigurationError(f"Unknown exemplars: {', '.join(sorted(unknown))}")

        training = self.config['training']
        if not 1 <= training['k'] <= training['m']:
            raise ConfigurationError("Training requires 1 <= k <= m")
        if training['learning_rate'] <= 0 or training['weight_decay'] < 0:
            raise ConfigurationError("Learning rate must be > 0 and weight decay >= 0")

        if not isinstance(self.config['seed'], int) or self.config['seed'] < 0:
            raise ConfigurationError("seed must be a non-negative integer")

    def set(self, key: str, value: Any):
        """Set a value by dotted key, creating intermediate sections."""
        node = self.config
        parts = key.split('.')
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value by dotted key (`search.generations`)."""
        node: Any = self.config
        for part in key.split('.'):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def section(self, name: str) -> Dict[str, Any]:
        """Copy of a top-level section."""
        return copy.deepcopy(self.config[name])

    def path(self, key: str) -> Optional[Path]:
        value = self.config['paths'].get(key)
        return Path(value) if value else None

    def rng(self, stream: str, *extra: int) -> np.random.Generator:
        return rng_for(self.config['seed'], stream, *extra)

    def config_hash(self) -> str:
        """Stable SHA-256 over the canonical YAML dump (paths excluded)."""
        payload = {k: v for k, v in self.config.items() if k not in ('paths', 'profiles')}
        text = yaml.safe_dump(payload, sort_keys=True, default_flow_style=False)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()[:16]

    def __getitem__(self, key: str) -> Any:
        value = self.get(key, _MISSING)
        if value is _MISSING:
            raise KeyError(key)
        return value

    def __contains__(self, key: str) -> bool:
        return self.get(key, _MISSING) is not _MISSING

    def to_dict(self) -> Dict[str, Any]:
        """Return configuration as dictionary."""
        return copy.deepcopy(self.config)


_MISSING = object()
