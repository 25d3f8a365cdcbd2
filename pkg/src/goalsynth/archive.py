"""MAP-Elites archive: coherent and incoherent halves keyed by behavioral characteristics."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np
import yaml

from . import __version__
from .exceptions import ValidationError, VersionMismatchError
from .exemplars import ArchiveKey
from .logger import get_logger
from .parser import parse_game
from .printer import print_game
from .syntax import Game

logger = get_logger(__name__)

COHERENT = "coherent"
INCOHERENT = "incoherent"
HALVES = (COHERENT, INCOHERENT)


@dataclass
class Elite:
    game: Game
    fitness: float
    generation: int
    key: ArchiveKey
    assignment: Tuple[Optional[int], ...] = ()


@dataclass
class ArchiveStats:
    attempts: int = 0
    inserted: int = 0
    replaced: int = 0
    rejected: int = 0


@dataclass
class Archive:
    """Two keyed maps of elites; a cell is only ever replaced by a strictly fitter candidate."""
    halves: Dict[str, Dict[ArchiveKey, Elite]] = field(
        default_factory=lambda: {h: {} for h in HALVES})
    stats: ArchiveStats = field(default_factory=ArchiveStats)
    generation: int = 0

    def insert(self, elite: Elite, coherent: bool) -> bool:
        """Place `elite` in its cell if the cell is empty or the resident is less fit."""
        half = self.halves[COHERENT if coherent else INCOHERENT]
        self.stats.attempts += 1
        resident = half.get(elite.key)
        if resident is None:
            half[elite.key] = elite
            self.stats.inserted += 1
            return True
        if elite.fitness > resident.fitness:
            half[elite.key] = elite
            self.stats.replaced += 1
            return True
        self.stats.rejected += 1
        return False

    def elites(self, half: Optional[str] = None) -> List[Elite]:
        """Residents in a stable order (half, then key)."""
        names = HALVES if half is None else (half,)
        return [self.halves[h][k] for h in names for k in sorted(self.halves[h])]

    def __iter__(self) -> Iterator[Elite]:
        return iter(self.elites())

    def __len__(self) -> int:
        return sum(len(h) for h in self.halves.values())

    def sample(self, rng: np.random.Generator) -> Elite:
        """A resident drawn uniformly from both halves.

        Raises:
            ValidationError: If the archive is empty
        """
        pool = self.elites()
        if not pool:
            raise ValidationError("cannot sample from an empty archive")
        return pool[int(rng.integers(len(pool)))]

    def occupancy(self, half: str = COHERENT) -> int:
        return len(self.halves[half])

    def outputs(self) -> List[Elite]:
        return self.elites(COHERENT)

    def fitness_summary(self, half: str = COHERENT) -> Dict[str, float]:
        values = np.asarray([e.fitness for e in self.halves[half].values()])
        if values.size == 0:
            return {"mean": float("nan"), "min": float("nan"), "q1": float("nan"),
                    "median": float("nan"), "q3": float("nan"), "max": float("nan")}
        q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
        return {"mean": float(values.mean()), "min": float(q[0]), "q1": float(q[1]),
                "median": float(q[2]), "q3": float(q[3]), "max": float(q[4])}

    # --- checkpoints ---------------------------------------------------------

    def to_dict(self, header: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "header": dict({"kind": "archive", "tool_version": __version__}, **(header or {})),
            "generation": self.generation,
            "stats": vars(self.stats).copy(),
            "elites": [],
        }
        for half in HALVES:
            for elite in self.elites(half):
                data["elites"].append({
                    "half": half,
                    "key": elite.key.to_str(),
                    "fitness": float(elite.fitness),
                    "generation": elite.generation,
                    "assignment": [-1 if a is None else a for a in elite.assignment],
                    "game": print_game(elite.game),
                })
        return data

    def save(self, path: Path, header: Optional[Mapping[str, Any]] = None):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(self.to_dict(header), sort_keys=False, width=100),
                        encoding="utf-8")
        logger.info(f"Saved archive checkpoint (generation {self.generation}, "
                    f"{self.occupancy()} coherent cells) to {path}")

    @classmethod
    def load(cls, path: Path, registry_version: Optional[str] = None) -> Tuple["Archive", dict]:
        """
        Raises:
            ValidationError: If the file is not an archive checkpoint
            VersionMismatchError: If `registry_version` is given and differs
        """
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        header = data.get("header", {})
        if header.get("kind") != "archive":
            raise ValidationError(f"{path} is not an archive checkpoint")
        if registry_version is not None and header.get("registry_version") != registry_version:
            raise VersionMismatchError(f"{path}: archive registry version "
                                       f"{header.get('registry_version')} does not match "
                                       f"{registry_version}")
        archive = cls(generation=int(data.get("generation", 0)),
                      stats=ArchiveStats(**data.get("stats", {})))
        for item in data.get("elites", []):
            key = ArchiveKey.from_str(item["key"])
            assignment = tuple(None if a < 0 else a for a in item.get("assignment", []))
            elite = Elite(parse_game(item["game"]), float(item["fitness"]),
                          int(item["generation"]), key, assignment)
            archive.halves[item["half"]][key] = elite
        return archive, header
