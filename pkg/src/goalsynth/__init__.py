"""Goal-program synthesis: a game DSL, its interpreter, a learned fitness and MAP-Elites search."""

__version__ = "0.3.0"
__author__ = "goal-synth contributors"

from .config import Config
from .fitness import FitnessModel, score
from .interpreter import score_game
from .parser import load_games, parse_game
from .printer import print_game

__all__ = [
    "Config",
    "FitnessModel",
    "load_games",
    "parse_game",
    "print_game",
    "score",
    "score_game",
]
