"""Custom exceptions for goal-synth."""

from typing import Optional, Sequence


class GoalSynthError(Exception):
    """Base exception for goal-synth errors."""
    pass


class GameParseError(GoalSynthError):
    """Syntax error in a game program."""

    def __init__(self, message: str, position: Optional[int] = None,
                 expected: Optional[Sequence[str]] = None):
        self.position = position
        self.expected = list(expected or [])
        details = message
        if position is not None:
            details = f"{details} (at offset {position})"
        if self.expected:
            details = f"{details}; expected one of: {', '.join(self.expected)}"
        super().__init__(details)


class ArityError(GameParseError):
    """Predicate or function applied to the wrong number of arguments."""
    pass


class UnknownNameError(GameParseError):
    """Unknown predicate, function or type name."""
    pass


class TraceFormatError(GoalSynthError):
    """Ill-formed trace file."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.message = message
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class EvaluationError(GoalSynthError):
    """Predicate or function could not be evaluated (unbound variable, bad arity)."""
    pass


class BindingLimitError(EvaluationError):
    """Too many quantifier bindings to enumerate."""
    pass


class ScoringError(GoalSynthError):
    """Scoring expression could not be evaluated."""
    pass


class NodeNotFoundError(GoalSynthError):
    """No node with the requested id exists in the syntax tree."""
    pass


class TrainingError(GoalSynthError):
    """Invalid training data or configuration."""
    pass


class VersionMismatchError(GoalSynthError):
    """Artifact was produced with an incompatible feature registry or tool version."""
    pass


class ConfigurationError(GoalSynthError):
    """Error in configuration."""
    pass


class ValidationError(GoalSynthError):
    """Input validation error."""
    pass


class GraphRenderError(GoalSynthError):
    """Error rendering a graph with Graphviz."""
    pass
