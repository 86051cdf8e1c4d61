"""Exception hierarchy shared across the package."""


class GameError(Exception):
    """Base class for all domain errors raised by this package."""


class ValidationError(GameError):
    """A game, CPD, or profile violates a structural invariant."""


class InterventionError(GameError):
    """An intervention cannot be applied or inverted on the current game."""


class SolverError(GameError):
    """An equilibrium computation is unsupported or found no outcome."""


class QueryError(GameError):
    """A query failed to parse or references entities absent from the game."""


class GameFileError(GameError):
    """A game or scenario file failed to parse or validate.

    Carries the source path and, when available, a line/column position.
    """

    def __init__(self, message, path=None, line=None, column=None):
        self.path = path
        self.line = line
        self.column = column
        prefix = ""
        if path is not None:
            prefix = f"{path}: "
        if line is not None:
            prefix += f"line {line}"
            if column is not None:
                prefix += f", column {column}"
            prefix += ": "
        super().__init__(prefix + message)
