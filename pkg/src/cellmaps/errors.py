"""Exception hierarchy shared across the pipeline; the CLI maps these to exit codes."""


class CellmapsError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(CellmapsError):
    """Invalid or inconsistent configuration (CLI exit code 3)."""


class DataError(CellmapsError):
    """Missing or malformed data artifact (CLI exit code 4)."""


class ParseError(DataError):
    """Malformed input document. Carries position info when known."""

    def __init__(self, message: str, line: int | None = None, pos: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line})"
        elif pos is not None:
            loc = f" (byte {pos})"
        super().__init__(message + loc)
        self.line = line
        self.pos = pos


class InfeasibleSplitError(CellmapsError):
    """No valid split exists under the requested constraints (CLI exit code 5)."""
