"""Exception types raised across the package."""


class GlassFracError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GlassFracError, ValueError):
    pass


class DegenerateGeometryError(GlassFracError, ValueError):
    pass


class NoFrontierError(GlassFracError, ValueError):
    pass


class AnnotationParseError(GlassFracError, ValueError):
    """A label file line could not be parsed.

    ``lines`` holds the 1-based numbers of every offending line.
    """

    def __init__(self, path, lines: list[int], detail: str = ""):
        self.path = path
        self.lines = lines
        msg = f"{path}: malformed label line(s) {', '.join(map(str, lines))}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
