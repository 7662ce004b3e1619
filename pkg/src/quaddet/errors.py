"""Exception hierarchy shared by all modules."""


class QuadDetError(Exception):
    """Base class for library errors."""


class GeometryError(QuadDetError, ValueError):
    pass


class DegenerateEdge(GeometryError):
    pass


class DegenerateBox(GeometryError):
    pass


class InvalidQuad(GeometryError):
    pass


class OutsideBox(GeometryError):
    pass


class InvalidImage(QuadDetError, ValueError):
    pass


class InvalidProbability(QuadDetError, ValueError):
    pass


class InvalidParams(QuadDetError, ValueError):
    pass


class ParseError(QuadDetError, ValueError):
    """Malformed input text. Carries the 1-based line and column when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class UnknownClass(ParseError):
    pass


class DivergenceError(QuadDetError, ArithmeticError):
    def __init__(self, iteration, value):
        self.iteration = iteration
        self.value = value
        super().__init__(f"loss diverged at iteration {iteration} (value={value!r})")
