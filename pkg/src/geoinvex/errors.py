"""Exception hierarchy.

Everything raised on purpose by the package derives from ``GeoInvexError`` so
the CLI can map it onto exit status 2 in one place.
"""


class GeoInvexError(Exception):
    pass


class DomainError(GeoInvexError):
    """A point lies outside the chart domain of its manifold."""


class DomainExitError(DomainError):
    """A geodesic or transport integration left the chart domain."""

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (at t={t:.6g})")
        self.t = t


class MetricDegeneracyError(GeoInvexError):
    """A custom metric was not symmetric positive-definite at some point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class BaseMismatchError(GeoInvexError):
    """Tangent vectors combined at different base points."""


class UnsupportedInverseError(GeoInvexError):
    """The logarithm map is only available on the built-in Hadamard models."""


class ParameterOrderError(GeoInvexError):
    pass


class EvaluationError(GeoInvexError):
    """A scalar function could not be evaluated where it was needed."""


class DslSyntaxError(GeoInvexError):
    def __init__(self, message, line, column, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        detail = f"{message} at line {line}, column {column}"
        if self.expected:
            detail += f"; expected one of: {', '.join(self.expected)}"
        super().__init__(detail)


class DslEvalError(GeoInvexError):
    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at line {position[0]}, column {position[1]})"
        super().__init__(message)


class ZeroAlphaError(DslEvalError):
    """alpha evaluated to 0, outside its codomain R - {0}."""


class EmptySetError(GeoInvexError):
    """Rejection sampling could not find a point in the set."""


class ConstructionError(GeoInvexError):
    pass


class ScenarioError(GeoInvexError):
    """Scenario file failed schema or semantic validation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))
