class AETreeError(Exception):
    """Base class for all package errors."""


class InvalidArgument(AETreeError, ValueError):
    pass


class DegenerateShapeError(AETreeError, ValueError):
    """Aspect ratio requested for a rectangle with zero width."""


class DegenerateParentError(AETreeError, ValueError):
    """Relative parameters requested against a parent with a zero extent."""


class DegenerateFootprintError(AETreeError, ValueError):
    """Footprint polygon with (near) zero area; callers skip the record."""


class TrainingDiverged(AETreeError, FloatingPointError):
    pass


class SchemaError(AETreeError, ValueError):
    """Malformed input file; message carries the offending line number."""


class ComponentCollapse(AETreeError, ArithmeticError):
    """A mixture component lost all support twice during EM."""
