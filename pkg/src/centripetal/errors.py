"""Exception types shared across the package."""


class CentripetalError(Exception):
    """Base class for all errors raised by this package."""


class InvalidPolygon(CentripetalError):
    """Polygon is structurally broken: fewer than 3 vertices, non-finite
    coordinates, self-intersection, or zero area."""


class EmptyComponent(CentripetalError):
    """A contour was requested for a component with no pixels."""


class ShapeMismatch(CentripetalError):
    """Array arguments do not share the expected grid dimensions."""


class DomainError(CentripetalError):
    """Numeric input outside its valid domain (e.g. probabilities not in [0, 1])."""


class NonFiniteShift(CentripetalError):
    """A shift field contains NaN or infinite components."""


class AnnotationError(CentripetalError):
    """An annotation file line could not be parsed."""


class TensorFileError(CentripetalError):
    """Base class for tensor container errors."""


class BadMagic(TensorFileError):
    """File does not start with the expected magic bytes."""


class BadVersion(TensorFileError):
    """Unknown container version."""


class UnsupportedDtype(TensorFileError):
    """Dtype code is not one of the supported encodings."""


class TruncatedPayload(TensorFileError):
    """Payload length does not match the header dimensions."""
