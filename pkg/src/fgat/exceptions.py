"""Exception types shared across the package."""


class ShapeError(ValueError):
    """An operation received tensors with incompatible shapes."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class FmapFormatError(ValueError):
    """A feature-map container file is malformed or truncated."""
