"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor or grid shapes do not line up."""


class StateError(RuntimeError):
    """An operation was called out of order."""


class FormatError(ValueError):
    """Malformed file or byte stream.

    ``offset`` is the byte (or line) position where parsing failed, if known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class TruncationError(FormatError):
    pass


class VersionError(FormatError):
    pass


class MeshIndexError(FormatError, IndexError):
    pass


class DegenerateGeometryError(ValueError):
    pass


class DomainError(ValueError):
    """Geometry lies outside the [-0.5, 0.5]^3 voxel domain."""


class ResolutionError(ValueError):
    pass


class TrainingError(RuntimeError):
    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch


class CheckpointError(FormatError):
    pass


class VariantError(CheckpointError):
    """Checkpoint holds a different model variant than the caller expects."""
