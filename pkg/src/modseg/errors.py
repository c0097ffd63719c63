"""Exception types shared across the package."""


class ModsegError(Exception):
    """Base class for all package errors."""


class ZeroFeatureRow(ModsegError):
    """A feature row has (near-)zero norm and cannot be normalized."""

    def __init__(self, row_index: int, norm: float):
        self.row_index = row_index
        self.norm = norm
        super().__init__(f"feature row {row_index} has norm {norm:.3e} < 1e-12")


class EmptyGraph(ModsegError):
    """Thresholding left the graph with no edges (tau too high for this input)."""


class ShapeMismatch(ModsegError):
    """Operand shapes are inconsistent."""


class DimensionMismatch(ModsegError):
    """Two images/masks that must share dimensions do not."""


class DivergedLoss(ModsegError):
    """Training produced a non-finite loss value."""

    def __init__(self, epoch: int, value: float):
        self.epoch = epoch
        self.value = value
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}")


class FeatureFileError(ModsegError):
    """Base class for feature-file format violations; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class BadMagic(FeatureFileError):
    pass


class BadVersion(FeatureFileError):
    pass


class TruncatedPayload(FeatureFileError):
    def __init__(self, expected_bytes: int, actual_bytes: int, offset: int):
        self.expected_bytes = expected_bytes
        self.actual_bytes = actual_bytes
        super().__init__(
            f"payload truncated: expected {expected_bytes} bytes, got {actual_bytes}",
            offset,
        )


class NonFinitePayload(FeatureFileError):
    pass


class UnsupportedFormat(ModsegError):
    """Image file exists but is not an accepted format."""


class CorruptImage(ModsegError):
    """Image file could not be decoded."""


class EmptyDataset(ModsegError):
    """Dataset scan or evaluation found nothing to work on."""
