"""Exception taxonomy shared by every dppmask module."""

from __future__ import annotations


class DppMaskError(Exception):
    """Base class for all errors raised by this package."""


class NotPositiveDefinite(DppMaskError):
    """A Cholesky pivot was non-positive; carries the failing pivot index."""

    def __init__(self, pivot: int, value: float):
        self.pivot = pivot
        self.value = value
        super().__init__(f"matrix is not positive definite: pivot {pivot} is {value:g}")


class IndexOutOfRange(DppMaskError):
    """An index list referenced a row outside the matrix, or repeated one."""


class InvalidBandwidth(DppMaskError):
    """Gaussian kernel bandwidth must be strictly positive."""


class InstanceTooLarge(DppMaskError):
    """Exhaustive enumeration would exceed the configured subset budget."""


class DegenerateGain(DppMaskError):
    """All remaining marginal gains sit at the numerical floor; the kernel is
    rank-deficient at this point of the selection."""


class NonDivisibleImage(DppMaskError):
    """Image dimensions do not tile exactly; carries the padding that would fix it."""

    def __init__(self, height: int, width: int, patch_size: int):
        self.pad_h = (-height) % patch_size
        self.pad_w = (-width) % patch_size
        super().__init__(
            f"{height}x{width} image does not tile with patch size {patch_size}; "
            f"would need {self.pad_h} rows and {self.pad_w} cols of padding"
        )


class InvalidConfig(DppMaskError):
    """A masking configuration violates one of its invariants."""


class NonFiniteValue(DppMaskError):
    """NaN or Inf encountered where only finite values are allowed."""


class UnsupportedFormat(DppMaskError):
    """File is not one of the supported binary formats."""


class MalformedHeader(DppMaskError):
    """Header could not be parsed; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte {offset})")


class TruncatedPayload(DppMaskError):
    """Payload length disagrees with the header declaration."""


class BadMagic(DppMaskError):
    """Feature file does not start with the expected magic bytes."""


class VersionUnsupported(DppMaskError):
    """Feature file declares a version this reader does not handle."""


class SchemaViolation(DppMaskError):
    """A structured document violates its schema; carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class DimensionMismatch(DppMaskError):
    """Image geometry does not match the mask it is combined with."""
