"""DPP-based patch masking: diverse subset selection for masked image modeling.

A Gaussian L-ensemble over patch features defines a determinantal point
process; greedy MAP inference with incremental Cholesky updates picks the
visible set, and a purge-ratio threshold interpolates between fully greedy
and fully random masking.
"""

from ._backend import active_backend, set_active_backend
from .dpp import (
    GAIN_FLOOR,
    SampleResult,
    exact_map,
    greedy_init,
    greedy_step,
    normalization_constant,
    sample_mask,
    subset_probability,
)
from .errors import (
    BadMagic,
    DegenerateGain,
    DimensionMismatch,
    DppMaskError,
    IndexOutOfRange,
    InstanceTooLarge,
    InvalidBandwidth,
    InvalidConfig,
    MalformedHeader,
    NonDivisibleImage,
    NonFiniteValue,
    NotPositiveDefinite,
    SchemaViolation,
    TruncatedPayload,
    UnsupportedFormat,
    VersionUnsupported,
)
from .formats import (
    MaskDocument,
    document_from_result,
    read_features,
    read_image,
    read_mask,
    serialize_mask,
    write_features,
    write_image,
    write_mask,
    write_overlay,
)
from .kernel import FeatureMatrix, LEnsemble, gaussian_kernel, normalize_rows
from .masking import (
    MaskConfig,
    MaskResult,
    PatchGrid,
    batch_masks,
    bitmap_to_indices,
    derived_seed,
    generate_mask,
    mask_image,
    mask_to_bitmap,
    patchify,
)
from .numerics import CholeskyFactor, SymMatrix, cholesky, log_det, submatrix

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "active_backend",
    "set_active_backend",
    "GAIN_FLOOR",
    "SampleResult",
    "exact_map",
    "greedy_init",
    "greedy_step",
    "normalization_constant",
    "sample_mask",
    "subset_probability",
    "BadMagic",
    "DegenerateGain",
    "DimensionMismatch",
    "DppMaskError",
    "IndexOutOfRange",
    "InstanceTooLarge",
    "InvalidBandwidth",
    "InvalidConfig",
    "MalformedHeader",
    "NonDivisibleImage",
    "NonFiniteValue",
    "NotPositiveDefinite",
    "SchemaViolation",
    "TruncatedPayload",
    "UnsupportedFormat",
    "VersionUnsupported",
    "MaskDocument",
    "document_from_result",
    "read_features",
    "read_image",
    "read_mask",
    "serialize_mask",
    "write_features",
    "write_image",
    "write_mask",
    "write_overlay",
    "FeatureMatrix",
    "LEnsemble",
    "gaussian_kernel",
    "normalize_rows",
    "MaskConfig",
    "MaskResult",
    "PatchGrid",
    "batch_masks",
    "bitmap_to_indices",
    "derived_seed",
    "generate_mask",
    "mask_image",
    "mask_to_bitmap",
    "patchify",
    "CholeskyFactor",
    "SymMatrix",
    "cholesky",
    "log_det",
    "submatrix",
]
