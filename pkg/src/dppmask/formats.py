"""Bit-exact file formats: PGM/PPM images, feature matrices, mask documents.

Readers validate every declared invariant and raise typed errors; writers
emit canonical bytes so equality checks can be byte-level.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    MalformedHeader,
    SchemaViolation,
    TruncatedPayload,
    UnsupportedFormat,
    VersionUnsupported,
)
from .kernel import FeatureMatrix
from .masking import MaskResult

OVERLAY_GRAY = 128

FEATURE_MAGIC = b"DPPF"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<4sIII")

MASK_SCHEMA_VERSION = 1

_WHITESPACE = b" \t\n\r\x0b\x0c"


# ---------------------------------------------------------------------------
# PGM (P5) / PPM (P6), binary, maxval 255


def _skip_separators(data: bytes, pos: int) -> int:
    # whitespace and '#' comments may appear between header tokens
    n = len(data)
    while pos < n:
        if data[pos] in _WHITESPACE:
            pos += 1
        elif data[pos] == 0x23:  # '#'
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    return pos

def _read_header_int(data: bytes, pos: int, name: str) -> tuple[int, int]:
    pos = _skip_separators(data, pos)
    if pos >= len(data):
        raise MalformedHeader(f"header ended while reading {name}", pos)
    start = pos
    while pos < len(data) and data[pos] not in _WHITESPACE and data[pos] != 0x23:
        pos += 1
    token = data[start:pos]
    if not token.isdigit():
        raise MalformedHeader(f"expected unsigned integer for {name}, got {token!r}", start)
    return int(token), pos

def read_image(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) file with maxval 255.

    Returns a uint8 array of shape H x W x C with C = 1 for P5 and 3 for P6.
    """
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise UnsupportedFormat(f"not a binary PGM/PPM file (magic {magic!r})")
    width, pos = _read_header_int(data, 2, "width")
    height, pos = _read_header_int(data, pos, "height")
    if width < 1:
        raise MalformedHeader("width must be >= 1", pos)
    if height < 1:
        raise MalformedHeader("height must be >= 1", pos)
    maxval, pos = _read_header_int(data, pos, "maxval")
    if maxval != 255:
        raise UnsupportedFormat(f"only maxval 255 is supported, got {maxval}")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data):
        raise MalformedHeader("missing separator before raster", pos)
    if data[pos] not in _WHITESPACE:
        raise MalformedHeader("maxval must be followed by a whitespace byte", pos)
    payload = data[pos + 1 :]
    expected = height * width * channels
    if len(payload) != expected:
        raise TruncatedPayload(
            f"raster length mismatch: header declares {expected} bytes, found {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels).copy()

def _as_pixels(image: np.ndarray) -> np.ndarray:
    a = np.asarray(image)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[2] not in (1, 3):
        raise DimensionMismatch(f"expected H x W x {{1,3}} pixels, got shape {np.asarray(image).shape}")
    if a.dtype != np.uint8:
        if not np.issubdtype(a.dtype, np.integer) or a.min() < 0 or a.max() > 255:
            raise UnsupportedFormat("pixel values must be integers in [0, 255]")
        a = a.astype(np.uint8)
    return a

def write_image(image: np.ndarray, path) -> None:
    """Write uint8 pixels as binary PGM (1 channel) or PPM (3 channels)."""
    a = _as_pixels(image)
    h, w, c = a.shape
    magic = b"P5" if c == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (w, h)
    Path(path).write_bytes(header + a.tobytes())

def write_overlay(image: np.ndarray, result: MaskResult, path) -> None:
    """Write the image with every masked patch replaced by mid-gray."""
    a = _as_pixels(image)
    h, w, c = a.shape
    grid = result.grid
    if (h, w, c) != (grid.image_height, grid.image_width, grid.channels):
        raise DimensionMismatch(
            f"image {h}x{w}x{c} does not match grid "
            f"{grid.image_height}x{grid.image_width}x{grid.channels}"
        )
    out = a.copy()
    p = grid.patch_size
    for idx in result.masked:
        i, j = divmod(int(idx), grid.cols)
        out[i * p : (i + 1) * p, j * p : (j + 1) * p, :] = OVERLAY_GRAY
    write_image(out, path)


# ---------------------------------------------------------------------------
# Feature files: magic DPPF, version 1, u32 dims, float64 LE row-major


def write_features(features, path) -> None:
    """Write a feature matrix losslessly (64-bit little-endian, row-major)."""
    if not isinstance(features, FeatureMatrix):
        features = FeatureMatrix(np.asarray(features, dtype=np.float64))
    rows, cols = features.count, features.dim
    header = _FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, rows, cols)
    payload = np.ascontiguousarray(features.rows, dtype="<f8").tobytes()
    Path(path).write_bytes(header + payload)

def read_features(path) -> FeatureMatrix:
    data = Path(path).read_bytes()
    if len(data) >= 4 and data[:4] != FEATURE_MAGIC:
        raise BadMagic(f"bad feature file magic {data[:4]!r}")
    if len(data) < _FEATURE_HEADER.size:
        raise TruncatedPayload(
            f"feature header needs {_FEATURE_HEADER.size} bytes, found {len(data)}"
        )
    magic, version, rows, cols = _FEATURE_HEADER.unpack_from(data)
    if magic != FEATURE_MAGIC:
        raise BadMagic(f"bad feature file magic {magic!r}")
    if version != FEATURE_VERSION:
        raise VersionUnsupported(f"feature file version {version} not supported")
    if rows < 1:
        raise SchemaViolation("rows", "must be >= 1")
    if cols < 1:
        raise SchemaViolation("cols", "must be >= 1")
    expected = _FEATURE_HEADER.size + rows * cols * 8
    if len(data) != expected:
        raise TruncatedPayload(
            f"payload length mismatch: header declares {expected} bytes total, found {len(data)}"
        )
    values = np.frombuffer(data, dtype="<f8", offset=_FEATURE_HEADER.size)
    return FeatureMatrix(values.astype(np.float64).reshape(rows, cols))


# ---------------------------------------------------------------------------
# Mask documents: canonical JSON, sorted keys, no insignificant whitespace


@dataclass(frozen=True)
class MaskDocument:
    """Serialized mask: grid geometry, config echo, sorted visible indices."""

    schema_version: int
    rows: int
    cols: int
    patch_size: int
    mask_ratio: float
    tau: float
    epsilon: float
    seed: int
    mode: str
    visible: tuple[int, ...]
    greedy_count: int

def document_from_result(result: MaskResult) -> MaskDocument:
    cfg = result.config
    return MaskDocument(
        schema_version=MASK_SCHEMA_VERSION,
        rows=result.grid.rows,
        cols=result.grid.cols,
        patch_size=result.grid.patch_size,
        mask_ratio=float(cfg.mask_ratio),
        tau=float(cfg.tau),
        epsilon=float(cfg.epsilon),
        seed=int(cfg.seed),
        mode=cfg.mode,
        visible=tuple(int(i) for i in result.visible),
        greedy_count=int(result.greedy_count),
    )

_DOCUMENT_FIELDS = (
    "schema_version",
    "rows",
    "cols",
    "patch_size",
    "mask_ratio",
    "tau",
    "epsilon",
    "seed",
    "mode",
    "visible",
    "greedy_count",
)

def _req_int(obj: dict, path: str) -> int:
    v = obj[path]
    # bool is an int subclass; reject it explicitly
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaViolation(path, f"expected integer, got {type(v).__name__}")
    return v

def _req_real(obj: dict, path: str) -> float:
    v = obj[path]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaViolation(path, f"expected number, got {type(v).__name__}")
    if not math.isfinite(v):
        raise SchemaViolation(path, "must be finite")
    return float(v)

def _validate_document(obj: dict) -> MaskDocument:
    for key in _DOCUMENT_FIELDS:
        if key not in obj:
            raise SchemaViolation(key, "missing required field")
    for key in obj:
        if key not in _DOCUMENT_FIELDS:
            raise SchemaViolation(key, "unknown field")

    schema_version = _req_int(obj, "schema_version")
    if schema_version != MASK_SCHEMA_VERSION:
        raise SchemaViolation("schema_version", f"unsupported version {schema_version}")
    rows = _req_int(obj, "rows")
    cols = _req_int(obj, "cols")
    patch_size = _req_int(obj, "patch_size")
    for name, v in (("rows", rows), ("cols", cols), ("patch_size", patch_size)):
        if v < 1:
            raise SchemaViolation(name, "must be >= 1")
    mask_ratio = _req_real(obj, "mask_ratio")
    if not 0.0 <= mask_ratio < 1.0:
        raise SchemaViolation("mask_ratio", "must be in [0, 1)")
    tau = _req_real(obj, "tau")
    if not 0.0 <= tau <= 1.0:
        raise SchemaViolation("tau", "must be in [0, 1]")
    epsilon = _req_real(obj, "epsilon")
    if not epsilon > 0.0:
        raise SchemaViolation("epsilon", "must be positive")
    seed = _req_int(obj, "seed")
    if not 0 <= seed < 1 << 64:
        raise SchemaViolation("seed", "must fit in an unsigned 64-bit value")
    mode = obj["mode"]
    if mode not in ("pixel", "feature"):
        raise SchemaViolation("mode", f"must be 'pixel' or 'feature', got {mode!r}")

    visible = obj["visible"]
    if not isinstance(visible, list):
        raise SchemaViolation("visible", f"expected array, got {type(visible).__name__}")
    n = rows * cols
    if not 1 <= len(visible) <= n:
        raise SchemaViolation("visible", f"length must be in [1, {n}], got {len(visible)}")
    prev = -1
    for i, v in enumerate(visible):
        if isinstance(v, bool) or not isinstance(v, int):
            raise SchemaViolation(f"visible[{i}]", f"expected integer, got {type(v).__name__}")
        if not 0 <= v < n:
            raise SchemaViolation(f"visible[{i}]", f"index {v} out of range for {n} patches")
        if v <= prev:
            raise SchemaViolation(f"visible[{i}]", "indices must be strictly ascending")
        prev = v

    greedy_count = _req_int(obj, "greedy_count")
    if not 0 <= greedy_count <= len(visible):
        raise SchemaViolation("greedy_count", f"must be in [0, {len(visible)}]")

    return MaskDocument(
        schema_version=schema_version,
        rows=rows,
        cols=cols,
        patch_size=patch_size,
        mask_ratio=mask_ratio,
        tau=tau,
        epsilon=epsilon,
        seed=seed,
        mode=mode,
        visible=tuple(visible),
        greedy_count=greedy_count,
    )

def serialize_mask(doc: MaskDocument) -> str:
    """Canonical form: sorted keys, compact separators, no trailing newline."""
    obj = {
        "schema_version": doc.schema_version,
        "rows": doc.rows,
        "cols": doc.cols,
        "patch_size": doc.patch_size,
        "mask_ratio": doc.mask_ratio,
        "tau": doc.tau,
        "epsilon": doc.epsilon,
        "seed": doc.seed,
        "mode": doc.mode,
        "visible": list(doc.visible),
        "greedy_count": doc.greedy_count,
    }
    _validate_document(obj)
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))

def write_mask(doc: MaskDocument, path) -> None:
    Path(path).write_bytes(serialize_mask(doc).encode("ascii"))

def read_mask(path) -> MaskDocument:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as err:
        raise SchemaViolation("$", f"not valid UTF-8: {err}") from None
    try:
        obj = json.loads(text)
    except (json.JSONDecodeError, RecursionError) as err:
        raise SchemaViolation("$", f"invalid JSON: {err}") from None
    if not isinstance(obj, dict):
        raise SchemaViolation("$", f"document must be an object, got {type(obj).__name__}")
    return _validate_document(obj)
