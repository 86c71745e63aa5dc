"""Image and raw-tensor I/O with deterministic on-disk formats.

Two formats are supported:

* 8-bit PNG (grayscale or RGB) for human-viewable artifacts; pixel byte b
  maps to b/255 on load, and values round to the nearest byte on save.
* "MPTF" raw tensors for bit-exact intermediates: magic ``MPTF``,
  u32 version=1, u32 ndim, ndim x u64 dims, then float32 payload,
  everything little-endian.
"""
import struct

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, FormatError, NumericalError, UnsupportedError

MAGIC = b"MPTF"
VERSION = 1

# Guard against absurd headers before allocating.
_MAX_ELEMENTS = 1 << 32


def validate_tensor(data):
    """Reject non-float arrays and non-finite values."""
    arr = np.asarray(data)
    if arr.size == 0:
        raise FormatError("tensor has no elements")
    if not np.issubdtype(arr.dtype, np.floating):
        raise FormatError(f"tensor dtype must be floating, got {arr.dtype}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError("tensor contains NaN or Inf")
    return arr


def validate_image(data, min_side=8):
    """Check the (H, W, C) image contract: C in {1, 3}, values in [0, 1]."""
    arr = validate_tensor(data)
    if arr.ndim != 3:
        raise UnsupportedError(f"image must be (H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape
    if c not in (1, 3):
        raise UnsupportedError(f"channel count must be 1 or 3, got {c}")
    if h < min_side or w < min_side:
        raise UnsupportedError(f"image sides must be >= {min_side}, got {h}x{w}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise NumericalError("image values must lie in [0, 1]")
    return arr


def save_png(path, image):
    """Quantize a [0, 1] image to 8-bit PNG. Deterministic byte output."""
    arr = validate_image(image)
    bytes_ = np.clip(np.rint(arr.astype(np.float64) * 255.0), 0, 255).astype(np.uint8)
    if bytes_.shape[2] == 1:
        img = Image.fromarray(bytes_[:, :, 0], mode="L")
    else:
        img = Image.fromarray(bytes_, mode="RGB")
    img.save(path, format="PNG")


def load_png(path):
    """Load an 8-bit PNG as a float32 (H, W, C) array in [0, 1]."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode not in ("L", "RGB"):
                raise UnsupportedError(f"PNG mode {mode} not supported (need L or RGB)")
            arr = np.asarray(img, dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"cannot decode PNG at {path}: {exc}") from exc
    except (OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode PNG at {path}: {exc}") from exc
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return (arr.astype(np.float32) / np.float32(255.0)).astype(np.float32)


def save_raw(path, tensor):
    """Write a float tensor in the MPTF format (bit-exact round trip)."""
    arr = validate_tensor(tensor)
    payload = np.ascontiguousarray(arr, dtype="<f4")
    header = MAGIC + struct.pack("<II", VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())


def load_raw(path):
    """Read an MPTF tensor; rejects bad magic, truncation, and NaN/Inf."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: missing MPTF magic")
    version, ndim = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if ndim == 0:
        raise FormatError(f"{path}: zero-dimensional tensor")
    header_end = 12 + 8 * ndim
    if len(blob) < header_end:
        raise FormatError(f"{path}: truncated dim table")
    dims = struct.unpack_from(f"<{ndim}Q", blob, 12)
    count = 1
    for d in dims:
        if d == 0:
            raise FormatError(f"{path}: zero-sized dim")
        count *= d
        if count > _MAX_ELEMENTS:
            raise FormatError(f"{path}: dim overflow ({dims})")
    if len(blob) != header_end + 4 * count:
        raise FormatError(
            f"{path}: payload size {len(blob) - header_end} != {4 * count}")
    arr = np.frombuffer(blob, dtype="<f4", offset=header_end).reshape(dims)
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{path}: payload contains NaN or Inf")
    return arr.astype(np.float32)
