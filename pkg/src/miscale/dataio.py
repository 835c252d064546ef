"""Dataset ingestion and persistence.

Formats
-------
IDX (images)
    big-endian u32 magic ``0x00000803``, u32 count, u32 rows, u32 cols,
    then ``count * rows * cols`` unsigned bytes, row-major.
IDX (labels)
    big-endian u32 magic ``0x00000801``, u32 count, then ``count`` bytes.
MISM
    ``b"MISM"``, u32 LE version (1), u32 LE rows, u32 LE cols, then
    ``rows * cols`` little-endian float32 values, row-major.
CSV
    header ``x0,...,x{n-1}`` then one row per sample, shortest round-trip
    decimal rendering.
"""

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import FormatError
from .grid import GridShape

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
MISM_MAGIC = b"MISM"
MISM_VERSION = 1
GRAY_WEIGHTS = (0.3, 0.59, 0.11)


@dataclass(frozen=True, eq=False)
class ImageDataset:
    """Flattened images on a grid.

    ``raw`` datasets hold byte intensities in ``[0, 255]``; prepared ones
    hold values in ``[0, 1]``.
    """

    images: np.ndarray
    shape: GridShape
    raw: bool = False

    def __post_init__(self):
        X = np.asarray(self.images, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("images must be a nonempty (count, pixels) array")
        if X.shape[1] != self.shape.total:
            raise ValueError(f"{X.shape[1]} pixels per image do not fit a {self.shape} grid")
        hi = 255.0 if self.raw else 1.0
        if not np.all(np.isfinite(X)) or X.min() < 0.0 or X.max() > hi:
            raise ValueError(f"pixel values must lie in [0, {hi:g}]")
        object.__setattr__(self, "images", X)

    def __len__(self):
        return self.images.shape[0]


def _read_exact(fh, n, what, offset):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated {what} at offset {offset}: wanted {n} bytes, got {len(data)}")
    return data


def _idx_header(fh, expected_magic, n_dims, path):
    raw = fh.read(4)
    if len(raw) != 4:
        raise FormatError(f"{path}: truncated magic at offset 0")
    (magic,) = struct.unpack(">I", raw)
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    dims = []
    for k in range(n_dims):
        offset = 4 + 4 * k
        (v,) = struct.unpack(">I", _read_exact(fh, 4, f"{path} header", offset))
        dims.append(v)
    return dims


def load_idx_images(path):
    """Parse an IDX image file into a raw :class:`ImageDataset` (values 0-255).

    Raises
    ------
    FormatError
        On wrong magic, a truncated payload or an implausible size; the
        message names the byte offset.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        count, rows, cols = _idx_header(fh, IDX_IMAGE_MAGIC, 3, path)
        n = count * rows * cols
        if rows == 0 or cols == 0 or n > 2**34:
            raise FormatError(f"{path}: implausible dimensions {count}x{rows}x{cols} at offset 4")
        payload = fh.read(n)
        if len(payload) != n:
            raise FormatError(f"{path}: truncated pixel data at offset {16 + len(payload)}: expected {n} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    return ImageDataset(pixels.astype(np.float64), GridShape(rows, cols), raw=True)


def load_idx_labels(path):
    """Parse an IDX label file into a uint8 vector."""
    path = Path(path)
    with open(path, "rb") as fh:
        (count,) = _idx_header(fh, IDX_LABEL_MAGIC, 1, path)
        payload = fh.read(count)
        if len(payload) != count:
            raise FormatError(f"{path}: truncated label data at offset {8 + len(payload)}")
    return np.frombuffer(payload, dtype=np.uint8).copy()


def write_idx_images(path, images):
    """Write a ``(count, rows, cols)`` uint8 array as an IDX image file."""
    arr = np.asarray(images)
    if arr.ndim != 3:
        raise ValueError("images must be (count, rows, cols)")
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise ValueError("IDX pixels must be bytes")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, *arr.shape))
        fh.write(arr.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    arr = np.asarray(labels, dtype=np.uint8).ravel()
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, arr.size))
        fh.write(arr.tobytes())


def rgb_to_grayscale(r, g, b):
    """Weighted luminance ``0.3 R + 0.59 G + 0.11 B`` of values in [0, 1].

    Accepts scalars or arrays.
    """
    r, g, b = (np.asarray(c, dtype=np.float64) for c in (r, g, b))
    for c in (r, g, b):
        if not np.all(np.isfinite(c)) or np.any(c < 0.0) or np.any(c > 1.0):
            raise ValueError("colour channels must lie in [0, 1]")
    wr, wg, wb = GRAY_WEIGHTS
    out = np.clip(wr * r + wg * g + wb * b, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def center_crop(d, target):
    """Crop every image to the centred ``target`` window.

    Odd margins put the extra row/column on the bottom/right.
    """
    target = GridShape.parse(target)
    src = d.shape
    if target.height > src.height or target.width > src.width:
        raise ValueError(f"cannot crop {src} to the larger {target}")
    top = (src.height - target.height) // 2
    left = (src.width - target.width) // 2
    cube = d.images.reshape(-1, src.height, src.width)
    out = cube[:, top:top + target.height, left:left + target.width].reshape(-1, target.total)
    return ImageDataset(out, target, raw=d.raw)


def rescale_unit(d):
    """Map byte intensities ``0..255`` onto ``[0, 1]``."""
    return ImageDataset(d.images / 255.0, d.shape, raw=False)


def prepare_images(matrix, source_shape, channels=1, target=None, scale=255.0):
    """Turn a raw pixel matrix into a prepared :class:`ImageDataset`.

    ``matrix`` rows hold ``h * w * channels`` values with channels
    interleaved per pixel. Colour input is rescaled, converted to grayscale,
    then centre-cropped to ``target``.
    """
    source_shape = GridShape.parse(source_shape)
    X = np.asarray(matrix, dtype=np.float64)
    if X.shape[1] != source_shape.total * channels:
        raise FormatError(
            f"rows hold {X.shape[1]} values; {source_shape} with {channels} channel(s) needs "
            f"{source_shape.total * channels}"
        )
    X = X / scale
    if channels == 3:
        rgb = X.reshape(X.shape[0], source_shape.total, 3)
        X = rgb_to_grayscale(rgb[..., 0], rgb[..., 1], rgb[..., 2])
    elif channels != 1:
        raise ValueError("channels must be 1 or 3")
    d = ImageDataset(X, source_shape)
    if target is not None:
        d = center_crop(d, target)
    return d


def save_matrix(m, path, format=None):
    """Write a sample matrix as MISM binary or CSV (chosen by suffix if omitted).

    MISM stores float32, so only float32-representable values round-trip
    bit-exactly. NaN or infinite entries are refused.
    """
    X = np.asarray(m)
    if X.ndim != 2:
        raise ValueError("sample matrix must be 2-D")
    if not np.all(np.isfinite(X)):
        raise ValueError("refusing to save non-finite values")
    fmt = format or ("csv" if str(path).endswith(".csv") else "bin")
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(MISM_MAGIC)
            fh.write(struct.pack("<III", MISM_VERSION, *X.shape))
            fh.write(np.ascontiguousarray(X, dtype="<f4").tobytes())
    elif fmt == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{j}" for j in range(X.shape[1])])
            for row in X.astype(np.float64):
                w.writerow([repr(float(v)) for v in row])
    else:
        raise ValueError(f"unknown matrix format {fmt!r}")


def load_matrix(path):
    """Read a matrix written by :func:`save_matrix`, detecting the format.

    MISM data come back as float32, CSV data as float64.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if len(head) == 0:
            raise FormatError(f"{path}: empty file")
        if head == MISM_MAGIC:
            version, rows, cols = struct.unpack("<III", _read_exact(fh, 12, f"{path} header", 4))
            if version != MISM_VERSION:
                raise FormatError(f"{path}: unsupported MISM version {version} at offset 4")
            n = rows * cols * 4
            payload = fh.read(n)
            if len(payload) != n:
                raise FormatError(f"{path}: truncated MISM payload at offset {16 + len(payload)}")
            if fh.read(1):
                raise FormatError(f"{path}: trailing bytes after offset {16 + n}")
            return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)
    return _load_csv(path)


def _load_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    header = rows[0]
    if header != [f"x{j}" for j in range(len(header))] or not header:
        raise FormatError(f"{path}: header must be x0,...,x{{n-1}}")
    out = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise FormatError(f"{path}:{i + 2}: ragged row ({len(row)} fields, expected {len(header)})")
        try:
            out[i] = [float(v) for v in row]
        except ValueError as exc:
            raise FormatError(f"{path}:{i + 2}: {exc}") from None
    return out
