"""
Loaders for the real two-view benchmarks.

MNIST images come as IDX files (big-endian header, unsigned-byte pixels,
optionally gzipped) and are split into left/right halves.  MEDIAMILL and
MFEAT views come as delimited text tables.  Every view is min-max scaled
to [0, 1]; nothing is centered here.
"""
import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
DATA_ROOT_ENV = "DISTCCA_DATA"


class IdxFormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DelimitedParseError(ValueError):
    def __init__(self, message, path, line):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass
class ViewPair:
    name: str
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("views must have the same number of rows")

    @property
    def dx(self):
        return self.X.shape[1]

    @property
    def dy(self):
        return self.Y.shape[1]

    @property
    def N(self):
        return self.X.shape[0]


def _read_bytes(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def load_idx_images(path, return_shape=False):
    """Parse an IDX3 image file into an ``N x (H*W)`` float array in [0, 1].

    Row ``i`` is image ``i`` flattened row-major.  Gzipped files are
    detected by their magic bytes.
    """
    raw = _read_bytes(path)
    if len(raw) < 16:
        raise IdxFormatError("truncated IDX header", len(raw))
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise IdxFormatError(f"bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}", 0)
    expected = 16 + count * rows * cols
    if len(raw) < expected:
        raise IdxFormatError(
            f"payload holds {len(raw) - 16} bytes, header promises {count * rows * cols}",
            len(raw))
    if len(raw) > expected:
        raise IdxFormatError("trailing bytes after image payload", expected)
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = pixels.reshape(count, rows * cols).astype(float) / 255.0
    if return_shape:
        return images, (rows, cols)
    return images


def write_idx_images(path, images):
    """Write a uint8 array of shape ``(N, H, W)`` as an uncompressed IDX3 file."""
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w))
        fh.write(images.tobytes())


def split_halves(images, width=28, name="mnist") -> ViewPair:
    """Left half of every image row becomes ``X``, the right half ``Y``."""
    images = np.asarray(images, dtype=float)
    if images.ndim != 2 or images.shape[1] != width * width:
        raise ValueError(f"expected {width * width} pixels per image, got {images.shape}")
    if width % 2:
        raise ValueError("width must be even to split into halves")
    grid = images.reshape(images.shape[0], width, width)
    half = width // 2
    X = grid[:, :, :half].reshape(images.shape[0], -1)
    Y = grid[:, :, half:].reshape(images.shape[0], -1)
    return ViewPair(name, np.ascontiguousarray(X), np.ascontiguousarray(Y))


def join_halves(pair: ViewPair, width=28):
    """Inverse of :func:`split_halves`."""
    half = width // 2
    n = pair.N
    grid = np.concatenate([pair.X.reshape(n, width, half),
                           pair.Y.reshape(n, width, half)], axis=2)
    return grid.reshape(n, width * width)


def minmax_scale(A):
    """Scale each column to [0, 1]; constant columns become 0."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return A.copy()
    lo = A.min(axis=0)
    span = A.max(axis=0) - lo
    out = np.zeros_like(A)
    ok = span > 0
    out[:, ok] = (A[:, ok] - lo[ok]) / span[ok]
    return out


def read_delimited(path, delimiter=",", skip_header=False):
    """Parse a numeric table; ``delimiter=None`` splits on runs of whitespace."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if skip_header and lineno == 1:
                continue
            text = line.strip()
            if not text:
                continue
            fields = text.split(delimiter) if delimiter is not None else text.split()
            try:
                values = [float(f) for f in fields]
            except ValueError as err:
                raise DelimitedParseError(f"non-numeric field ({err})", path, lineno) from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DelimitedParseError(
                    f"expected {width} fields, found {len(values)}", path, lineno)
            rows.append(values)
    return np.array(rows, dtype=float).reshape(len(rows), width or 0)


def load_delimited_views(path_x, path_y, delimiter=",", skip_header=False,
                         name="views") -> ViewPair:
    X = read_delimited(path_x, delimiter, skip_header)
    Y = read_delimited(path_y, delimiter, skip_header)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row counts differ: {X.shape[0]} vs {Y.shape[0]}")
    return ViewPair(name, minmax_scale(X), minmax_scale(Y))


def data_root(root=None):
    root = root or os.environ.get(DATA_ROOT_ENV)
    if not root:
        raise FileNotFoundError(f"no dataset root given and ${DATA_ROOT_ENV} is unset")
    return root


def _first_existing(root, names):
    for name in names:
        path = os.path.join(root, name)
        if os.path.exists(path):
            return path
    raise FileNotFoundError(f"none of {names} found under {root}")


def find_mnist(root=None):
    return _first_existing(data_root(root), [
        "train-images-idx3-ubyte", "train-images-idx3-ubyte.gz",
        "train-images.idx3-ubyte", os.path.join("mnist", "train-images-idx3-ubyte"),
        os.path.join("mnist", "train-images-idx3-ubyte.gz")])


def load_mnist(path=None, root=None) -> ViewPair:
    images, (rows, cols) = load_idx_images(path or find_mnist(root), return_shape=True)
    if rows != cols:
        raise ValueError(f"expected square images, got {rows}x{cols}")
    return split_halves(images, width=cols, name="mnist")


def load_mfeat(root=None, path_x=None, path_y=None) -> ViewPair:
    """The ``mfeat-fac`` (x) and ``mfeat-pix`` (y) views, whitespace delimited."""
    if path_x is None or path_y is None:
        base = data_root(root)
        path_x = path_x or _first_existing(base, ["mfeat-fac", os.path.join("mfeat", "mfeat-fac")])
        path_y = path_y or _first_existing(base, ["mfeat-pix", os.path.join("mfeat", "mfeat-pix")])
    return load_delimited_views(path_x, path_y, delimiter=None, name="mfeat")


def load_mediamill(path_x, path_y, delimiter=",", skip_header=False) -> ViewPair:
    """Label table (x) and feature table (y); file variants are the caller's choice."""
    return load_delimited_views(path_x, path_y, delimiter, skip_header, name="mediamill")
