"""Grayscale image plumbing.

Images are plain 2-D ``float64`` numpy arrays holding luminance in [0, 1].
This module provides the direct down-sampling operator and its adjoint,
the patch geometry used by every patch-based stage, and PGM/PNG I/O.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    """Raised when image dimensions are incompatible with an operator."""


def as_image(a) -> np.ndarray:
    img = np.asarray(a, dtype=np.float64)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite samples")
    return img


def clamp(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0)


def _check_divisible(shape, factor):
    if factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    for axis, n in zip(("height", "width"), shape):
        if n % factor:
            raise DimensionError(
                f"{axis} {n} is not divisible by factor {factor}")


def downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Keep every ``factor``-th pixel starting at (0, 0)."""
    img = np.asarray(img, dtype=np.float64)
    _check_divisible(img.shape, factor)
    return img[::factor, ::factor].copy()


def downsample_adjoint(lr: np.ndarray, factor: int, hr_shape=None) -> np.ndarray:
    """Scatter LR samples onto the HR grid; zeros elsewhere."""
    lr = np.asarray(lr, dtype=np.float64)
    expected = (lr.shape[0] * factor, lr.shape[1] * factor)
    if hr_shape is not None and tuple(hr_shape) != expected:
        raise DimensionError(
            f"LR shape {lr.shape} with factor {factor} implies HR shape "
            f"{expected}, got {tuple(hr_shape)}")
    out = np.zeros(expected)
    out[::factor, ::factor] = lr
    return out


def sample_mask(hr_shape, factor: int) -> np.ndarray:
    """Boolean HR mask of the pixels retained by ``downsample``."""
    _check_divisible(hr_shape, factor)
    mask = np.zeros(hr_shape, dtype=bool)
    mask[::factor, ::factor] = True
    return mask


def crop_to_multiple(img: np.ndarray, factor: int) -> np.ndarray:
    """Center-crop so both dimensions are multiples of ``factor``."""
    h, w = img.shape
    nh, nw = h - h % factor, w - w % factor
    if nh == 0 or nw == 0:
        raise DimensionError(f"image {h}x{w} is smaller than the factor {factor}")
    top, left = (h - nh) // 2, (w - nw) // 2
    return img[top:top + nh, left:left + nw]


def _axis_origins(n: int, p: int, stride: int) -> np.ndarray:
    if n < p:
        raise DimensionError(f"image side {n} smaller than patch size {p}")
    origins = list(range(0, n - p + 1, stride))
    if origins[-1] != n - p:
        origins.append(n - p)
    return np.array(origins, dtype=np.intp)


@dataclass(frozen=True)
class PatchSystem:
    """Geometry of the overlapping ``p x p`` patches covering an image.

    Origins form a grid: row origins ``0, s, 2s, ...`` plus a final origin
    clamped to ``height - p`` when the stride does not land on it (same for
    columns). Patch ``i`` is numbered in raster order of its origin, and
    patch vectors are the row-major flattening of the window.
    """

    shape: tuple
    patch_size: int = 5
    stride: int = 1
    row_origins: np.ndarray = field(init=False, repr=False)
    col_origins: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not 1 <= self.stride <= self.patch_size:
            # a stride wider than the patch would leave uncovered pixels
            raise ValueError("stride must lie in [1, patch_size]")
        shape = tuple(int(n) for n in self.shape)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "row_origins",
                           _axis_origins(shape[0], self.patch_size, self.stride))
        object.__setattr__(self, "col_origins",
                           _axis_origins(shape[1], self.patch_size, self.stride))

    @property
    def grid_shape(self) -> tuple:
        return len(self.row_origins), len(self.col_origins)

    @property
    def count(self) -> int:
        return len(self.row_origins) * len(self.col_origins)

    @property
    def origins(self) -> np.ndarray:
        rr, cc = np.meshgrid(self.row_origins, self.col_origins, indexing="ij")
        return np.stack([rr.ravel(), cc.ravel()], axis=1)

    @property
    def centers(self) -> np.ndarray:
        return self.origins + self.patch_size // 2

    def origin(self, i: int):
        if not 0 <= i < self.count:
            raise IndexError(f"patch index {i} out of range [0, {self.count})")
        nc = len(self.col_origins)
        return int(self.row_origins[i // nc]), int(self.col_origins[i % nc])

    def _check(self, img):
        if img.shape != self.shape:
            raise DimensionError(
                f"image shape {img.shape} does not match patch system {self.shape}")

    def extract(self, img: np.ndarray, i: int) -> np.ndarray:
        self._check(img)
        r, c = self.origin(i)
        p = self.patch_size
        return img[r:r + p, c:c + p].ravel().copy()

    def place(self, vec: np.ndarray, i: int) -> np.ndarray:
        """Adjoint of ``extract`` for a single patch (zeros elsewhere)."""
        p = self.patch_size
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (p * p,):
            raise DimensionError(f"patch vector must have length {p * p}")
        r, c = self.origin(i)
        out = np.zeros(self.shape)
        out[r:r + p, c:c + p] = vec.reshape(p, p)
        return out

    def extract_all(self, img: np.ndarray) -> np.ndarray:
        """All patches as a ``(K, p*p)`` array."""
        self._check(img)
        p = self.patch_size
        win = np.lib.stride_tricks.sliding_window_view(img, (p, p))
        win = win[np.ix_(self.row_origins, self.col_origins)]
        return win.reshape(self.count, p * p).copy()

    def aggregate(self, patches: np.ndarray):
        """Sum patches back onto the image grid.

        Returns ``(total, counts)`` where ``counts`` is the per-pixel overlap
        multiplicity, i.e. the diagonal of ``sum_i R_i^T R_i``.
        """
        patches = np.asarray(patches, dtype=np.float64)
        return self._accumulate(patches, np.float64), self.counts()

    def average(self, patches: np.ndarray) -> np.ndarray:
        """Per-pixel mean of the overlapping patches.

        Sums run in extended precision, where up to 2**11 copies of one
        double add exactly, so ``average(extract_all(x)) == x`` bit for bit
        (on platforms whose long double is wider than double).
        """
        total = self._accumulate(np.asarray(patches, dtype=np.float64), np.longdouble)
        return (total / self.counts()).astype(np.float64)

    def _accumulate(self, patches, dtype):
        p = self.patch_size
        if patches.shape != (self.count, p * p):
            raise DimensionError(
                f"expected patches of shape {(self.count, p * p)}, got {patches.shape}")
        nr, nc = self.grid_shape
        blocks = patches.reshape(nr, nc, p, p)
        total = np.zeros(self.shape, dtype=dtype)
        for dr in range(p):
            for dc in range(p):
                # origins are distinct along each axis, so fancy += is safe
                total[np.ix_(self.row_origins + dr, self.col_origins + dc)] += \
                    blocks[:, :, dr, dc]
        return total

    def counts(self) -> np.ndarray:
        p = self.patch_size
        rows = np.zeros(self.shape[0])
        cols = np.zeros(self.shape[1])
        for d in range(p):
            rows[self.row_origins + d] += 1
            cols[self.col_origins + d] += 1
        return np.outer(rows, cols)


# -- I/O ---------------------------------------------------------------------

def _pgm_tokens(data: bytes):
    """Yield header tokens and the offset just past the last one."""
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm_bytes(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data)
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: only binary PGM (P5) is supported")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height,
                           offset=offset)
    return raster.reshape(height, width).copy()


def write_pgm_bytes(path, pixels: np.ndarray) -> None:
    pixels = np.asarray(pixels)
    if pixels.dtype != np.uint8 or pixels.ndim != 2:
        raise ValueError("expected a 2-D uint8 array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(pixels).tobytes())


def to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] luminance to 8 bits, rounding halves up."""
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def quantize(img: np.ndarray) -> np.ndarray:
    """Round-trip through the 8-bit representation used on disk."""
    return to_uint8(img) / 255.0


def read_image(path) -> np.ndarray:
    """Load a PGM (P5) or 8-bit PNG as [0, 1] luminance."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return read_pgm_bytes(path) / 255.0
    from PIL import Image
    with Image.open(path) as im:
        if im.mode not in ("L", "RGB", "RGBA", "P", "LA"):
            raise ValueError(f"{path}: unsupported image mode {im.mode}")
        return np.asarray(im.convert("L"), dtype=np.float64) / 255.0


def write_image(path, img: np.ndarray) -> None:
    write_pgm_bytes(path, to_uint8(img))
