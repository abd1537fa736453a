"""Pixel-level tile operations: luminance, tiling, resizing, PNG I/O.

The tiling workflow mirrors how large scanned map sheets are prepared for
model consumption: a big image is cut into a k-by-k grid, each piece is
optionally resized to a working resolution, and generated pieces are later
reassembled in row-major order.
"""

from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .validation import (
    ChannelError,
    DimensionError,
    ShapeError,
    as_image,
    check_single_channel,
)

# BT.601 luma coefficients.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def to_luminance(img):
    """Collapse an RGB image to single-channel luminance.

    Parameters
    ----------
    img : array_like, shape (M, N, 3)
        RGB image on the 8-bit scale.

    Returns
    -------
    ndarray, shape (M, N)
        ``0.299 R + 0.587 G + 0.114 B``, float64, not quantized.
    """
    img = as_image(img)
    if img.ndim != 3:
        raise ChannelError("to_luminance expects a 3-channel image")
    r, g, b = img[:, :, 0], img[:, :, 1], img[:, :, 2]
    return LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b


@dataclass
class TileGrid:
    """A row-major grid of equally sized tiles cut from one image."""

    rows: int
    cols: int
    tiles: list = field(default_factory=list)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ShapeError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if len(self.tiles) != self.rows * self.cols:
            raise ShapeError(
                f"grid of {self.rows}x{self.cols} needs {self.rows * self.cols} "
                f"tiles, got {len(self.tiles)}"
            )
        first = self.tiles[0].shape
        for idx, t in enumerate(self.tiles):
            if t.shape != first:
                raise ShapeError(
                    f"tile {idx} has shape {t.shape}, expected {first} like tile 0"
                )

    @property
    def tile_shape(self):
        return self.tiles[0].shape

    def tile(self, row, col):
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError(f"tile ({row}, {col}) outside {self.rows}x{self.cols} grid")
        return self.tiles[row * self.cols + col]

    def map(self, fn):
        """Apply ``fn`` to every tile, preserving grid layout."""
        return TileGrid(self.rows, self.cols, [as_image(fn(t)) for t in self.tiles])


def crop_grid(img, k):
    """Cut ``img`` into a k-by-k grid of equally sized tiles.

    Both image dimensions must be divisible by ``k``; otherwise a
    :class:`DimensionError` naming M, N and k is raised. Tiles are views
    copied out of the source, ordered row-major.
    """
    img = as_image(img)
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise DimensionError(f"k must be a positive integer, got {k!r}")
    m, n = img.shape[0], img.shape[1]
    if m % k != 0 or n % k != 0:
        raise DimensionError(
            f"image of {m}x{n} pixels cannot be cut into a {k}x{k} grid: "
            f"M={m}, N={n} must both be divisible by k={k}"
        )
    th, tw = m // k, n // k
    tiles = []
    for i in range(k):
        for j in range(k):
            tiles.append(img[i * th:(i + 1) * th, j * tw:(j + 1) * tw].copy())
    return TileGrid(k, k, tiles)


def stitch(grid):
    """Reassemble a :class:`TileGrid` into one image, row-major."""
    if not isinstance(grid, TileGrid):
        raise TypeError("stitch expects a TileGrid")
    rows = []
    for i in range(grid.rows):
        rows.append(np.concatenate(
            [grid.tile(i, j) for j in range(grid.cols)], axis=1))
    return np.concatenate(rows, axis=0)


def resize(img, target):
    """Bilinearly resample ``img`` to ``target`` pixels on each side.

    Sampling uses pixel-center alignment and evaluates each output pixel as
    ``v0 + w * (v1 - v0)`` along each axis, so constant images are preserved
    exactly. Output values are clipped to [0, 255].

    Parameters
    ----------
    img : array_like
        Single- or three-channel image.
    target : int or (int, int)
        Output height and width; a scalar means a square output.

    Returns
    -------
    ndarray
        Resampled image with the same channel count as the input.
    """
    img = as_image(img)
    if isinstance(target, (int, np.integer)):
        out_h, out_w = int(target), int(target)
    else:
        out_h, out_w = int(target[0]), int(target[1])
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"target size must be positive, got {(out_h, out_w)}")
    m, n = img.shape[0], img.shape[1]

    def _axis_coords(src, dst):
        pos = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        pos = np.clip(pos, 0.0, src - 1.0)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, src - 1)
        return lo, hi, pos - lo

    ri, rj, rw = _axis_coords(m, out_h)
    ci, cj, cw = _axis_coords(n, out_w)

    single = img.ndim == 2
    data = img[:, :, np.newaxis] if single else img
    top = data[ri][:, ci] + cw[np.newaxis, :, np.newaxis] * (data[ri][:, cj] - data[ri][:, ci])
    bot = data[rj][:, ci] + cw[np.newaxis, :, np.newaxis] * (data[rj][:, cj] - data[rj][:, ci])
    out = top + rw[:, np.newaxis, np.newaxis] * (bot - top)
    out = np.clip(out, 0.0, 255.0)
    return out[:, :, 0] if single else out


def read_png(path):
    """Load a PNG as a float64 array on the 8-bit scale.

    Grayscale files load as ``(M, N)``; everything else is converted to RGB
    and loads as ``(M, N, 3)``.
    """
    with Image.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64)
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr


def write_png(img, path):
    """Write an image to PNG, rounding to the nearest 8-bit level."""
    img = as_image(img)
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path, format="PNG")


def luminance_or_self(img):
    """Return ``img`` unchanged if single-channel, else its luminance."""
    img = as_image(img)
    return img if img.ndim == 2 else to_luminance(img)
