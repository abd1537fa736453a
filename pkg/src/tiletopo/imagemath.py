"""Differential image structure: gradient maps, edge maps, correlations.

These primitives feed both the structural losses and the edge-based
similarity metric. All statistics are population statistics (divide by n),
and correlations are stabilized with small positive constants so that
flat regions degrade smoothly instead of dividing by zero.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .validation import (
    ConfigError,
    ShapeError,
    as_image,
    check_min_size,
    check_same_shape,
    check_single_channel,
)

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def gradient_map(img):
    """Forward-difference gradient magnitude of a single-channel image.

    For an M-by-N image ``f`` the horizontal and vertical differences are

        g_x(i, j) = f(i, j + 1) - f(i, j)
        g_y(i, j) = f(i + 1, j) - f(i, j)

    and the result is ``sqrt(g_x**2 + g_y**2)`` on the common grid, an
    (M-1)-by-(N-1) array. Requires M, N >= 2.
    """
    img = as_image(img)
    check_single_channel(img, "gradient_map input")
    check_min_size(img, 2, 2, "gradient_map input")
    gx = img[:-1, 1:] - img[:-1, :-1]
    gy = img[1:, :-1] - img[:-1, :-1]
    return np.sqrt(gx ** 2 + gy ** 2)


def flatten_progressive(arr):
    """Flatten an array by progressive (row-major) scanning."""
    return np.asarray(arr).ravel(order="C")


@dataclass(frozen=True)
class CorrelationTerms:
    """Population statistics behind one stabilized correlation evaluation."""

    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    sigma_xy: float
    rho: float
    theta: float

    @property
    def product(self):
        return self.rho * self.theta


def stabilized_abs_correlation(x, y, c1, c2=None):
    """Stabilized absolute Pearson correlation of two equal-length vectors.

    Parameters
    ----------
    x, y : array_like
        Input vectors; multidimensional arrays are flattened by progressive
        scanning first.
    c1 : float
        Positive stabilizer added to both the absolute covariance and the
        product of standard deviations.
    c2 : float, optional
        Stabilizer for the mean-agreement factor theta. When omitted, theta
        is not meaningful on its own and c1 is reused.

    Returns
    -------
    CorrelationTerms
        With ``rho = (|sigma_xy| + c1) / (sigma_x * sigma_y + c1)`` and
        ``theta = (2 mu_x mu_y + c2) / (mu_x**2 + mu_y**2 + c2)``. All
        moments are population moments.
    """
    if c1 <= 0:
        raise ConfigError(f"c1 must be positive, got {c1!r}")
    if c2 is None:
        c2 = c1
    elif c2 <= 0:
        raise ConfigError(f"c2 must be positive, got {c2!r}")
    xv = flatten_progressive(np.asarray(x, dtype=np.float64))
    yv = flatten_progressive(np.asarray(y, dtype=np.float64))
    if xv.shape != yv.shape:
        raise ShapeError(f"vectors must match in length: {xv.shape} vs {yv.shape}")
    if xv.size == 0:
        raise ShapeError("correlation of empty vectors is undefined")
    mu_x = float(np.mean(xv))
    mu_y = float(np.mean(yv))
    dx = xv - mu_x
    dy = yv - mu_y
    sigma_x = float(np.sqrt(np.mean(dx ** 2)))
    sigma_y = float(np.sqrt(np.mean(dy ** 2)))
    sigma_xy = float(np.mean(dx * dy))
    rho = (abs(sigma_xy) + c1) / (sigma_x * sigma_y + c1)
    theta = (2.0 * mu_x * mu_y + c2) / (mu_x ** 2 + mu_y ** 2 + c2)
    return CorrelationTerms(mu_x, mu_y, sigma_x, sigma_y, sigma_xy, rho, theta)


def columnwise_abs_correlation(a, b, c):
    """Stabilized absolute column correlations between two equal-shape arrays.

    Returns a length-N vector whose j-th entry is
    ``(|cov(a[:, j], b[:, j])| + c) / (std(a[:, j]) std(b[:, j]) + c)``
    using population moments.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b, "first array", "second array")
    if a.ndim != 2:
        raise ShapeError(f"expected 2-D arrays, got shape {a.shape}")
    if c <= 0:
        raise ConfigError(f"stabilizer must be positive, got {c!r}")
    da = a - a.mean(axis=0)
    db = b - b.mean(axis=0)
    cov = np.mean(da * db, axis=0)
    sa = np.sqrt(np.mean(da ** 2, axis=0))
    sb = np.sqrt(np.mean(db ** 2, axis=0))
    return (np.abs(cov) + c) / (sa * sb + c)


def rowwise_abs_correlation(a, b, c):
    """Row-axis counterpart of :func:`columnwise_abs_correlation`."""
    return columnwise_abs_correlation(np.asarray(a).T, np.asarray(b).T, c)


def _gaussian_kernel_1d(sigma, radius=2):
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def canny_edges(img, sigma=1.4, low=50.0, high=150.0):
    """Binary edge map of a single-channel image.

    The pipeline is fixed: 5x5 Gaussian smoothing, unnormalized 3x3 Sobel
    differences, gradient magnitude ``sqrt(gx**2 + gy**2)``, non-maximum
    suppression against the two neighbors along one of four quantized
    gradient directions, then two-threshold hysteresis where weak pixels
    survive only when 8-connected to a strong pixel. Borders are handled
    by edge replication, so adding a constant to the image changes nothing.

    Parameters
    ----------
    img : array_like, shape (M, N), with M, N >= 5
    sigma : float
        Smoothing width. Kernel support stays 5x5.
    low, high : float
        Hysteresis thresholds on the suppressed magnitude, ``low < high``.

    Returns
    -------
    ndarray of uint8, shape (M, N)
        Ones on edge pixels, zeros elsewhere. The one-pixel border is
        always zero.
    """
    img = as_image(img)
    check_single_channel(img, "canny input")
    check_min_size(img, 5, 5, "canny input")
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma!r}")
    if not (0 <= low < high):
        raise ConfigError(f"thresholds must satisfy 0 <= low < high, got {low!r}, {high!r}")

    k1 = _gaussian_kernel_1d(sigma)
    smoothed = ndimage.correlate1d(img, k1, axis=0, mode="nearest")
    smoothed = ndimage.correlate1d(smoothed, k1, axis=1, mode="nearest")

    gx = ndimage.correlate(smoothed, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(smoothed, SOBEL_Y, mode="nearest")
    mag = np.sqrt(gx ** 2 + gy ** 2)

    suppressed = _nonmax_suppress(mag, gx, gy)

    strong = suppressed >= high
    weak = suppressed >= low
    if not strong.any():
        return np.zeros(img.shape, dtype=np.uint8)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    keep = keep[keep != 0]
    edges = np.isin(labels, keep) & weak
    return edges.astype(np.uint8)


# Quantized gradient directions: (row step, col step) toward the positive
# side of the gradient. Index comes from folding the gradient angle into
# [0, pi) and rounding to the nearest multiple of pi/4.
_DIRECTIONS = ((0, 1), (1, 1), (1, 0), (1, -1))


def _nonmax_suppress(mag, gx, gy):
    m, n = mag.shape
    angle = np.mod(np.arctan2(gy, gx), np.pi)
    sector = np.mod(np.rint(angle / (np.pi / 4.0)).astype(np.intp), 4)
    out = np.zeros_like(mag)
    inner = np.s_[1:m - 1, 1:n - 1]
    for idx, (dr, dc) in enumerate(_DIRECTIONS):
        fwd = mag[1 + dr:m - 1 + dr, 1 + dc:n - 1 + dc]
        back = mag[1 - dr:m - 1 - dr, 1 - dc:n - 1 - dc]
        here = mag[inner]
        # Asymmetric tie handling keeps exactly one pixel of a two-wide
        # plateau: survive a tie with the forward neighbor, lose one with
        # the backward neighbor.
        keep = (sector[inner] == idx) & (here >= fwd) & (here > back)
        out[inner][keep] = here[keep]
    return out
