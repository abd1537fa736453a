"""Input validation helpers shared across the package."""

import numbers

import numpy as np


class ShapeError(ValueError):
    """Array has the wrong shape for the requested operation."""


class ChannelError(ValueError):
    """Array has an unsupported channel layout."""


class DimensionError(ValueError):
    """Image dimensions are incompatible with the requested geometry."""


class ConfigError(ValueError):
    """A configuration value is out of its documented range."""


def as_image(arr, name="image"):
    """Coerce ``arr`` to a float64 image array and validate its layout.

    Accepts 2-D arrays (single channel) and 3-D arrays with one or three
    channels. A trailing singleton channel axis is squeezed so that
    single-channel images are always 2-D.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        pass
    elif a.ndim == 3:
        if a.shape[2] != 3:
            raise ChannelError(
                f"{name}: expected 1 or 3 channels, got {a.shape[2]}"
            )
    else:
        raise ShapeError(f"{name}: expected a 2-D or 3-D array, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name}: empty image with shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: contains non-finite values")
    return a


def channel_count(img):
    return 1 if img.ndim == 2 else img.shape[2]


def check_same_shape(a, b, name_a="first", name_b="second"):
    if a.shape != b.shape:
        raise ShapeError(
            f"{name_a} and {name_b} must share a shape; "
            f"got {a.shape} vs {b.shape}"
        )


def check_single_channel(img, name="image"):
    if img.ndim != 2:
        raise ChannelError(f"{name}: expected a single-channel image, got shape {img.shape}")


def check_min_size(img, min_rows, min_cols, name="image"):
    if img.shape[0] < min_rows or img.shape[1] < min_cols:
        raise DimensionError(
            f"{name}: need at least {min_rows}x{min_cols} pixels, got "
            f"{img.shape[0]}x{img.shape[1]}"
        )


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ConfigError(f"{name} must be a positive finite number, got {value!r}")


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ConfigError(f"{name} must be a non-negative finite number, got {value!r}")


def check_unit_interval(value, name, low_open=False, high_open=False):
    lo_ok = value > 0 if low_open else value >= 0
    hi_ok = value < 1 if high_open else value <= 1
    if not isinstance(value, numbers.Real) or not (lo_ok and hi_ok):
        raise ConfigError(f"{name} must lie in the unit interval, got {value!r}")
