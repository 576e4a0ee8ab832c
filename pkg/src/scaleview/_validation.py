"""Input validation helpers shared by the public functions and estimators."""

import numpy as np

from .exceptions import DimensionMismatch, NonFiniteValue, ScaleviewError


def check_image(img, name="image"):
    """Return ``img`` as a float64 H x W x C array with values in [0, 1].

    2-D input is treated as a single-channel image.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DimensionMismatch(f"{name} must be H x W or H x W x C, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ScaleviewError(f"{name} values must lie in [0, 1]")
    return arr


def check_depth(depth, name="depth"):
    arr = np.asarray(depth, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be H x W, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains non-finite values")
    if np.any(arr <= 0):
        raise ScaleviewError(f"{name} must be strictly positive")
    return arr


def check_grid(grid, name="grid", lo=None, hi=None):
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains non-finite values")
    if lo is not None and arr.size and arr.min() < lo:
        raise ScaleviewError(f"{name} values must be >= {lo}")
    if hi is not None and arr.size and arr.max() > hi:
        raise ScaleviewError(f"{name} values must be <= {hi}")
    return arr


def check_binary(mask, name="mask"):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.all(np.isin(arr, (0, 1))):
            raise ScaleviewError(f"{name} must be binary (0/1)")
        arr = arr.astype(bool)
    return arr


def check_same_shape(*arrays, names=None, exc=DimensionMismatch):
    shapes = [np.shape(a) for a in arrays]
    if any(s != shapes[0] for s in shapes[1:]):
        label = ", ".join(names) if names else "inputs"
        raise exc(f"{label} must share a shape, got {shapes}")


def check_finite(value, name="value"):
    if not np.all(np.isfinite(value)):
        raise NonFiniteValue(f"{name} is not finite")
    return value
