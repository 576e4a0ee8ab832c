"""Fixed colormaps for the PNG visualizations written by the CLI.

``heat``: black -> red -> yellow -> white over [0, vmax]; invalid pixels black.
``diverging``: blue (negative) -> white (0) -> red (positive), symmetric range.
"""

import numpy as np

_HEAT = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]], dtype=np.float64)


def heat(values, valid=None, vmax=None):
    v = np.asarray(values, dtype=np.float64)
    valid = np.isfinite(v) if valid is None else np.asarray(valid, dtype=bool) & np.isfinite(v)
    if vmax is None:
        vmax = v[valid].max() if valid.any() else 1.0
    t = np.clip(np.where(valid, v, 0.0) / (vmax or 1.0), 0, 1) * (len(_HEAT) - 1)
    i = np.minimum(t.astype(int), len(_HEAT) - 2)
    f = (t - i)[..., None]
    rgb = _HEAT[i] * (1 - f) + _HEAT[i + 1] * f
    return np.where(valid[..., None], rgb, 0.0)


def diverging(values):
    v = np.asarray(values, dtype=np.float64)
    finite = np.isfinite(v)
    span = np.abs(v[finite]).max() if finite.any() else 1.0
    t = np.clip(np.where(finite, v, np.sign(v)) / (span or 1.0), -1, 1)[..., None]
    white = np.ones(3)
    red = np.array([0.8, 0.1, 0.1])
    blue = np.array([0.1, 0.2, 0.8])
    return np.where(t >= 0, white * (1 - t) + red * t, white * (1 + t) - blue * t)


def overlay(pred, gt, threshold=0.5):
    """Green true positives, red false positives, blue misses, black background."""
    p = np.asarray(pred) >= threshold
    g = np.asarray(gt).astype(bool)
    rgb = np.zeros(p.shape + (3,))
    rgb[p & g] = (0.1, 0.8, 0.1)
    rgb[p & ~g] = (0.9, 0.1, 0.1)
    rgb[~p & g] = (0.1, 0.3, 0.9)
    return rgb
