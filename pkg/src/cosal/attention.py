"""Resampling and normalization of attention grids."""

from __future__ import annotations

import numpy as np

from .types import AttentionMap


def _source_positions(n_src: int, n_dst: int) -> np.ndarray:
    # Corner-aligned sampling: first and last output samples coincide with
    # the first and last input samples, everything between is evenly spaced.
    if n_dst == 1:
        return np.array([0.5 * (n_src - 1)])
    return np.arange(n_dst, dtype=np.float64) * (n_src - 1) / (n_dst - 1)


def resample_attention(att: AttentionMap, width: int, height: int) -> AttentionMap:
    """Bilinearly resample an attention grid to ``height`` x ``width``.

    Identity dimensions return the values bit for bit. Interpolated
    values never leave the input's [min, max] range.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"target dimensions must be positive, got {width}x{height}")
    if (att.rows, att.cols) == (height, width):
        return AttentionMap(rows=height, cols=width, values=att.values.copy())

    ys = _source_positions(att.rows, height)
    xs = _source_positions(att.cols, width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, att.rows - 1)
    x1 = np.minimum(x0 + 1, att.cols - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]

    rows = att.values[y0, :] * (1.0 - wy) + att.values[y1, :] * wy
    out = rows[:, x0] * (1.0 - wx) + rows[:, x1] * wx
    return AttentionMap(rows=height, cols=width, values=out)


def normalize_attention(att: AttentionMap) -> AttentionMap:
    """Min-max normalize to [0, 1]; a constant map becomes all 0.5."""
    lo = float(att.values.min())
    hi = float(att.values.max())
    if hi == lo:
        values = np.full((att.rows, att.cols), 0.5)
    else:
        values = (att.values - lo) / (hi - lo)
    return AttentionMap(rows=att.rows, cols=att.cols, values=values)
