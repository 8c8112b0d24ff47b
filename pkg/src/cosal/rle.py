"""Run-length codec for binary masks.

The encoding is row-major: the raster is scanned row by row, and runs
alternate background/foreground starting with the background count. A
raster that begins with foreground therefore encodes with a leading
zero. Example: the 2x2 raster

    T F
    F T

flattens to [T, F, F, T] and encodes as (0, 1, 2, 1).
"""

from __future__ import annotations

import numpy as np

from .types import BinaryMask


def rle_encode(grid: np.ndarray) -> BinaryMask:
    """Encode a 2-D boolean grid into its unique run-length form."""
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError(f"expected a non-empty 2-D grid, got shape {grid.shape}")
    flat = grid.astype(bool).ravel()
    # Boundaries sit wherever the flattened value changes.
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    height, width = grid.shape
    return BinaryMask(width=width, height=height, runs=tuple(runs))


def rle_decode(mask: BinaryMask) -> np.ndarray:
    """Expand a run-length mask back into a 2-D boolean grid."""
    n_runs = len(mask.runs)
    values = (np.arange(n_runs) % 2).astype(bool)  # background first
    flat = np.repeat(values, mask.runs)
    return flat.reshape(mask.height, mask.width)


def mask_area(mask: BinaryMask) -> int:
    """Number of foreground pixels, read straight off the runs."""
    return int(sum(mask.runs[1::2]))


def intersection_area(a: BinaryMask, b: BinaryMask) -> int:
    """Foreground overlap in pixels between two same-size masks."""
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(
            f"mask dimensions differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    return int(np.count_nonzero(np.logical_and(rle_decode(a), rle_decode(b))))
