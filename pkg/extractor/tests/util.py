"""Shared test helpers."""

from __future__ import annotations

import subprocess
import sys
from pathlib import Path

# The consumer is driven strictly over its public CLI; nothing in this
# package or its tests imports it.
COSAL = (sys.executable, "-m", "cosal.cli")


def run_cosal(*args) -> subprocess.CompletedProcess:
    return subprocess.run(
        [*COSAL, *[str(a) for a in args]], capture_output=True, text=True
    )


def snapshot(directory: Path) -> dict[str, bytes]:
    """Filename -> bytes for every regular file in a directory."""
    return {
        path.name: path.read_bytes()
        for path in sorted(Path(directory).iterdir())
        if path.is_file()
    }


def mask_iou(a, b) -> float:
    import numpy as np

    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.logical_or(a, b).sum()
    return float(np.logical_and(a, b).sum()) / float(union) if union else 0.0
