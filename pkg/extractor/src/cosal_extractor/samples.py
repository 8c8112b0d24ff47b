"""Two bundled sample images with ground truth.

Deterministic renders stand in for photographs so the package stays
small and the expected masks are exact: each image holds one bright
disk of the shared color (the co-salient object), a dimmer distractor
unique to that image, and a noisy gradient background. Ground truth is
the disk predicate itself, saved as gt_<image_id>.png alongside the
images.

Run ``python3 -m cosal_extractor.samples <dir>`` to regenerate.
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

SEED = 20240814
SIZE = 128

# The co-salient object: same color in every sample.
_DISK_COLOR = np.array([214.0, 196.0, 88.0])
_SHADING = 20.0


def _canvas(top: tuple, bottom: tuple, rng: np.random.Generator) -> np.ndarray:
    t = np.linspace(0.0, 1.0, SIZE)[:, None, None]
    base = (1.0 - t) * np.asarray(top, dtype=np.float64) + t * np.asarray(bottom, dtype=np.float64)
    canvas = np.broadcast_to(base, (SIZE, SIZE, 3)).copy()
    canvas += rng.uniform(-6.0, 6.0, size=canvas.shape)
    return canvas


def _disk(cy: int, cx: int, radius: int) -> np.ndarray:
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius * radius


def _paint_disk(canvas: np.ndarray, mask: np.ndarray, cy: int, cx: int, radius: int,
                rng: np.random.Generator) -> None:
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2) / radius
    shade = (_DISK_COLOR[None, None, :] - _SHADING * dist[:, :, None]) + rng.uniform(
        -5.0, 5.0, size=canvas.shape
    )
    canvas[mask] = shade[mask]


def render_samples() -> dict[str, np.ndarray]:
    """Filename -> array for both samples and their ground truths."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(SEED)))

    a = _canvas((30, 34, 48), (70, 64, 68), rng)
    disk_a = _disk(60, 72, 34)
    _paint_disk(a, disk_a, 60, 72, 34, rng)
    a[8:30, 96:118] = np.array([90.0, 90.0, 95.0]) + rng.uniform(-4.0, 4.0, size=(22, 22, 3))

    b = _canvas((70, 36, 30), (40, 36, 54), rng)
    disk_b = _disk(48, 44, 30)
    _paint_disk(b, disk_b, 48, 44, 30, rng)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    ellipse = ((yy - 96) / 12.0) ** 2 + ((xx - 96) / 18.0) ** 2 <= 1.0
    b[ellipse] = np.array([120.0, 60.0, 56.0]) + rng.uniform(-4.0, 4.0, size=(SIZE, SIZE, 3))[ellipse]

    return {
        "sample_a.png": np.clip(a, 0, 255).astype(np.uint8),
        "gt_sample_a.png": disk_a.astype(np.uint8) * 255,
        "sample_b.png": np.clip(b, 0, 255).astype(np.uint8),
        "gt_sample_b.png": disk_b.astype(np.uint8) * 255,
    }


def write_samples(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, array in render_samples().items():
        mode = "RGB" if array.ndim == 3 else "L"
        path = directory / name
        Image.fromarray(array, mode=mode).save(path, format="PNG")
        written.append(path)
    return written


def sample_dir() -> Path:
    """Directory of the bundled sample PNGs."""
    return Path(str(resources.files(__package__) / "samples"))


if __name__ == "__main__":
    for path in write_samples(sys.argv[1]):
        print(path)
