"""Overlay rendering for predictions."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .rle import rle_decode, rle_encode
from .types import BinaryMask

# Fixed palette so renders are reproducible.
CANVAS_GRAY = 72
FILL_COLOR = (227, 66, 52)
FILL_ALPHA = 0.45
OUTLINE_COLOR = (255, 214, 0)

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _erode(grid: np.ndarray) -> np.ndarray:
    padded = np.pad(grid, 1, constant_values=False)
    return (
        padded[1:-1, 1:-1]
        & padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )


def render_overlay(mask: BinaryMask, base: np.ndarray | None = None) -> np.ndarray:
    """Blend a mask onto a source image or a flat canvas.

    The foreground is tinted, its one-pixel boundary drawn solid. An
    empty mask leaves the canvas untouched.
    """
    if base is None:
        base = np.full((mask.height, mask.width, 3), CANVAS_GRAY, dtype=np.uint8)
    else:
        base = np.asarray(base, dtype=np.uint8)
        if base.ndim == 2:
            base = np.stack([base] * 3, axis=-1)
        if base.shape[:2] != (mask.height, mask.width):
            resized = Image.fromarray(base).resize(
                (mask.width, mask.height), Image.NEAREST
            )
            base = np.asarray(resized, dtype=np.uint8)

    grid = rle_decode(mask)
    out = base.astype(np.float64)
    fill = np.array(FILL_COLOR, dtype=np.float64)
    out[grid] = out[grid] * (1.0 - FILL_ALPHA) + fill * FILL_ALPHA
    outline = grid & ~_erode(grid)
    out[outline] = np.array(OUTLINE_COLOR, dtype=np.float64)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _find_base(images_dir: Path | None, image_id: str) -> np.ndarray | None:
    if images_dir is None:
        return None
    for suffix in _IMAGE_SUFFIXES:
        candidate = images_dir / f"{image_id}{suffix}"
        if candidate.exists():
            with Image.open(candidate) as img:
                return np.asarray(img.convert("RGB"), dtype=np.uint8)
    return None


def viz(
    group_dir: str | Path,
    out_dir: str | Path | None = None,
    images_dir: str | Path | None = None,
) -> list[Path]:
    """Render every prediction in a group directory.

    Overlays go to ``out_dir`` (default: <group>/viz) as
    overlay_<image_id>.png, drawn over the matching file from
    ``images_dir`` when one exists and a flat canvas otherwise.
    """
    group_dir = Path(group_dir)
    out_dir = Path(out_dir) if out_dir is not None else group_dir / "viz"
    images_dir = Path(images_dir) if images_dir is not None else None
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    for path in sorted(group_dir.glob("prediction_*.png")):
        image_id = path.stem[len("prediction_"):]
        with Image.open(path) as img:
            grid = np.asarray(img.convert("L")) >= 128
        mask = rle_encode(grid)
        overlay = render_overlay(mask, _find_base(images_dir, image_id))
        target = out_dir / f"overlay_{image_id}.png"
        Image.fromarray(overlay).save(target, format="PNG")
        written.append(target)
    if not written:
        raise FileNotFoundError(f"no prediction_*.png files in {group_dir}")
    return written
