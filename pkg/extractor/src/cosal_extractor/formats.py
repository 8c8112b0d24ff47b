"""Reading and writing the group-directory interchange format.

One directory per image group:

    manifest.json                     group_id, config echo, image entries
    masks_<image_id>.json             [{mask_id, predicted_iou, rle}, ...]
    attention_<image_id>.f32          raw little-endian float32, row-major
    prototypes_<image_id>.f32         K x d float32 matrix
    prototypes_<image_id>.index.json  the K mask_ids, one per matrix row
    prototype_requests.json           written by the consumer, answered here

Masks are run-length encoded in row-major scan order: runs alternate
background/foreground and the first run counts background pixels (zero
when the raster starts with foreground). Only the leading run may be
zero, so every raster has exactly one encoding.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ExtractorError

MANIFEST_NAME = "manifest.json"
REQUESTS_NAME = "prototype_requests.json"

_F32 = np.dtype("<f4")


def masks_filename(image_id: str) -> str:
    return f"masks_{image_id}.json"


def attention_filename(image_id: str) -> str:
    return f"attention_{image_id}.f32"


def prototypes_filename(image_id: str) -> str:
    return f"prototypes_{image_id}.f32"


def prototype_index_filename(image_id: str) -> str:
    return f"prototypes_{image_id}.index.json"


def rle_encode(grid: np.ndarray) -> dict:
    """Encode a boolean raster as a canonical RLE object."""
    grid = np.asarray(grid, dtype=bool)
    if grid.ndim != 2 or grid.size == 0:
        raise ExtractorError(f"mask raster must be 2-d and non-empty, got shape {grid.shape}")
    flat = grid.ravel()
    # Boundaries where the pixel value changes; runs are the gaps between them.
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    height, width = grid.shape
    return {"width": width, "height": height, "runs": runs}


def rle_decode(obj: Mapping) -> np.ndarray:
    """Decode an RLE object to a boolean (height, width) raster."""
    try:
        width, height = int(obj["width"]), int(obj["height"])
        runs = [int(r) for r in obj["runs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ExtractorError(f"malformed rle object: {exc}")
    if sum(runs) != width * height:
        raise ExtractorError(f"rle runs sum to {sum(runs)}, expected {width * height}")
    flat = np.zeros(width * height, dtype=bool)
    pos, value = 0, False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(height, width)


def write_masks_file(
    directory: Path, image_id: str, proposals: Sequence[tuple[str, np.ndarray, float]]
) -> Path:
    """Write (mask_id, raster, predicted_iou) triples as a masks file."""
    entries = [
        {"mask_id": mask_id, "predicted_iou": float(iou), "rle": rle_encode(grid)}
        for mask_id, grid, iou in proposals
    ]
    path = directory / masks_filename(image_id)
    path.write_text(json.dumps(entries, indent=2) + "\n")
    return path


def read_masks_file(directory: Path, image_id: str) -> dict[str, np.ndarray]:
    """Map each mask_id in an image's masks file to its decoded raster."""
    path = directory / masks_filename(image_id)
    try:
        entries = json.loads(path.read_text())
    except FileNotFoundError:
        raise ExtractorError(f"missing file: {path}")
    except json.JSONDecodeError as exc:
        raise ExtractorError(f"unparseable JSON in {path}: {exc}")
    return {str(e["mask_id"]): rle_decode(e["rle"]) for e in entries}


def write_attention_file(directory: Path, image_id: str, values: np.ndarray) -> Path:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ExtractorError(f"attention grid must be 2-d, got shape {values.shape}")
    path = directory / attention_filename(image_id)
    path.write_bytes(values.astype(_F32).tobytes())
    return path


def write_prototype_table(
    directory: Path, image_id: str, ids: Sequence[str], matrix: np.ndarray
) -> Path:
    """Write a prototype matrix and its row index, in the given order."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(ids) or not ids:
        raise ExtractorError(
            f"prototype matrix shape {matrix.shape} does not fit {len(ids)} mask_ids"
        )
    path = directory / prototypes_filename(image_id)
    path.write_bytes(matrix.astype(_F32).tobytes())
    index_path = directory / prototype_index_filename(image_id)
    index_path.write_text(json.dumps(list(ids), indent=2) + "\n")
    return path


def write_manifest(
    directory: Path, group_id: str, config_echo: Mapping, image_entries: Sequence[Mapping]
) -> Path:
    path = directory / MANIFEST_NAME
    payload = {
        "group_id": group_id,
        "config": dict(config_echo),
        "images": list(image_entries),
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def image_entry(image_id: str, width: int, height: int, att_rows: int, att_cols: int) -> dict:
    return {
        "image_id": image_id,
        "width": width,
        "height": height,
        "attention": {
            "file": attention_filename(image_id),
            "rows": att_rows,
            "cols": att_cols,
        },
        "masks_file": masks_filename(image_id),
    }


def read_requests(directory: Path) -> list[dict]:
    """Parse prototype_requests.json into per-image request entries."""
    path = directory / REQUESTS_NAME
    try:
        payload = json.loads(path.read_text())
    except FileNotFoundError:
        raise ExtractorError(f"no prototype requests at {path}")
    except json.JSONDecodeError as exc:
        raise ExtractorError(f"unparseable JSON in {path}: {exc}")
    if not isinstance(payload, Mapping) or not isinstance(payload.get("requests"), list):
        raise ExtractorError(f"{path} must hold a requests list")
    return list(payload["requests"])
