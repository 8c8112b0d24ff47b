"""Shared builders for tests: tiny masks, records, and random fixtures."""

from __future__ import annotations

import numpy as np

from cosal.consensus import PrototypeBank
from cosal.rle import rle_encode
from cosal.types import (
    AttentionMap,
    BinaryMask,
    GroupRecord,
    ImageRecord,
    MaskProposal,
    PrototypeVector,
)


def grid_of(rows) -> np.ndarray:
    return np.array(rows, dtype=bool)


def mask_of(rows) -> BinaryMask:
    return rle_encode(grid_of(rows))


def rect_mask(width: int, height: int, x0: int, y0: int, x1: int, y1: int) -> BinaryMask:
    grid = np.zeros((height, width), dtype=bool)
    grid[y0:y1, x0:x1] = True
    return rle_encode(grid)


def rect_grid(width: int, height: int, x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    grid = np.zeros((height, width), dtype=bool)
    grid[y0:y1, x0:x1] = True
    return grid


def proposal(mask_id: str, mask: BinaryMask, iou: float = 0.9) -> MaskProposal:
    return MaskProposal(mask_id=mask_id, mask=mask, predicted_iou=iou)


def attention_of(values) -> AttentionMap:
    arr = np.asarray(values, dtype=np.float64)
    return AttentionMap(rows=arr.shape[0], cols=arr.shape[1], values=arr)


def image_record(
    image_id: str,
    width: int,
    height: int,
    proposals,
    attention: AttentionMap,
    prototypes: dict[str, np.ndarray] | None = None,
) -> ImageRecord:
    protos = {
        mask_id: PrototypeVector(image_id=image_id, mask_id=mask_id, values=vec)
        for mask_id, vec in (prototypes or {}).items()
    }
    return ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        proposals=tuple(proposals),
        attention=attention,
        prototypes=protos,
    )


def group_of(group_id: str, *images: ImageRecord) -> GroupRecord:
    return GroupRecord(group_id=group_id, images=tuple(images))


def random_raster(rng: np.random.Generator, max_dim: int = 64) -> np.ndarray:
    height = int(rng.integers(1, max_dim + 1))
    width = int(rng.integers(1, max_dim + 1))
    density = rng.choice([0.0, 0.1, 0.5, 0.9, 1.0])
    return rng.random((height, width)) < density


def random_blob(rng: np.random.Generator, size: int) -> np.ndarray:
    """A random filled rectangle or ellipse on a size x size grid."""
    grid = np.zeros((size, size), dtype=bool)
    if rng.random() < 0.5:
        x0, y0 = rng.integers(0, size - 2, size=2)
        x1 = int(rng.integers(x0 + 1, size))
        y1 = int(rng.integers(y0 + 1, size))
        grid[y0:y1, x0:x1] = True
    else:
        cx, cy = rng.uniform(2, size - 2, size=2)
        rx, ry = rng.uniform(1.5, size / 2.2, size=2)
        yy, xx = np.mgrid[0:size, 0:size]
        grid = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    return grid


def random_proposal_set(
    rng: np.random.Generator, max_masks: int = 30, size: int = 24
) -> list[MaskProposal]:
    """Random proposals stressing the containment filter.

    Mixes independent blobs with exact duplicates and eroded subsets so
    tie-break and containment branches all fire.
    """
    n = int(rng.integers(1, max_masks + 1))
    grids: list[np.ndarray] = []
    while len(grids) < n:
        roll = rng.random()
        if grids and roll < 0.15:
            grids.append(grids[int(rng.integers(0, len(grids)))].copy())
        elif grids and roll < 0.35:
            base = grids[int(rng.integers(0, len(grids)))]
            shrunk = base & np.roll(base, (1, 1), axis=(0, 1))
            if shrunk.any():
                grids.append(shrunk)
                continue
            grids.append(base.copy())
        else:
            blob = random_blob(rng, size)
            if blob.any():
                grids.append(blob)
    return [
        MaskProposal(
            mask_id=f"m{i:02d}",
            mask=rle_encode(g),
            predicted_iou=float(rng.uniform(0.3, 1.0)),
        )
        for i, g in enumerate(grids)
    ]


def random_bank(
    rng: np.random.Generator,
    max_images: int = 5,
    max_candidates: int = 6,
    max_dim: int = 32,
    plant_ties: bool = True,
) -> PrototypeBank:
    """A random unit-vector bank; sometimes plants shared directions.

    With ``plant_ties`` off, every row is an independent draw. Exact
    duplicates score identically within one similarity matrix but can
    differ in the last ulp across differently ordered matrices, so
    cross-ordering comparisons need tie-free banks.
    """
    n_images = int(rng.integers(2, max_images + 1))
    dim = int(rng.integers(2, max_dim + 1))
    share = plant_ties and rng.random() < 0.4
    shared = rng.standard_normal(dim)
    shared /= np.linalg.norm(shared)
    rows, owners, mask_ids = [], [], []
    for image_index in range(n_images):
        count = int(rng.integers(1, max_candidates + 1))
        for rank in range(count):
            # Duplicates stay bitwise identical: renormalizing a unit row
            # perturbs it by an ulp and turns exact ties into coin flips.
            if share and rank == 0:
                vec = shared.copy()
            elif plant_ties and rng.random() < 0.15 and rows:
                vec = rows[int(rng.integers(0, len(rows)))].copy()
            else:
                vec = rng.standard_normal(dim)
                vec /= np.linalg.norm(vec)
            rows.append(vec)
            owners.append(image_index)
            mask_ids.append(f"i{image_index}c{rank}")
    return PrototypeBank(
        vectors=np.vstack(rows),
        owners=tuple(owners),
        image_ids=tuple(f"img{i}" for i in range(n_images)),
        mask_ids=tuple(mask_ids),
    )


def integer_tie_bank(
    rng: np.random.Generator,
    max_images: int = 5,
    max_candidates: int = 6,
    dim: int = 8,
) -> PrototypeBank:
    """A bank of +/-1 vectors with many duplicated rows.

    Every similarity is a small integer, exact in float arithmetic on
    any computation route, so planted duplicates tie exactly and the
    first-occurrence tie-break is genuinely exercised.
    """
    n_images = int(rng.integers(2, max_images + 1))
    rows, owners, mask_ids = [], [], []
    for image_index in range(n_images):
        count = int(rng.integers(1, max_candidates + 1))
        for rank in range(count):
            if rows and rng.random() < 0.35:
                vec = rows[int(rng.integers(0, len(rows)))].copy()
            else:
                vec = rng.choice([-1.0, 1.0], size=dim)
            rows.append(vec)
            owners.append(image_index)
            mask_ids.append(f"i{image_index}c{rank}")
    return PrototypeBank(
        vectors=np.vstack(rows),
        owners=tuple(owners),
        image_ids=tuple(f"img{i}" for i in range(n_images)),
        mask_ids=tuple(mask_ids),
    )


def pixel_iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else 1.0
