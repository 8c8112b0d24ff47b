"""Seeded synthetic groups with planted ground truth, plus naive
reference implementations used to cross-check the fast paths.

Every image of a generated group contains one planted co-salient object
whose prototype is drawn from a cluster shared across the group, at
least one distractor that is equally salient but semantically unrelated,
a background segment covering everything else, and assorted spurious and
trivial proposals. The planted proposal passes the default quality
thresholds by construction, so a correct pipeline should recover it.

Randomness comes from NumPy's PCG64 bit generator (the PCG XSL RR
128/64 algorithm, O'Neill 2014) seeded through SeedSequence, so a seed
pins the generated bytes on any platform. Attention maps are produced at
quarter resolution to force the resample path downstream.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .interchange import write_group_dir
from .quality import overlap_filter  # noqa: F401  (re-exported for comparison tests)
from .consensus import PrototypeBank
from .rle import rle_decode, rle_encode
from .types import (
    FALLBACK_MASK_ID,
    AttentionMap,
    BinaryMask,
    GroupRecord,
    ImageRecord,
    MaskProposal,
    PrototypeVector,
)
from typing import Sequence

GT_PREFIX = "gt_"
PLANTED_NAME = "planted.json"

# Anchor positions (fractions of width/height) for the planted object and
# up to three distractors. Spread out so same-image blobs stay far below
# the containment threshold.
_PLANTED_SPOT = (0.30, 0.38)
_DISTRACTOR_SPOTS = ((0.70, 0.66), (0.68, 0.28), (0.30, 0.76))


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic scene generator."""

    seed: int
    n_images: int = 5
    width: int = 96
    height: int = 96
    n_distractors: int = 1
    boundary_jitter_px: float = 1.0   # proposal placement error, in pixels
    n_spurious: int = 4
    n_trivial: int = 2
    prototype_dim: int = 32
    prototype_noise: float = 0.05     # std of Gaussian noise before renormalizing
    attention_peak: float = 1.0       # amplitude added on salient objects
    attention_noise: float = 0.08     # background noise amplitude

    def __post_init__(self) -> None:
        if self.n_images < 1:
            raise ValueError("need at least one image")
        if self.width % 4 or self.height % 4 or self.width < 32 or self.height < 32:
            raise ValueError("image dimensions must be multiples of 4, at least 32")
        if self.n_distractors < 1 or self.n_distractors > len(_DISTRACTOR_SPOTS):
            raise ValueError(f"n_distractors must be in 1..{len(_DISTRACTOR_SPOTS)}")
        if self.prototype_dim < 2:
            raise ValueError("prototype_dim must be at least 2")


def derive_group_seed(base_seed: int, group_index: int) -> int:
    """Stable per-group seed for batch generation."""
    state = np.random.SeedSequence([base_seed, group_index]).generate_state(1)
    return int(state[0])


def _ellipse(width: int, height: int, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    return ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0


def _erode(grid: np.ndarray, iterations: int = 1) -> np.ndarray:
    out = grid
    for _ in range(iterations):
        padded = np.pad(out, 1, constant_values=False)
        out = (
            padded[1:-1, 1:-1]
            & padded[:-2, 1:-1]
            & padded[2:, 1:-1]
            & padded[1:-1, :-2]
            & padded[1:-1, 2:]
        )
    return out


def _unit(vector: np.ndarray) -> np.ndarray:
    return vector / np.linalg.norm(vector)


def _cluster_draw(rng: np.random.Generator, center: np.ndarray, noise: float) -> np.ndarray:
    return _unit(center + noise * rng.standard_normal(center.size))


def _jittered(
    rng: np.random.Generator,
    config: SynthConfig,
    cx: float,
    cy: float,
    rx: float,
    ry: float,
) -> np.ndarray:
    j = config.boundary_jitter_px
    dx, dy = rng.uniform(-j, j, size=2)
    sx, sy = 1.0 + rng.uniform(-0.02, 0.02, size=2) * j
    return _ellipse(config.width, config.height, cx + dx, cy + dy, rx * sx, ry * sy)


def _radii(rng: np.random.Generator, config: SynthConfig, lo: float, hi: float) -> tuple[float, float]:
    target = rng.uniform(lo, hi) * config.width * config.height
    aspect = rng.uniform(0.78, 1.28)
    rx = float(np.sqrt(target * aspect / np.pi))
    ry = float(np.sqrt(target / (aspect * np.pi)))
    return rx, ry


def _place_blob(
    rng: np.random.Generator,
    config: SynthConfig,
    occupied: np.ndarray,
    lo: float,
    hi: float,
) -> np.ndarray:
    # Rejection-sample a spot that stays mostly clear of existing objects.
    for _ in range(25):
        rx, ry = _radii(rng, config, lo, hi)
        cx = rng.uniform(0.12, 0.88) * config.width
        cy = rng.uniform(0.12, 0.88) * config.height
        blob = _ellipse(config.width, config.height, cx, cy, rx, ry)
        area = int(blob.sum())
        if area == 0:
            continue
        if int((blob & occupied).sum()) <= 0.3 * area:
            return blob
    return blob


def _build_image(
    rng: np.random.Generator,
    config: SynthConfig,
    image_id: str,
    co_center: np.ndarray,
) -> tuple[ImageRecord, BinaryMask, str]:
    """Generate one image; returns (record, true planted mask, planted id)."""
    width, height = config.width, config.height

    rx, ry = _radii(rng, config, 0.17, 0.26)
    cx = (_PLANTED_SPOT[0] + rng.uniform(-0.02, 0.02)) * width
    cy = (_PLANTED_SPOT[1] + rng.uniform(-0.02, 0.02)) * height
    planted_true = _ellipse(width, height, cx, cy, rx, ry)
    planted_proposal = _jittered(rng, config, cx, cy, rx, ry)

    distractors_true = []
    distractor_proposals = []
    for spot in _DISTRACTOR_SPOTS[: config.n_distractors]:
        drx, dry = _radii(rng, config, 0.16, 0.22)
        dcx = (spot[0] + rng.uniform(-0.02, 0.02)) * width
        dcy = (spot[1] + rng.uniform(-0.02, 0.02)) * height
        distractors_true.append(_ellipse(width, height, dcx, dcy, drx, dry))
        distractor_proposals.append(_jittered(rng, config, dcx, dcy, drx, dry))

    occupied = planted_true.copy()
    for d in distractors_true:
        occupied |= d

    spurious = []
    for _ in range(config.n_spurious):
        blob = _place_blob(rng, config, occupied, 0.02, 0.05)
        spurious.append(blob)
        occupied |= blob

    trivial = []
    for _ in range(config.n_trivial):
        px = int(rng.integers(2, width - 2))
        py = int(rng.integers(2, height - 2))
        dot = np.zeros((height, width), dtype=bool)
        dot[py, px] = True
        if rng.random() < 0.5:
            dot[py, px + 1] = True
        trivial.append(dot)
        occupied |= dot

    background = ~occupied
    eroded = _erode(planted_proposal, iterations=2)

    # (role, grid, predicted_iou, prototype vector)
    entries: list[tuple[str, np.ndarray, float, np.ndarray]] = []
    entries.append(
        (
            "planted",
            planted_proposal,
            float(rng.uniform(0.88, 0.96)),
            _cluster_draw(rng, co_center, config.prototype_noise),
        )
    )
    entries.append(
        (
            "eroded",
            eroded,
            float(rng.uniform(0.78, 0.88)),
            _cluster_draw(rng, co_center, config.prototype_noise),
        )
    )
    for proposal in distractor_proposals:
        own_center = _unit(rng.standard_normal(config.prototype_dim))
        entries.append(
            (
                "distractor",
                proposal,
                float(rng.uniform(0.84, 0.94)),
                _cluster_draw(rng, own_center, config.prototype_noise),
            )
        )
    for blob in spurious:
        entries.append(
            (
                "spurious",
                blob,
                float(rng.uniform(0.50, 0.72)),
                _unit(rng.standard_normal(config.prototype_dim)),
            )
        )
    for dot in trivial:
        entries.append(
            (
                "trivial",
                dot,
                float(rng.uniform(0.30, 0.60)),
                _unit(rng.standard_normal(config.prototype_dim)),
            )
        )
    entries.append(
        (
            "background",
            background,
            float(rng.uniform(0.50, 0.62)),
            _unit(rng.standard_normal(config.prototype_dim)),
        )
    )

    order = list(range(len(entries)))
    rng.shuffle(order)
    proposals = []
    prototypes = {}
    planted_id = ""
    for position, entry_index in enumerate(order):
        role, grid, iou, vector = entries[entry_index]
        mask_id = f"m{position:02d}"
        proposals.append(
            MaskProposal(mask_id=mask_id, mask=rle_encode(grid), predicted_iou=iou)
        )
        prototypes[mask_id] = PrototypeVector(
            image_id=image_id, mask_id=mask_id, values=vector
        )
        if role == "planted":
            planted_id = mask_id
    # A fallback prototype near the shared cluster keeps one-pass runs
    # viable even if this image ever degrades to the attention fallback.
    prototypes[FALLBACK_MASK_ID] = PrototypeVector(
        image_id=image_id,
        mask_id=FALLBACK_MASK_ID,
        values=_cluster_draw(rng, co_center, config.prototype_noise),
    )

    attention_full = rng.uniform(0.0, config.attention_noise, size=(height, width))
    attention_full = attention_full + config.attention_peak * planted_true
    for d in distractors_true:
        attention_full = attention_full + 0.9 * config.attention_peak * d
    quarter = attention_full.reshape(height // 4, 4, width // 4, 4).mean(axis=(1, 3))
    attention = AttentionMap(rows=height // 4, cols=width // 4, values=quarter)

    record = ImageRecord(
        image_id=image_id,
        width=width,
        height=height,
        proposals=tuple(proposals),
        attention=attention,
        prototypes=prototypes,
    )
    return record, rle_encode(planted_true), planted_id


def generate_group(
    config: SynthConfig,
    out_dir: str | Path,
    group_id: str = "group_000",
    include_prototypes: bool = True,
) -> dict:
    """Write one synthetic group as an interchange directory.

    Alongside the interchange files the directory receives a
    gt_<image_id>.png per image (the true planted mask) and a
    planted.json mapping image ids to the planted proposal's mask_id.
    Identical configs produce byte-identical directories.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed)))
    co_center = _unit(rng.standard_normal(config.prototype_dim))

    images = []
    gt_masks = {}
    planted_ids = {}
    for index in range(config.n_images):
        image_id = f"img_{index:03d}"
        record, gt_mask, planted_id = _build_image(rng, config, image_id, co_center)
        images.append(record)
        gt_masks[image_id] = gt_mask
        planted_ids[image_id] = planted_id

    group = GroupRecord(group_id=group_id, images=tuple(images))
    out_dir = Path(out_dir)
    write_group_dir(
        out_dir,
        group,
        config_echo={"generator": "synthetic", **asdict(config)},
        include_prototypes=include_prototypes,
    )
    for image_id, mask in gt_masks.items():
        grid = rle_decode(mask)
        Image.fromarray(grid.astype(np.uint8) * 255, mode="L").save(
            out_dir / f"{GT_PREFIX}{image_id}.png", format="PNG"
        )
    planted = {"group_id": group_id, "seed": config.seed, "planted": planted_ids}
    (out_dir / PLANTED_NAME).write_text(json.dumps(planted, indent=2) + "\n")
    return planted


def oracle_ips(bank: PrototypeBank) -> list[int]:
    """Naive enumeration of the consensus selection, for cross-checking.

    Walks every candidate pair with explicit loops: per candidate, take
    the best similarity in each other image and sum; per image, keep the
    first candidate reaching the top score.
    """
    vectors = bank.vectors
    owners = list(bank.owners)
    n_rows = vectors.shape[0]
    image_indices = sorted(set(owners))
    if len(image_indices) <= 1:
        raise ValueError("reference selection needs at least two images")

    scores = []
    for i in range(n_rows):
        total = 0.0
        for image_index in image_indices:
            if image_index == owners[i]:
                continue
            best = None
            for j in range(n_rows):
                if owners[j] != image_index:
                    continue
                sim = float(np.dot(vectors[i], vectors[j]))
                if best is None or sim > best:
                    best = sim
            total += best
        scores.append(total)

    selected = []
    for image_index in image_indices:
        best_row = None
        for i in range(n_rows):
            if owners[i] != image_index:
                continue
            if best_row is None or scores[i] > scores[best_row]:
                best_row = i
        selected.append(best_row)
    return selected


def oracle_overlap_filter(
    proposals: Sequence[MaskProposal], tau_con: float
) -> list[MaskProposal]:
    """Quadratic reference for the containment filter.

    A proposal is dropped when any proposal strictly after it in the
    (area, mask_id) order covers at least ``tau_con`` of it, evaluated
    directly on pixel grids.
    """
    grids = [rle_decode(p.mask) for p in proposals]
    areas = [int(np.count_nonzero(g)) for g in grids]
    if any(a == 0 for a in areas):
        raise ValueError("reference filter requires non-empty masks")
    keys = [(areas[i], proposals[i].mask_id) for i in range(len(proposals))]

    kept = []
    for i, proposal in enumerate(proposals):
        dropped = False
        for j in range(len(proposals)):
            if keys[j] <= keys[i]:
                continue
            inter = int(np.count_nonzero(grids[i] & grids[j]))
            if inter / areas[i] >= tau_con:
                dropped = True
                break
        if not dropped:
            kept.append(proposal)
    return kept
