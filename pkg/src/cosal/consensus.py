"""Cross-image prototype consensus.

Every image contributes the prototypes of its salient candidates to a
group-wide bank. A candidate's co-salient score is the sum, over every
other image, of its best cosine similarity to that image's candidates;
similarities within the candidate's own image never count. The top
scorer of each image is selected, and same-image runners-up that are
both semantically close to the winner and nearly as well supported are
merged in to cover multi-instance images.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DegenerateGroupError, IncompleteInputError, IngestionError
from .rle import rle_decode, rle_encode
from .saliency import SalientMask
from .types import BinaryMask, GroupRecord, PipelineConfig


@dataclass(frozen=True, eq=False)
class PrototypeBank:
    """Unit-normalized prototypes of all salient candidates in a group.

    Rows are grouped by image in group order and, within an image, follow
    the saliency ranking. ``owners[i]`` is the image index of row ``i``.
    """

    vectors: np.ndarray
    owners: tuple[int, ...]
    image_ids: tuple[str, ...]
    mask_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] == 0:
            raise IngestionError(f"bank must be a non-empty matrix, got shape {vectors.shape}")
        if vectors.shape[0] != len(self.owners) or vectors.shape[0] != len(self.mask_ids):
            raise IngestionError("bank rows, owners and mask_ids must align")
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)

    @property
    def n_images(self) -> int:
        return len(self.image_ids)

    def rows_of(self, image_index: int) -> list[int]:
        return [i for i, owner in enumerate(self.owners) if owner == image_index]


@dataclass(frozen=True)
class CoSaliencyResult:
    """Final verdict for one image."""

    image_id: str
    selected_mask_id: str
    co_salient_score: float
    merged_mask_ids: tuple[str, ...]
    final_mask: BinaryMask
    ips_skipped: bool = False


def build_bank(
    group: GroupRecord, isf_outputs: Sequence[Sequence[SalientMask]]
) -> PrototypeBank:
    """Assemble the group's prototype bank in deterministic order.

    The group record is the prototype source: every salient candidate's
    mask_id must resolve in its image's prototype table. Vectors are
    L2-normalized here, so downstream similarity is scale invariant.
    """
    if len(isf_outputs) != group.n_images:
        raise IngestionError(
            f"got {len(isf_outputs)} candidate lists for {group.n_images} images"
        )
    rows: list[np.ndarray] = []
    owners: list[int] = []
    mask_ids: list[str] = []
    dim: int | None = None
    for index, (image, salient) in enumerate(zip(group.images, isf_outputs)):
        if not salient:
            raise IngestionError(f"image {image.image_id!r} has no salient candidates")
        for sm in salient:
            proto = image.prototypes.get(sm.proposal.mask_id)
            if proto is None:
                raise IncompleteInputError(
                    f"missing prototype for mask {sm.proposal.mask_id!r} "
                    f"of image {image.image_id!r}"
                )
            if dim is None:
                dim = proto.dim
            elif proto.dim != dim:
                raise IngestionError(
                    f"prototype dimension mismatch: {proto.dim} vs {dim} "
                    f"(mask {sm.proposal.mask_id!r}, image {image.image_id!r})"
                )
            rows.append(proto.values / np.linalg.norm(proto.values))
            owners.append(index)
            mask_ids.append(sm.proposal.mask_id)
    return PrototypeBank(
        vectors=np.vstack(rows),
        owners=tuple(owners),
        image_ids=tuple(im.image_id for im in group.images),
        mask_ids=tuple(mask_ids),
    )


def cosine_matrix(bank: PrototypeBank) -> np.ndarray:
    """Pairwise cosine similarity; rows are unit vectors, so a plain dot."""
    return bank.vectors @ bank.vectors.T


def cross_image_max(C: np.ndarray, owners: Sequence[int]) -> np.ndarray:
    """Per candidate, the best similarity reached in each other image.

    Returns an (M, N-1) array whose columns follow image order with the
    candidate's own image skipped. Raises for single-image groups, which
    have nobody to compare against.
    """
    owners = np.asarray(owners)
    image_indices = sorted(set(owners.tolist()))
    n_images = len(image_indices)
    if n_images <= 1:
        raise DegenerateGroupError("cross-image maxima need at least two images")
    per_image = np.column_stack(
        [C[:, owners == idx].max(axis=1) for idx in image_indices]
    )
    column_of = {idx: col for col, idx in enumerate(image_indices)}
    maxima = np.empty((C.shape[0], n_images - 1))
    for row in range(C.shape[0]):
        own = column_of[int(owners[row])]
        maxima[row] = np.delete(per_image[row], own)
    return maxima


def co_salient_scores(maxima: np.ndarray) -> np.ndarray:
    """Sum each candidate's per-image maxima into one support score."""
    return maxima.sum(axis=1)


def select_per_image(scores: np.ndarray, owners: Sequence[int]) -> list[int]:
    """Pick each image's best-supported candidate.

    Ties go to the earlier bank row, which within an image means the
    better saliency rank (itself already id-broken).
    """
    owners = np.asarray(owners)
    selected = []
    for idx in sorted(set(owners.tolist())):
        rows = np.flatnonzero(owners == idx)
        selected.append(int(rows[np.argmax(scores[rows])]))
    return selected


def merge_extra_instances(
    selected_row: int,
    image_rows: Sequence[int],
    row_masks: Sequence[BinaryMask],
    C: np.ndarray,
    scores: np.ndarray,
    config: PipelineConfig,
) -> tuple[BinaryMask, list[int]]:
    """Union same-image candidates that look like further instances.

    A runner-up is merged when it passes two independent checks: its
    similarity to the winner reaches the ``sem_percentile`` quantile of
    the image's own pairwise-similarity distribution, and its co-salient
    score trails the winner's by less than ``tau_diff``. Images with
    fewer than two intra-image pairs skip merging entirely.
    """
    pair_sims = [C[i, j] for i, j in combinations(image_rows, 2)]
    if len(pair_sims) < 2:
        return row_masks[selected_row], []
    tau_sem = float(np.percentile(pair_sims, config.sem_percentile * 100.0))
    merged = [
        row
        for row in image_rows
        if row != selected_row
        and C[selected_row, row] >= tau_sem
        and abs(float(scores[row]) - float(scores[selected_row])) < config.tau_diff
    ]
    if not merged:
        return row_masks[selected_row], []
    union = rle_decode(row_masks[selected_row])
    for row in merged:
        union |= rle_decode(row_masks[row])
    return rle_encode(union), merged


def select_from_bank(bank: PrototypeBank) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Run the scoring chain on a bank.

    Returns (selected row per image, per-candidate scores, similarity
    matrix). Kept separate from :func:`run_ips` so references and
    property tests can drive selection without full image records.
    """
    C = cosine_matrix(bank)
    maxima = cross_image_max(C, bank.owners)
    scores = co_salient_scores(maxima)
    return select_per_image(scores, bank.owners), scores, C


def run_ips(
    group: GroupRecord,
    isf_outputs: Sequence[Sequence[SalientMask]],
    config: PipelineConfig,
) -> list[CoSaliencyResult]:
    """Select one co-salient mask per image.

    Single-image groups cannot vote, so the saliency winner is returned
    unchanged with a zero score and the skip flag set.
    """
    if group.n_images == 1:
        if not isf_outputs or not isf_outputs[0]:
            raise IngestionError("single-image group has no salient candidates")
        top = isf_outputs[0][0]
        return [
            CoSaliencyResult(
                image_id=group.images[0].image_id,
                selected_mask_id=top.proposal.mask_id,
                co_salient_score=0.0,
                merged_mask_ids=(),
                final_mask=top.proposal.mask,
                ips_skipped=True,
            )
        ]

    bank = build_bank(group, isf_outputs)
    selected, scores, C = select_from_bank(bank)
    row_masks = [
        isf_outputs[owner][rank].proposal.mask
        for owner, rank in zip(
            bank.owners, _ranks_within_images(bank.owners)
        )
    ]

    results = []
    for image_index, row in enumerate(selected):
        image_rows = bank.rows_of(image_index)
        final_mask, merged_rows = merge_extra_instances(
            row, image_rows, row_masks, C, scores, config
        )
        results.append(
            CoSaliencyResult(
                image_id=bank.image_ids[image_index],
                selected_mask_id=bank.mask_ids[row],
                co_salient_score=float(scores[row]),
                merged_mask_ids=tuple(bank.mask_ids[r] for r in merged_rows),
                final_mask=final_mask,
            )
        )
    return results


def _ranks_within_images(owners: Sequence[int]) -> list[int]:
    counts: dict[int, int] = {}
    ranks = []
    for owner in owners:
        ranks.append(counts.get(owner, 0))
        counts[owner] = ranks[-1] + 1
    return ranks
