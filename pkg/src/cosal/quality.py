"""Quality filtering and ranking of raw mask proposals.

Three passes turn a raw proposal set into a short ranked list:

1. an area filter drops masks whose foreground covers less than
   ``tau_area`` of the image,
2. a containment filter drops any mask that lies almost entirely inside
   a larger one, keeping the larger of the pair,
3. every survivor is scored by blending the proposer's own quality
   estimate with a preference for mid-sized regions, and the top ``t_r``
   by that blend move on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .rle import mask_area, rle_decode
from .types import BinaryMask, MaskProposal, PipelineConfig


@dataclass(frozen=True)
class ScoredProposal:
    """A proposal that survived filtering, with its ranking scores."""

    proposal: MaskProposal
    area_ratio: float
    area_score: float
    balanced_score: float


def area_ratio(proposal: MaskProposal) -> float:
    """Fraction of the image covered by the proposal's foreground."""
    mask = proposal.mask
    return mask_area(mask) / (mask.width * mask.height)


def initial_filter(
    proposals: Sequence[MaskProposal], tau_area: float
) -> list[MaskProposal]:
    """Keep proposals with area ratio >= ``tau_area``, preserving order."""
    return [p for p in proposals if area_ratio(p) >= tau_area]


def overlap_ratio(current: BinaryMask, other: BinaryMask) -> float:
    """Fraction of ``current`` covered by ``other``.

    The denominator is the area of ``current``, which the containment
    filter always calls with the smaller mask of the pair.
    """
    area = mask_area(current)
    if area == 0:
        raise ValueError("overlap ratio is undefined for a zero-area mask")
    inter = int(np.count_nonzero(np.logical_and(rle_decode(current), rle_decode(other))))
    return inter / area


def overlap_filter(
    proposals: Sequence[MaskProposal], tau_con: float
) -> list[MaskProposal]:
    """Drop proposals mostly contained in a larger proposal.

    Candidates are decided in ascending (area, mask_id) order and a
    candidate is removed when any candidate strictly after it in that
    order covers at least ``tau_con`` of it. Larger masks are therefore
    always preferred; exact duplicates collapse to a single survivor.
    """
    n = len(proposals)
    if n == 0:
        return []
    grids = [rle_decode(p.mask) for p in proposals]
    areas = [int(g.sum()) for g in grids]
    if any(a == 0 for a in areas):
        raise ValueError("overlap filtering requires non-empty masks")

    order = sorted(range(n), key=lambda i: (areas[i], proposals[i].mask_id))
    removed = [False] * n
    for pos, i in enumerate(order):
        for j in order[pos + 1 :]:
            inter = int(np.count_nonzero(np.logical_and(grids[i], grids[j])))
            if inter / areas[i] >= tau_con:
                removed[i] = True
                break
    return [p for i, p in enumerate(proposals) if not removed[i]]


def area_score(r: float, r_min: float, r_max: float, sigma: float, gamma: float) -> float:
    """Score an area ratio: 1.0 inside [r_min, r_max], decaying outside.

    Below the band the score ramps linearly from 0; above it the score
    falls with slope ``gamma`` but never below ``sigma``. The function is
    continuous at both band edges.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"area ratio must lie in [0, 1], got {r!r}")
    if r < r_min:
        return r / r_min
    if r > r_max:
        return max(sigma, 1.0 - (r - r_max) * gamma)
    return 1.0


def balanced_score(predicted_iou: float, area_score: float, alpha: float, beta: float) -> float:
    """Blend the proposer's quality estimate with the area score."""
    return alpha * predicted_iou + beta * area_score


def qmg_stages(
    image_proposals: Sequence[MaskProposal], config: PipelineConfig
) -> tuple[list[MaskProposal], list[MaskProposal], list[ScoredProposal]]:
    """Run the quality chain, returning every intermediate stage.

    Returns (coarse, purified, refined): the survivors of the area
    filter, of the containment filter, and the final scored ranking.
    Zero-area proposals are discarded before any filtering.
    """
    nonempty = [p for p in image_proposals if mask_area(p.mask) > 0]
    coarse = initial_filter(nonempty, config.tau_area)
    purified = overlap_filter(coarse, config.tau_con)

    scored = []
    for p in purified:
        r = area_ratio(p)
        s_area = area_score(r, config.r_min, config.r_max, config.sigma, config.gamma)
        s_bal = balanced_score(p.predicted_iou, s_area, config.alpha, config.beta)
        scored.append(
            ScoredProposal(proposal=p, area_ratio=r, area_score=s_area, balanced_score=s_bal)
        )
    scored.sort(key=lambda s: (-s.balanced_score, s.proposal.mask_id))
    return coarse, purified, scored[: config.t_r]


def run_qmg(image_proposals: Sequence[MaskProposal], config: PipelineConfig) -> list[ScoredProposal]:
    """Filter and rank one image's raw proposals.

    Returns at most ``config.t_r`` scored survivors, ordered by balanced
    score descending with ties broken by mask_id ascending.
    """
    return qmg_stages(image_proposals, config)[2]
