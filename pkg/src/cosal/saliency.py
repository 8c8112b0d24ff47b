"""Attention-based saliency filtering of refined candidates.

Each candidate is scored by the mean attention inside its mask and the
top ``t`` survive. When an image yields no candidates at all, or only
candidates the attention map barely touches, the whole list is replaced
by a single mask cut from the attention map itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attention import normalize_attention, resample_attention
from .quality import ScoredProposal
from .rle import mask_area, rle_decode, rle_encode
from .types import AttentionMap, BinaryMask, ImageRecord, MaskProposal, PipelineConfig
from .types import FALLBACK_MASK_ID


@dataclass(frozen=True)
class SalientMask:
    """A candidate that survived saliency filtering."""

    proposal: MaskProposal
    saliency_score: float
    is_fallback: bool = False


def saliency_score(mask: BinaryMask, att: AttentionMap) -> float:
    """Mean attention value inside the mask's foreground.

    The attention map must already be normalized to [0, 1] and resampled
    to the mask's pixel grid.
    """
    if (att.rows, att.cols) != (mask.height, mask.width):
        raise ValueError(
            f"attention grid {att.rows}x{att.cols} does not match "
            f"mask {mask.height}x{mask.width}"
        )
    if float(att.values.min()) < 0.0 or float(att.values.max()) > 1.0:
        raise ValueError("attention map must be normalized to [0, 1] before scoring")
    if mask_area(mask) == 0:
        raise ValueError("saliency is undefined for a zero-area mask")
    return float(att.values[rle_decode(mask)].mean())


def select_salient(
    scored: Sequence[tuple[MaskProposal, float]], t: int
) -> list[SalientMask]:
    """Keep the ``t`` highest-scoring candidates.

    Ordering is score descending, ties broken by mask_id ascending.
    """
    if t < 1:
        raise ValueError(f"t must be at least 1, got {t}")
    ranked = sorted(scored, key=lambda pair: (-pair[1], pair[0].mask_id))
    return [
        SalientMask(proposal=p, saliency_score=s, is_fallback=False)
        for p, s in ranked[:t]
    ]


def fallback_mask(att: AttentionMap) -> BinaryMask:
    """Binarize a normalized attention map, keeping its top half.

    The threshold is the 50th percentile of the attention values and
    ties land on the foreground side, so the result is never empty. A
    constant map turns entirely into foreground.
    """
    threshold = float(np.percentile(att.values, 50.0))
    return rle_encode(att.values >= threshold)


def run_isf(
    image: ImageRecord, refined: Sequence[ScoredProposal], config: PipelineConfig
) -> list[SalientMask]:
    """Saliency-filter one image's refined candidates.

    The image's raw attention is resampled to pixel resolution and
    normalized before scoring. If ``refined`` is empty, or no candidate
    reaches ``config.tau_fb``, the returned list holds exactly one
    fallback mask carrying score 1.0 by convention.
    """
    att = normalize_attention(
        resample_attention(image.attention, image.width, image.height)
    )
    if refined:
        scored = [
            (sp.proposal, saliency_score(sp.proposal.mask, att)) for sp in refined
        ]
        if max(score for _, score in scored) >= config.tau_fb:
            return select_salient(scored, config.t)
    substitute = MaskProposal(
        mask_id=FALLBACK_MASK_ID, mask=fallback_mask(att), predicted_iou=1.0
    )
    return [SalientMask(proposal=substitute, saliency_score=1.0, is_fallback=True)]
