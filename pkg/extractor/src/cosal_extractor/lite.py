"""Deterministic classical backend.

A stand-in for the neural extractors that needs no weights, no GPU, and
no network: proposals are connected components of luminance thresholds
with a stability-based quality estimate, attention is block-mean
luminance on the patch-token grid, and prototypes are foreground color
histograms of the masked, square-resized region. The interchange output
is contract-identical to the neural path, so the consumer cannot tell
them apart; use it for tests, fixtures, and machines without model
weights.
"""

from __future__ import annotations

import numpy as np
from PIL import Image
from scipy import ndimage

from .config import DEFAULT_CONFIG, ExtractorConfig
from .errors import ExtractorError

# ITU-R 601 luma weights.
_LUMA = np.array([0.299, 0.587, 0.114])

# 8-connectivity for component labeling.
_STRUCTURE = np.ones((3, 3), dtype=bool)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Luma in [0, 1] from an (H, W, 3) uint8 array."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ExtractorError(f"expected an (H, W, 3) array, got shape {rgb.shape}")
    return (rgb.astype(np.float64) / 255.0) @ _LUMA


def _mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = np.logical_and(a, b).sum()
    union = np.logical_or(a, b).sum()
    return float(inter) / float(union) if union else 0.0


def _otsu(values: np.ndarray) -> float | None:
    """Otsu's threshold over a flat array of lumas, None if degenerate."""
    if values.size < 2 or float(values.max() - values.min()) < 1e-9:
        return None
    counts, edges = np.histogram(values, bins=256, range=(0.0, 1.0))
    centers = (edges[:-1] + edges[1:]) / 2.0
    weight_lo = np.cumsum(counts)
    weight_hi = weight_lo[-1] - weight_lo
    mass = np.cumsum(counts * centers)
    mean_lo = mass / np.maximum(weight_lo, 1)
    mean_hi = (mass[-1] - mass) / np.maximum(weight_hi, 1)
    variance = weight_lo * weight_hi * (mean_lo - mean_hi) ** 2
    split = int(np.argmax(variance))
    if variance[split] <= 0.0:
        return None
    # Threshold at the upper edge of the winning bin: "foreground" means
    # strictly brighter bins.
    return float(edges[split + 1])


def _otsu_levels(g: np.ndarray) -> list[float]:
    """Thresholds from a two-deep recursive Otsu split, brightest first.

    The top-level split separates figure from ground; re-splitting each
    side picks up multi-object scenes and structure within the bright
    side. Gaps between brightness modes are exactly where thresholded
    components stay stable.
    """
    flat = g.ravel()
    mid = _otsu(flat)
    if mid is None:
        return []
    levels = {mid}
    for side in (flat[flat >= mid], flat[flat < mid]):
        deeper = _otsu(side)
        if deeper is not None:
            levels.add(deeper)
    return sorted(levels, reverse=True)


def _border_ratio(component: np.ndarray) -> float:
    """Fraction of the frame border covered by a component."""
    border = (
        int(component[0, :].sum())
        + int(component[-1, :].sum())
        + int(component[1:-1, 0].sum())
        + int(component[1:-1, -1].sum())
    )
    total = 2 * (component.shape[0] + component.shape[1]) - 4
    return border / total


class LiteBackend:
    """Classical proposals, attention, and embeddings. Fully deterministic."""

    def __init__(
        self,
        config: ExtractorConfig = DEFAULT_CONFIG,
        stability_delta: float = 0.04,
        min_area_ratio: float = 0.002,
        max_area_ratio: float = 0.95,
        border_max_ratio: float = 0.35,
        dedupe_iou: float = 0.9,
        max_masks: int = 24,
    ) -> None:
        if config.embed_width % 3 != 0:
            raise ExtractorError(
                f"lite embeddings are per-channel histograms; embed_width must be "
                f"divisible by 3, got {config.embed_width}"
            )
        self.config = config
        self.stability_delta = stability_delta
        self.min_area_ratio = min_area_ratio
        self.max_area_ratio = max_area_ratio
        self.border_max_ratio = border_max_ratio
        self.dedupe_iou = dedupe_iou
        self.max_masks = max_masks

    @property
    def embed_width(self) -> int:
        return self.config.embed_width

    def propose(self, rgb: np.ndarray) -> list[tuple[str, np.ndarray, float]]:
        """Candidate masks as (mask_id, raster, predicted_iou) triples.

        Thresholds come from a recursive Otsu split of the luminance
        histogram, so they land in the gaps between brightness modes
        rather than inside them. Each connected component of each
        thresholded field becomes one candidate unless it is tiny,
        frame-filling, border-hugging (background), or a near-duplicate
        of an earlier one. predicted_iou is a stability score: the area
        ratio between the component tightened and relaxed by a small
        luminance delta, so regions bounded by real edges score near 1
        and slices through smooth gradients score low.
        """
        g = luminance(rgb)
        n_pixels = g.size
        if float(g.max() - g.min()) < 1e-9:
            return []
        accepted: list[np.ndarray] = []
        scores: list[float] = []
        for level in _otsu_levels(g):
            field = g >= level
            labels, n_components = ndimage.label(field, structure=_STRUCTURE)
            for index in range(1, n_components + 1):
                component = labels == index
                area = int(component.sum())
                if area < max(16, self.min_area_ratio * n_pixels):
                    continue
                if area > self.max_area_ratio * n_pixels:
                    continue
                if _border_ratio(component) > self.border_max_ratio:
                    continue
                if any(_mask_iou(component, kept) > self.dedupe_iou for kept in accepted):
                    continue
                accepted.append(component)
                scores.append(self._stability(g, component, float(level)))
                if len(accepted) == self.max_masks:
                    break
            if len(accepted) == self.max_masks:
                break
        return [
            (f"m{i:03d}", component, score)
            for i, (component, score) in enumerate(zip(accepted, scores))
        ]

    def _stability(self, g: np.ndarray, component: np.ndarray, level: float) -> float:
        tight = component & (g >= level + self.stability_delta)
        relaxed_field = g >= level - self.stability_delta
        # The relaxed component is the one containing the component's
        # brightest pixel; the component is a subset of it, so the IoU
        # reduces to an area ratio.
        anchor = np.unravel_index(int(np.argmax(np.where(component, g, -np.inf))), g.shape)
        relaxed_labels, _ = ndimage.label(relaxed_field, structure=_STRUCTURE)
        relaxed = relaxed_labels == relaxed_labels[anchor]
        return float(np.clip(tight.sum() / max(int(relaxed.sum()), 1), 0.0, 1.0))

    def attend(self, rgb: np.ndarray) -> np.ndarray:
        """Block-mean luminance on the patch-token grid, raw values.

        The grid is (H // patch, W // patch); trailing rows and columns
        that do not fill a whole patch are dropped, matching how a
        patch-tokenized transformer would never see them.
        """
        g = luminance(rgb)
        patch = self.config.patch_size
        rows = max(g.shape[0] // patch, 1)
        cols = max(g.shape[1] // patch, 1)
        if g.shape[0] < patch or g.shape[1] < patch:
            return np.full((rows, cols), float(g.mean()))
        cropped = g[: rows * patch, : cols * patch]
        return cropped.reshape(rows, patch, cols, patch).mean(axis=(1, 3))

    def embed(self, rgb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Prototype vector of a masked region.

        The region is prepared exactly like the neural path: background
        zeroed over the full frame, then resized to crop_size square.
        The feature itself is the concatenation of per-channel color
        histograms over the surviving foreground pixels, L1-normalized.
        Position- and scale-invariant, so one object seen in different
        places still matches itself.
        """
        rgb = np.asarray(rgb, dtype=np.uint8)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != rgb.shape[:2]:
            raise ExtractorError(
                f"mask shape {mask.shape} does not match image {rgb.shape[:2]}"
            )
        size = (self.config.crop_size, self.config.crop_size)
        masked = rgb * mask[:, :, None]
        resized = np.asarray(Image.fromarray(masked).resize(size, Image.BILINEAR))
        fg = (
            np.asarray(
                Image.fromarray(mask.astype(np.uint8) * 255).resize(size, Image.NEAREST)
            )
            > 127
        )
        pixels = resized[fg] if fg.any() else resized.reshape(-1, 3)
        bins = self.embed_width // 3
        channels = [
            np.histogram(pixels[:, c], bins=bins, range=(0, 256))[0] for c in range(3)
        ]
        vector = np.concatenate(channels).astype(np.float64)
        return vector / vector.sum()
