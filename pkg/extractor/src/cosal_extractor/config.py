"""Extractor settings."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

BACKENDS = ("lite", "neural")


@dataclass(frozen=True)
class ExtractorConfig:
    """What to run and how to prepare prototype inputs.

    ``crop_size`` is the side length masked regions are resized to before
    the feature model sees them; 224 matches the published feature
    extractors and should stay put unless the feature model changes.
    ``patch_size`` fixes the attention token grid (image dims are floor-
    divided by it), and ``embed_width`` the prototype dimension; the
    defaults mirror a base-width transformer with 8 px patches. The
    segmentation default is the largest automatic-mask-generation
    variant.
    """

    backend: str = "lite"
    segmentation_variant: str = "vit_h"
    feature_variant: str = "vit_b8"
    device: str = "cpu"
    crop_size: int = 224
    patch_size: int = 8
    embed_width: int = 768

    def __post_init__(self) -> None:
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        for name in ("crop_size", "patch_size", "embed_width"):
            value = getattr(self, name)
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_CONFIG = ExtractorConfig()
