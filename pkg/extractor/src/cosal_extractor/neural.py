"""Model-backed extraction.

Two independent wrappers: an automatic mask generator for proposals and
a self-supervised vision transformer for attention maps and prototype
embeddings. Heavy dependencies (torch, transformers, segment-anything)
are imported lazily so the rest of the package works without them;
missing dependencies or weights raise BackendUnavailableError with the
reason.

All models run in eval mode with gradients off. Multi-head attention is
collapsed by an arithmetic mean over heads. Masked regions keep the full
frame with the background zeroed, then resize to the configured square
crop before the feature model sees them.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .config import DEFAULT_CONFIG, ExtractorConfig
from .errors import BackendUnavailableError, ExtractorError

# Channel statistics the published feature extractors were trained with.
_NORM_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_NORM_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

FEATURE_WEIGHTS = {"vit_b8": "facebook/dino-vitb8"}


def _require_torch():
    try:
        import torch
    except ImportError as exc:
        raise BackendUnavailableError(f"torch is not installed: {exc}")
    return torch


class VitFeatures:
    """Attention maps and [CLS] embeddings from a vision transformer.

    Accepts any module with the transformers ViTModel interface:
    ``config.patch_size``, ``config.hidden_size``, and a forward that
    honors ``output_attentions`` and ``interpolate_pos_encoding``.
    """

    def __init__(self, model, config: ExtractorConfig = DEFAULT_CONFIG) -> None:
        torch = _require_torch()
        self._torch = torch
        self.config = config
        self.model = model.eval().to(config.device)
        # Fused attention kernels cannot return the weights; force the
        # eager path so output_attentions works.
        if hasattr(self.model, "set_attn_implementation"):
            self.model.set_attn_implementation("eager")
        else:
            self.model.config._attn_implementation = "eager"
        self.patch_size = int(model.config.patch_size)
        self.embed_width = int(model.config.hidden_size)

    def _prepare(self, rgb: np.ndarray):
        arr = (np.asarray(rgb, dtype=np.float32) / 255.0 - _NORM_MEAN) / _NORM_STD
        tensor = self._torch.from_numpy(arr.transpose(2, 0, 1)[None])
        return tensor.to(self.config.device)

    def attend(self, rgb: np.ndarray) -> np.ndarray:
        """Last-layer [CLS]-to-patch attention, head-averaged, raw values."""
        patch = self.patch_size
        rows = max(rgb.shape[0] // patch, 1)
        cols = max(rgb.shape[1] // patch, 1)
        cropped = np.asarray(rgb)[: rows * patch, : cols * patch]
        with self._torch.no_grad():
            outputs = self.model(
                self._prepare(cropped),
                output_attentions=True,
                interpolate_pos_encoding=True,
            )
        heads = outputs.attentions[-1][0]
        cls_to_patch = heads[:, 0, 1:].mean(dim=0)
        return cls_to_patch.reshape(rows, cols).cpu().numpy().astype(np.float64)

    def embed(self, rgb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """[CLS] token of the background-zeroed, square-resized region."""
        rgb = np.asarray(rgb, dtype=np.uint8)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != rgb.shape[:2]:
            raise ExtractorError(
                f"mask shape {mask.shape} does not match image {rgb.shape[:2]}"
            )
        size = (self.config.crop_size, self.config.crop_size)
        masked = Image.fromarray(rgb * mask[:, :, None]).resize(size, Image.BILINEAR)
        with self._torch.no_grad():
            outputs = self.model(self._prepare(np.asarray(masked)))
        return outputs.last_hidden_state[0, 0].cpu().numpy().astype(np.float64)


def load_feature_model(config: ExtractorConfig = DEFAULT_CONFIG, weights: str | None = None) -> VitFeatures:
    """Load the configured feature transformer (downloads weights if needed)."""
    _require_torch()
    try:
        from transformers import ViTModel
    except ImportError as exc:
        raise BackendUnavailableError(f"transformers is not installed: {exc}")
    name = weights or FEATURE_WEIGHTS.get(config.feature_variant)
    if name is None:
        raise BackendUnavailableError(
            f"no published weights known for feature variant {config.feature_variant!r}; "
            f"pass an explicit weights path"
        )
    try:
        model = ViTModel.from_pretrained(name, add_pooling_layer=False)
    except Exception as exc:
        raise BackendUnavailableError(f"could not load feature weights {name!r}: {exc}")
    return VitFeatures(model, config)


class SamProposer:
    """Automatic mask generation behind the published segmentation model."""

    def __init__(self, checkpoint: str, config: ExtractorConfig = DEFAULT_CONFIG) -> None:
        _require_torch()
        try:
            from segment_anything import SamAutomaticMaskGenerator, sam_model_registry
        except ImportError as exc:
            raise BackendUnavailableError(f"segment-anything is not installed: {exc}")
        try:
            sam = sam_model_registry[config.segmentation_variant](checkpoint=checkpoint)
        except (KeyError, FileNotFoundError, RuntimeError) as exc:
            raise BackendUnavailableError(
                f"could not build segmentation model "
                f"{config.segmentation_variant!r} from {checkpoint!r}: {exc}"
            )
        self.generator = SamAutomaticMaskGenerator(sam.to(config.device))

    def propose(self, rgb: np.ndarray) -> list[tuple[str, np.ndarray, float]]:
        records = self.generator.generate(np.asarray(rgb, dtype=np.uint8))
        # Stable ids: large and confident masks first.
        records.sort(key=lambda r: (-int(r["segmentation"].sum()), -r["predicted_iou"]))
        return [
            (
                f"m{i:03d}",
                np.asarray(r["segmentation"], dtype=bool),
                float(np.clip(r["predicted_iou"], 0.0, 1.0)),
            )
            for i, r in enumerate(records)
        ]


class NeuralBackend:
    """Full model-backed backend: segmentation proposals + ViT features."""

    def __init__(
        self,
        config: ExtractorConfig = DEFAULT_CONFIG,
        sam_checkpoint: str | None = None,
        feature_weights: str | None = None,
    ) -> None:
        if sam_checkpoint is None:
            raise BackendUnavailableError(
                "the neural backend needs --sam-checkpoint (weights are not bundled)"
            )
        self.config = config
        self._proposer = SamProposer(sam_checkpoint, config)
        self._features = load_feature_model(config, feature_weights)

    @property
    def embed_width(self) -> int:
        return self._features.embed_width

    def propose(self, rgb: np.ndarray) -> list[tuple[str, np.ndarray, float]]:
        return self._proposer.propose(rgb)

    def attend(self, rgb: np.ndarray) -> np.ndarray:
        return self._features.attend(rgb)

    def embed(self, rgb: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return self._features.embed(rgb, mask)
