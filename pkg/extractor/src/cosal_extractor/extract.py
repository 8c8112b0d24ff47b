"""Batch extraction into interchange group directories.

Extraction is write-only with respect to the consumer: this module
populates masks, attention, the manifest, and prototype tables, and
never touches prediction or diagnostics files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import DEFAULT_CONFIG, ExtractorConfig
from .errors import BackendUnavailableError, ExtractorError, UnknownMaskError
from .formats import (
    image_entry,
    read_masks_file,
    read_requests,
    rle_decode,
    write_attention_file,
    write_manifest,
    write_masks_file,
    write_prototype_table,
)
from .lite import LiteBackend

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")

# Files whose stem carries one of these role prefixes are interchange
# outputs or ground truth living next to the photos, not inputs.
RESERVED_PREFIXES = ("gt_", "prediction_")


@dataclass(frozen=True)
class ExtractReport:
    """What one batch did: images written, requests answered, per-file errors."""

    out_dir: str
    image_ids: tuple[str, ...] = ()
    answered: tuple[str, ...] = ()
    errors: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors


def make_backend(config: ExtractorConfig = DEFAULT_CONFIG, **model_paths):
    if config.backend == "lite":
        return LiteBackend(config)
    from .neural import NeuralBackend

    return NeuralBackend(config, **model_paths)


def discover_images(images_dir: str | Path) -> list[Path]:
    """Image files under a directory, sorted by name, role files excluded."""
    images_dir = Path(images_dir)
    if not images_dir.is_dir():
        raise ExtractorError(f"not a directory: {images_dir}")
    found = [
        path
        for path in sorted(images_dir.iterdir())
        if path.suffix.lower() in IMAGE_SUFFIXES
        and not path.name.startswith(RESERVED_PREFIXES)
    ]
    if not found:
        raise ExtractorError(f"no images under {images_dir}")
    return found


def load_rgb(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise ExtractorError(f"unreadable image {path}: {exc}")


def extract_group(
    images_dir: str | Path,
    out_dir: str | Path,
    config: ExtractorConfig = DEFAULT_CONFIG,
    backend=None,
    group_id: str | None = None,
) -> ExtractReport:
    """Run proposal and attention extraction over a directory of images.

    One unreadable image does not stop the batch; its error lands in the
    report and the manifest lists the images that made it through.
    Prototypes are not extracted here; they are answered on request (see
    answer_requests).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    backend = backend or make_backend(config)
    group_id = group_id or out_dir.name

    entries = []
    image_ids = []
    errors = []
    for path in discover_images(images_dir):
        image_id = path.stem
        try:
            rgb = load_rgb(path)
            proposals = backend.propose(rgb)
            attention = backend.attend(rgb)
        except ExtractorError as exc:
            errors.append(str(exc))
            continue
        write_masks_file(out_dir, image_id, proposals)
        write_attention_file(out_dir, image_id, attention)
        entries.append(
            image_entry(
                image_id,
                width=rgb.shape[1],
                height=rgb.shape[0],
                att_rows=attention.shape[0],
                att_cols=attention.shape[1],
            )
        )
        image_ids.append(image_id)
    if not entries:
        raise ExtractorError(f"no image under {images_dir} could be extracted: {errors}")
    write_manifest(out_dir, group_id, {"extractor": config.as_dict()}, entries)
    return ExtractReport(
        out_dir=str(out_dir),
        image_ids=tuple(image_ids),
        errors=tuple(errors),
    )


def answer_requests(
    images_dir: str | Path,
    group_dir: str | Path,
    config: ExtractorConfig = DEFAULT_CONFIG,
    backend=None,
) -> ExtractReport:
    """Compute the prototype tables a paused consumer run asked for.

    Each request entry names the mask_ids one image needs vectors for.
    Geometry comes from the image's masks file, or from the request's
    own synthetic_masks for ids that were never proposals (the
    consumer's attention-derived fallback). A request naming a mask
    found in neither place is an error; answering a wrong or partial
    set would strand the consumer.
    """
    images_dir = Path(images_dir)
    group_dir = Path(group_dir)
    backend = backend or make_backend(config)

    answered = []
    for request in read_requests(group_dir):
        image_id = str(request.get("image_id"))
        mask_ids = [str(m) for m in request.get("mask_ids", [])]
        if not mask_ids:
            continue
        rgb = load_rgb(_image_path(images_dir, image_id))
        rasters = read_masks_file(group_dir, image_id)
        for synthetic in request.get("synthetic_masks", []):
            rasters[str(synthetic["mask_id"])] = rle_decode(synthetic["rle"])
        vectors = []
        for mask_id in mask_ids:
            if mask_id not in rasters:
                raise UnknownMaskError(
                    f"prototype request names unknown mask {mask_id!r} "
                    f"for image {image_id!r}"
                )
            vectors.append(backend.embed(rgb, rasters[mask_id]))
        write_prototype_table(group_dir, image_id, mask_ids, np.vstack(vectors))
        answered.append(image_id)
    return ExtractReport(out_dir=str(group_dir), answered=tuple(answered))


def _image_path(images_dir: Path, image_id: str) -> Path:
    for suffix in IMAGE_SUFFIXES:
        candidate = images_dir / f"{image_id}{suffix}"
        if candidate.exists():
            return candidate
    raise ExtractorError(f"no image file for id {image_id!r} under {images_dir}")
