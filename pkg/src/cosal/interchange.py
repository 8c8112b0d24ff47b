"""Group-directory interchange format.

A group directory couples everything the pipeline needs for one image
group:

    manifest.json                     group_id, config echo, image entries
    masks_<image_id>.json             list of {mask_id, predicted_iou, rle}
    attention_<image_id>.f32          raw little-endian float32, row-major
    prototypes_<image_id>.f32         optional K x d float32 matrix
    prototypes_<image_id>.index.json  the K mask_ids, one per matrix row

The pipeline writes prediction_<image_id>.png, diagnostics.json and, in
two-pass mode, prototype_requests.json into the same directory. A
request entry lists the mask_ids an image needs prototypes for and
carries the run-length geometry of any mask that does not appear in the
image's masks file (the attention-derived fallback), so the answering
side can still compute its embedding. Answer files follow the same
prototype naming whether or not the manifest mentions them, so a second
pass picks them up by convention.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import IngestionError, InterchangeError, MaskCodecError, PipelineError
from .rle import rle_decode
from .types import (
    FALLBACK_MASK_ID,
    AttentionMap,
    BinaryMask,
    GroupRecord,
    ImageRecord,
    MaskProposal,
    PrototypeVector,
)

MANIFEST_NAME = "manifest.json"
REQUESTS_NAME = "prototype_requests.json"
DIAGNOSTICS_NAME = "diagnostics.json"

# Ingestion default when a mask entry does not state a quality estimate.
DEFAULT_PREDICTED_IOU = 0.5

_F32 = np.dtype("<f4")


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _load_json(path: Path):
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise InterchangeError(f"missing file: {path}")
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"unparseable JSON in {path}: {exc}")


def masks_filename(image_id: str) -> str:
    return f"masks_{image_id}.json"


def attention_filename(image_id: str) -> str:
    return f"attention_{image_id}.f32"


def prototypes_filename(image_id: str) -> str:
    return f"prototypes_{image_id}.f32"


def prototype_index_filename(image_id: str) -> str:
    return f"prototypes_{image_id}.index.json"


def prediction_filename(image_id: str) -> str:
    return f"prediction_{image_id}.png"


def rle_to_json(mask: BinaryMask) -> dict:
    return {"width": mask.width, "height": mask.height, "runs": list(mask.runs)}


def rle_from_json(obj: Mapping) -> BinaryMask:
    try:
        return BinaryMask(
            width=int(obj["width"]), height=int(obj["height"]),
            runs=tuple(int(r) for r in obj["runs"]),
        )
    except (KeyError, TypeError) as exc:
        raise MaskCodecError(f"malformed rle object: {exc}")


def write_masks_file(directory: Path, image_id: str, proposals: Sequence[MaskProposal]) -> None:
    entries = [
        {
            "mask_id": p.mask_id,
            "predicted_iou": p.predicted_iou,
            "rle": rle_to_json(p.mask),
        }
        for p in proposals
    ]
    _dump_json(directory / masks_filename(image_id), entries)


def write_attention_file(directory: Path, image_id: str, att: AttentionMap) -> None:
    data = np.asarray(att.values, dtype=_F32).tobytes()
    (directory / attention_filename(image_id)).write_bytes(data)


def write_prototypes(
    directory: Path, image_id: str, vectors: Mapping[str, np.ndarray]
) -> None:
    """Write a prototype matrix and its row index, in mapping order."""
    ids = list(vectors.keys())
    if not ids:
        raise ValueError("refusing to write an empty prototype table")
    matrix = np.vstack([np.asarray(vectors[i], dtype=np.float64) for i in ids])
    (directory / prototypes_filename(image_id)).write_bytes(
        matrix.astype(_F32).tobytes()
    )
    _dump_json(directory / prototype_index_filename(image_id), ids)


def read_prototypes(
    directory: Path, image_id: str, dim: int | None = None
) -> dict[str, np.ndarray]:
    """Read a prototype table; infers the dimension when not given."""
    index_path = directory / prototype_index_filename(image_id)
    data_path = directory / prototypes_filename(image_id)
    ids = _load_json(index_path)
    if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
        raise InterchangeError(f"{index_path} must hold a list of mask_ids")
    if len(set(ids)) != len(ids):
        raise InterchangeError(f"{index_path} lists duplicate mask_ids")
    try:
        raw = data_path.read_bytes()
    except FileNotFoundError:
        raise InterchangeError(f"missing file: {data_path}")
    if not ids:
        raise InterchangeError(f"{index_path} lists no prototypes")
    if dim is None:
        if len(raw) % (4 * len(ids)) != 0:
            raise InterchangeError(
                f"{data_path} holds {len(raw)} bytes, not divisible by "
                f"{len(ids)} rows of float32"
            )
        dim = len(raw) // (4 * len(ids))
    if len(raw) != 4 * dim * len(ids):
        raise InterchangeError(
            f"{data_path} holds {len(raw)} bytes, expected {4 * dim * len(ids)} "
            f"({len(ids)} rows x {dim} float32)"
        )
    matrix = np.frombuffer(raw, dtype=_F32).astype(np.float64).reshape(len(ids), dim)
    return {mask_id: matrix[row] for row, mask_id in enumerate(ids)}


def write_manifest(
    directory: Path,
    group_id: str,
    config_echo: Mapping,
    image_entries: Sequence[Mapping],
) -> None:
    _dump_json(
        directory / MANIFEST_NAME,
        {"group_id": group_id, "config": dict(config_echo), "images": list(image_entries)},
    )


def write_group_dir(
    directory: str | Path,
    group: GroupRecord,
    config_echo: Mapping,
    include_prototypes: bool = True,
) -> Path:
    """Serialize a group record as a fresh interchange directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for image in group.images:
        write_masks_file(directory, image.image_id, image.proposals)
        write_attention_file(directory, image.image_id, image.attention)
        entry = {
            "image_id": image.image_id,
            "width": image.width,
            "height": image.height,
            "attention": {
                "file": attention_filename(image.image_id),
                "rows": image.attention.rows,
                "cols": image.attention.cols,
            },
            "masks_file": masks_filename(image.image_id),
        }
        if include_prototypes and image.prototypes:
            vectors = {key: proto.values for key, proto in image.prototypes.items()}
            write_prototypes(directory, image.image_id, vectors)
            entry["prototypes_file"] = prototypes_filename(image.image_id)
            entry["prototype_dim"] = next(iter(image.prototypes.values())).dim
        entries.append(entry)
    write_manifest(directory, group.group_id, config_echo, entries)
    return directory


def _read_attention(directory: Path, entry: Mapping) -> AttentionMap:
    spec = entry.get("attention")
    if not isinstance(spec, Mapping):
        raise InterchangeError(f"image {entry.get('image_id')!r} lacks an attention entry")
    rows, cols = int(spec["rows"]), int(spec["cols"])
    path = directory / str(spec["file"])
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise InterchangeError(f"missing file: {path}")
    if len(raw) != 4 * rows * cols:
        raise InterchangeError(
            f"{path} holds {len(raw)} bytes, expected {4 * rows * cols} "
            f"({rows}x{cols} float32)"
        )
    values = np.frombuffer(raw, dtype=_F32).astype(np.float64).reshape(rows, cols)
    return AttentionMap(rows=rows, cols=cols, values=values)


def _read_proposals(directory: Path, entry: Mapping) -> list[MaskProposal]:
    masks_file = entry.get("masks_file")
    if not isinstance(masks_file, str):
        raise InterchangeError(f"image {entry.get('image_id')!r} lacks a masks_file")
    raw = _load_json(directory / masks_file)
    if not isinstance(raw, list):
        raise InterchangeError(f"{masks_file} must hold a list of mask entries")
    width, height = int(entry["width"]), int(entry["height"])
    proposals = []
    for obj in raw:
        mask = rle_from_json(obj.get("rle", {}))
        if (mask.width, mask.height) != (width, height):
            raise InterchangeError(
                f"mask {obj.get('mask_id')!r} is {mask.width}x{mask.height}, "
                f"image is {width}x{height}"
            )
        iou = obj.get("predicted_iou", DEFAULT_PREDICTED_IOU)
        proposals.append(
            MaskProposal(mask_id=str(obj["mask_id"]), mask=mask, predicted_iou=float(iou))
        )
    return proposals


def _read_image_prototypes(
    directory: Path, entry: Mapping, image_id: str
) -> dict[str, PrototypeVector]:
    # Prefer the manifest pointer; fall back to the conventional name so
    # answers written after a prototype request are picked up.
    named = entry.get("prototypes_file")
    dim = entry.get("prototype_dim")
    if named is None and not (directory / prototypes_filename(image_id)).exists():
        return {}
    vectors = read_prototypes(directory, image_id, int(dim) if dim is not None else None)
    return {
        mask_id: PrototypeVector(image_id=image_id, mask_id=mask_id, values=values)
        for mask_id, values in vectors.items()
    }


def read_group_dir(directory: str | Path) -> tuple[GroupRecord, dict]:
    """Load a group directory into validated records.

    Returns the group and the parsed manifest. Raises InterchangeError
    or IngestionError on any contract violation.
    """
    directory = Path(directory)
    manifest = _load_manifest(directory)
    images = []
    proto_dims = {}
    for entry in manifest["images"]:
        image_id = str(entry["image_id"])
        proposals = _read_proposals(directory, entry)
        attention = _read_attention(directory, entry)
        prototypes = _read_image_prototypes(directory, entry, image_id)
        if prototypes:
            proto_dims[image_id] = next(iter(prototypes.values())).dim
        images.append(
            ImageRecord(
                image_id=image_id,
                width=int(entry["width"]),
                height=int(entry["height"]),
                proposals=tuple(proposals),
                attention=attention,
                prototypes=prototypes,
            )
        )
    if len(set(proto_dims.values())) > 1:
        raise IngestionError(f"prototype dimensions differ across images: {proto_dims}")
    group = GroupRecord(group_id=str(manifest["group_id"]), images=tuple(images))
    return group, manifest


def _load_manifest(directory: Path) -> dict:
    manifest = _load_json(directory / MANIFEST_NAME)
    if not isinstance(manifest, Mapping):
        raise InterchangeError("manifest.json must hold an object")
    for key in ("group_id", "config", "images"):
        if key not in manifest:
            raise InterchangeError(f"manifest.json lacks required key {key!r}")
    if not isinstance(manifest["config"], Mapping):
        raise InterchangeError("manifest config echo must be an object")
    if not isinstance(manifest["images"], list) or not manifest["images"]:
        raise InterchangeError("manifest must list at least one image")
    return dict(manifest)


def validate_group_dir(directory: str | Path) -> list[str]:
    """Collect human-readable contract violations; empty means valid."""
    directory = Path(directory)
    problems: list[str] = []
    try:
        manifest = _load_manifest(directory)
    except PipelineError as exc:
        return [str(exc)]

    seen_ids = set()
    proto_dims = {}
    for position, entry in enumerate(manifest["images"]):
        image_id = str(entry.get("image_id", f"<entry {position}>"))
        if image_id in seen_ids:
            problems.append(f"duplicate image_id {image_id!r}")
            continue
        seen_ids.add(image_id)
        try:
            width, height = int(entry["width"]), int(entry["height"])
            if width <= 0 or height <= 0:
                raise InterchangeError(f"image {image_id!r} has non-positive dimensions")
            proposals = _read_proposals(directory, entry)
            attention = _read_attention(directory, entry)
            prototypes = _read_image_prototypes(directory, entry, image_id)
            ImageRecord(
                image_id=image_id,
                width=width,
                height=height,
                proposals=tuple(proposals),
                attention=attention,
                prototypes=prototypes,
            )
            if prototypes:
                proto_dims[image_id] = next(iter(prototypes.values())).dim
        except (PipelineError, KeyError, TypeError, ValueError) as exc:
            problems.append(f"image {image_id!r}: {exc}")
    if len(set(proto_dims.values())) > 1:
        problems.append(f"prototype dimensions differ across images: {proto_dims}")
    return problems


def write_prediction(directory: str | Path, image_id: str, mask: BinaryMask) -> Path:
    """Write a prediction as an 8-bit grayscale PNG (255 fg, 0 bg)."""
    grid = rle_decode(mask)
    img = Image.fromarray((grid.astype(np.uint8)) * 255, mode="L")
    path = Path(directory) / prediction_filename(image_id)
    img.save(path, format="PNG")
    return path


def write_diagnostics(directory: str | Path, payload: Mapping) -> Path:
    path = Path(directory) / DIAGNOSTICS_NAME
    _dump_json(path, dict(payload))
    return path


def write_prototype_requests(
    directory: str | Path,
    group_id: str,
    needs: Sequence[tuple[str, list[str], dict[str, BinaryMask]]],
) -> Path:
    """Record which prototypes the group still needs.

    ``needs`` holds (image_id, missing mask_ids, geometry for mask_ids
    absent from the image's masks file) triples.
    """
    requests = []
    for image_id, mask_ids, synthetic in needs:
        requests.append(
            {
                "image_id": image_id,
                "mask_ids": list(mask_ids),
                "synthetic_masks": [
                    {"mask_id": mask_id, "rle": rle_to_json(mask)}
                    for mask_id, mask in synthetic.items()
                ],
            }
        )
    path = Path(directory) / REQUESTS_NAME
    _dump_json(path, {"group_id": group_id, "requests": requests})
    return path


def read_prototype_requests(directory: str | Path) -> dict:
    directory = Path(directory)
    payload = _load_json(directory / REQUESTS_NAME)
    if not isinstance(payload, Mapping) or "requests" not in payload:
        raise InterchangeError("prototype_requests.json must hold a requests list")
    return dict(payload)
