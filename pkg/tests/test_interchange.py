"""On-disk interchange: serialization round trips and validation."""

import json

import numpy as np
import pytest
from PIL import Image

from cosal.errors import InterchangeError, MaskCodecError
from cosal.interchange import (
    DEFAULT_PREDICTED_IOU,
    attention_filename,
    masks_filename,
    prediction_filename,
    read_group_dir,
    read_prototype_requests,
    read_prototypes,
    rle_from_json,
    rle_to_json,
    validate_group_dir,
    write_diagnostics,
    write_group_dir,
    write_prediction,
    write_prototype_requests,
    write_prototypes,
)
from cosal.rle import rle_decode
from cosal.types import DEFAULT_CONFIG, FALLBACK_MASK_ID

from util import attention_of, group_of, image_record, proposal, rect_mask

# Values chosen to be exactly representable in float32, so the f32
# round trip through the interchange files is bit-exact.
ATT_GRID = [[0.25, 0.5], [0.75, 1.0]]
PROTO_A1 = np.array([0.5, -1.25, 2.0])
PROTO_A2 = np.array([1.0, 0.0, -0.5])
PROTO_B1 = np.array([0.125, 4.0, -8.0])
PROTO_FB = np.array([0.75, 0.25, 1.5])


def sample_group():
    a1 = proposal("a1", rect_mask(4, 4, 0, 0, 2, 4), iou=0.875)
    a2 = proposal("a2", rect_mask(4, 4, 2, 0, 4, 4), iou=0.5)
    b1 = proposal("b1", rect_mask(4, 4, 1, 1, 3, 3), iou=0.25)
    alpha = image_record(
        "alpha", 4, 4, [a1, a2], attention_of(ATT_GRID),
        prototypes={"a1": PROTO_A1, "a2": PROTO_A2},
    )
    beta = image_record(
        "beta", 4, 4, [b1], attention_of(ATT_GRID),
        prototypes={"b1": PROTO_B1, FALLBACK_MASK_ID: PROTO_FB},
    )
    return group_of("sample", alpha, beta)


def write_sample(tmp_path, **kwargs):
    return write_group_dir(
        tmp_path / "group", sample_group(), DEFAULT_CONFIG.as_dict(), **kwargs
    )


# --- round trips -------------------------------------------------------------

def test_group_dir_round_trip_is_exact(tmp_path):
    directory = write_sample(tmp_path)
    group, manifest = read_group_dir(directory)

    assert group.group_id == "sample"
    assert manifest["config"] == DEFAULT_CONFIG.as_dict()
    assert [im.image_id for im in group.images] == ["alpha", "beta"]

    original = sample_group()
    for loaded, source in zip(group.images, original.images):
        assert (loaded.width, loaded.height) == (source.width, source.height)
        assert [p.mask_id for p in loaded.proposals] == [
            p.mask_id for p in source.proposals
        ]
        for lp, sp in zip(loaded.proposals, source.proposals):
            assert lp.mask == sp.mask
            assert lp.predicted_iou == sp.predicted_iou
        assert np.array_equal(loaded.attention.values, source.attention.values)
        assert set(loaded.prototypes) == set(source.prototypes)
        for key, lproto in loaded.prototypes.items():
            assert np.array_equal(lproto.values, source.prototypes[key].values)
            assert lproto.mask_id == key


def test_attention_file_is_raw_little_endian_f32(tmp_path):
    directory = write_sample(tmp_path)
    raw = (directory / attention_filename("alpha")).read_bytes()
    assert len(raw) == 4 * 4
    decoded = np.frombuffer(raw, dtype="<f4").reshape(2, 2)
    assert np.array_equal(decoded, np.asarray(ATT_GRID, dtype="<f4"))
    # Row-major: the second scalar is row 0, column 1.
    assert decoded[0, 1] == np.float32(0.5)


def test_prototype_round_trip_preserves_order_and_values(tmp_path):
    tmp_path.mkdir(exist_ok=True)
    vectors = {"m2": PROTO_A1, "m0": PROTO_A2, FALLBACK_MASK_ID: PROTO_FB}
    write_prototypes(tmp_path, "img", vectors)
    loaded = read_prototypes(tmp_path, "img")
    assert list(loaded) == ["m2", "m0", FALLBACK_MASK_ID]
    for key, values in vectors.items():
        assert np.array_equal(loaded[key], values)


def test_prediction_png_round_trip(tmp_path):
    mask = rect_mask(3, 2, 1, 0, 3, 1)
    path = write_prediction(tmp_path, "img", mask)
    assert path.name == prediction_filename("img")
    with Image.open(path) as img:
        assert img.mode == "L"
        arr = np.asarray(img)
    assert arr.shape == (2, 3)
    assert set(np.unique(arr)) <= {0, 255}
    assert np.array_equal(arr == 255, rle_decode(mask))


def test_prototype_requests_round_trip(tmp_path):
    fallback_geom = rect_mask(4, 4, 0, 2, 4, 4)
    write_prototype_requests(
        tmp_path,
        "grp",
        [
            ("alpha", ["a1", FALLBACK_MASK_ID], {FALLBACK_MASK_ID: fallback_geom}),
            ("beta", ["b1"], {}),
        ],
    )
    payload = read_prototype_requests(tmp_path)
    assert payload["group_id"] == "grp"
    assert [req["image_id"] for req in payload["requests"]] == ["alpha", "beta"]
    first = payload["requests"][0]
    assert first["mask_ids"] == ["a1", FALLBACK_MASK_ID]
    (synth,) = first["synthetic_masks"]
    assert synth["mask_id"] == FALLBACK_MASK_ID
    assert rle_from_json(synth["rle"]) == fallback_geom
    assert payload["requests"][1]["synthetic_masks"] == []


def test_diagnostics_written_as_json(tmp_path):
    payload = {"deterministic": {"n_images": 2}, "volatile": {"seconds": 0.5}}
    path = write_diagnostics(tmp_path, payload)
    assert json.loads(path.read_text()) == payload


# --- ingestion details ---------------------------------------------------------

def test_missing_predicted_iou_defaults(tmp_path):
    directory = write_sample(tmp_path)
    masks_path = directory / masks_filename("alpha")
    entries = json.loads(masks_path.read_text())
    del entries[0]["predicted_iou"]
    masks_path.write_text(json.dumps(entries))

    group, _ = read_group_dir(directory)
    alpha = group.images[0]
    assert alpha.proposals[0].predicted_iou == DEFAULT_PREDICTED_IOU
    assert alpha.proposals[1].predicted_iou == 0.5  # untouched entry


def test_prototypes_found_by_convention_without_manifest_pointer(tmp_path):
    directory = write_sample(tmp_path, include_prototypes=False)
    group, manifest = read_group_dir(directory)
    assert all(not im.prototypes for im in group.images)
    assert all("prototypes_file" not in entry for entry in manifest["images"])

    # Drop answers next to the manifest under the conventional names.
    write_prototypes(directory, "alpha", {"a1": PROTO_A1, "a2": PROTO_A2})
    write_prototypes(directory, "beta", {"b1": PROTO_B1})
    group, _ = read_group_dir(directory)
    assert set(group.images[0].prototypes) == {"a1", "a2"}
    assert np.array_equal(group.images[0].prototypes["a1"].values, PROTO_A1)


def test_read_prototypes_infers_dimension(tmp_path):
    write_prototypes(tmp_path, "img", {"a": np.arange(5.0), "b": np.arange(5.0) + 1})
    loaded = read_prototypes(tmp_path, "img")
    assert loaded["a"].shape == (5,)
    assert np.array_equal(loaded["b"], np.arange(5.0) + 1)


def test_read_prototypes_rejects_bad_byte_count(tmp_path):
    write_prototypes(tmp_path, "img", {"a": np.arange(4.0)})
    data = tmp_path / "prototypes_img.f32"
    data.write_bytes(data.read_bytes()[:-2])
    with pytest.raises(InterchangeError, match="bytes"):
        read_prototypes(tmp_path, "img")


def test_read_prototypes_rejects_duplicate_index(tmp_path):
    write_prototypes(tmp_path, "img", {"a": np.arange(4.0), "b": np.arange(4.0)})
    (tmp_path / "prototypes_img.index.json").write_text('["a", "a"]')
    with pytest.raises(InterchangeError, match="duplicate"):
        read_prototypes(tmp_path, "img")


def test_rle_from_json_rejects_malformed():
    with pytest.raises(MaskCodecError):
        rle_from_json({"width": 2, "height": 2})
    with pytest.raises(MaskCodecError):
        rle_from_json({"width": 2, "runs": [4]})


# --- validation -----------------------------------------------------------------

def test_validate_accepts_well_formed_dir(tmp_path):
    directory = write_sample(tmp_path)
    assert validate_group_dir(directory) == []


def test_validate_reports_missing_manifest_key(tmp_path):
    directory = write_sample(tmp_path)
    manifest = json.loads((directory / "manifest.json").read_text())
    del manifest["config"]
    (directory / "manifest.json").write_text(json.dumps(manifest))
    problems = validate_group_dir(directory)
    assert len(problems) == 1
    assert "config" in problems[0]


def test_validate_reports_truncated_attention(tmp_path):
    directory = write_sample(tmp_path)
    att_path = directory / attention_filename("alpha")
    att_path.write_bytes(att_path.read_bytes()[:-4])
    problems = validate_group_dir(directory)
    assert any("alpha" in p and "bytes" in p for p in problems)


def test_validate_reports_bad_rle_sum(tmp_path):
    directory = write_sample(tmp_path)
    masks_path = directory / masks_filename("beta")
    entries = json.loads(masks_path.read_text())
    entries[0]["rle"]["runs"] = [4, 4, 4]  # sums to 12, image has 16 px
    masks_path.write_text(json.dumps(entries))
    problems = validate_group_dir(directory)
    assert any("beta" in p for p in problems)


def test_validate_reports_mask_image_size_mismatch(tmp_path):
    directory = write_sample(tmp_path)
    masks_path = directory / masks_filename("beta")
    entries = json.loads(masks_path.read_text())
    entries[0]["rle"] = {"width": 2, "height": 2, "runs": [1, 3]}
    masks_path.write_text(json.dumps(entries))
    problems = validate_group_dir(directory)
    assert any("2x2" in p for p in problems)


def test_validate_reports_duplicate_image_id(tmp_path):
    directory = write_sample(tmp_path)
    manifest = json.loads((directory / "manifest.json").read_text())
    manifest["images"].append(dict(manifest["images"][0]))
    (directory / "manifest.json").write_text(json.dumps(manifest))
    problems = validate_group_dir(directory)
    assert any("duplicate image_id" in p for p in problems)


def test_validate_reports_out_of_range_iou(tmp_path):
    directory = write_sample(tmp_path)
    masks_path = directory / masks_filename("alpha")
    entries = json.loads(masks_path.read_text())
    entries[0]["predicted_iou"] = 1.5
    masks_path.write_text(json.dumps(entries))
    problems = validate_group_dir(directory)
    assert any("alpha" in p for p in problems)


def test_validate_reports_cross_image_dim_mismatch(tmp_path):
    # No manifest pointers: dims are inferred per image, so the files
    # can disagree and only the cross-image check catches it.
    directory = write_sample(tmp_path, include_prototypes=False)
    write_prototypes(directory, "alpha", {"a1": np.arange(3.0), "a2": np.arange(3.0)})
    write_prototypes(directory, "beta", {"b1": np.arange(7.0)})
    problems = validate_group_dir(directory)
    assert any("dimensions differ" in p for p in problems)


def test_validate_reports_missing_masks_file(tmp_path):
    directory = write_sample(tmp_path)
    (directory / masks_filename("beta")).unlink()
    problems = validate_group_dir(directory)
    assert any("beta" in p and "missing" in p for p in problems)


def test_read_group_dir_rejects_cross_image_dim_mismatch(tmp_path):
    directory = write_sample(tmp_path, include_prototypes=False)
    write_prototypes(directory, "alpha", {"a1": np.arange(3.0), "a2": np.arange(3.0)})
    write_prototypes(directory, "beta", {"b1": np.arange(7.0)})
    with pytest.raises(Exception, match="dimensions differ"):
        read_group_dir(directory)


def test_rle_json_shape():
    mask = rect_mask(3, 2, 0, 0, 1, 1)
    obj = rle_to_json(mask)
    assert obj == {"width": 3, "height": 2, "runs": [0, 1, 5]}
    assert rle_from_json(obj) == mask
