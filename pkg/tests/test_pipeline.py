"""End-to-end group runs: orchestration, two-pass protocol, degenerates."""

import json

import numpy as np
import pytest
from PIL import Image

from cosal.consensus import CoSaliencyResult
from cosal.errors import ConfigError, IncompleteInputError, PipelineError
from cosal.interchange import (
    prediction_filename,
    read_group_dir,
    read_prototype_requests,
    rle_from_json,
    write_group_dir,
    write_prototypes,
)
from cosal.pipeline import (
    STATUS_OK,
    STATUS_PROTOTYPES_REQUESTED,
    _check_nesting,
    config_load,
    run_group,
    run_many,
)
from cosal.quality import ScoredProposal
from cosal.rle import rle_decode
from cosal.saliency import SalientMask
from cosal.synth import SynthConfig, generate_group
from cosal.types import DEFAULT_CONFIG, FALLBACK_MASK_ID, PipelineConfig

from util import attention_of, group_of, image_record, pixel_iou, proposal, rect_mask


def png_bytes(directory, image_id):
    return (directory / prediction_filename(image_id)).read_bytes()


# --- hand-built three-image group -------------------------------------------
# imgX: clear object plus an orthogonal extra candidate.
# imgB: its only proposal sits in dead attention, forcing the fallback.
# imgC: constant attention, every candidate scores 0.5.

GRADIENT = [[c / 7.0 for c in range(8)] for _ in range(8)]


def build_img_x():
    x_obj = proposal("x_obj", rect_mask(8, 8, 0, 0, 4, 4), iou=0.9)
    x_noise = proposal("x_noise", rect_mask(8, 8, 4, 4, 8, 8), iou=0.9)
    att = np.full((8, 8), 0.1)
    att[0:4, 0:4] = 1.0
    return image_record(
        "imgX", 8, 8, [x_obj, x_noise], attention_of(att),
        prototypes={"x_obj": np.array([1.0, 0.0]), "x_noise": np.array([0.0, 1.0])},
    )


def build_img_b(with_fallback_prototype: bool):
    # One tiny-but-passing proposal at (0, 7), where the left-to-right
    # gradient is zero, so its saliency lands under tau_fb.
    b_dot = proposal("b_dot", rect_mask(8, 8, 0, 7, 1, 8), iou=0.9)
    prototypes = {"b_dot": np.array([0.0, 1.0])}
    if with_fallback_prototype:
        prototypes[FALLBACK_MASK_ID] = np.array([1.0, 0.1])
    return image_record(
        "imgB", 8, 8, [b_dot], attention_of(GRADIENT), prototypes=prototypes
    )


def build_img_c():
    c_obj = proposal("c_obj", rect_mask(8, 8, 0, 0, 4, 4), iou=0.9)
    return image_record(
        "imgC", 8, 8, [c_obj], attention_of(np.full((8, 8), 0.7)),
        prototypes={"c_obj": np.array([1.0, 0.05])},
    )


def write_hand_group(directory, with_fallback_prototype=True):
    group = group_of(
        "hand3",
        build_img_x(),
        build_img_b(with_fallback_prototype),
        build_img_c(),
    )
    return write_group_dir(directory, group, DEFAULT_CONFIG.as_dict())


FALLBACK_RIGHT_HALF = rect_mask(8, 8, 4, 0, 8, 8)


def test_hand_group_runs_all_degenerate_contracts(tmp_path):
    directory = write_hand_group(tmp_path / "g")
    outcome = run_group(directory)
    assert outcome.status == STATUS_OK
    assert set(outcome.predictions) == {"imgX", "imgB", "imgC"}

    by_id = {r.image_id: r for r in outcome.results}
    assert by_id["imgX"].selected_mask_id == "x_obj"
    assert by_id["imgB"].selected_mask_id == FALLBACK_MASK_ID
    assert by_id["imgC"].selected_mask_id == "c_obj"

    # The gradient's median is 0.5, so the fallback is the right half.
    assert outcome.predictions["imgB"] == FALLBACK_RIGHT_HALF
    assert outcome.predictions["imgX"] == rect_mask(8, 8, 0, 0, 4, 4)

    reports = {
        r["image_id"]: r for r in outcome.diagnostics["deterministic"]["images"]
    }
    assert reports["imgB"]["fallback"] is True
    assert reports["imgX"]["fallback"] is False
    assert reports["imgC"]["fallback"] is False
    assert all(not r["ips_skipped"] for r in reports.values())
    # Constant attention grades every candidate at exactly one half.
    c_salient = reports["imgC"]["stages"]["salient"]
    assert [s["saliency_score"] for s in c_salient] == [0.5]

    for image_id in outcome.predictions:
        path = directory / prediction_filename(image_id)
        with Image.open(path) as img:
            arr = np.asarray(img)
        assert np.array_equal(arr == 255, rle_decode(outcome.predictions[image_id]))


def test_single_image_group_skips_consensus(tmp_path):
    group = group_of("solo", build_img_x())
    directory = write_group_dir(tmp_path / "solo", group, DEFAULT_CONFIG.as_dict())
    outcome = run_group(directory)
    assert outcome.status == STATUS_OK
    (result,) = outcome.results
    assert result.ips_skipped
    assert result.selected_mask_id == "x_obj"
    report = outcome.diagnostics["deterministic"]["images"][0]
    assert report["ips_skipped"] is True


def test_single_image_group_needs_no_prototypes(tmp_path):
    x_obj = proposal("x_obj", rect_mask(8, 8, 0, 0, 4, 4), iou=0.9)
    att = np.full((8, 8), 0.1)
    att[0:4, 0:4] = 1.0
    image = image_record("imgX", 8, 8, [x_obj], attention_of(att))
    directory = write_group_dir(
        tmp_path / "solo", group_of("solo", image), DEFAULT_CONFIG.as_dict()
    )
    assert run_group(directory).status == STATUS_OK


# --- two-pass protocol --------------------------------------------------------

def test_oneshot_fails_fast_on_missing_prototypes(tmp_path):
    directory = write_hand_group(tmp_path / "g", with_fallback_prototype=False)
    with pytest.raises(IncompleteInputError, match=FALLBACK_MASK_ID):
        run_group(directory, mode="oneshot")


def test_two_pass_requests_then_completes(tmp_path):
    directory = write_hand_group(tmp_path / "g", with_fallback_prototype=False)

    first = run_group(directory, mode="two-pass")
    assert first.status == STATUS_PROTOTYPES_REQUESTED
    assert first.predictions == {}
    assert first.request_path is not None

    payload = read_prototype_requests(directory)
    assert payload["group_id"] == "hand3"
    (request,) = payload["requests"]
    assert request["image_id"] == "imgB"
    assert request["mask_ids"] == [FALLBACK_MASK_ID]
    # The fallback mask is no listed proposal, so its geometry rides along.
    (synth,) = request["synthetic_masks"]
    assert synth["mask_id"] == FALLBACK_MASK_ID
    assert rle_from_json(synth["rle"]) == FALLBACK_RIGHT_HALF

    # Answer under the conventional filename and re-invoke.
    write_prototypes(directory, "imgB", {FALLBACK_MASK_ID: np.array([1.0, 0.1])})
    second = run_group(directory, mode="two-pass")
    assert second.status == STATUS_OK
    assert set(second.predictions) == {"imgX", "imgB", "imgC"}


def test_two_pass_matches_oneshot_bytes(tmp_path):
    # Same group, prototypes withheld then answered: the finished run
    # must produce byte-identical predictions to the one-shot twin.
    withheld = write_hand_group(tmp_path / "withheld", with_fallback_prototype=False)
    complete = write_hand_group(tmp_path / "complete", with_fallback_prototype=True)

    assert run_group(withheld, mode="two-pass").status == STATUS_PROTOTYPES_REQUESTED
    write_prototypes(withheld, "imgB", {FALLBACK_MASK_ID: np.array([1.0, 0.1])})
    assert run_group(withheld, mode="two-pass").status == STATUS_OK
    assert run_group(complete, mode="oneshot").status == STATUS_OK

    for image_id in ("imgX", "imgB", "imgC"):
        assert png_bytes(withheld, image_id) == png_bytes(complete, image_id)

    det_a = json.loads((withheld / "diagnostics.json").read_text())["deterministic"]
    det_b = json.loads((complete / "diagnostics.json").read_text())["deterministic"]
    # Only the mode echo may differ between the two routes.
    assert det_a["mode"] == "two-pass" and det_b["mode"] == "oneshot"
    det_a["mode"] = det_b["mode"] = "-"
    assert det_a == det_b


def test_invalid_mode_rejected(tmp_path):
    directory = write_hand_group(tmp_path / "g")
    with pytest.raises(ValueError, match="mode"):
        run_group(directory, mode="samba")


# --- synthetic end to end -------------------------------------------------------

SYNTH = SynthConfig(seed=7, n_images=3, width=48, height=48)


def test_synthetic_group_recovers_planted_masks(tmp_path):
    directory = tmp_path / "g"
    planted = generate_group(SYNTH, directory, group_id="s7")
    outcome = run_group(directory)
    assert outcome.status == STATUS_OK

    group, _ = read_group_dir(directory)
    gts = {}
    for image in group.images:
        with Image.open(directory / f"gt_{image.image_id}.png") as img:
            gts[image.image_id] = np.asarray(img) == 255

    for result in outcome.results:
        assert result.selected_mask_id == planted["planted"][result.image_id]
        iou = pixel_iou(rle_decode(result.final_mask), gts[result.image_id])
        assert iou > 0.85, f"{result.image_id}: IoU {iou:.3f}"


def test_reruns_are_byte_identical(tmp_path):
    first_dir = tmp_path / "a"
    second_dir = tmp_path / "b"
    generate_group(SYNTH, first_dir)
    generate_group(SYNTH, second_dir)
    run_group(first_dir)
    run_group(second_dir)

    group, _ = read_group_dir(first_dir)
    for image in group.images:
        assert png_bytes(first_dir, image.image_id) == png_bytes(
            second_dir, image.image_id
        )
    det_a = json.loads((first_dir / "diagnostics.json").read_text())["deterministic"]
    det_b = json.loads((second_dir / "diagnostics.json").read_text())["deterministic"]
    assert det_a == det_b


def test_run_many_sequential_and_parallel(tmp_path):
    config = SynthConfig(seed=5, n_images=2, width=48, height=48)
    dirs = []
    for index in range(2):
        d = tmp_path / f"g{index}"
        generate_group(
            SynthConfig(**{**config.__dict__, "seed": 5 + index}), d
        )
        dirs.append(d)

    sequential = run_many(dirs, jobs=1)
    assert [status for _, status in sequential] == [STATUS_OK, STATUS_OK]
    parallel = run_many(dirs, jobs=2)
    assert sorted(parallel) == sorted(sequential)


def test_run_many_reports_errors_without_raising(tmp_path):
    good = tmp_path / "good"
    generate_group(SynthConfig(seed=6, n_images=2, width=48, height=48), good)
    missing = tmp_path / "nope"
    results = dict(run_many([good, missing]))
    assert results[str(good)] == STATUS_OK
    assert results[str(missing)].startswith("error:")


def test_run_many_rejects_bad_jobs(tmp_path):
    with pytest.raises(ValueError):
        run_many([tmp_path], jobs=0)


# --- stage nesting guard ----------------------------------------------------------

def minimal_result(selected="a", merged=()):
    return CoSaliencyResult(
        image_id="img",
        selected_mask_id=selected,
        co_salient_score=1.0,
        merged_mask_ids=tuple(merged),
        final_mask=rect_mask(4, 4, 0, 0, 1, 1),
    )


def scored_of(mask_id):
    return ScoredProposal(
        proposal=proposal(mask_id, rect_mask(4, 4, 0, 0, 2, 2)),
        area_ratio=0.25, area_score=1.0, balanced_score=0.9,
    )


def salient_of(mask_id, is_fallback=False):
    return SalientMask(
        proposal=proposal(mask_id, rect_mask(4, 4, 0, 0, 2, 2)),
        saliency_score=0.9, is_fallback=is_fallback,
    )


def test_nesting_accepts_proper_chain():
    _check_nesting(
        ["a", "b"], ["a", "b"], ["a"], [scored_of("a")], [salient_of("a")],
        minimal_result("a"),
    )


def test_nesting_rejects_stage_growth():
    with pytest.raises(PipelineError, match="nesting"):
        _check_nesting(
            ["a"], ["a", "b"], ["a"], [scored_of("a")], [salient_of("a")],
            minimal_result("a"),
        )


def test_nesting_rejects_salient_outside_refined():
    with pytest.raises(PipelineError, match="salient"):
        _check_nesting(
            ["a", "b"], ["a", "b"], ["a", "b"], [scored_of("a")],
            [salient_of("b")], minimal_result("b"),
        )


def test_nesting_exempts_fallback():
    _check_nesting(
        ["a"], ["a"], ["a"], [],
        [salient_of(FALLBACK_MASK_ID, is_fallback=True)],
        minimal_result(FALLBACK_MASK_ID),
    )


def test_nesting_rejects_selection_outside_salient():
    with pytest.raises(PipelineError, match="selection"):
        _check_nesting(
            ["a", "b"], ["a", "b"], ["a", "b"],
            [scored_of("a"), scored_of("b")], [salient_of("a")],
            minimal_result("a", merged=["b"]),
        )


# --- config loading ----------------------------------------------------------------

def test_config_load_defaults():
    assert config_load() == DEFAULT_CONFIG


def test_config_load_from_file_and_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"t": 4, "tau_con": 0.8}))
    config = config_load(path, overrides={"t": 5, "tau_fb": None})
    assert config.t == 5  # override beats file
    assert config.tau_con == 0.8
    assert config.tau_fb == DEFAULT_CONFIG.tau_fb  # None overrides ignored


def test_config_load_completes_weight_pair(tmp_path):
    config = config_load(overrides={"alpha": 0.6})
    assert config.beta == pytest.approx(0.4, abs=1e-12)
    config = config_load(overrides={"beta": 0.45})
    assert config.alpha == pytest.approx(0.55, abs=1e-12)


def test_config_load_rejects_unknown_keys(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"tau_typo": 1}))
    with pytest.raises(ConfigError, match="tau_typo"):
        config_load(path)


def test_config_load_rejects_non_object(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        config_load(path)


def test_config_validation_still_applies():
    with pytest.raises(ConfigError):
        config_load(overrides={"alpha": 0.9, "beta": 0.9})
