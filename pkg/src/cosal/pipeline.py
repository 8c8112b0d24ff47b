"""Group orchestration: ingest, filter, select, and write outputs.

``run_group`` drives one interchange directory through the whole chain
and writes prediction PNGs plus diagnostics.json next to the inputs.
Prototypes may be supplied up front (one-shot mode) or fetched through a
request/answer round trip: in two-pass mode a run that lacks prototypes
for some salient candidates writes prototype_requests.json and reports
status ``prototypes-requested`` instead of failing; once answer files
exist, the same invocation completes.

diagnostics.json keeps everything reproducible under "deterministic"
(floats serialized at 9 significant digits) and timing data under
"volatile", so byte comparisons of the deterministic section are stable
across reruns.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping, Sequence

from .consensus import CoSaliencyResult, run_ips
from .errors import ConfigError, IncompleteInputError, PipelineError
from .interchange import (
    read_group_dir,
    write_diagnostics,
    write_prediction,
    write_prototype_requests,
)
from .quality import ScoredProposal, qmg_stages
from .saliency import SalientMask, run_isf
from .types import DEFAULT_CONFIG, GroupRecord, PipelineConfig

logger = logging.getLogger(__name__)

MODES = ("oneshot", "two-pass")

STATUS_OK = "ok"
STATUS_PROTOTYPES_REQUESTED = "prototypes-requested"


@dataclass(frozen=True)
class RunOutcome:
    """What one ``run_group`` invocation produced."""

    status: str
    group_id: str
    predictions: dict
    diagnostics: dict
    results: tuple[CoSaliencyResult, ...] = ()
    request_path: str | None = None


def config_load(
    path: str | Path | None = None, overrides: Mapping | None = None
) -> PipelineConfig:
    """Build a config from an optional JSON file plus explicit overrides.

    Unknown keys fail loudly. When exactly one of alpha/beta is given,
    the other is completed to keep the pair summing to one, with a note
    in the log.
    """
    allowed = {f.name for f in fields(PipelineConfig)}
    values: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold an object")
        values.update(raw)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    if "alpha" in values and "beta" not in values:
        values["beta"] = 1.0 - float(values["alpha"])
        logger.info("beta not given, completing to %s so alpha+beta=1", values["beta"])
    elif "beta" in values and "alpha" not in values:
        values["alpha"] = 1.0 - float(values["beta"])
        logger.info("alpha not given, completing to %s so alpha+beta=1", values["alpha"])
    return PipelineConfig(**values)


def _round_floats(obj, digits: int = 9):
    """Round every float to ``digits`` significant digits, recursively."""
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, digits) for v in obj]
    return obj


def _check_nesting(
    raw: Sequence[str],
    coarse: Sequence[str],
    purified: Sequence[str],
    refined: Sequence[ScoredProposal],
    salient: Sequence[SalientMask],
    result: CoSaliencyResult,
) -> None:
    # Each stage may only narrow the previous one; the fallback substitute
    # is the single sanctioned exception to salient being refined masks.
    chain = [set(raw), set(coarse), set(purified), {s.proposal.mask_id for s in refined}]
    for earlier, later in zip(chain, chain[1:]):
        if not later <= earlier:
            raise PipelineError(f"stage nesting violated: {sorted(later - earlier)}")
    salient_ids = {s.proposal.mask_id for s in salient}
    if not any(s.is_fallback for s in salient) and not salient_ids <= chain[-1]:
        raise PipelineError("salient candidates must come from the refined set")
    selected_and_merged = {result.selected_mask_id, *result.merged_mask_ids}
    if not selected_and_merged <= salient_ids:
        raise PipelineError("selection must come from the salient set")


def run_group(
    group_dir: str | Path,
    config: PipelineConfig = DEFAULT_CONFIG,
    mode: str = "oneshot",
) -> RunOutcome:
    """Run the full pipeline over one group directory."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    group_dir = Path(group_dir)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    group, _manifest = read_group_dir(group_dir)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    traces = []
    for image in group.images:
        raw_ids = [p.mask_id for p in image.proposals]
        coarse, purified, refined = qmg_stages(image.proposals, config)
        traces.append(
            {
                "raw": raw_ids,
                "coarse": [p.mask_id for p in coarse],
                "purified": [p.mask_id for p in purified],
                "refined": refined,
            }
        )
    timings["qmg"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    isf_outputs = [
        run_isf(image, trace["refined"], config)
        for image, trace in zip(group.images, traces)
    ]
    timings["isf"] = time.perf_counter() - t0

    if group.n_images > 1:
        missing = _missing_prototypes(group, isf_outputs)
        if missing:
            if mode == "two-pass":
                path = write_prototype_requests(group_dir, group.group_id, missing)
                logger.info(
                    "group %s: %d image(s) await prototypes, request written to %s",
                    group.group_id, len(missing), path,
                )
                return RunOutcome(
                    status=STATUS_PROTOTYPES_REQUESTED,
                    group_id=group.group_id,
                    predictions={},
                    diagnostics={},
                    request_path=str(path),
                )
            wanted = ", ".join(
                f"{image_id}:{ids}" for image_id, ids, _ in missing
            )
            raise IncompleteInputError(f"prototypes missing in one-shot mode: {wanted}")

    t0 = time.perf_counter()
    results = run_ips(group, isf_outputs, config)
    timings["ips"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    predictions = {}
    image_reports = []
    for image, trace, salient, result in zip(group.images, traces, isf_outputs, results):
        _check_nesting(
            trace["raw"], trace["coarse"], trace["purified"], trace["refined"],
            salient, result,
        )
        predictions[image.image_id] = result.final_mask
        write_prediction(group_dir, image.image_id, result.final_mask)
        image_reports.append(_image_report(image.image_id, trace, salient, result))
    diagnostics = {
        "deterministic": _round_floats(
            {
                "group_id": group.group_id,
                "mode": mode,
                "config": config.as_dict(),
                "images": image_reports,
            }
        ),
        "volatile": {"timings_s": timings},
    }
    timings["write"] = time.perf_counter() - t0
    write_diagnostics(group_dir, diagnostics)

    return RunOutcome(
        status=STATUS_OK,
        group_id=group.group_id,
        predictions=predictions,
        diagnostics=diagnostics,
        results=tuple(results),
    )


def _missing_prototypes(
    group: GroupRecord, isf_outputs: Sequence[Sequence[SalientMask]]
) -> list[tuple[str, list[str], dict]]:
    """Salient mask_ids without prototypes, with geometry for synthesized ones."""
    missing = []
    for image, salient in zip(group.images, isf_outputs):
        ids = [
            sm.proposal.mask_id
            for sm in salient
            if sm.proposal.mask_id not in image.prototypes
        ]
        if not ids:
            continue
        known = {p.mask_id for p in image.proposals}
        synthetic = {
            sm.proposal.mask_id: sm.proposal.mask
            for sm in salient
            if sm.proposal.mask_id in ids and sm.proposal.mask_id not in known
        }
        missing.append((image.image_id, ids, synthetic))
    return missing


def _image_report(
    image_id: str,
    trace: Mapping,
    salient: Sequence[SalientMask],
    result: CoSaliencyResult,
) -> dict:
    return {
        "image_id": image_id,
        "fallback": any(s.is_fallback for s in salient),
        "ips_skipped": result.ips_skipped,
        "stages": {
            "raw": list(trace["raw"]),
            "coarse": list(trace["coarse"]),
            "purified": list(trace["purified"]),
            "refined": [
                {
                    "mask_id": sp.proposal.mask_id,
                    "area_ratio": sp.area_ratio,
                    "area_score": sp.area_score,
                    "balanced_score": sp.balanced_score,
                }
                for sp in trace["refined"]
            ],
            "salient": [
                {
                    "mask_id": sm.proposal.mask_id,
                    "saliency_score": sm.saliency_score,
                    "is_fallback": sm.is_fallback,
                }
                for sm in salient
            ],
            "selected": {
                "mask_id": result.selected_mask_id,
                "co_salient_score": result.co_salient_score,
                "merged_mask_ids": list(result.merged_mask_ids),
            },
        },
    }


def _run_one(args: tuple) -> tuple[str, str]:
    directory, config, mode = args
    try:
        outcome = run_group(directory, config, mode)
        return str(directory), outcome.status
    except PipelineError as exc:
        return str(directory), f"error: {exc}"


def run_many(
    group_dirs: Sequence[str | Path],
    config: PipelineConfig = DEFAULT_CONFIG,
    mode: str = "oneshot",
    jobs: int = 1,
) -> list[tuple[str, str]]:
    """Run several independent groups, optionally in parallel."""
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    tasks = [(Path(d), config, mode) for d in group_dirs]
    if jobs == 1 or len(tasks) <= 1:
        return [_run_one(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, tasks))
