"""Prediction quality metrics and dataset-level evaluation.

Predictions and ground truth are 8-bit grayscale maps. F-measure is the
maximum over the 255 integer thresholds applied on the 8-bit grid, with
the conventional precision-leaning beta squared of 0.3. Structure and
enhanced-alignment measures are reported as unavailable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import EmptyGroundTruthError

BETA_SQUARED = 0.3

# Known filename prefixes stripped when matching predictions to ground
# truth, so prediction_X.png lines up with gt_X.png.
_STEM_PREFIXES = ("prediction_", "gt_")


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """A dense prediction or ground-truth map with values in [0, 1]."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.height, self.width):
            raise ValueError(
                f"values shape {values.shape} does not match {self.height}x{self.width}"
            )
        if values.size == 0:
            raise ValueError("saliency map may not be empty")
        if not np.all(np.isfinite(values)):
            raise ValueError("saliency map contains non-finite values")
        if float(values.min()) < 0.0 or float(values.max()) > 1.0:
            raise ValueError("saliency values must lie in [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


def load_saliency_png(path: str | Path) -> SaliencyMap:
    """Load an 8-bit grayscale PNG as a [0, 1] saliency map."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return SaliencyMap(width=arr.shape[1], height=arr.shape[0], values=arr)


def mae(pred: SaliencyMap, gt: SaliencyMap) -> float:
    """Mean absolute difference between two same-size maps."""
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ValueError(
            f"size mismatch: prediction {pred.width}x{pred.height} "
            f"vs ground truth {gt.width}x{gt.height}"
        )
    return float(np.abs(pred.values - gt.values).mean())


def max_f_measure(pred: SaliencyMap, gt: SaliencyMap) -> float:
    """Best F-measure over integer thresholds 1..255.

    The prediction is binarized at each threshold on the 8-bit grid; the
    ground truth must already be binary. A threshold with no predicted
    positives scores zero. Empty ground truth has no defined recall and
    raises, so callers can skip the image.
    """
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ValueError("prediction and ground truth sizes differ")
    gt_values = gt.values
    if not np.all((gt_values == 0.0) | (gt_values == 1.0)):
        raise ValueError("ground truth must be binary for F-measure")
    gt_fg = gt_values == 1.0
    n_fg = int(np.count_nonzero(gt_fg))
    if n_fg == 0:
        raise EmptyGroundTruthError("ground truth has no foreground")

    pred_u8 = np.rint(pred.values * 255.0).astype(np.int64)
    fg_hist = np.bincount(pred_u8[gt_fg].ravel(), minlength=256)
    all_hist = np.bincount(pred_u8.ravel(), minlength=256)
    # Cumulative counts of pixels at or above each threshold.
    tp_at = np.cumsum(fg_hist[::-1])[::-1]
    pp_at = np.cumsum(all_hist[::-1])[::-1]
    tp = tp_at[1:256].astype(np.float64)
    pp = pp_at[1:256].astype(np.float64)

    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pp > 0, tp / pp, 0.0)
        recall = tp / n_fg
        denom = BETA_SQUARED * precision + recall
        f = np.where(denom > 0, (1.0 + BETA_SQUARED) * precision * recall / denom, 0.0)
    return float(f.max())


def _resample_nearest(values: np.ndarray, width: int, height: int) -> np.ndarray:
    src_h, src_w = values.shape
    rows = np.minimum((np.arange(height) + 0.5) * src_h // height, src_h - 1).astype(int)
    cols = np.minimum((np.arange(width) + 0.5) * src_w // width, src_w - 1).astype(int)
    return values[np.ix_(rows, cols)]


def _match_stem(name: str) -> str:
    stem = Path(name).stem
    for prefix in _STEM_PREFIXES:
        if stem.startswith(prefix):
            return stem[len(prefix):]
    return stem


def _role_files(directory: Path, prefix: str) -> dict[str, Path]:
    # A group directory holds predictions and ground truth side by side;
    # when files with the role's prefix exist, only those play the role.
    files = sorted(directory.glob("*.png"))
    preferred = [p for p in files if p.name.startswith(prefix)]
    return {_match_stem(p.name): p for p in (preferred or files)}


def evaluate_dataset(pred_dir: str | Path, gt_dir: str | Path) -> dict:
    """Score every prediction against its ground truth by file stem.

    Predictions are resampled (nearest neighbor) to the ground-truth
    dimensions when sizes differ. The ground truth is binarized at 0.5
    for F-measure. Images whose ground truth is empty are skipped and
    listed; stems present on only one side are listed as unmatched.
    Means are unweighted over the scored images. The two directories
    may be the same one, with roles told apart by filename prefix.
    """
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    preds = _role_files(pred_dir, "prediction_")
    gts = _role_files(gt_dir, "gt_")

    matched = sorted(set(preds) & set(gts))
    unmatched = sorted(set(preds) ^ set(gts))
    per_image = []
    skipped = []
    for stem in matched:
        pred = load_saliency_png(preds[stem])
        gt = load_saliency_png(gts[stem])
        if (pred.width, pred.height) != (gt.width, gt.height):
            resized = _resample_nearest(pred.values, gt.width, gt.height)
            pred = SaliencyMap(width=gt.width, height=gt.height, values=resized)
        gt_binary = SaliencyMap(
            width=gt.width,
            height=gt.height,
            values=(gt.values >= 0.5).astype(np.float64),
        )
        try:
            f = max_f_measure(pred, gt_binary)
        except EmptyGroundTruthError:
            skipped.append(stem)
            continue
        per_image.append({"stem": stem, "mae": mae(pred, gt), "max_f": f})

    n = len(per_image)
    return {
        "n_scored": n,
        "mae": float(np.mean([row["mae"] for row in per_image])) if n else None,
        "max_f": float(np.mean([row["max_f"] for row in per_image])) if n else None,
        "s_measure": None,  # not implemented; reported as n/a
        "e_measure": None,  # not implemented; reported as n/a
        "per_image": per_image,
        "skipped_empty_gt": skipped,
        "unmatched": unmatched,
    }


def format_table(report: dict) -> str:
    """Render an evaluation report as a plain-text table."""
    def fmt(value: float | None) -> str:
        return "n/a" if value is None else f"{value:.6f}"

    lines = [
        f"{'stem':<28} {'MAE':>10} {'maxF':>10} {'S':>6} {'E':>6}",
        "-" * 64,
    ]
    for row in report["per_image"]:
        lines.append(
            f"{row['stem']:<28} {row['mae']:>10.6f} {row['max_f']:>10.6f} "
            f"{'n/a':>6} {'n/a':>6}"
        )
    lines.append("-" * 64)
    lines.append(
        f"{'mean (' + str(report['n_scored']) + ' images)':<28} "
        f"{fmt(report['mae']):>10} {fmt(report['max_f']):>10} {'n/a':>6} {'n/a':>6}"
    )
    if report["skipped_empty_gt"]:
        lines.append(f"skipped (empty ground truth): {', '.join(report['skipped_empty_gt'])}")
    if report["unmatched"]:
        lines.append(f"unmatched stems: {', '.join(report['unmatched'])}")
    return "\n".join(lines)


def write_metrics_json(report: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
