"""Core domain types shared by every pipeline stage.

All types validate on construction and are treated as immutable
afterwards. Arrays held by a record have their write flag cleared.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, IngestionError, MaskCodecError

# Reserved mask id for the attention-derived substitute emitted when an
# image ends up with no usable candidates. It never appears among an
# image's proposals but is accepted in prototype tables so that groups
# containing such images can still run in one pass.
FALLBACK_MASK_ID = "__fallback__"


@dataclass(frozen=True)
class BinaryMask:
    """Run-length encoded binary raster.

    Runs alternate background/foreground in row-major scan order, and the
    first run counts background pixels (zero when the raster starts with
    foreground). Only the leading run may be zero, so every raster has
    exactly one valid encoding.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(
                f"mask dimensions must be positive, got {self.width}x{self.height}"
            )
        runs = tuple(int(r) for r in self.runs)
        object.__setattr__(self, "runs", runs)
        if not runs:
            raise MaskCodecError("run list may not be empty")
        if any(r < 0 for r in runs):
            raise MaskCodecError(f"negative run length in {runs[:8]}...")
        if any(r == 0 for r in runs[1:]):
            raise MaskCodecError("zero-length run after the leading background run")
        total = sum(runs)
        expected = self.width * self.height
        if total != expected:
            raise MaskCodecError(f"runs sum to {total}, expected {expected}")


@dataclass(frozen=True)
class MaskProposal:
    """A candidate object mask with the proposer's own quality estimate."""

    mask_id: str
    mask: BinaryMask
    predicted_iou: float

    def __post_init__(self) -> None:
        if not self.mask_id:
            raise IngestionError("mask_id may not be empty")
        if not 0.0 <= self.predicted_iou <= 1.0:
            raise IngestionError(
                f"predicted_iou must lie in [0, 1], got {self.predicted_iou!r}"
            )


@dataclass(frozen=True, eq=False)
class AttentionMap:
    """A dense float attention grid, finite everywhere.

    The grid resolution is independent of the image resolution; maps are
    resampled to pixel resolution before they are scored against masks.
    """

    rows: int
    cols: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError(f"attention grid must be non-empty, got {self.rows}x{self.cols}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.rows, self.cols):
            raise IngestionError(
                f"attention values shape {values.shape} does not match "
                f"declared grid {self.rows}x{self.cols}"
            )
        if not np.all(np.isfinite(values)):
            raise IngestionError("attention map contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class PrototypeVector:
    """A semantic embedding of one masked region."""

    image_id: str
    mask_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise IngestionError(f"prototype must be a non-empty vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise IngestionError(f"prototype for mask {self.mask_id!r} has non-finite values")
        if float(np.linalg.norm(values)) == 0.0:
            raise IngestionError(f"prototype for mask {self.mask_id!r} is the zero vector")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """Everything the pipeline knows about one image of a group."""

    image_id: str
    width: int
    height: int
    proposals: tuple[MaskProposal, ...]
    attention: AttentionMap
    prototypes: dict[str, PrototypeVector] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.image_id:
            raise IngestionError("image_id may not be empty")
        if self.width <= 0 or self.height <= 0:
            raise IngestionError(
                f"image {self.image_id!r} has non-positive dimensions "
                f"{self.width}x{self.height}"
            )
        proposals = tuple(self.proposals)
        object.__setattr__(self, "proposals", proposals)
        ids = [p.mask_id for p in proposals]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise IngestionError(f"image {self.image_id!r} has duplicate mask ids {dupes}")
        for p in proposals:
            if (p.mask.width, p.mask.height) != (self.width, self.height):
                raise IngestionError(
                    f"mask {p.mask_id!r} is {p.mask.width}x{p.mask.height}, "
                    f"image {self.image_id!r} is {self.width}x{self.height}"
                )
        allowed = set(ids) | {FALLBACK_MASK_ID}
        for key, proto in self.prototypes.items():
            if key not in allowed:
                raise IngestionError(
                    f"prototype key {key!r} does not name a proposal of image {self.image_id!r}"
                )
            if proto.mask_id != key:
                raise IngestionError(
                    f"prototype stored under {key!r} claims mask_id {proto.mask_id!r}"
                )

    def proposal_ids(self) -> list[str]:
        return [p.mask_id for p in self.proposals]


@dataclass(frozen=True, eq=False)
class GroupRecord:
    """An ordered group of images sharing one co-salient object category."""

    group_id: str
    images: tuple[ImageRecord, ...]

    def __post_init__(self) -> None:
        if not self.group_id:
            raise IngestionError("group_id may not be empty")
        images = tuple(self.images)
        object.__setattr__(self, "images", images)
        if not images:
            raise IngestionError(f"group {self.group_id!r} has no images")
        ids = [im.image_id for im in images]
        if len(set(ids)) != len(ids):
            raise IngestionError(f"group {self.group_id!r} has duplicate image ids")

    @property
    def n_images(self) -> int:
        return len(self.images)


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable thresholds and weights for the whole pipeline.

    Defaults reproduce the reference operating point. ``alpha`` and
    ``beta`` blend the proposer's quality estimate with the area score
    and must sum to one.
    """

    tau_area: float = 0.01       # minimum area ratio kept by the initial filter
    tau_con: float = 0.85        # containment ratio above which a smaller mask is dropped
    r_min: float = 0.15          # lower edge of the ideal area-ratio band
    r_max: float = 0.7           # upper edge of the ideal area-ratio band
    sigma: float = 0.7           # floor of the area score above r_max
    gamma: float = 1.5           # decay slope of the area score above r_max
    alpha: float = 0.7           # weight of predicted_iou in the balanced score
    beta: float = 0.3            # weight of the area score in the balanced score
    t_r: int = 10                # refined candidates kept per image
    t: int = 6                   # salient candidates kept per image
    tau_fb: float = 0.05         # saliency level below which the fallback kicks in
    tau_diff: float = 0.1        # max co-salient score gap for instance merging
    sem_percentile: float = 0.8  # quantile of intra-image similarities gating merges
    tie_break_policy: str = "mask_id"

    def __post_init__(self) -> None:
        unit = {
            "tau_area": self.tau_area,
            "tau_con": self.tau_con,
            "sigma": self.sigma,
            "alpha": self.alpha,
            "beta": self.beta,
            "tau_fb": self.tau_fb,
            "tau_diff": self.tau_diff,
            "sem_percentile": self.sem_percentile,
        }
        for name, value in unit.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
        if self.gamma < 0.0:
            raise ConfigError(f"gamma must be non-negative, got {self.gamma!r}")
        if abs(self.alpha + self.beta - 1.0) > 1e-9:
            raise ConfigError(
                f"alpha + beta must equal 1, got {self.alpha!r} + {self.beta!r}"
            )
        if not 0.0 < self.r_min < self.r_max <= 1.0:
            raise ConfigError(
                f"need 0 < r_min < r_max <= 1, got r_min={self.r_min!r} r_max={self.r_max!r}"
            )
        if not 0.0 < self.tau_area < self.r_min:
            raise ConfigError(
                f"need 0 < tau_area < r_min, got tau_area={self.tau_area!r} r_min={self.r_min!r}"
            )
        if not (isinstance(self.t_r, int) and isinstance(self.t, int)):
            raise ConfigError("t and t_r must be integers")
        if not 1 <= self.t <= self.t_r:
            raise ConfigError(f"need 1 <= t <= t_r, got t={self.t!r} t_r={self.t_r!r}")
        if self.tie_break_policy != "mask_id":
            raise ConfigError(
                f"unsupported tie_break_policy {self.tie_break_policy!r} "
                "(only 'mask_id' is defined)"
            )

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_CONFIG = PipelineConfig()
