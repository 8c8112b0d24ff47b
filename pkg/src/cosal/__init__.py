"""Training-free co-salient object detection over mask proposals.

Given a group of images that share one object category, each image's
raw mask proposals are quality-filtered, saliency-filtered against an
attention map, and finally voted on across the group through prototype
similarity, yielding one co-salient mask per image.
"""

from .attention import normalize_attention, resample_attention
from .consensus import (
    CoSaliencyResult,
    PrototypeBank,
    build_bank,
    co_salient_scores,
    cosine_matrix,
    cross_image_max,
    merge_extra_instances,
    run_ips,
    select_from_bank,
    select_per_image,
)
from .errors import (
    ConfigError,
    DegenerateGroupError,
    EmptyGroundTruthError,
    IncompleteInputError,
    IngestionError,
    InterchangeError,
    MaskCodecError,
    PipelineError,
)
from .interchange import read_group_dir, validate_group_dir, write_group_dir
from .metrics import SaliencyMap, evaluate_dataset, load_saliency_png, mae, max_f_measure
from .pipeline import RunOutcome, config_load, run_group, run_many
from .quality import (
    ScoredProposal,
    area_ratio,
    area_score,
    balanced_score,
    initial_filter,
    overlap_filter,
    overlap_ratio,
    run_qmg,
)
from .rle import intersection_area, mask_area, rle_decode, rle_encode
from .saliency import SalientMask, fallback_mask, run_isf, saliency_score, select_salient
from .synth import SynthConfig, generate_group, oracle_ips, oracle_overlap_filter
from .types import (
    DEFAULT_CONFIG,
    FALLBACK_MASK_ID,
    AttentionMap,
    BinaryMask,
    GroupRecord,
    ImageRecord,
    MaskProposal,
    PipelineConfig,
    PrototypeVector,
)
from .viz import render_overlay, viz

__version__ = "0.1.0"
