"""Model adapter for cosal interchange directories.

Extracts what the co-saliency pipeline consumes: candidate masks with
quality estimates, raw attention maps, and prototype vectors on
request. Ships a deterministic classical backend for weight-free use
and guarded adapters for the published segmentation and feature models.
"""

from .config import DEFAULT_CONFIG, ExtractorConfig
from .errors import BackendUnavailableError, ExtractorError, UnknownMaskError
from .extract import ExtractReport, answer_requests, discover_images, extract_group, make_backend
from .lite import LiteBackend
from .samples import render_samples, sample_dir, write_samples

__all__ = [
    "BackendUnavailableError",
    "DEFAULT_CONFIG",
    "ExtractReport",
    "ExtractorConfig",
    "ExtractorError",
    "LiteBackend",
    "UnknownMaskError",
    "answer_requests",
    "discover_images",
    "extract_group",
    "make_backend",
    "render_samples",
    "sample_dir",
    "write_samples",
]

__version__ = "0.1.0"
