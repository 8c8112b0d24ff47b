"""Exception types raised across the pipeline.

Local numeric preconditions (zero-area masks, mismatched grid shapes)
raise plain ValueError; these classes mark failures that callers route
on: corrupt encodings, unusable input files, and incomplete groups.
"""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for all pipeline-specific failures."""


class MaskCodecError(PipelineError):
    """A run-length encoding violates the mask format contract."""


class IngestionError(PipelineError):
    """An input record or file cannot be turned into a valid group."""


class InterchangeError(PipelineError):
    """A group directory does not conform to the interchange layout."""


class IncompleteInputError(PipelineError):
    """A stage needs data (typically a prototype) that was not provided."""


class DegenerateGroupError(PipelineError):
    """An operation that needs several images received a single-image group."""


class ConfigError(PipelineError):
    """A configuration value or combination is invalid."""


class EmptyGroundTruthError(PipelineError):
    """A ground-truth map has no foreground, so F-measure is undefined."""
