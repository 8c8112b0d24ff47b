"""Exception hierarchy. Everything raised on purpose derives from ExtractorError."""


class ExtractorError(Exception):
    pass


class UnknownMaskError(ExtractorError):
    """A prototype request names a mask the extractor cannot locate."""


class BackendUnavailableError(ExtractorError):
    """A model backend's dependencies or weights are missing."""
