class DinofeatError(Exception):
    pass


class MissingCheckpoint(DinofeatError):
    """No usable checkpoint: not cached, not given, or download failed."""


class UnreadableImage(DinofeatError):
    """Input image could not be opened or decoded."""


class ChecksumMismatch(DinofeatError):
    """Cached checkpoint no longer matches its recorded content hash."""
