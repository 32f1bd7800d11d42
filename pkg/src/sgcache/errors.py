"""Exception types shared across the package."""


class SgCacheError(Exception):
    """Base class for all errors raised by this package."""


class BadAddress(SgCacheError):
    """Zone or page index outside the device geometry."""


class ZoneFull(SgCacheError):
    """Append attempted on a zone whose write pointer is at capacity."""


class UnwrittenPage(SgCacheError):
    """Read of a page that was never written, or was erased by a zone reset."""


class DeviceFullDeadlock(SgCacheError):
    """FTL garbage collection cannot reclaim anything; the device is misconfigured."""


class BadKey(SgCacheError):
    """Empty or otherwise unusable object key."""


class MalformedSet(SgCacheError):
    """Bytes passed to the set decoder were not produced by the encoder."""


class ObjectTooLarge(SgCacheError):
    """Object does not fit into a single set page."""


class PoolExhausted(SgCacheError):
    """The device has no zone left for a set-group flush; configuration error."""


class ImmutableFilter(SgCacheError):
    """Write to a set-level filter whose owning set-group already flushed."""


class BadParams(SgCacheError):
    """Analytic model called with out-of-domain parameters."""


class ParseError(SgCacheError):
    """Malformed trace file line."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class ConfigError(SgCacheError):
    """Invalid harness configuration; message carries the field path."""
