"""Exception types shared across the toolkit.

Every error raised by krdp derives from KrdpError so callers (and the CLI)
can map the whole family to a diagnostic and an exit code in one place.
"""


class KrdpError(Exception):
    """Base class for all krdp errors."""


class FileUnreadable(KrdpError):
    """A file is missing, unreadable, or not a regular file."""


class RootUnreadable(KrdpError):
    """A scan/snapshot root does not exist or cannot be listed."""


class MalformedManifest(KrdpError):
    """Manifest bytes violate the canonical format."""


class MalformedSignatureDb(KrdpError):
    """Signature database bytes violate the format."""


class DuplicateSignatureName(MalformedSignatureDb):
    """Two signature entries share a name."""


class ParseError(KrdpError):
    """A report, view diff, snapshot line, index, or sandbox spec failed to parse."""


class StoreWriteFailed(KrdpError):
    """Quarantine store could not be written; the original file is left in place."""


class UnknownEntry(KrdpError):
    """Quarantine entry id not present in the store index."""


class DigestMismatchOnRestore(KrdpError):
    """Restored bytes do not hash to the recorded digest (store corruption)."""


class PreventionBlocked(KrdpError):
    """Guarded open refused: the path is quarantined or its digest is a known signature."""


class LogWriteFailed(KrdpError):
    """Alert log could not be appended to."""


class RootNotEmpty(KrdpError):
    """Sandbox target directory already contains entries."""


class TargetSmallerThanFile(KrdpError):
    """Grow target is below the file's current size."""


class IncomparableSnapshots(KrdpError):
    """Performance snapshots are out of order and cannot be differenced."""


class ConfigError(KrdpError):
    """CLI configuration is missing, unreadable, or inconsistent."""
