"""krdp: host-based file-integrity and rootkit-detection toolkit.

Pipeline: snapshot a trusted baseline manifest, scan live trees against it
(SHA-256 pattern check, then byte-level diff for detail), cross-view diff
the observed file listing against the trusted view to expose hidden paths,
quarantine and guard flagged files, and track before/after system
performance. A deterministic simulator builds sandbox trees and applies
rootkit-like mutations so every scenario is reproducible.
"""

from .crossview import ViewDiff, cross_view_diff, observe
from .detector import (
    DiffReport,
    PatternVerdict,
    ScanFinding,
    ScanReport,
    byte_compare,
    pattern_check,
    scan,
)
from .errors import KrdpError, PreventionBlocked
from .harness import (
    SandboxSpec,
    build_sandbox,
    hide_from_view,
    infect_grow_to,
    infect_overwrite,
)
from .manifest import (
    FileRecord,
    Manifest,
    read_manifest,
    sha256_bytes,
    sha256_file,
    snapshot,
    write_manifest,
)
from .perfmon import PerfDelta, PerfSnapshot, delta, render_report, sample
from .response import QuarantineStore, alert, guarded_open, quarantine, restore
from .signatures import Signature, SignatureDb, load_signatures, save_signatures

__version__ = "0.1.0"

__all__ = [
    "DiffReport",
    "FileRecord",
    "KrdpError",
    "Manifest",
    "PatternVerdict",
    "PerfDelta",
    "PerfSnapshot",
    "PreventionBlocked",
    "QuarantineStore",
    "SandboxSpec",
    "ScanFinding",
    "ScanReport",
    "Signature",
    "SignatureDb",
    "ViewDiff",
    "alert",
    "build_sandbox",
    "byte_compare",
    "cross_view_diff",
    "delta",
    "guarded_open",
    "hide_from_view",
    "infect_grow_to",
    "infect_overwrite",
    "load_signatures",
    "observe",
    "pattern_check",
    "quarantine",
    "read_manifest",
    "render_report",
    "restore",
    "sample",
    "save_signatures",
    "scan",
    "sha256_bytes",
    "sha256_file",
    "snapshot",
    "write_manifest",
]
