"""Detection core: hash pattern checking, byte-level diffing, tree scanning.

The scan pipeline is staged: a file's SHA-256 against its baseline digest
decides Clean vs Modified, and only Modified findings (with a backed-up copy
available) get the more expensive byte-by-byte comparison for forensic
detail. Signature lookup runs on every observed digest and upgrades a
finding to SignatureHit.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from .errors import FileUnreadable, ParseError
from .manifest import (
    CHUNK_SIZE,
    Digest,
    Manifest,
    backup_blob_path,
    is_digest,
    normalize_digest,
    path_sort_key,
    sha256_file_with_size,
    validate_path,
    walk_regular_files,
)
from .signatures import SignatureDb

CLEAN = "Clean"
MODIFIED = "Modified"
MISSING = "Missing"
UNKNOWN = "Unknown"
SIGNATURE_HIT = "SignatureHit"

STATUSES = (CLEAN, MODIFIED, MISSING, UNKNOWN, SIGNATURE_HIT)

REPORT_HEADER = "KRDP-REPORT v1"

_SUMMARY_KEYS = (
    ("clean", CLEAN),
    ("modified", MODIFIED),
    ("missing", MISSING),
    ("unknown", UNKNOWN),
    ("sighit", SIGNATURE_HIT),
)


@dataclass(frozen=True)
class PatternVerdict:
    """Result of comparing a live file's digest against its baseline digest."""

    equal: bool
    baseline_digest: Digest
    observed_digest: Digest

    def __post_init__(self) -> None:
        if self.equal != (self.baseline_digest == self.observed_digest):
            raise ValueError("equal flag inconsistent with digests")


@dataclass(frozen=True)
class DiffReport:
    """Byte-level comparison outcome for a clean/tainted file pair."""

    equal: bool
    length_clean: int
    length_tainted: int
    first_divergence: int | None

    def __post_init__(self) -> None:
        if self.equal:
            if self.first_divergence is not None:
                raise ValueError("equal diff cannot carry a divergence offset")
            if self.length_clean != self.length_tainted:
                raise ValueError("equal diff requires matching lengths")
        else:
            if self.first_divergence is None:
                raise ValueError("unequal diff requires a divergence offset")


@dataclass(frozen=True)
class ScanFinding:
    """Per-file verdict. `error` annotates files that could not be read."""

    path: str
    status: str
    observed_digest: Digest | None = None
    baseline_digest: Digest | None = None
    signature_name: str | None = None
    size_delta: int | None = None
    diff: DiffReport | None = None
    error: str | None = None

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise ValueError(f"unknown status: {self.status!r}")
        if self.status == CLEAN and (
            self.observed_digest is None
            or self.baseline_digest is None
            or self.observed_digest != self.baseline_digest
        ):
            raise ValueError("Clean requires equal digests on both sides")
        if self.status == MODIFIED and (
            self.observed_digest is None
            or self.baseline_digest is None
            or self.observed_digest == self.baseline_digest
        ):
            raise ValueError("Modified requires differing digests on both sides")
        if self.status == MISSING and self.observed_digest is not None:
            raise ValueError("Missing cannot carry an observed digest")
        if self.status == UNKNOWN and self.baseline_digest is not None:
            raise ValueError("Unknown cannot carry a baseline digest")
        if self.status == SIGNATURE_HIT and not self.signature_name:
            raise ValueError("SignatureHit requires a signature name")


@dataclass(frozen=True)
class ScanReport:
    scanned_at: int
    findings: tuple[ScanFinding, ...]

    @property
    def counts(self) -> dict[str, int]:
        tally = {status: 0 for status in STATUSES}
        for finding in self.findings:
            tally[finding.status] += 1
        return tally

    @property
    def all_clean(self) -> bool:
        return all(f.status == CLEAN for f in self.findings)


def pattern_check(baseline_digest: Digest, observed_file) -> PatternVerdict:
    """Hash a live file and compare it to the trusted digest."""
    baseline = normalize_digest(baseline_digest)
    observed, _ = sha256_file_with_size(observed_file)
    return PatternVerdict(
        equal=observed == baseline,
        baseline_digest=baseline,
        observed_digest=observed,
    )


def byte_compare(clean, tainted, chunk_size: int = CHUNK_SIZE) -> DiffReport:
    """Stream two files in lockstep and report the first differing offset.

    Files of different length are unequal even when the shorter is a prefix
    of the longer; the divergence offset is then the shorter length.
    """
    try:
        with open(clean, "rb") as f1, open(tainted, "rb") as f2:
            length_clean = os.fstat(f1.fileno()).st_size
            length_tainted = os.fstat(f2.fileno()).st_size
            offset = 0
            first: int | None = None
            while True:
                a = f1.read(chunk_size)
                b = f2.read(chunk_size)
                if a == b:
                    if not a:
                        break
                    offset += len(a)
                    continue
                common = min(len(a), len(b))
                for i in range(common):
                    if a[i] != b[i]:
                        first = offset + i
                        break
                else:
                    # chunks equal up to the shorter read: one file ended
                    first = offset + common
                break
    except OSError as exc:
        raise FileUnreadable(str(exc)) from exc
    return DiffReport(
        equal=first is None,
        length_clean=length_clean,
        length_tainted=length_tainted,
        first_divergence=first,
    )


def scan(
    baseline: Manifest,
    root,
    db: SignatureDb | None = None,
    backup_store=None,
    excludes: tuple[str, ...] | list[str] = (),
    workers: int = 1,
    scanned_at: int | None = None,
) -> ScanReport:
    """Classify every baseline and on-disk file against the trusted view.

    Baseline paths absent on disk become Missing; present ones become Clean
    or Modified by digest. On-disk paths absent from the baseline become
    Unknown. Any observed digest found in the signature db upgrades its
    finding to SignatureHit. Per-file read errors are recorded on the
    finding, never raised.
    """
    files, _, unreadable_dirs = walk_regular_files(root, excludes)
    on_disk = dict(files)
    baseline_paths = {rec.path for rec in baseline.records}

    def hash_job(full: str):
        try:
            return sha256_file_with_size(full)
        except FileUnreadable as exc:
            return exc

    to_hash = [rel for rel, _ in files]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hashed = dict(
                zip(to_hash, pool.map(lambda rel: hash_job(on_disk[rel]), to_hash))
            )
    else:
        hashed = {rel: hash_job(on_disk[rel]) for rel in to_hash}

    findings: list[ScanFinding] = []

    for rec in baseline.records:
        if rec.path not in on_disk:
            note = "file absent from the scanned tree"
            if rec.path in unreadable_dirs:
                note = "file unreadable during walk"
            findings.append(
                ScanFinding(
                    path=rec.path,
                    status=MISSING,
                    baseline_digest=rec.digest,
                    error=None if rec.path not in unreadable_dirs else note,
                )
            )
            continue
        outcome = hashed[rec.path]
        if isinstance(outcome, FileUnreadable):
            findings.append(
                ScanFinding(
                    path=rec.path,
                    status=MISSING,
                    baseline_digest=rec.digest,
                    error=f"read error: {outcome}",
                )
            )
            continue
        digest, size = outcome
        if digest == rec.digest:
            findings.append(
                ScanFinding(
                    path=rec.path,
                    status=CLEAN,
                    observed_digest=digest,
                    baseline_digest=rec.digest,
                )
            )
            continue
        diff = None
        if backup_store is not None:
            blob = backup_blob_path(backup_store, rec.digest)
            if blob.is_file():
                try:
                    diff = byte_compare(blob, on_disk[rec.path])
                except FileUnreadable:
                    diff = None
        findings.append(
            ScanFinding(
                path=rec.path,
                status=MODIFIED,
                observed_digest=digest,
                baseline_digest=rec.digest,
                size_delta=size - rec.size,
                diff=diff,
            )
        )

    for rel, _ in files:
        if rel in baseline_paths:
            continue
        outcome = hashed[rel]
        if isinstance(outcome, FileUnreadable):
            findings.append(
                ScanFinding(path=rel, status=UNKNOWN, error=f"read error: {outcome}")
            )
        else:
            digest, _size = outcome
            findings.append(
                ScanFinding(path=rel, status=UNKNOWN, observed_digest=digest)
            )

    if db is not None:
        for i, finding in enumerate(findings):
            if finding.observed_digest is None:
                continue
            hit = db.match_digest(finding.observed_digest)
            if hit is not None:
                findings[i] = replace(
                    finding, status=SIGNATURE_HIT, signature_name=hit.name
                )

    findings.sort(key=lambda f: path_sort_key(f.path))
    when = int(time.time()) if scanned_at is None else scanned_at
    return ScanReport(scanned_at=when, findings=tuple(findings))


def _dash(value) -> str:
    return "-" if value is None else str(value)


def render_scan_report(report: ScanReport) -> str:
    """Machine-readable report: header, summary line, one line per finding."""
    counts = report.counts
    summary = " ".join(f"{key}={counts[status]}" for key, status in _SUMMARY_KEYS)
    lines = [REPORT_HEADER, summary]
    for f in report.findings:
        delta = "-" if f.size_delta is None else f"{f.size_delta:+d}"
        lines.append(
            "\t".join(
                (
                    f.status,
                    f.path,
                    _dash(f.observed_digest),
                    _dash(f.baseline_digest),
                    delta,
                    _dash(f.signature_name),
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_scan_report(text: str | bytes) -> ScanReport:
    """Parse the machine format back into a ScanReport (scanned_at is not
    part of the wire format and comes back as 0)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if not text.endswith("\n"):
        raise ParseError("missing trailing newline")
    lines = text[:-1].split("\n")
    if len(lines) < 2 or lines[0] != REPORT_HEADER:
        raise ParseError("bad report header")
    summary_parts = lines[1].split(" ")
    if len(summary_parts) != len(_SUMMARY_KEYS):
        raise ParseError(f"bad summary line: {lines[1]!r}")
    declared: dict[str, int] = {}
    for part, (key, status) in zip(summary_parts, _SUMMARY_KEYS):
        prefix = key + "="
        if not part.startswith(prefix):
            raise ParseError(f"bad summary field: {part!r}")
        try:
            declared[status] = int(part[len(prefix):], 10)
        except ValueError as exc:
            raise ParseError(f"bad summary count: {part!r}") from exc
    findings = []
    for line in lines[2:]:
        parts = line.split("\t")
        if len(parts) != 6:
            raise ParseError(f"bad finding line: {line!r}")
        status, path, observed, base, delta, signame = parts
        if status not in STATUSES:
            raise ParseError(f"unknown status: {status!r}")
        try:
            validate_path(path)
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
        for d in (observed, base):
            if d != "-" and not is_digest(d):
                raise ParseError(f"bad digest field: {d!r}")
        try:
            size_delta = None if delta == "-" else int(delta, 10)
        except ValueError as exc:
            raise ParseError(f"bad size delta: {delta!r}") from exc
        try:
            findings.append(
                ScanFinding(
                    path=path,
                    status=status,
                    observed_digest=None if observed == "-" else observed,
                    baseline_digest=None if base == "-" else base,
                    signature_name=None if signame == "-" else signame,
                    size_delta=size_delta,
                )
            )
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
    report = ScanReport(scanned_at=0, findings=tuple(findings))
    if report.counts != declared:
        raise ParseError("summary counts disagree with findings")
    return report
