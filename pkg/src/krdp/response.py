"""Prevention: quarantine, restore, guarded open, and alerting.

A quarantine store isolates flagged files so they can no longer be opened
through the toolkit. Layout on disk:

    <store>/blobs/<digest>   content-addressed copies (duplicates share one blob)
    <store>/index            append-only: <id>\\t<digest>\\t<at>\\t<reason>\\t<path>
    <store>/restored         append-only list of entry ids that were restored
    <store>/lock             advisory lock taken by writers

An index entry is appended only after its blob is durably on disk, so a
crash between the two leaves an orphan blob, never a dangling entry.
"""

from __future__ import annotations

import fcntl
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    DigestMismatchOnRestore,
    FileUnreadable,
    LogWriteFailed,
    ParseError,
    PreventionBlocked,
    StoreWriteFailed,
    UnknownEntry,
)
from .manifest import (
    CHUNK_SIZE,
    Digest,
    is_digest,
    sha256_bytes,
    sha256_file_with_size,
)
from .signatures import SignatureDb

INDEX_NAME = "index"
BLOBS_DIR = "blobs"
RESTORED_NAME = "restored"
LOCK_NAME = "lock"


@dataclass(frozen=True)
class QuarantineEntry:
    id: int
    original_path: str
    digest: Digest
    quarantined_at: int
    reason: str


@dataclass(frozen=True)
class Alert:
    at: int
    path: str
    status: str
    message: str


def _norm_path(path) -> str:
    return str(path).replace("\\", "/")


def _sanitize(text: str) -> str:
    # interior index fields must stay single-line and tab-free
    return text.replace("\t", " ").replace("\n", " ").replace("\r", " ")


def render_index(entries) -> str:
    lines = [
        f"{e.id}\t{e.digest}\t{e.quarantined_at}\t{e.reason}\t{e.original_path}"
        for e in entries
    ]
    return "".join(line + "\n" for line in lines)


def parse_index(text: str | bytes) -> list[QuarantineEntry]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    entries: list[QuarantineEntry] = []
    last_id = 0
    for line in text.splitlines():
        parts = line.split("\t", 4)
        if len(parts) != 5:
            raise ParseError(f"bad index line: {line!r}")
        id_text, digest, at_text, reason, original = parts
        try:
            entry_id = int(id_text, 10)
            at = int(at_text, 10)
        except ValueError as exc:
            raise ParseError(f"bad index numbers: {line!r}") from exc
        if not is_digest(digest):
            raise ParseError(f"bad index digest: {digest!r}")
        if entry_id <= last_id:
            raise ParseError(f"index ids not strictly increasing at {entry_id}")
        last_id = entry_id
        entries.append(
            QuarantineEntry(
                id=entry_id,
                original_path=original,
                digest=digest,
                quarantined_at=at,
                reason=reason,
            )
        )
    return entries


class QuarantineStore:
    """One directory holding quarantined content and its append-only index."""

    def __init__(self, root, create: bool = True):
        self.root = Path(root)
        if create:
            (self.root / BLOBS_DIR).mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / INDEX_NAME
        self.restored_path = self.root / RESTORED_NAME
        self.lock_path = self.root / LOCK_NAME

    @contextmanager
    def _lock(self):
        # single writer per store; readers do not take the lock
        fd = os.open(self.lock_path, os.O_CREAT | os.O_RDWR, 0o644)
        try:
            fcntl.flock(fd, fcntl.LOCK_EX)
            yield
        finally:
            fcntl.flock(fd, fcntl.LOCK_UN)
            os.close(fd)

    def blob_path(self, digest: Digest) -> Path:
        return self.root / BLOBS_DIR / digest

    def entries(self) -> list[QuarantineEntry]:
        if not self.index_path.exists():
            return []
        return parse_index(self.index_path.read_bytes())

    def restored_ids(self) -> set[int]:
        if not self.restored_path.exists():
            return set()
        ids = set()
        for line in self.restored_path.read_text().splitlines():
            if line.strip():
                ids.add(int(line.strip(), 10))
        return ids

    def active_entries(self) -> list[QuarantineEntry]:
        restored = self.restored_ids()
        return [e for e in self.entries() if e.id not in restored]

    def active_entry_for(self, original_path) -> QuarantineEntry | None:
        wanted = _norm_path(original_path)
        for entry in self.active_entries():
            if entry.original_path == wanted:
                return entry
        return None

    def _write_blob(self, source, digest: Digest) -> None:
        blob = self.blob_path(digest)
        if blob.exists():
            return
        tmp = self.root / BLOBS_DIR / f".tmp.{digest}.{os.getpid()}"
        try:
            with open(source, "rb") as fin, open(tmp, "wb") as fout:
                for chunk in iter(lambda: fin.read(CHUNK_SIZE), b""):
                    fout.write(chunk)
                fout.flush()
                os.fsync(fout.fileno())
            os.replace(tmp, blob)
        except OSError as exc:
            tmp.unlink(missing_ok=True)
            raise StoreWriteFailed(f"blob write failed: {exc}") from exc

    def _append_index(self, entry: QuarantineEntry) -> None:
        line = render_index([entry])
        try:
            with open(self.index_path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()
                os.fsync(f.fileno())
        except OSError as exc:
            raise StoreWriteFailed(f"index append failed: {exc}") from exc

    def quarantine(self, path, reason: str, original_path=None) -> QuarantineEntry:
        """Move a file's content into the store and remove the original.

        Either the file is fully quarantined (blob stored, index entry
        appended, original unlinked) or it is left in place.
        """
        src = Path(path)
        if not src.is_file():
            raise FileUnreadable(f"not a regular file: {src}")
        digest, _ = sha256_file_with_size(src)
        label = _norm_path(original_path if original_path is not None else path)
        with self._lock():
            existing = self.entries()
            next_id = existing[-1].id + 1 if existing else 1
            entry = QuarantineEntry(
                id=next_id,
                original_path=label,
                digest=digest,
                quarantined_at=int(time.time()),
                reason=_sanitize(reason),
            )
            self._write_blob(src, digest)
            self._append_index(entry)
        try:
            os.unlink(src)
        except OSError as exc:
            raise StoreWriteFailed(
                f"quarantined but could not remove original: {exc}"
            ) from exc
        return entry

    def restore(self, entry_id: int, destination) -> Path:
        """Write a quarantined file back out, re-verifying its digest."""
        by_id = {e.id: e for e in self.entries()}
        entry = by_id.get(entry_id)
        if entry is None:
            raise UnknownEntry(f"no quarantine entry with id {entry_id}")
        blob = self.blob_path(entry.digest)
        if not blob.is_file():
            raise DigestMismatchOnRestore(
                f"blob for entry {entry_id} is missing from the store"
            )
        dest = Path(destination)
        dest.parent.mkdir(parents=True, exist_ok=True)
        tmp = dest.parent / f".krdp-restore.{entry_id}.{os.getpid()}"
        with self._lock():
            try:
                with open(blob, "rb") as fin, open(tmp, "wb") as fout:
                    for chunk in iter(lambda: fin.read(CHUNK_SIZE), b""):
                        fout.write(chunk)
                    fout.flush()
                    os.fsync(fout.fileno())
                # re-read what actually landed on disk
                written_digest, _ = sha256_file_with_size(tmp)
                if written_digest != entry.digest:
                    raise DigestMismatchOnRestore(
                        f"entry {entry_id}: stored {entry.digest}, "
                        f"restored bytes hash to {written_digest}"
                    )
                os.replace(tmp, dest)
            finally:
                tmp.unlink(missing_ok=True)
            try:
                with open(self.restored_path, "a", encoding="utf-8") as f:
                    f.write(f"{entry_id}\n")
                    f.flush()
                    os.fsync(f.fileno())
            except OSError as exc:
                raise StoreWriteFailed(f"restore record failed: {exc}") from exc
        return dest


def quarantine(path, store, reason: str, original_path=None) -> QuarantineEntry:
    return _as_store(store).quarantine(path, reason, original_path=original_path)


def restore(entry_id: int, store, destination) -> Path:
    return _as_store(store).restore(entry_id, destination)


def guarded_open(
    path,
    store,
    db: SignatureDb | None = None,
    original_path=None,
) -> bytes:
    """Open a file only if it is neither quarantined nor a known signature.

    Raises PreventionBlocked naming the reason otherwise.
    """
    qstore = _as_store(store)
    label = _norm_path(original_path if original_path is not None else path)
    entry = qstore.active_entry_for(label)
    if entry is not None:
        raise PreventionBlocked(
            f"{label} is quarantined (entry {entry.id}, reason: {entry.reason})"
        )
    try:
        with open(path, "rb") as f:
            content = f.read()
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc}") from exc
    if db is not None:
        hit = db.match_digest(sha256_bytes(content))
        if hit is not None:
            raise PreventionBlocked(f"{label} matches signature SignatureHit:{hit.name}")
    return content


def _as_store(store) -> QuarantineStore:
    if isinstance(store, QuarantineStore):
        return store
    return QuarantineStore(store)


def alert(finding, log, at: int | None = None) -> Alert:
    """Append one alert line for a finding; existing lines are untouched.

    Log line format: <epoch>\\t<status>\\t<path>\\t<message>
    """
    when = int(time.time()) if at is None else at
    message = f"{finding.status}: {finding.path}"
    if finding.signature_name:
        message += f" signature={finding.signature_name}"
    if finding.size_delta is not None:
        message += f" size_delta={finding.size_delta:+d}"
    if finding.error:
        message += f" ({_sanitize(finding.error)})"
    record = Alert(at=when, path=finding.path, status=finding.status, message=message)
    line = f"{record.at}\t{record.status}\t{record.path}\t{record.message}\n"
    try:
        log_path = Path(log)
        if log_path.parent != Path("."):
            log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "a", encoding="utf-8") as f:
            f.write(line)
    except OSError as exc:
        raise LogWriteFailed(f"{log}: {exc}") from exc
    return record
