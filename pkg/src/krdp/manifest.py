"""Trusted baseline view of a directory tree.

A Manifest records one (path, size, sha256, mtime) row per regular file under
a root. It is the low-level "known good" view every other module compares
against. Serialization is canonical and bit-exact so a manifest can be
re-read and re-written without drift.

Canonical format (UTF-8, LF only, no trailing blank line)::

    KRDP-MANIFEST v1
    root=<root_label>
    created=<epoch-seconds>
    count=<N>
    <digest>\\t<size>\\t<mtime>\\t<path>      (N lines)
"""

from __future__ import annotations

import fnmatch
import hashlib
import os
import stat as statmod
import time
from bisect import bisect_left
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .errors import FileUnreadable, MalformedManifest, RootUnreadable

# Streamed hashing reads this many bytes per syscall.
CHUNK_SIZE = 65536

MANIFEST_HEADER = "KRDP-MANIFEST v1"

_HEX_DIGITS = frozenset("0123456789abcdef")

# A digest is a 64-character lowercase hex string (32 bytes of SHA-256).
Digest = str


def is_digest(value: object) -> bool:
    return (
        isinstance(value, str)
        and len(value) == 64
        and all(c in _HEX_DIGITS for c in value)
    )


def normalize_digest(value: str) -> Digest:
    """Lowercase a hex digest and validate it; raises ValueError if invalid."""
    d = value.lower()
    if not is_digest(d):
        raise ValueError(f"not a 64-char hex digest: {value!r}")
    return d


def sha256_bytes(data: bytes) -> Digest:
    """SHA-256 of an in-memory byte sequence, as lowercase hex."""
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path, chunk_size: int = CHUNK_SIZE) -> Digest:
    """SHA-256 of a file's content, read in fixed-size chunks."""
    digest, _ = sha256_file_with_size(path, chunk_size)
    return digest


def sha256_file_with_size(
    path: str | Path, chunk_size: int = CHUNK_SIZE
) -> tuple[Digest, int]:
    """Hash a file and count its bytes in a single streaming pass."""
    h = hashlib.sha256()
    size = 0
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(chunk_size), b""):
                h.update(chunk)
                size += len(chunk)
    except OSError as exc:
        raise FileUnreadable(f"{path}: {exc}") from exc
    return h.hexdigest(), size


def validate_path(path: str) -> str:
    """Canonicalize and validate a manifest-relative path.

    Backslashes become '/'. The result must be non-empty, relative, free of
    NUL/tab/newline (they would break the line-oriented formats), and contain
    no '.' or '..' segments.
    """
    if not path:
        raise ValueError("empty path")
    for bad in ("\x00", "\t", "\n", "\r"):
        if bad in path:
            raise ValueError(f"control character in path: {path!r}")
    p = path.replace("\\", "/")
    if p.startswith("/"):
        raise ValueError(f"absolute path not allowed: {path!r}")
    for segment in p.split("/"):
        if segment in ("", ".", ".."):
            raise ValueError(f"bad path segment in {path!r}")
    return p


def path_sort_key(path: str) -> bytes:
    """Manifests order records by the UTF-8 bytes of the path."""
    return path.encode("utf-8")


@dataclass(frozen=True)
class FileRecord:
    """One baseline row: where a file lives and what its content hashes to."""

    path: str
    size: int
    digest: Digest
    mtime: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "path", validate_path(self.path))
        object.__setattr__(self, "digest", normalize_digest(self.digest))
        if self.size < 0:
            raise ValueError(f"negative size for {self.path!r}")


@dataclass(frozen=True)
class Manifest:
    """Immutable, sorted collection of FileRecords plus snapshot metadata."""

    root_label: str
    created_at: int
    records: tuple[FileRecord, ...]
    version: int = 1

    def __post_init__(self) -> None:
        if "\n" in self.root_label or "\r" in self.root_label:
            raise ValueError("root_label must be a single line")
        object.__setattr__(self, "records", tuple(self.records))
        prev: bytes | None = None
        for rec in self.records:
            key = path_sort_key(rec.path)
            if prev is not None and key <= prev:
                raise ValueError(f"records not strictly sorted at {rec.path!r}")
            prev = key

    def lookup(self, path: str) -> FileRecord | None:
        """Binary search for the record with exactly this path."""
        key = path_sort_key(path)
        i = bisect_left(self.records, key, key=lambda r: path_sort_key(r.path))
        if i < len(self.records) and self.records[i].path == path:
            return self.records[i]
        return None

    def paths(self) -> list[str]:
        return [rec.path for rec in self.records]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class SnapshotResult:
    """Outcome of a tree walk: the manifest plus what could not be included.

    A non-empty ``unreadable`` means the snapshot is partial: those files
    exist but could not be read, and the manifest covers everything else.
    """

    manifest: Manifest
    skipped: tuple[str, ...]
    unreadable: tuple[str, ...]

    @property
    def partial(self) -> bool:
        return bool(self.unreadable)


def _excluded(relpath: str, excludes: tuple[str, ...]) -> bool:
    base = relpath.rsplit("/", 1)[-1]
    return any(
        fnmatch.fnmatchcase(relpath, pat) or fnmatch.fnmatchcase(base, pat)
        for pat in excludes
    )


def walk_regular_files(
    root: str | Path, excludes: tuple[str, ...] | list[str] = ()
) -> tuple[list[tuple[str, str]], list[str], list[str]]:
    """Enumerate regular files under root.

    Returns (files, skipped, unreadable) where files is a sorted list of
    (relative path, absolute path) pairs, skipped lists symlinks and special
    files, and unreadable lists directories that could not be listed.
    Exclusion patterns are fnmatch globs tested against the '/'-relative
    path and against the basename.
    """
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise RootUnreadable(f"not a readable directory: {root}")
    excludes = tuple(excludes)
    files: list[tuple[str, str]] = []
    skipped: list[str] = []
    unreadable: list[str] = []

    def on_error(exc: OSError) -> None:
        rel = os.path.relpath(exc.filename, root).replace(os.sep, "/")
        unreadable.append(rel)

    try:
        walker = os.walk(root, followlinks=False, onerror=on_error)
        for dirpath, dirnames, filenames in walker:
            dirnames.sort()
            filenames.sort()
            # symlinked directories are not descended into; count them
            for d in list(dirnames):
                full = os.path.join(dirpath, d)
                if os.path.islink(full):
                    dirnames.remove(d)
                    skipped.append(
                        os.path.relpath(full, root).replace(os.sep, "/")
                    )
            for name in filenames:
                full = os.path.join(dirpath, name)
                rel = os.path.relpath(full, root).replace(os.sep, "/")
                if _excluded(rel, excludes):
                    continue
                try:
                    st = os.lstat(full)
                except OSError:
                    unreadable.append(rel)
                    continue
                if statmod.S_ISLNK(st.st_mode) or not statmod.S_ISREG(st.st_mode):
                    skipped.append(rel)
                    continue
                files.append((rel, full))
    except OSError as exc:
        raise RootUnreadable(f"{root}: {exc}") from exc

    files.sort(key=lambda pair: path_sort_key(pair[0]))
    skipped.sort(key=path_sort_key)
    unreadable.sort(key=path_sort_key)
    return files, skipped, unreadable


def snapshot(
    root: str | Path,
    excludes: tuple[str, ...] | list[str] = (),
    root_label: str | None = None,
    created_at: int | None = None,
    workers: int = 1,
) -> SnapshotResult:
    """Hash every regular file under root into a sorted Manifest.

    Unreadable files do not abort the walk; they are reported in the result
    and the manifest contains everything else. Hashing runs file-parallel
    when workers > 1; the output order is identical either way.
    """
    files, skipped, unreadable = walk_regular_files(root, excludes)
    label = str(root) if root_label is None else root_label
    created = int(time.time()) if created_at is None else created_at

    def build_record(item: tuple[str, str]) -> FileRecord | None:
        rel, full = item
        try:
            mtime = int(os.lstat(full).st_mtime)
            digest, size = sha256_file_with_size(full)
        except (OSError, FileUnreadable):
            return None
        return FileRecord(path=rel, size=size, digest=digest, mtime=mtime)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(build_record, files))
    else:
        results = [build_record(item) for item in files]

    records = []
    extra_unreadable = list(unreadable)
    for item, rec in zip(files, results):
        if rec is None:
            extra_unreadable.append(item[0])
        else:
            records.append(rec)
    extra_unreadable.sort(key=path_sort_key)

    manifest = Manifest(root_label=label, created_at=created, records=tuple(records))
    return SnapshotResult(
        manifest=manifest,
        skipped=tuple(skipped),
        unreadable=tuple(extra_unreadable),
    )


def write_manifest(m: Manifest) -> bytes:
    """Render the canonical byte form; read_manifest(write_manifest(m)) == m."""
    lines = [
        MANIFEST_HEADER,
        f"root={m.root_label}",
        f"created={m.created_at}",
        f"count={len(m.records)}",
    ]
    for rec in m.records:
        lines.append(f"{rec.digest}\t{rec.size}\t{rec.mtime}\t{rec.path}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def _parse_int(text: str, what: str) -> int:
    try:
        return int(text, 10)
    except ValueError as exc:
        raise MalformedManifest(f"bad {what}: {text!r}") from exc


def read_manifest(data: bytes | str) -> Manifest:
    """Parse canonical manifest bytes, rejecting anything non-canonical."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedManifest(f"not UTF-8: {exc}") from exc
    else:
        text = data
    if "\r" in text:
        raise MalformedManifest("CR found; manifest must use LF line endings")
    if not text.endswith("\n"):
        raise MalformedManifest("missing trailing newline")
    lines = text[:-1].split("\n")
    if len(lines) < 4:
        raise MalformedManifest("truncated header")
    if lines[0] != MANIFEST_HEADER:
        raise MalformedManifest(f"bad header line: {lines[0]!r}")
    if not lines[1].startswith("root="):
        raise MalformedManifest("missing root= line")
    root_label = lines[1][len("root="):]
    if not lines[2].startswith("created="):
        raise MalformedManifest("missing created= line")
    created_at = _parse_int(lines[2][len("created="):], "created")
    if not lines[3].startswith("count="):
        raise MalformedManifest("missing count= line")
    count = _parse_int(lines[3][len("count="):], "count")
    body = lines[4:]
    if len(body) != count:
        raise MalformedManifest(f"count={count} but {len(body)} record lines")

    records = []
    for line in body:
        parts = line.split("\t", 3)
        if len(parts) != 4:
            raise MalformedManifest(f"bad record line: {line!r}")
        digest_text, size_text, mtime_text, path = parts
        if not is_digest(digest_text):
            raise MalformedManifest(f"bad digest: {digest_text!r}")
        size = _parse_int(size_text, "size")
        mtime = _parse_int(mtime_text, "mtime")
        try:
            records.append(
                FileRecord(path=path, size=size, digest=digest_text, mtime=mtime)
            )
        except ValueError as exc:
            raise MalformedManifest(str(exc)) from exc
    try:
        return Manifest(
            root_label=root_label, created_at=created_at, records=tuple(records)
        )
    except ValueError as exc:
        raise MalformedManifest(str(exc)) from exc


def lookup(m: Manifest, path: str) -> FileRecord | None:
    """Module-level alias for Manifest.lookup."""
    return m.lookup(path)


# --- optional content backup store -----------------------------------------
#
# Detection needs only the manifest; the backup store keeps a copy of each
# baseline file under its digest so byte-level diffing and restores have the
# original content to compare against.


def backup_blob_path(store: str | Path, digest: Digest) -> Path:
    return Path(store) / normalize_digest(digest)


def write_backup(
    root: str | Path, manifest: Manifest, store: str | Path
) -> tuple[int, list[str]]:
    """Copy each manifest record's content into the store, named by digest.

    Returns (stored_count, mismatched_paths). A file whose current digest no
    longer matches its record is skipped and reported rather than stored
    under a stale name.
    """
    store_dir = Path(store)
    store_dir.mkdir(parents=True, exist_ok=True)
    stored = 0
    mismatched: list[str] = []
    for rec in manifest.records:
        src = Path(root) / rec.path
        blob = store_dir / rec.digest
        if blob.exists():
            stored += 1
            continue
        try:
            digest, _ = sha256_file_with_size(src)
        except FileUnreadable:
            mismatched.append(rec.path)
            continue
        if digest != rec.digest:
            mismatched.append(rec.path)
            continue
        tmp = store_dir / f".tmp.{rec.digest}"
        with open(src, "rb") as fin, open(tmp, "wb") as fout:
            for chunk in iter(lambda: fin.read(CHUNK_SIZE), b""):
                fout.write(chunk)
            fout.flush()
            os.fsync(fout.fileno())
        os.replace(tmp, blob)
        stored += 1
    return stored, mismatched
