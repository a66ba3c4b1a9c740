"""Known-rootkit signature database.

Each entry names a rootkit family, the file it affects, the size it was
catalogued at, and optionally the SHA-256 of its payload. Only digest-bearing
entries can produce a positive match; name/size rows are informational.

File format (UTF-8, LF)::

    KRDP-SIGDB v1
    <name>\\t<affected_file>\\t<size_bytes>\\t<digest-or-dash>
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DuplicateSignatureName, MalformedSignatureDb
from .manifest import Digest, is_digest, normalize_digest

SIGDB_HEADER = "KRDP-SIGDB v1"


@dataclass(frozen=True)
class Signature:
    name: str
    affected_file: str
    size_bytes: int
    digest: Digest | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("signature name must be non-empty")
        for field_name in ("name", "affected_file"):
            value = getattr(self, field_name)
            if any(c in value for c in ("\t", "\n", "\r")):
                raise ValueError(f"control character in {field_name}: {value!r}")
        if self.size_bytes < 0:
            raise ValueError(f"negative size for {self.name!r}")
        if self.digest is not None:
            object.__setattr__(self, "digest", normalize_digest(self.digest))


class SignatureDb:
    """Immutable signature collection with O(1) digest lookup."""

    def __init__(self, entries=(), version: int = 1):
        self.version = version
        self.entries: tuple[Signature, ...] = tuple(entries)
        seen: set[str] = set()
        index: dict[Digest, Signature] = {}
        for sig in self.entries:
            if sig.name in seen:
                raise DuplicateSignatureName(f"duplicate signature name: {sig.name!r}")
            seen.add(sig.name)
            if sig.digest is not None and sig.digest not in index:
                index[sig.digest] = sig
        self.digest_index: dict[Digest, Signature] = index

    def match_digest(self, digest: Digest) -> Signature | None:
        """Return the entry whose payload digest equals `digest`, if any."""
        return self.digest_index.get(digest)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SignatureDb):
            return NotImplemented
        return self.version == other.version and self.entries == other.entries

    def __repr__(self) -> str:
        return f"SignatureDb(version={self.version}, entries={len(self.entries)})"


def match_digest(db: SignatureDb, digest: Digest) -> Signature | None:
    return db.match_digest(digest)


def save_signatures(db: SignatureDb) -> bytes:
    lines = [SIGDB_HEADER]
    for sig in db.entries:
        digest_field = sig.digest if sig.digest is not None else "-"
        lines.append(f"{sig.name}\t{sig.affected_file}\t{sig.size_bytes}\t{digest_field}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_signatures(data: bytes | str) -> SignatureDb:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedSignatureDb(f"not UTF-8: {exc}") from exc
    else:
        text = data
    if "\r" in text:
        raise MalformedSignatureDb("CR found; signature db must use LF line endings")
    if not text.endswith("\n"):
        raise MalformedSignatureDb("missing trailing newline")
    lines = text[:-1].split("\n")
    if not lines or lines[0] != SIGDB_HEADER:
        raise MalformedSignatureDb(f"bad header: {lines[0]!r}" if lines else "empty")
    entries = []
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != 4:
            raise MalformedSignatureDb(f"bad entry line: {line!r}")
        name, affected, size_text, digest_text = parts
        try:
            size = int(size_text, 10)
        except ValueError as exc:
            raise MalformedSignatureDb(f"bad size: {size_text!r}") from exc
        if digest_text == "-":
            digest = None
        elif is_digest(digest_text):
            digest = digest_text
        else:
            raise MalformedSignatureDb(f"bad digest: {digest_text!r}")
        try:
            entries.append(
                Signature(
                    name=name, affected_file=affected, size_bytes=size, digest=digest
                )
            )
        except ValueError as exc:
            raise MalformedSignatureDb(str(exc)) from exc
    return SignatureDb(entries)
