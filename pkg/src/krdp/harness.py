"""Deterministic infection simulator.

Builds sandbox trees from a spec and applies rootkit-like mutations
(overwrite, grow, hide) so every detection scenario is reproducible without
real malware. All content comes from a pinned generator so fixtures stay
bit-identical across platforms and versions:

    key        = first 8 bytes (LE) of SHA-256(seed as LE u64 || label UTF-8)
    block(k)   = SplitMix64 finalizer of (key + (k+1) * 0x9E3779B97F4A7C15),
                 emitted as 8 little-endian bytes
    stream[i]  = block(i // 8)[i % 8]

The label is the file's sandbox-relative path when building, and its
basename for mutations (so a scenario replays identically under any root).

Spec file format::

    KRDP-SANDBOX v1
    seed=<u64>
    <size>\\t<path>
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    FileUnreadable,
    ParseError,
    RootNotEmpty,
    TargetSmallerThanFile,
)
from .manifest import (
    CHUNK_SIZE,
    Digest,
    Manifest,
    snapshot,
    validate_path,
)
from .signatures import Signature, SignatureDb

SANDBOX_HEADER = "KRDP-SANDBOX v1"

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _stream_key(seed: int, label: str) -> int:
    h = hashlib.sha256(struct.pack("<Q", seed) + label.encode("utf-8")).digest()
    return int.from_bytes(h[:8], "little")


def stream_bytes(seed: int, label: str, offset: int, length: int) -> bytes:
    """Random-access slice [offset, offset+length) of the keyed byte stream."""
    if length <= 0:
        return b""
    key = _stream_key(seed, label)
    first_block = offset // 8
    last_block = (offset + length - 1) // 8
    out = bytearray()
    for k in range(first_block, last_block + 1):
        word = _mix64((key + (k + 1) * _GOLDEN) & _MASK64)
        out += word.to_bytes(8, "little")
    start = offset - first_block * 8
    return bytes(out[start : start + length])


def payload_digest(seed: int, path: str, size: int) -> Digest:
    """Digest a sandbox file would have, without building it."""
    h = hashlib.sha256()
    pos = 0
    while pos < size:
        step = min(CHUNK_SIZE, size - pos)
        h.update(stream_bytes(seed, path, pos, step))
        pos += step
    return h.hexdigest()


@dataclass(frozen=True)
class SandboxSpec:
    seed: int
    files: tuple[tuple[str, int], ...]

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must fit in 64 bits")
        object.__setattr__(self, "files", tuple(self.files))
        seen: set[str] = set()
        checked = []
        for path, size in self.files:
            path = validate_path(path)
            if path in seen:
                raise ValueError(f"duplicate sandbox path: {path!r}")
            seen.add(path)
            if size < 0:
                raise ValueError(f"negative size for {path!r}")
            checked.append((path, size))
        object.__setattr__(self, "files", tuple(checked))


def save_sandbox_spec(spec: SandboxSpec) -> bytes:
    lines = [SANDBOX_HEADER, f"seed={spec.seed}"]
    lines.extend(f"{size}\t{path}" for path, size in spec.files)
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_sandbox_spec(data: bytes | str) -> SandboxSpec:
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not UTF-8: {exc}") from exc
    else:
        text = data
    if not text.endswith("\n"):
        raise ParseError("missing trailing newline")
    lines = text[:-1].split("\n")
    if len(lines) < 2 or lines[0] != SANDBOX_HEADER:
        raise ParseError("bad sandbox spec header")
    if not lines[1].startswith("seed="):
        raise ParseError("missing seed= line")
    try:
        seed = int(lines[1][len("seed="):], 10)
    except ValueError as exc:
        raise ParseError(f"bad seed: {lines[1]!r}") from exc
    files = []
    for line in lines[2:]:
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ParseError(f"bad spec line: {line!r}")
        size_text, path = parts
        try:
            size = int(size_text, 10)
        except ValueError as exc:
            raise ParseError(f"bad size: {size_text!r}") from exc
        files.append((path, size))
    try:
        return SandboxSpec(seed=seed, files=tuple(files))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def build_sandbox(spec: SandboxSpec, root) -> Manifest:
    """Materialize the spec under root and snapshot the result.

    The target must be absent or an empty directory. Identical specs always
    produce byte-identical trees.
    """
    root_path = Path(root)
    if root_path.exists():
        if not root_path.is_dir():
            raise RootNotEmpty(f"not a directory: {root_path}")
        if any(root_path.iterdir()):
            raise RootNotEmpty(f"sandbox target not empty: {root_path}")
    else:
        root_path.mkdir(parents=True)
    for path, size in spec.files:
        dest = root_path / path
        dest.parent.mkdir(parents=True, exist_ok=True)
        with open(dest, "wb") as f:
            pos = 0
            while pos < size:
                step = min(CHUNK_SIZE, size - pos)
                f.write(stream_bytes(spec.seed, path, pos, step))
                pos += step
    return snapshot(root_path).manifest


def infect_overwrite(path, offset: int, seed: int, length: int) -> None:
    """Write deterministic pseudorandom bytes at an offset (growing allowed).

    For length >= 1 the first written byte is forced to differ from the byte
    currently there, so the file's digest always changes.
    """
    target = Path(path)
    if not target.is_file():
        raise FileUnreadable(f"not a regular file: {target}")
    if offset < 0 or length < 0:
        raise ValueError("offset and length must be non-negative")
    if length == 0:
        return
    data = bytearray(stream_bytes(seed, target.name, offset, length))
    try:
        with open(target, "r+b") as f:
            size = os.fstat(f.fileno()).st_size
            if offset < size:
                f.seek(offset)
                current = f.read(1)[0]
                if data[0] == current:
                    data[0] ^= 0x01
            f.seek(offset)
            f.write(bytes(data))
    except OSError as exc:
        raise FileUnreadable(f"{target}: {exc}") from exc


def infect_grow_to(path, target_size: int, seed: int) -> None:
    """Append deterministic bytes until the file is exactly target_size."""
    target = Path(path)
    if not target.is_file():
        raise FileUnreadable(f"not a regular file: {target}")
    try:
        with open(target, "r+b") as f:
            size = os.fstat(f.fileno()).st_size
            if target_size < size:
                raise TargetSmallerThanFile(
                    f"{target}: {size} bytes, cannot shrink to {target_size}"
                )
            f.seek(size)
            pos = size
            while pos < target_size:
                step = min(CHUNK_SIZE, target_size - pos)
                f.write(stream_bytes(seed, target.name, pos, step))
                pos += step
    except OSError as exc:
        raise FileUnreadable(f"{target}: {exc}") from exc


def hide_from_view(observed, paths) -> list[str]:
    """Simulate rootkit hiding: the observed view minus the given paths."""
    hidden = set(paths)
    return sorted(
        (p for p in set(observed) if p not in hidden),
        key=lambda p: p.encode("utf-8"),
    )


def fixture_signature_db(spec: SandboxSpec) -> SignatureDb:
    """Signature entries for a sandbox's synthetic payloads.

    The entry name is the path's first directory component (the family name
    in the shipped fixtures) or the whole path for flat layouts; the digest
    is the payload's real digest, computed from the generator.
    """
    entries = []
    for path, size in spec.files:
        name = path.split("/", 1)[0] if "/" in path else path
        affected = path.rsplit("/", 1)[-1]
        entries.append(
            Signature(
                name=name,
                affected_file=affected,
                size_bytes=size,
                digest=payload_digest(spec.seed, path, size),
            )
        )
    return SignatureDb(entries)
