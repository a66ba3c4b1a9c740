"""Cross-view detection of hidden files.

Rootkits hide files by filtering what ordinary enumeration reports. Diffing
the user-visible (observed) path set against the trusted baseline view
exposes the discrepancy: paths in the trusted view but not the observed one
are hidden or deleted; observed paths missing from the trusted view are
unknown additions. Decisions here depend only on path sets, never content.

Text format::

    KRDP-XVIEW v1
    H <path>        (hidden, sorted)
    U <path>        (unknown, sorted)
    common=<n>
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import ParseError
from .manifest import Manifest, path_sort_key, walk_regular_files

XVIEW_HEADER = "KRDP-XVIEW v1"


@dataclass(frozen=True)
class ViewDiff:
    hidden: tuple[str, ...]
    unknown: tuple[str, ...]
    common: int

    def __post_init__(self) -> None:
        if set(self.hidden) & set(self.unknown):
            raise ValueError("a path cannot be both hidden and unknown")

    @property
    def clean(self) -> bool:
        return not self.hidden and not self.unknown


def observe(root, excludes: tuple[str, ...] | list[str] = ()) -> list[str]:
    """Paths of regular files visible via ordinary directory enumeration.

    Uses the same walk and exclusion rules as manifest.snapshot, so on an
    unmodified tree the observed set equals the baseline's path set.
    """
    files, _, _ = walk_regular_files(root, excludes)
    return [rel for rel, _ in files]


def cross_view_diff(trusted: Manifest, observed: Iterable[str]) -> ViewDiff:
    """Exact set difference between the trusted and observed views."""
    trusted_paths = {rec.path for rec in trusted.records}
    observed_paths = set(observed)
    hidden = sorted(trusted_paths - observed_paths, key=path_sort_key)
    unknown = sorted(observed_paths - trusted_paths, key=path_sort_key)
    return ViewDiff(
        hidden=tuple(hidden),
        unknown=tuple(unknown),
        common=len(trusted_paths & observed_paths),
    )


def render_view_diff(diff: ViewDiff) -> str:
    lines = [XVIEW_HEADER]
    lines.extend(f"H {path}" for path in diff.hidden)
    lines.extend(f"U {path}" for path in diff.unknown)
    lines.append(f"common={diff.common}")
    return "\n".join(lines) + "\n"


def parse_view_diff(text: str | bytes) -> ViewDiff:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    if not text.endswith("\n"):
        raise ParseError("missing trailing newline")
    lines = text[:-1].split("\n")
    if not lines or lines[0] != XVIEW_HEADER:
        raise ParseError("bad view diff header")
    if len(lines) < 2 or not lines[-1].startswith("common="):
        raise ParseError("missing common= line")
    try:
        common = int(lines[-1][len("common="):], 10)
    except ValueError as exc:
        raise ParseError(f"bad common count: {lines[-1]!r}") from exc
    hidden: list[str] = []
    unknown: list[str] = []
    for line in lines[1:-1]:
        if line.startswith("H "):
            hidden.append(line[2:])
        elif line.startswith("U "):
            unknown.append(line[2:])
        else:
            raise ParseError(f"bad view diff line: {line!r}")
    return ViewDiff(hidden=tuple(hidden), unknown=tuple(unknown), common=common)
