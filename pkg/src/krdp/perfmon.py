"""System-resource snapshots and before/after deltas.

sample() is best-effort per platform: a metric the host cannot report comes
back as None (explicitly unavailable, distinct from zero). delta() and
render_report() are exact arithmetic over whatever both snapshots carry, so
stored snapshot pairs always reproduce the same differences.

Snapshot line format (one snapshot per line, '?' for unavailable)::

    <at>\\t<cpu_percent>\\t<processes>\\t<threads>\\t<handles>\\t<mem_used>\\t<mem_total>
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import psutil

from .errors import IncomparableSnapshots, ParseError

# memory is held in bytes; human output uses decimal GB with one decimal
GB = 10**9

DELTA_FIELDS = ("cpu_percent", "processes", "threads", "handles", "mem_used_bytes")

_last_sample_at = 0.0


@dataclass(frozen=True)
class PerfSnapshot:
    at: float
    cpu_percent: float | None
    processes: int | None
    threads: int | None
    handles: int | None
    mem_used_bytes: int | None
    mem_total_bytes: int | None

    def __post_init__(self) -> None:
        if self.cpu_percent is not None and not 0.0 <= self.cpu_percent <= 100.0:
            raise ValueError(f"cpu_percent out of range: {self.cpu_percent}")
        for name in ("processes", "threads", "handles", "mem_used_bytes"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.mem_total_bytes is not None and self.mem_total_bytes <= 0:
            raise ValueError("mem_total_bytes must be positive")
        if (
            self.mem_used_bytes is not None
            and self.mem_total_bytes is not None
            and self.mem_used_bytes > self.mem_total_bytes
        ):
            raise ValueError("mem_used_bytes exceeds mem_total_bytes")


@dataclass(frozen=True)
class PerfDelta:
    """after - before per field; None marks a field not comparable."""

    before: PerfSnapshot
    after: PerfSnapshot
    cpu_percent: float | None
    processes: int | None
    threads: int | None
    handles: int | None
    mem_used_bytes: int | None
    elapsed: float

    @property
    def not_comparable(self) -> tuple[str, ...]:
        return tuple(f for f in DELTA_FIELDS if getattr(self, f) is None)


def _cpu_percent(window: float) -> float | None:
    try:
        value = float(psutil.cpu_percent(interval=window))
    except Exception:
        return None
    return min(max(value, 0.0), 100.0)


def _process_count() -> int | None:
    try:
        return len(psutil.pids())
    except Exception:
        return None


def _thread_and_handle_counts() -> tuple[int | None, int | None]:
    threads = 0
    handles = 0
    have_threads = False
    have_handles = False
    try:
        for proc in psutil.process_iter():
            try:
                threads += proc.num_threads()
                have_threads = True
            except (psutil.Error, OSError):
                pass
            try:
                if hasattr(proc, "num_handles"):
                    handles += proc.num_handles()
                else:
                    handles += proc.num_fds()
                have_handles = True
            except (psutil.Error, OSError, AttributeError):
                pass
    except Exception:
        return None, None
    return (threads if have_threads else None, handles if have_handles else None)


def _memory() -> tuple[int | None, int | None]:
    try:
        vm = psutil.virtual_memory()
        return int(vm.used), int(vm.total)
    except Exception:
        return None, None


def sample(cpu_window: float = 0.5) -> PerfSnapshot:
    """Take one best-effort snapshot of the host.

    CPU percent is measured over `cpu_window` seconds of cumulative counters.
    Timestamps strictly increase across successive calls in a process.
    On POSIX "handles" counts open file descriptors across all readable
    processes, the closest analogue of kernel object handles.
    """
    global _last_sample_at
    cpu = _cpu_percent(cpu_window)
    processes = _process_count()
    threads, handles = _thread_and_handle_counts()
    mem_used, mem_total = _memory()
    at = time.time()
    if at <= _last_sample_at:
        at = _last_sample_at + 1e-6
    _last_sample_at = at
    return PerfSnapshot(
        at=at,
        cpu_percent=cpu,
        processes=processes,
        threads=threads,
        handles=handles,
        mem_used_bytes=mem_used,
        mem_total_bytes=mem_total,
    )


def delta(before: PerfSnapshot, after: PerfSnapshot) -> PerfDelta:
    """Exact per-field subtraction; fields missing on either side are not
    comparable rather than an error."""
    if after.at < before.at:
        raise IncomparableSnapshots(
            f"after ({after.at}) precedes before ({before.at})"
        )

    def diff(name: str):
        b = getattr(before, name)
        a = getattr(after, name)
        if b is None or a is None:
            return None
        return a - b

    return PerfDelta(
        before=before,
        after=after,
        cpu_percent=diff("cpu_percent"),
        processes=diff("processes"),
        threads=diff("threads"),
        handles=diff("handles"),
        mem_used_bytes=diff("mem_used_bytes"),
        elapsed=after.at - before.at,
    )


def _fmt_num(value) -> str:
    if isinstance(value, float):
        if value == int(value):
            return str(int(value))
        return repr(value)
    return str(value)


def _fmt_signed(value) -> str:
    if value < 0:
        return "-" + _fmt_num(-value)
    return "+" + _fmt_num(value)


def _fmt_gb(value: int) -> str:
    return f"{value / GB:.1f} GB"


def _fmt_gb_signed(value: int) -> str:
    return f"{value / GB:+.1f} GB"


def render_report(d: PerfDelta) -> str:
    """One line per comparable field, then a not-comparable list if needed."""
    lines = []
    not_comparable = []
    for name in DELTA_FIELDS:
        dv = getattr(d, name)
        if dv is None:
            not_comparable.append(name)
            continue
        b = getattr(d.before, name)
        a = getattr(d.after, name)
        if name == "mem_used_bytes":
            lines.append(
                f"{name}: {_fmt_gb(b)} -> {_fmt_gb(a)} (delta {_fmt_gb_signed(dv)})"
            )
        else:
            lines.append(
                f"{name}: {_fmt_num(b)} -> {_fmt_num(a)} (delta {_fmt_signed(dv)})"
            )
    if not_comparable:
        lines.append("not-comparable: " + ", ".join(not_comparable))
    return "\n".join(lines) + "\n"


_LINE_FIELDS = (
    ("at", float),
    ("cpu_percent", float),
    ("processes", int),
    ("threads", int),
    ("handles", int),
    ("mem_used_bytes", int),
    ("mem_total_bytes", int),
)


def render_snapshot_line(s: PerfSnapshot) -> str:
    parts = []
    for name, kind in _LINE_FIELDS:
        value = getattr(s, name)
        if value is None:
            parts.append("?")
        elif kind is float:
            parts.append(_fmt_num(float(value)))
        else:
            parts.append(str(value))
    return "\t".join(parts)


def parse_snapshot_line(line: str) -> PerfSnapshot:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != len(_LINE_FIELDS):
        raise ParseError(f"bad snapshot line: {line!r}")
    values = {}
    for (name, kind), text in zip(_LINE_FIELDS, parts):
        if text == "?":
            values[name] = None
            continue
        try:
            values[name] = kind(text)
        except ValueError as exc:
            raise ParseError(f"bad {name} value: {text!r}") from exc
    if values["at"] is None:
        raise ParseError("snapshot timestamp cannot be unavailable")
    try:
        return PerfSnapshot(**values)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
