"""Operator-facing command line.

One subcommand per pipeline stage: baseline, scan, diff, crossview,
quarantine, restore, open, perf, and simulate. Exit codes: 0 when nothing
suspicious was found, 1 when findings are present (modified, missing,
unknown, signature hits, hidden paths, blocked opens), 2 for usage, config,
or I/O errors.

Configuration is read from --config, then the KRDP_CONFIG environment
variable; flags override config values. Config files are UTF-8 key=value
lines with '#' comments:

    root=/srv/tree
    manifest=/var/lib/krdp/manifest.txt
    backup_store=/var/lib/krdp/backup
    sigdb=/var/lib/krdp/sigdb.txt
    quarantine_store=/var/lib/krdp/quarantine
    alert_log=/var/lib/krdp/alerts.log
    exclude=*.tmp
    exclude=cache/*
    paper_compat=false
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import crossview as xview
from . import detector, harness, perfmon, response
from .errors import ConfigError, KrdpError, PreventionBlocked
from .manifest import read_manifest, snapshot, write_backup, write_manifest
from .signatures import load_signatures, save_signatures

PATTERN_MISMATCH_LINE = "The virus pattern matches with the file"
BYTES_CHANGED_LINE = (
    "The bytes value of the file has changed! The file has been affected by virus"
)
BYTES_UNCHANGED_LINE = "The bytes value of the files have unchanged"

# the default state directory is kept out of scans when it sits under root
STATE_DIR = ".krdp"
IMPLICIT_EXCLUDES = (STATE_DIR, STATE_DIR + "/*")

CONFIG_ENV_VAR = "KRDP_CONFIG"


@dataclass(frozen=True)
class Config:
    root: str = "."
    manifest_path: str = os.path.join(STATE_DIR, "manifest.txt")
    backup_store_path: str | None = None
    sigdb_path: str | None = None
    quarantine_store_path: str = os.path.join(STATE_DIR, "quarantine")
    alert_log_path: str = os.path.join(STATE_DIR, "alerts.log")
    excludes: tuple[str, ...] = ()
    paper_compat: bool = False

    @property
    def effective_excludes(self) -> tuple[str, ...]:
        return self.excludes + IMPLICIT_EXCLUDES


_BOOL_VALUES = {
    "true": True, "yes": True, "1": True, "on": True,
    "false": False, "no": False, "0": False, "off": False,
}

_CONFIG_KEYS = {
    "root", "manifest", "backup_store", "sigdb",
    "quarantine_store", "alert_log", "exclude", "paper_compat",
}


def load_config(path: str | None) -> Config:
    """Parse a config file into a Config; defaults apply for missing keys."""
    if path is None:
        return Config()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values: dict[str, str] = {}
    excludes: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key == "exclude":
            excludes.append(value)
        else:
            values[key] = value
    paper_compat = False
    if "paper_compat" in values:
        flag = _BOOL_VALUES.get(values["paper_compat"].lower())
        if flag is None:
            raise ConfigError(f"bad paper_compat value: {values['paper_compat']!r}")
        paper_compat = flag
    cfg = Config(
        root=values.get("root", "."),
        manifest_path=values.get("manifest", Config.manifest_path),
        backup_store_path=values.get("backup_store"),
        sigdb_path=values.get("sigdb"),
        quarantine_store_path=values.get("quarantine_store", Config.quarantine_store_path),
        alert_log_path=values.get("alert_log", Config.alert_log_path),
        excludes=tuple(excludes),
        paper_compat=paper_compat,
    )
    if "root" in values and not os.path.isdir(cfg.root):
        raise ConfigError(f"configured root does not exist: {cfg.root}")
    _check_distinct(cfg)
    return cfg


def _check_distinct(cfg: Config) -> None:
    named = {
        "manifest": cfg.manifest_path,
        "backup_store": cfg.backup_store_path,
        "sigdb": cfg.sigdb_path,
        "quarantine_store": cfg.quarantine_store_path,
        "alert_log": cfg.alert_log_path,
    }
    seen: dict[str, str] = {}
    for name, value in named.items():
        if value is None:
            continue
        resolved = os.path.abspath(value)
        if resolved in seen:
            raise ConfigError(f"{name} and {seen[resolved]} share a path: {value}")
        seen[resolved] = name


def _apply_overrides(cfg: Config, args: argparse.Namespace) -> Config:
    updates = {}
    for attr, key in (
        ("root", "root"),
        ("manifest", "manifest_path"),
        ("backup_store", "backup_store_path"),
        ("sigdb", "sigdb_path"),
        ("quarantine_store", "quarantine_store_path"),
        ("alert_log", "alert_log_path"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            updates[key] = value
    if getattr(args, "exclude", None):
        updates["excludes"] = cfg.excludes + tuple(args.exclude)
    if getattr(args, "paper_compat", False):
        updates["paper_compat"] = True
    cfg = replace(cfg, **updates) if updates else cfg
    _check_distinct(cfg)
    return cfg


def _target_label(cfg: Config, path: str) -> str:
    """Root-relative label for quarantine bookkeeping when under root."""
    try:
        rel = Path(path).resolve().relative_to(Path(cfg.root).resolve())
        return str(rel).replace(os.sep, "/")
    except (ValueError, OSError):
        return str(path).replace("\\", "/")


def _load_manifest(cfg: Config):
    try:
        data = Path(cfg.manifest_path).read_bytes()
    except OSError as exc:
        raise ConfigError(
            f"cannot read manifest {cfg.manifest_path}: {exc} (run 'krdp baseline')"
        ) from exc
    return read_manifest(data)


def _load_sigdb(cfg: Config):
    if cfg.sigdb_path is None:
        return None
    try:
        data = Path(cfg.sigdb_path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read signature db {cfg.sigdb_path}: {exc}") from exc
    return load_signatures(data)


# --- commands ---------------------------------------------------------------


def cmd_baseline(cfg: Config, args: argparse.Namespace) -> int:
    result = snapshot(cfg.root, excludes=cfg.effective_excludes)
    out_path = Path(cfg.manifest_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(write_manifest(result.manifest))
    if cfg.backup_store_path is not None:
        stored, mismatched = write_backup(
            cfg.root, result.manifest, cfg.backup_store_path
        )
        for path in mismatched:
            print(f"warning: not backed up (changed mid-walk): {path}", file=sys.stderr)
    if not args.machine:
        print(f"baseline: {len(result.manifest)} files -> {cfg.manifest_path}")
        if result.skipped:
            print(f"skipped {len(result.skipped)} non-regular entries")
    for path in result.unreadable:
        print(f"warning: unreadable, not in baseline: {path}", file=sys.stderr)
    return 0


def _emit_paper_compat_scan(report) -> None:
    for finding in report.findings:
        if (
            finding.baseline_digest is not None
            and finding.observed_digest is not None
            and finding.baseline_digest != finding.observed_digest
        ):
            print(finding.baseline_digest)
            print(finding.observed_digest)
            print(PATTERN_MISMATCH_LINE)


def _human_finding_line(finding, db) -> str:
    bits = [f"{finding.status.upper():<12} {finding.path}"]
    details = []
    if finding.size_delta is not None:
        details.append(f"size {finding.size_delta:+d}")
    if finding.diff is not None and finding.diff.first_divergence is not None:
        details.append(f"first divergence {finding.diff.first_divergence}")
    if finding.signature_name:
        details.append(f"signature {finding.signature_name}")
    if finding.error:
        details.append(finding.error)
    if db is not None and finding.status != detector.CLEAN:
        base = finding.path.rsplit("/", 1)[-1]
        for sig in db:
            if sig.digest is None and sig.affected_file == base:
                details.append(f"filename listed for {sig.name} (informational)")
                break
    if details:
        bits.append("  (" + ", ".join(details) + ")")
    return "".join(bits)


def cmd_scan(cfg: Config, args: argparse.Namespace) -> int:
    baseline = _load_manifest(cfg)
    db = _load_sigdb(cfg)
    report = detector.scan(
        baseline,
        cfg.root,
        db=db,
        backup_store=cfg.backup_store_path,
        excludes=cfg.effective_excludes,
        workers=args.workers,
    )
    suspicious = [f for f in report.findings if f.status != detector.CLEAN]
    if cfg.alert_log_path is not None:
        for finding in suspicious:
            response.alert(finding, cfg.alert_log_path)
    if args.figures:
        from .figures import save_scan_status_figure

        out = save_scan_status_figure(
            report, Path(args.figures) / "scan_status.png"
        )
        print(f"figure written: {out}", file=sys.stderr)
    if cfg.paper_compat:
        _emit_paper_compat_scan(report)
    elif args.machine:
        sys.stdout.write(detector.render_scan_report(report))
    else:
        print(f"scan of {cfg.root}: {len(report.findings)} findings")
        for finding in suspicious:
            print(_human_finding_line(finding, db))
        counts = report.counts
        print(
            "summary: clean={} modified={} missing={} unknown={} sighit={}".format(
                counts[detector.CLEAN],
                counts[detector.MODIFIED],
                counts[detector.MISSING],
                counts[detector.UNKNOWN],
                counts[detector.SIGNATURE_HIT],
            )
        )
    return 1 if suspicious else 0


def cmd_diff(cfg: Config, args: argparse.Namespace) -> int:
    diff = detector.byte_compare(args.clean, args.tainted)
    if cfg.paper_compat:
        print(BYTES_CHANGED_LINE if not diff.equal else BYTES_UNCHANGED_LINE)
    elif not args.machine:
        # no wire format is defined for byte diffs; machine mode stays
        # silent and the exit code carries the verdict
        first = "-" if diff.first_divergence is None else str(diff.first_divergence)
        print(
            f"equal={'true' if diff.equal else 'false'} "
            f"length_clean={diff.length_clean} "
            f"length_tainted={diff.length_tainted} "
            f"first_divergence={first}"
        )
    return 0 if diff.equal else 1


def cmd_crossview(cfg: Config, args: argparse.Namespace) -> int:
    baseline = _load_manifest(cfg)
    if args.observed:
        try:
            observed = [
                line
                for line in Path(args.observed).read_text(encoding="utf-8").splitlines()
                if line
            ]
        except OSError as exc:
            raise ConfigError(f"cannot read observed view {args.observed}: {exc}")
    else:
        observed = xview.observe(cfg.root, excludes=cfg.effective_excludes)
    diff = xview.cross_view_diff(baseline, observed)
    if args.machine:
        sys.stdout.write(xview.render_view_diff(diff))
    else:
        for path in diff.hidden:
            on_disk = (Path(cfg.root) / path).is_file()
            state = "present on disk, hidden from view" if on_disk else "absent on disk, deleted or hidden"
            print(f"hidden-or-deleted: {path}  ({state})")
        for path in diff.unknown:
            print(f"unknown: {path}")
        print(f"common: {diff.common}")
    return 0 if diff.clean else 1


def cmd_quarantine(cfg: Config, args: argparse.Namespace) -> int:
    store = response.QuarantineStore(cfg.quarantine_store_path)
    reason = args.reason or "operator request"
    entry = store.quarantine(
        args.path, reason, original_path=_target_label(cfg, args.path)
    )
    if not args.machine:
        print(f"quarantined {entry.original_path} as entry {entry.id} ({entry.digest})")
    return 0


def cmd_restore(cfg: Config, args: argparse.Namespace) -> int:
    store = response.QuarantineStore(cfg.quarantine_store_path)
    dest = store.restore(args.id, args.dest)
    if not args.machine:
        print(f"restored entry {args.id} -> {dest}")
    return 0


def cmd_open(cfg: Config, args: argparse.Namespace) -> int:
    store = response.QuarantineStore(cfg.quarantine_store_path)
    db = _load_sigdb(cfg)
    try:
        content = response.guarded_open(
            args.path, store, db=db, original_path=_target_label(cfg, args.path)
        )
    except PreventionBlocked as exc:
        print(f"krdp: PreventionBlocked: {exc}", file=sys.stderr)
        return 1
    sys.stdout.buffer.write(content)
    sys.stdout.buffer.flush()
    return 0


def cmd_perf_snapshot(cfg: Config, args: argparse.Namespace) -> int:
    snap = perfmon.sample(cpu_window=args.cpu_window)
    line = perfmon.render_snapshot_line(snap)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "a", encoding="utf-8") as f:
            f.write(line + "\n")
    print(line)
    return 0


def _read_snapshot_file(path: str) -> perfmon.PerfSnapshot:
    try:
        lines = [
            line
            for line in Path(path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
    except OSError as exc:
        raise ConfigError(f"cannot read snapshot file {path}: {exc}") from exc
    if not lines:
        raise ConfigError(f"no snapshot lines in {path}")
    return perfmon.parse_snapshot_line(lines[-1])


def cmd_perf_delta(cfg: Config, args: argparse.Namespace) -> int:
    before = _read_snapshot_file(args.before)
    after = _read_snapshot_file(args.after)
    d = perfmon.delta(before, after)
    if args.figures:
        from .figures import save_perf_compare_figure

        out = save_perf_compare_figure(
            before, after, Path(args.figures) / "perf_delta.png"
        )
        print(f"figure written: {out}", file=sys.stderr)
    sys.stdout.write(perfmon.render_report(d))
    return 0


def cmd_simulate_build(cfg: Config, args: argparse.Namespace) -> int:
    try:
        spec = harness.load_sandbox_spec(Path(args.spec).read_bytes())
    except OSError as exc:
        raise ConfigError(f"cannot read sandbox spec {args.spec}: {exc}") from exc
    root = args.root if args.root is not None else cfg.root
    manifest = harness.build_sandbox(spec, root)
    if args.manifest_out:
        out = Path(args.manifest_out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(write_manifest(manifest))
    if args.sigdb_out:
        db = harness.fixture_signature_db(spec)
        out = Path(args.sigdb_out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_bytes(save_signatures(db))
    if not args.machine:
        print(f"built {len(manifest)} files under {root}")
    return 0


def cmd_simulate_overwrite(cfg: Config, args: argparse.Namespace) -> int:
    harness.infect_overwrite(args.path, args.offset, args.seed, args.length)
    if not args.machine:
        print(f"overwrote {args.length} bytes at offset {args.offset} in {args.path}")
    return 0


def cmd_simulate_grow(cfg: Config, args: argparse.Namespace) -> int:
    harness.infect_grow_to(args.path, args.to, args.seed)
    if not args.machine:
        print(f"grew {args.path} to {args.to} bytes")
    return 0


def cmd_simulate_hide(cfg: Config, args: argparse.Namespace) -> int:
    observed = xview.observe(cfg.root, excludes=cfg.effective_excludes)
    remaining = harness.hide_from_view(observed, args.path or [])
    for path in remaining:
        print(path)
    return 0


# --- parser and dispatch ----------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krdp",
        description="File-integrity and rootkit-detection toolkit",
    )
    parser.add_argument("--config", help="path to key=value config file")
    parser.add_argument(
        "--machine", action="store_true", help="machine-readable output"
    )
    parser.add_argument(
        "--paper-compat",
        action="store_true",
        dest="paper_compat",
        help="legacy one-line verdict output",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_tree_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--root", help="monitored tree root")
        p.add_argument("--manifest", help="baseline manifest path")
        p.add_argument(
            "--exclude", action="append", metavar="GLOB", help="exclusion pattern"
        )

    p = sub.add_parser("baseline", help="snapshot the tree into a manifest")
    add_tree_flags(p)
    p.add_argument("--backup-store", dest="backup_store", help="content backup dir")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("scan", help="check the tree against the baseline")
    add_tree_flags(p)
    p.add_argument("--backup-store", dest="backup_store")
    p.add_argument("--sigdb", help="signature database path")
    p.add_argument("--alert-log", dest="alert_log")
    p.add_argument("--figures", metavar="DIR", help="write PNG charts here")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("diff", help="byte-compare two files")
    p.add_argument("clean")
    p.add_argument("tainted")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("crossview", help="diff observed view against baseline")
    add_tree_flags(p)
    p.add_argument("--observed", help="file listing the observed view, one path per line")
    p.set_defaults(func=cmd_crossview)

    p = sub.add_parser("quarantine", help="isolate a file in the quarantine store")
    p.add_argument("path")
    p.add_argument("--root")
    p.add_argument("--quarantine-store", dest="quarantine_store")
    p.add_argument("--reason")
    p.set_defaults(func=cmd_quarantine)

    p = sub.add_parser("restore", help="restore a quarantined file")
    p.add_argument("id", type=int)
    p.add_argument("dest")
    p.add_argument("--quarantine-store", dest="quarantine_store")
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("open", help="open a file unless prevention blocks it")
    p.add_argument("path")
    p.add_argument("--root")
    p.add_argument("--quarantine-store", dest="quarantine_store")
    p.add_argument("--sigdb")
    p.set_defaults(func=cmd_open)

    p = sub.add_parser("perf", help="system performance snapshots and deltas")
    perf_sub = p.add_subparsers(dest="perf_command", required=True)
    ps = perf_sub.add_parser("snapshot", help="take one snapshot")
    ps.add_argument("--out", help="append the snapshot line to this log")
    ps.add_argument("--cpu-window", dest="cpu_window", type=float, default=0.5)
    ps.set_defaults(func=cmd_perf_snapshot)
    pd = perf_sub.add_parser("delta", help="difference two snapshot files")
    pd.add_argument("before")
    pd.add_argument("after")
    pd.add_argument("--figures", metavar="DIR", help="write PNG charts here")
    pd.set_defaults(func=cmd_perf_delta)

    p = sub.add_parser("simulate", help="deterministic infection simulator")
    sim_sub = p.add_subparsers(dest="sim_command", required=True)
    sb = sim_sub.add_parser("build", help="materialize a sandbox spec")
    sb.add_argument("--spec", required=True)
    sb.add_argument("--root", help="sandbox target directory")
    sb.add_argument("--manifest-out", dest="manifest_out")
    sb.add_argument("--sigdb-out", dest="sigdb_out")
    sb.set_defaults(func=cmd_simulate_build)
    so = sim_sub.add_parser("overwrite", help="overwrite bytes at an offset")
    so.add_argument("path")
    so.add_argument("--offset", type=int, required=True)
    so.add_argument("--length", type=int, required=True)
    so.add_argument("--seed", type=int, default=0)
    so.set_defaults(func=cmd_simulate_overwrite)
    sg = sim_sub.add_parser("grow", help="append bytes up to a target size")
    sg.add_argument("path")
    sg.add_argument("--to", type=int, required=True)
    sg.add_argument("--seed", type=int, default=0)
    sg.set_defaults(func=cmd_simulate_grow)
    sh = sim_sub.add_parser("hide", help="print the observed view minus paths")
    sh.add_argument("--root")
    sh.add_argument("--exclude", action="append", metavar="GLOB")
    sh.add_argument(
        "--path", action="append", metavar="PATH", help="path to hide (repeatable)"
    )
    sh.set_defaults(func=cmd_simulate_hide)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
        cfg = load_config(config_path)
        cfg = _apply_overrides(cfg, args)
        return args.func(cfg, args)
    except PreventionBlocked as exc:
        print(f"krdp: PreventionBlocked: {exc}", file=sys.stderr)
        return 1
    except KrdpError as exc:
        print(f"krdp: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
