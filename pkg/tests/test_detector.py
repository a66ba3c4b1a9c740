from __future__ import annotations

import os
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import krdp.detector as detector
from krdp.detector import (
    CLEAN,
    MISSING,
    MODIFIED,
    SIGNATURE_HIT,
    UNKNOWN,
    DiffReport,
    ScanFinding,
    byte_compare,
    parse_scan_report,
    pattern_check,
    render_scan_report,
    scan,
)
from krdp.errors import FileUnreadable, ParseError
from krdp.harness import SandboxSpec, build_sandbox, infect_grow_to, infect_overwrite
from krdp.manifest import sha256_bytes, sha256_file, snapshot, write_backup
from krdp.signatures import Signature, SignatureDb

from conftest import build_tree


def naive_diff(a: bytes, b: bytes) -> tuple[bool, int | None]:
    """Index-by-index oracle over full byte lists."""
    for i in range(min(len(a), len(b))):
        if a[i] != b[i]:
            return False, i
    if len(a) != len(b):
        return False, min(len(a), len(b))
    return True, None


class TestPatternCheck:
    def test_unchanged_file(self, tmp_path):
        f = tmp_path / "f"
        f.write_bytes(b"stable content")
        verdict = pattern_check(sha256_bytes(b"stable content"), f)
        assert verdict.equal
        assert verdict.baseline_digest == verdict.observed_digest

    def test_single_byte_flip(self, tmp_path):
        original = b"A" * 100
        f = tmp_path / "f"
        f.write_bytes(original)
        baseline = sha256_file(f)
        mutated = bytearray(original)
        mutated[50] ^= 0xFF
        f.write_bytes(bytes(mutated))
        verdict = pattern_check(baseline, f)
        assert not verdict.equal
        assert verdict.observed_digest == sha256_bytes(bytes(mutated))

    def test_grown_file_differs(self, tmp_path):
        f = tmp_path / "KEYBOARD.SYS"
        rng = random.Random(1)
        f.write_bytes(rng.randbytes(9216))
        baseline = sha256_file(f)
        infect_grow_to(f, 43008, seed=5)
        assert f.stat().st_size == 43008
        assert not pattern_check(baseline, f).equal

    def test_uppercase_baseline_accepted(self, tmp_path):
        f = tmp_path / "f"
        f.write_bytes(b"z")
        assert pattern_check(sha256_bytes(b"z").upper(), f).equal

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileUnreadable):
            pattern_check(sha256_bytes(b""), tmp_path / "ghost")

    def test_definitional_consistency(self, tmp_path):
        rng = random.Random(2)
        for i in range(20):
            f = tmp_path / f"f{i}"
            f.write_bytes(rng.randbytes(rng.randint(0, 1000)))
            d = sha256_bytes(rng.randbytes(4)) if i % 2 else sha256_file(f)
            assert pattern_check(d, f).equal == (sha256_file(f) == d)


class TestByteCompare:
    def write_pair(self, tmp_path, a: bytes, b: bytes):
        fa, fb = tmp_path / "clean", tmp_path / "tainted"
        fa.write_bytes(a)
        fb.write_bytes(b)
        return fa, fb

    def test_empty_vs_empty(self, tmp_path):
        fa, fb = self.write_pair(tmp_path, b"", b"")
        diff = byte_compare(fa, fb)
        assert diff.equal and diff.length_clean == 0 and diff.length_tainted == 0
        assert diff.first_divergence is None

    def test_abc_vs_abd(self, tmp_path):
        fa, fb = self.write_pair(tmp_path, b"abc", b"abd")
        diff = byte_compare(fa, fb)
        assert not diff.equal
        assert diff.first_divergence == 2
        assert (diff.length_clean, diff.length_tainted) == (3, 3)

    def test_appended_growth(self, tmp_path):
        rng = random.Random(3)
        base = rng.randbytes(9216)
        fa, fb = self.write_pair(tmp_path, base, base + rng.randbytes(33792))
        diff = byte_compare(fa, fb)
        assert not diff.equal
        assert diff.first_divergence == 9216
        assert diff.length_tainted - diff.length_clean == 33792

    def test_prefix_divergence(self, tmp_path):
        fa, fb = self.write_pair(tmp_path, b"abc", b"ab")
        diff = byte_compare(fa, fb)
        assert not diff.equal
        assert diff.first_divergence == 2

    def test_unreadable(self, tmp_path):
        (tmp_path / "clean").write_bytes(b"")
        with pytest.raises(FileUnreadable):
            byte_compare(tmp_path / "clean", tmp_path / "ghost")

    @settings(max_examples=60, deadline=None)
    @given(a=st.binary(max_size=3000), b=st.binary(max_size=3000))
    def test_matches_naive_oracle(self, tmp_path_factory, a, b):
        tmp = tmp_path_factory.mktemp("bc")
        fa, fb = self.write_pair(tmp, a, b)
        diff = byte_compare(fa, fb, chunk_size=64)
        equal, first = naive_diff(a, b)
        assert diff.equal == equal
        assert diff.first_divergence == first
        assert (diff.length_clean, diff.length_tainted) == (len(a), len(b))

    def test_large_pair_across_chunks(self, tmp_path):
        rng = random.Random(9)
        a = rng.randbytes(1 << 20)
        b = bytearray(a)
        b[700_001] ^= 0x10
        fa, fb = self.write_pair(tmp_path, a, bytes(b))
        diff = byte_compare(fa, fb)
        assert diff.first_divergence == 700_001

    def test_diff_report_invariants(self):
        with pytest.raises(ValueError):
            DiffReport(equal=True, length_clean=1, length_tainted=2, first_divergence=None)
        with pytest.raises(ValueError):
            DiffReport(equal=True, length_clean=1, length_tainted=1, first_divergence=0)
        with pytest.raises(ValueError):
            DiffReport(equal=False, length_clean=1, length_tainted=1, first_divergence=None)


def make_baseline(tmp_path, files):
    root = tmp_path / "tree"
    build_tree(root, files)
    return root, snapshot(root).manifest


class TestScan:
    def test_fixpoint_all_clean(self, tmp_path):
        root, baseline = make_baseline(
            tmp_path, {"a": b"1", "b/c": b"22", "b/d": b"333"}
        )
        report = scan(baseline, root)
        assert report.all_clean
        assert report.counts[CLEAN] == 3
        assert sum(report.counts.values()) == 3

    def test_single_modification(self, tmp_path):
        root, baseline = make_baseline(tmp_path, {"a": b"1", "b": b"2", "c": b"3"})
        (root / "b").write_bytes(b"mutated")
        report = scan(baseline, root)
        assert report.counts[MODIFIED] == 1
        assert report.counts[CLEAN] == 2
        finding = next(f for f in report.findings if f.status == MODIFIED)
        assert finding.path == "b"
        assert finding.size_delta == len(b"mutated") - 1

    def test_missing_and_unknown(self, tmp_path):
        root, baseline = make_baseline(tmp_path, {"keep": b"k", "gone": b"g"})
        (root / "gone").unlink()
        (root / "new").write_bytes(b"n")
        report = scan(baseline, root)
        by_path = {f.path: f for f in report.findings}
        assert by_path["gone"].status == MISSING
        assert by_path["gone"].observed_digest is None
        assert by_path["new"].status == UNKNOWN
        assert by_path["new"].baseline_digest is None
        assert by_path["keep"].status == CLEAN

    def test_signature_hit_upgrade(self, tmp_path):
        root, baseline = make_baseline(tmp_path, {"ok": b"fine"})
        payload = b"\xde\xad\xbe\xef synthetic payload"
        (root / "dropped.exe").write_bytes(payload)
        db = SignatureDb(
            [Signature("Fam.Synthetic", "dropped.exe", len(payload), sha256_bytes(payload))]
        )
        report = scan(baseline, root, db=db)
        finding = next(f for f in report.findings if f.path == "dropped.exe")
        assert finding.status == SIGNATURE_HIT
        assert finding.signature_name == "Fam.Synthetic"
        assert report.counts[SIGNATURE_HIT] == 1

    def test_modified_gets_diff_with_backup(self, tmp_path):
        root, baseline = make_baseline(tmp_path, {"f": b"0123456789"})
        store = tmp_path / "backup"
        write_backup(root, baseline, store)
        with open(root / "f", "r+b") as fh:
            fh.seek(4)
            fh.write(b"X")
        report = scan(baseline, root, backup_store=store)
        finding = report.findings[0]
        assert finding.status == MODIFIED
        assert finding.diff is not None
        assert finding.diff.first_divergence == 4

    def test_no_diff_without_backup(self, tmp_path):
        root, baseline = make_baseline(tmp_path, {"f": b"abc"})
        (root / "f").write_bytes(b"abd")
        report = scan(baseline, root)
        assert report.findings[0].diff is None

    def test_read_error_annotated(self, tmp_path, monkeypatch):
        root, baseline = make_baseline(tmp_path, {"good": b"g", "bad": b"b"})
        real = detector.sha256_file_with_size

        def flaky(path, chunk_size=65536):
            if str(path).endswith("bad"):
                raise FileUnreadable(f"{path}: injected")
            return real(path, chunk_size)

        monkeypatch.setattr(detector, "sha256_file_with_size", flaky)
        report = scan(baseline, root)
        by_path = {f.path: f for f in report.findings}
        assert by_path["bad"].status == MISSING
        assert "read error" in by_path["bad"].error
        assert by_path["good"].status == CLEAN

    def test_verdict_partition(self, tmp_path):
        rng = random.Random(17)
        root, baseline = make_baseline(
            tmp_path, {f"f{i}": rng.randbytes(10) for i in range(12)}
        )
        (root / "f0").unlink()
        (root / "f1").write_bytes(b"changed!!")
        (root / "extra").write_bytes(b"new")
        report = scan(baseline, root)
        finding_paths = [f.path for f in report.findings]
        assert len(finding_paths) == len(set(finding_paths))
        on_disk = {p for p in finding_paths if p != "f0"}
        assert set(baseline.paths()) | on_disk == set(finding_paths)
        keys = [p.encode() for p in finding_paths]
        assert keys == sorted(keys)

    def test_parallel_scan_same_report(self, tmp_path):
        rng = random.Random(23)
        root, baseline = make_baseline(
            tmp_path, {f"d/{i}": rng.randbytes(100) for i in range(20)}
        )
        (root / "d" / "3").write_bytes(b"boo")
        serial = scan(baseline, root, scanned_at=0)
        parallel = scan(baseline, root, workers=4, scanned_at=0)
        assert serial == parallel

    def test_soundness_and_completeness_random_trees(self, tmp_path):
        rng = random.Random(555)
        for case in range(8):
            spec = SandboxSpec(
                seed=rng.getrandbits(64),
                files=tuple(
                    (f"dir{i % 2}/file{i}.bin", rng.randint(1, 4096)) for i in range(6)
                ),
            )
            root = tmp_path / f"case{case}"
            baseline = build_sandbox(spec, root)
            assert scan(baseline, root).all_clean

            victim_path, victim_size = spec.files[rng.randrange(len(spec.files))]
            victim = root / victim_path
            mutation = case % 3
            if mutation == 0:
                infect_overwrite(victim, rng.randrange(victim_size), seed=case, length=1)
            elif mutation == 1:
                os.truncate(victim, victim_size - 1)
            else:
                infect_grow_to(victim, victim_size + rng.randint(1, 500), seed=case)
            report = scan(baseline, root)
            assert report.counts[MODIFIED] == 1
            modified = next(f for f in report.findings if f.status == MODIFIED)
            assert modified.path == victim_path


class TestScanFindingInvariants:
    D1 = sha256_bytes(b"1")
    D2 = sha256_bytes(b"2")

    def test_clean_requires_equal_digests(self):
        with pytest.raises(ValueError):
            ScanFinding(path="p", status=CLEAN, observed_digest=self.D1, baseline_digest=self.D2)

    def test_modified_requires_differing(self):
        with pytest.raises(ValueError):
            ScanFinding(path="p", status=MODIFIED, observed_digest=self.D1, baseline_digest=self.D1)

    def test_missing_has_no_observed(self):
        with pytest.raises(ValueError):
            ScanFinding(path="p", status=MISSING, observed_digest=self.D1)

    def test_unknown_has_no_baseline(self):
        with pytest.raises(ValueError):
            ScanFinding(path="p", status=UNKNOWN, baseline_digest=self.D1)

    def test_sighit_needs_name(self):
        with pytest.raises(ValueError):
            ScanFinding(path="p", status=SIGNATURE_HIT, observed_digest=self.D1)


class TestReportFormat:
    def test_round_trip(self, tmp_path):
        root, baseline = make_baseline(tmp_path, {"a": b"1", "b": b"2"})
        (root / "a").write_bytes(b"x")
        (root / "c").write_bytes(b"?")
        report = scan(baseline, root, scanned_at=0)
        text = render_scan_report(report)
        assert text.startswith("KRDP-REPORT v1\n")
        parsed = parse_scan_report(text)
        assert render_scan_report(parsed) == text
        assert parsed.counts == report.counts

    def test_summary_mismatch_rejected(self):
        text = "KRDP-REPORT v1\nclean=1 modified=0 missing=0 unknown=0 sighit=0\n"
        with pytest.raises(ParseError):
            parse_scan_report(text)

    def test_bad_status_rejected(self):
        text = (
            "KRDP-REPORT v1\nclean=0 modified=0 missing=0 unknown=0 sighit=0\n"
            "Weird\tp\t-\t-\t-\t-\n"
        )
        with pytest.raises(ParseError):
            parse_scan_report(text)
