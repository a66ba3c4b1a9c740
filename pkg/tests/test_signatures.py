from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from krdp.errors import DuplicateSignatureName, MalformedSignatureDb
from krdp.manifest import sha256_bytes
from krdp.signatures import (
    Signature,
    SignatureDb,
    load_signatures,
    match_digest,
    save_signatures,
)

digests = st.text(alphabet="0123456789abcdef", min_size=64, max_size=64)
names = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyzABCDEF0123456789._-", min_size=1, max_size=24
)


@st.composite
def signature_dbs(draw):
    n = draw(st.integers(min_value=0, max_value=10))
    unique_names = sorted(draw(st.sets(names, min_size=n, max_size=n)))
    entries = [
        Signature(
            name=name,
            affected_file=draw(names),
            size_bytes=draw(st.integers(min_value=0, max_value=2**32)),
            digest=draw(st.one_of(st.none(), digests)),
        )
        for name in unique_names
    ]
    return SignatureDb(entries)


class TestFormat:
    def test_empty_round_trip(self):
        db = SignatureDb([])
        data = save_signatures(db)
        assert data == b"KRDP-SIGDB v1\n"
        assert load_signatures(data) == db

    def test_catalog_row_parses(self):
        data = (
            b"KRDP-SIGDB v1\n"
            b"Virus.Boot.Israeli.Boot.a\tKernel.dll\t512\t-\n"
        )
        db = load_signatures(data)
        sig = db.entries[0]
        assert sig.name == "Virus.Boot.Israeli.Boot.a"
        assert sig.affected_file == "Kernel.dll"
        assert sig.size_bytes == 512
        assert sig.digest is None

    def test_duplicate_names_rejected(self):
        data = (
            b"KRDP-SIGDB v1\n"
            b"dup\tf.dll\t1\t-\n"
            b"dup\tg.dll\t2\t-\n"
        )
        with pytest.raises(DuplicateSignatureName):
            load_signatures(data)

    @pytest.mark.parametrize(
        "data",
        [
            b"",
            b"KRDP-SIGDB v2\n",
            b"KRDP-SIGDB v1\nname only\n",
            b"KRDP-SIGDB v1\nn\tf\tnotanumber\t-\n",
            b"KRDP-SIGDB v1\nn\tf\t1\tzz\n",
            b"KRDP-SIGDB v1\nn\tf\t1\t-",
        ],
    )
    def test_malformed(self, data):
        with pytest.raises(MalformedSignatureDb):
            load_signatures(data)

    @settings(max_examples=60)
    @given(signature_dbs())
    def test_round_trip_property(self, db):
        assert load_signatures(save_signatures(db)) == db


class TestMatchDigest:
    def test_empty_db(self):
        assert SignatureDb([]).match_digest(sha256_bytes(b"x")) is None

    def test_single_entry(self):
        d = sha256_bytes(b"payload")
        sig = Signature("fam", "f.dll", 7, digest=d)
        db = SignatureDb([sig])
        assert db.match_digest(d) == sig
        assert match_digest(db, sha256_bytes(b"other")) is None

    def test_agrees_with_linear_scan(self):
        rng = random.Random(42)
        entries = [
            Signature(
                name=f"fam{i}",
                affected_file=f"f{i}.dll",
                size_bytes=i,
                digest=sha256_bytes(rng.randbytes(16)) if i % 3 else None,
            )
            for i in range(100)
        ]
        db = SignatureDb(entries)
        probes = [e.digest for e in entries if e.digest is not None]
        probes += [sha256_bytes(rng.randbytes(24)) for _ in range(100)]
        for probe in probes:
            linear = next((e for e in entries if e.digest == probe), None)
            assert db.match_digest(probe) == linear

    @settings(max_examples=40)
    @given(signature_dbs(), digests)
    def test_membership_property(self, db, probe):
        hit = db.match_digest(probe)
        member = any(e.digest == probe for e in db.entries)
        assert (hit is not None) == member
        if hit is not None:
            assert hit.digest == probe


class TestInvariants:
    def test_digest_index_covers_exactly_digest_entries(self):
        entries = [
            Signature("a", "f", 1, digest=sha256_bytes(b"1")),
            Signature("b", "g", 2, digest=None),
            Signature("c", "h", 3, digest=sha256_bytes(b"3")),
        ]
        db = SignatureDb(entries)
        assert set(db.digest_index) == {sha256_bytes(b"1"), sha256_bytes(b"3")}

    def test_constructor_rejects_duplicates(self):
        with pytest.raises(DuplicateSignatureName):
            SignatureDb([Signature("x", "f", 1), Signature("x", "g", 2)])

    def test_name_must_be_single_field(self):
        with pytest.raises(ValueError):
            Signature("bad\tname", "f", 1)
        with pytest.raises(ValueError):
            Signature("", "f", 1)
