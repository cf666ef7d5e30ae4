import hashlib
import subprocess

import pytest
from hypothesis import given, strategies as st

from yahtzee.exceptions import EmptyNameError
from yahtzee.identity import (
    HASH_MODULUS,
    CanonicalIdentity,
    DropReport,
    PlatformRecord,
    RoundSeed,
    canonicalize_name,
    deduplicate,
    hash_payloads,
    identity_hash,
    read_platform_csv,
    read_registry_csv,
)

JOHN = CanonicalIdentity("JOHN", "SMITH", 15, 1, 1970)

# Frozen from the coreutils sha256sum binary, independent of hashlib:
#   printf 'round-0JOHN|SMITH|15-01-1970' | sha256sum
#   -> 8a08d8bbf91e43e1367ae25b8773d4770b06096f8656bbfddfc96086ef014c16
#   printf 'round-1JOHN|SMITH|15-01-1970' | sha256sum
#   -> 3dc4a58e27c79da3c37cad43a41aa611af836464cd26399acfe01cef4310c4a5
GOLDEN = {b"round-0": 0xF014C16, b"round-1": 0x310C4A5}

names = st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ'-", min_size=1, max_size=12)
identities = st.builds(
    CanonicalIdentity,
    first_name=names,
    last_name=names,
    birth_day=st.integers(1, 28),
    birth_month=st.integers(1, 12),
    birth_year=st.integers(1900, 2010),
)


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("First M. Last", ("FIRST", "LAST")),
        ("Ann Lee", ("ANN", "LEE")),
        ("The Illustrious First M. Last, Esquire", ("THE", "ESQUIRE")),
        ("  mary   ann   o'neil  ", ("MARY", "O'NEIL")),
        ("Smith, John", ("SMITH", "JOHN")),
    ],
)
def test_canonicalize_name(raw, expected):
    assert canonicalize_name(raw) == expected


@pytest.mark.parametrize("raw", ["", "   ", "Cher", "A .", "Bad|Pipe Name"])
def test_canonicalize_name_rejects(raw):
    with pytest.raises(EmptyNameError):
        canonicalize_name(raw)


def test_serialization_layout():
    assert JOHN.serialize() == b"JOHN|SMITH|15-01-1970"
    assert CanonicalIdentity("AL", "BO", 3, 7, 2001).serialize() == b"AL|BO|03-07-2001"


@pytest.mark.parametrize("bad", [("john", "SMITH", 1, 1, 1970), ("", "X", 1, 1, 1970),
                                 ("A", "B", 30, 2, 1970), ("A", "B", 1, 13, 1970), ("A", "B", 1, 1, 70)])
def test_identity_rejects_invalid(bad):
    with pytest.raises(ValueError):
        CanonicalIdentity(*bad)


@pytest.mark.parametrize("salt", sorted(GOLDEN))
def test_golden_vectors(salt):
    assert identity_hash(JOHN, RoundSeed(0, salt)) == GOLDEN[salt]


def test_golden_vectors_against_system_sha256():
    try:
        out = subprocess.run(["sha256sum"], input=b"round-0" + JOHN.serialize(), capture_output=True, check=True)
    except (FileNotFoundError, subprocess.CalledProcessError):
        pytest.skip("sha256sum not available")
    assert int(out.stdout.split()[0][-7:], 16) == GOLDEN[b"round-0"]


def test_round_salts_give_different_hashes():
    assert identity_hash(JOHN, RoundSeed(0, b"round-0")) != identity_hash(JOHN, RoundSeed(1, b"round-1"))


def test_derived_salts_distinct_and_stable():
    salts = {RoundSeed.derive(42, r).salt for r in range(500)}
    assert len(salts) == 500
    assert RoundSeed.derive(42, 7) == RoundSeed.derive(42, 7)
    assert RoundSeed.derive(42, 7).salt != RoundSeed.derive(43, 7).salt
    assert len(RoundSeed.derive(42, 7).salt) == 64


@given(identities, st.binary(min_size=0, max_size=40))
def test_hash_is_deterministic_and_in_range(ident, salt):
    seed = RoundSeed(3, salt)
    values = {identity_hash(ident, seed) for _ in range(100)}
    assert len(values) == 1
    (value,) = values
    assert 0 <= value < HASH_MODULUS
    assert value == int(hashlib.sha256(salt + ident.serialize()).hexdigest()[-7:], 16)


@given(st.lists(identities, min_size=1, max_size=20), st.binary(max_size=16))
def test_vector_hash_matches_scalar(idents, salt):
    seed = RoundSeed(0, salt)
    vec = hash_payloads([i.serialize() for i in idents], salt)
    assert vec.tolist() == [identity_hash(i, seed) for i in idents]


@given(identities)
def test_cross_party_roundtrip(ident):
    seed = RoundSeed.derive(9, 1)
    transported = CanonicalIdentity.parse(bytes(bytearray(ident.serialize())))
    assert transported == ident
    assert identity_hash(transported, seed) == identity_hash(ident, seed)


def _rec(name, uid="u"):
    return PlatformRecord(uid, CanonicalIdentity(name, "X", 1, 1, 1990))


def test_deduplicate_drops_all_copies():
    a, b, c = _rec("A"), _rec("B"), _rec("C")
    retained, dropped = deduplicate([a, b, b, c])
    assert retained == [a, c]
    assert dropped == 2


def test_deduplicate_empty():
    assert deduplicate([]) == ([], 0)


@given(st.lists(st.sampled_from("ABCDEFG"), max_size=30))
def test_deduplicate_properties(letters):
    recs = [_rec(x, str(i)) for i, x in enumerate(letters)]
    retained, dropped = deduplicate(recs)
    assert dropped == len(recs) - len(retained)
    assert len({r.identity for r in retained}) == len(retained)
    assert {r.identity.first_name for r in retained} == {x for x in letters if letters.count(x) == 1}
    assert deduplicate(retained) == (retained, 0)


def test_deduplicate_half_percent_duplication():
    from yahtzee.synthetic import _random_identities
    import numpy as np

    rng = np.random.default_rng(5)
    idents = _random_identities(9950, rng)
    recs = [PlatformRecord(str(i), ident) for i, ident in enumerate(idents)]
    recs += [PlatformRecord(f"d{i}", idents[j]) for i, j in enumerate(rng.choice(9950, 50, replace=False))]
    assert len(recs) == 10_000
    _, dropped = deduplicate(recs)
    assert dropped == 100


def test_read_registry_csv(tmp_path):
    path = tmp_path / "reg.csv"
    path.write_text(
        "first_name,last_name,birth_day,birth_month,birth_year,voted\n"
        "Ann,Lee,1,2,1980,1\n"
        "ann,lee,1,2,1980,0\n"
        "Bob,Ray,31,2,1980,1\n"
        "Cy,Day,5,5,1955,0\n"
        "Di,,5,5,1955,0\n"
    )
    records, report = read_registry_csv(path)
    assert [r.identity.first_name for r in records] == ["CY"]
    assert report == DropReport(input_rows=5, unparseable=2, duplicate=2)
    assert report.retained == 1


def test_read_platform_csv_keeps_attributes(tmp_path):
    path = tmp_path / "plat.csv"
    path.write_text(
        "user_id,name,birth_day,birth_month,birth_year,age\n"
        "1,First M. Last,1,2,1980,44\n"
        "2,Cher,1,2,1980,30\n"
        "3,first last,1,2,1980,44\n"
        "4,Zed Q Zulu,9,9,1999,25\n"
    )
    records, report = read_platform_csv(path)
    assert [(r.user_id, r.attributes) for r in records] == [("4", {"age": "25"})]
    assert report.as_dict() == {"input_rows": 4, "unparseable": 1, "duplicate": 2, "retained": 1}


def test_bad_header(tmp_path):
    from yahtzee.exceptions import FileFormatError

    path = tmp_path / "reg.csv"
    path.write_text("first,last\nA,B\n")
    with pytest.raises(FileFormatError):
        read_registry_csv(path)
