"""Canonical identities, duplicate removal and the seeded identity hash.

Both parties must produce byte-identical serializations for the same person,
so everything here is deliberately plain: whitespace tokenization, uppercase,
a fixed ``FIRST|LAST|DD-MM-YYYY`` layout and SHA-256 over ``salt + payload``.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import hmac
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import EmptyNameError, FileFormatError

HASH_HEX_DIGITS = 7
HASH_MODULUS = 16**HASH_HEX_DIGITS  # 2**28
HASH_MASK = HASH_MODULUS - 1

SEPARATOR = "|"
_TRAILING_PUNCT = ".,"

REGISTRY_HEADER = ["first_name", "last_name", "birth_day", "birth_month", "birth_year", "voted"]
PLATFORM_HEADER = ["user_id", "name", "birth_day", "birth_month", "birth_year"]


@dataclass(frozen=True, order=True)
class CanonicalIdentity:
    first_name: str
    last_name: str
    birth_day: int
    birth_month: int
    birth_year: int

    def __post_init__(self):
        for name in (self.first_name, self.last_name):
            if not name or SEPARATOR in name or name != name.upper():
                raise EmptyNameError(f"invalid canonical name token {name!r}")
        # raises ValueError on impossible dates such as 31-02
        datetime.date(self.birth_year, self.birth_month, self.birth_day)
        if not 1000 <= self.birth_year <= 9999:
            raise ValueError(f"birth_year must have 4 digits, got {self.birth_year}")

    def serialize(self) -> bytes:
        text = (
            f"{self.first_name}{SEPARATOR}{self.last_name}{SEPARATOR}"
            f"{self.birth_day:02d}-{self.birth_month:02d}-{self.birth_year:04d}"
        )
        return text.encode("utf-8")

    @classmethod
    def parse(cls, payload: bytes) -> "CanonicalIdentity":
        first, last, date = payload.decode("utf-8").split(SEPARATOR)
        day, month, year = (int(part) for part in date.split("-"))
        return cls(first, last, day, month, year)


@dataclass(frozen=True)
class RoundSeed:
    """Salt agreed by both parties for one round of grouping."""

    round_index: int
    salt: bytes

    def __post_init__(self):
        if self.round_index < 0:
            raise ValueError("round_index must be >= 0")

    @classmethod
    def derive(cls, master_seed: int, round_index: int) -> "RoundSeed":
        """Keyed derivation: HMAC-SHA256(master_seed, "round:<i>") as 64 hex chars."""
        return cls(round_index, derive_salt(master_seed, f"round:{round_index}"))

    @property
    def salt_id(self) -> str:
        return salt_fingerprint(self.salt)


def derive_salt(master_seed: int, label: str) -> bytes:
    key = str(int(master_seed)).encode("ascii")
    return hmac.new(key, label.encode("utf-8"), hashlib.sha256).hexdigest().encode("ascii")


def salt_fingerprint(salt: bytes) -> str:
    """Short public label for a salt, written into table headers."""
    return hashlib.sha256(b"salt-id:" + salt).hexdigest()[:12]


def _clean_token(token: str) -> str:
    return token.rstrip(_TRAILING_PUNCT).upper()


def canonicalize_name(raw_name: str) -> tuple[str, str]:
    """Split a free-text name into (FIRST, LAST) using the first and last tokens.

    Middle tokens are ignored, so ``"First M. Last"`` gives ``("FIRST", "LAST")``.
    Honorifics and suffixes are not recognised; they become the first/last
    token like any other word.
    """
    tokens = raw_name.split() if raw_name else []
    if len(tokens) < 2:
        raise EmptyNameError(f"need at least two name tokens, got {raw_name!r}")
    first, last = _clean_token(tokens[0]), _clean_token(tokens[-1])
    if not first or not last or SEPARATOR in first + last:
        raise EmptyNameError(f"name {raw_name!r} has an empty or invalid token")
    return first, last


def normalize_name_field(raw: str) -> str:
    """Normalize a single name column from a structured (registry) file."""
    value = _clean_token((raw or "").strip())
    if not value or SEPARATOR in value:
        raise EmptyNameError(f"invalid name field {raw!r}")
    return value


def identity_hash(identity: CanonicalIdentity, seed: RoundSeed) -> int:
    """Last 7 hex digits of SHA-256(salt || serialization), as an integer."""
    digest = hashlib.sha256(seed.salt + identity.serialize()).hexdigest()
    return int(digest[-HASH_HEX_DIGITS:], 16)


def hash_payloads(payloads: Sequence[bytes], salt: bytes) -> np.ndarray:
    """Vector form of :func:`identity_hash` over pre-serialized identities."""
    base = hashlib.sha256(salt)
    out = np.empty(len(payloads), dtype=np.int64)
    for i, payload in enumerate(payloads):
        h = base.copy()
        h.update(payload)
        # last 7 hex chars == low 28 bits of the digest
        out[i] = int.from_bytes(h.digest()[-4:], "big") & HASH_MASK
    return out


def deduplicate(records: Iterable, key=lambda r: r.identity) -> tuple[list, int]:
    """Drop every record whose identity occurs more than once.

    All copies are removed, not just the extras, because a duplicated identity
    cannot be linked unambiguously on either side.
    """
    records = list(records)
    counts = Counter(key(r) for r in records)
    retained = [r for r in records if counts[key(r)] == 1]
    return retained, len(records) - len(retained)


@dataclass(frozen=True)
class RegistryRecord:
    identity: CanonicalIdentity
    voted: int


@dataclass(frozen=True)
class PlatformRecord:
    user_id: str
    identity: CanonicalIdentity
    attributes: dict = field(default_factory=dict, compare=False, hash=False)


@dataclass
class DropReport:
    """Counts of records excluded before matching, by reason."""

    input_rows: int = 0
    unparseable: int = 0
    duplicate: int = 0

    @property
    def retained(self) -> int:
        return self.input_rows - self.unparseable - self.duplicate

    def as_dict(self) -> dict:
        return {
            "input_rows": self.input_rows,
            "unparseable": self.unparseable,
            "duplicate": self.duplicate,
            "retained": self.retained,
        }


def _parse_date_fields(row: dict) -> tuple[int, int, int]:
    return int(row["birth_day"]), int(row["birth_month"]), int(row["birth_year"])


def _check_header(found, expected, path, allow_extra=False):
    found = list(found or [])
    ok = found[: len(expected)] == expected if allow_extra else found == expected
    if not ok:
        raise FileFormatError(f"{path}: expected header {','.join(expected)}, got {','.join(found)}")


def read_registry_csv(path) -> tuple[list[RegistryRecord], DropReport]:
    report = DropReport()
    parsed = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, REGISTRY_HEADER, path)
        for row in reader:
            report.input_rows += 1
            voted = (row["voted"] or "").strip()
            if voted not in ("0", "1"):
                raise FileFormatError(f"{path}: line {reader.line_num}: voted must be 0 or 1, got {voted!r}")
            try:
                ident = CanonicalIdentity(
                    normalize_name_field(row["first_name"]),
                    normalize_name_field(row["last_name"]),
                    *_parse_date_fields(row),
                )
            except (ValueError, TypeError):
                report.unparseable += 1
                continue
            parsed.append(RegistryRecord(ident, int(voted)))
    retained, report.duplicate = deduplicate(parsed)
    return retained, report


def read_platform_csv(path) -> tuple[list[PlatformRecord], DropReport]:
    """Read the platform user file; columns after the fixed header are kept as attributes."""
    report = DropReport()
    parsed = []
    seen_ids = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, PLATFORM_HEADER, path, allow_extra=True)
        extra = [c for c in reader.fieldnames if c not in PLATFORM_HEADER]
        for row in reader:
            report.input_rows += 1
            user_id = row["user_id"]
            if user_id in seen_ids:
                raise FileFormatError(f"{path}: duplicate user_id {user_id!r}")
            seen_ids.add(user_id)
            try:
                first, last = canonicalize_name(row["name"])
                ident = CanonicalIdentity(first, last, *_parse_date_fields(row))
            except (ValueError, TypeError):
                report.unparseable += 1
                continue
            parsed.append(PlatformRecord(user_id, ident, {c: row[c] for c in extra}))
    retained, report.duplicate = deduplicate(parsed)
    return retained, report


def write_registry_csv(path, records: Iterable[RegistryRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REGISTRY_HEADER)
        for r in records:
            i = r.identity
            writer.writerow([i.first_name, i.last_name, i.birth_day, i.birth_month, i.birth_year, r.voted])


def write_platform_csv(path, records: Iterable[PlatformRecord], raw_names=None) -> None:
    """Write platform records; ``raw_names`` maps user_id to the free-text name to emit."""
    records = list(records)
    extra = sorted({k for r in records for k in r.attributes})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PLATFORM_HEADER + extra)
        for r in records:
            i = r.identity
            name = (raw_names or {}).get(r.user_id, f"{i.first_name} {i.last_name}")
            writer.writerow(
                [r.user_id, name, i.birth_day, i.birth_month, i.birth_year]
                + [r.attributes.get(k, "") for k in extra]
            )
