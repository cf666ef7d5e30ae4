"""Registry-side grouping: hashed identities -> exact-size groups -> voter counts.

Only the resulting :class:`GroupCountTable` ever leaves the registry. It holds
group ids and counts, nothing that identifies a record.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import EmptyTableError, FileFormatError, ParamsMismatchError
from .identity import HASH_MODULUS, RegistryRecord, RoundSeed, hash_payloads


@dataclass(frozen=True)
class GroupParams:
    n_registry: int
    g: int = 5

    def __post_init__(self):
        if self.g < 2:
            raise ValueError(f"group size g must be >= 2, got {self.g}")
        if self.divisor < 1:
            raise ValueError(f"n_registry={self.n_registry} too small for g={self.g}")
        if self.divisor >= HASH_MODULUS:
            raise ValueError(f"divisor {self.divisor} must be below the hash range 2**28")

    @property
    def divisor(self) -> int:
        return self.n_registry // self.g


def group_id(h, params: GroupParams):
    """Group of a hash value: remainder modulo ``floor(N / g)``. Works on arrays too."""
    return h % params.divisor


@dataclass(frozen=True)
class RegistryBatch:
    """Deduplicated registry records pre-serialized for repeated hashing."""

    payloads: tuple
    voted: np.ndarray

    @classmethod
    def from_records(cls, records: Sequence[RegistryRecord]) -> "RegistryBatch":
        return cls(
            tuple(r.identity.serialize() for r in records),
            np.fromiter((r.voted for r in records), dtype=np.int64, count=len(records)),
        )

    def __len__(self):
        return len(self.payloads)

    @property
    def turnout(self) -> float:
        return float(self.voted.mean())


@dataclass(frozen=True, eq=False)
class GroupCountTable:
    round_index: int
    params: GroupParams
    group_ids: np.ndarray
    voter_counts: np.ndarray
    salt_id: str = ""

    def __post_init__(self):
        if len(self.group_ids) != len(self.voter_counts):
            raise ValueError("group_ids and voter_counts differ in length")
        if len(self.group_ids) and (
            self.group_ids.min() < 0 or self.group_ids.max() >= self.params.divisor
        ):
            raise ValueError("group id outside [0, divisor)")
        if len(self.voter_counts) and (
            self.voter_counts.min() < 0 or self.voter_counts.max() > self.params.g
        ):
            raise ValueError("voter count outside [0, g]")
        if np.any(np.diff(self.group_ids) <= 0):
            raise ValueError("group ids must be strictly increasing")

    def __len__(self):
        return len(self.group_ids)

    def __eq__(self, other):
        if not isinstance(other, GroupCountTable):
            return NotImplemented
        return (
            self.round_index == other.round_index
            and self.params == other.params
            and self.salt_id == other.salt_id
            and np.array_equal(self.group_ids, other.group_ids)
            and np.array_equal(self.voter_counts, other.voter_counts)
        )

    @property
    def group_counts(self) -> dict:
        return dict(zip(self.group_ids.tolist(), self.voter_counts.tolist()))

    def lookup(self, gids: np.ndarray) -> np.ndarray:
        """Voter count for each group id, or -1 where the group was not retained."""
        dense = np.full(self.params.divisor, -1, dtype=np.int64)
        dense[self.group_ids] = self.voter_counts
        return dense[np.asarray(gids, dtype=np.int64)]


def build_group_table(registry, seed: RoundSeed, params: GroupParams) -> GroupCountTable:
    """Hash, group and tabulate the registry for one round.

    Groups whose registry membership is not exactly ``g`` are dropped. Per-record
    assignments are not kept once the counts are taken.
    """
    if not isinstance(registry, RegistryBatch):
        registry = RegistryBatch.from_records(registry)
    if len(registry) != params.n_registry:
        raise ParamsMismatchError(
            f"params.n_registry={params.n_registry} but registry has {len(registry)} records"
        )
    gids = group_id(hash_payloads(registry.payloads, seed.salt), params)
    size = np.bincount(gids, minlength=params.divisor)
    voters = np.bincount(gids, weights=registry.voted, minlength=params.divisor)
    keep = np.flatnonzero(size == params.g)
    return GroupCountTable(
        seed.round_index, params, keep.astype(np.int64), voters[keep].astype(np.int64), seed.salt_id
    )


def table_stats(table: GroupCountTable) -> dict:
    if len(table) == 0:
        raise EmptyTableError("table has no retained groups")
    return {
        "retained_groups": len(table),
        "retained_fraction": len(table) / table.params.divisor,
        "mean_voters_per_group": float(table.voter_counts.mean()),
    }


# -- wire format ---------------------------------------------------------------

_HEADER_RE = re.compile(
    r"^# round=(?P<round>\d+) g=(?P<g>\d+) n_registry=(?P<n>\d+) "
    r"divisor=(?P<divisor>\d+) salt_id=(?P<salt_id>\S*)$"
)
COLUMNS_LINE = "group_id,voter_count"


def format_table(table: GroupCountTable) -> str:
    p = table.params
    lines = [
        f"# round={table.round_index} g={p.g} n_registry={p.n_registry} "
        f"divisor={p.divisor} salt_id={table.salt_id}",
        COLUMNS_LINE,
    ]
    lines.extend(f"{gid},{cnt}" for gid, cnt in zip(table.group_ids.tolist(), table.voter_counts.tolist()))
    return "\n".join(lines) + "\n"


def write_table(path, table: GroupCountTable) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(format_table(table))


def parse_table(text: str) -> GroupCountTable:
    lines = text.splitlines()
    if len(lines) < 2:
        raise FileFormatError("group table is truncated")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise FileFormatError(f"bad group table header: {lines[0]!r}")
    if lines[1] != COLUMNS_LINE:
        raise FileFormatError(f"expected column line {COLUMNS_LINE!r}, got {lines[1]!r}")
    params = GroupParams(int(m["n"]), int(m["g"]))
    if params.divisor != int(m["divisor"]):
        raise FileFormatError(
            f"header divisor {m['divisor']} inconsistent with n_registry={params.n_registry}, g={params.g}"
        )
    rows = [line.split(",") for line in lines[2:] if line]
    try:
        arr = np.array(rows, dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise FileFormatError(f"bad group table row: {exc}") from None
    try:
        return GroupCountTable(int(m["round"]), params, arr[:, 0].copy(), arr[:, 1].copy(), m["salt_id"])
    except ValueError as exc:
        raise FileFormatError(str(exc)) from None


def read_table(path) -> GroupCountTable:
    with open(path, encoding="ascii", newline="") as fh:
        return parse_table(fh.read())
