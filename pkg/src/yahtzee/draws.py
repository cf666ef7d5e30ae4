"""Platform-side draws: look up each user's group count every round and keep them.

A round only yields a draw for a user whose group survived the registry's
exact-size filter, so users accumulate draws at different speeds. The pipeline
keeps running rounds until every user has its quota and the classifier then
uses the first ``quota`` draws in round order.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DuplicateRoundError, FileFormatError, ParamsMismatchError, QuotaNotMetError
from .grouping import GroupCountTable, GroupParams, group_id
from .identity import PlatformRecord, RoundSeed, hash_payloads

STORE_HEADER = ["user_id", "round_index", "y"]


@dataclass(frozen=True)
class PlatformBatch:
    user_ids: tuple
    payloads: tuple

    @classmethod
    def from_records(cls, records: Sequence[PlatformRecord]) -> "PlatformBatch":
        return cls(tuple(r.user_id for r in records), tuple(r.identity.serialize() for r in records))

    def __len__(self):
        return len(self.user_ids)


@dataclass(frozen=True)
class RoundPlan:
    m1: int
    m2: int = 0
    rounds_executed: int = 0

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 0:
            raise ValueError(f"need m1 >= 1 and m2 >= 0, got m1={self.m1}, m2={self.m2}")


def assign_draws(platform, table: GroupCountTable, seed: RoundSeed, params: GroupParams | None = None):
    """Return ``(user_id, y)`` for every platform user whose group was retained this round."""
    if seed.round_index != table.round_index:
        raise ParamsMismatchError(f"seed is for round {seed.round_index}, table for round {table.round_index}")
    if params is not None and params != table.params:
        raise ParamsMismatchError(f"table params {table.params} disagree with configured {params}")
    if table.salt_id and table.salt_id != seed.salt_id:
        raise ParamsMismatchError(
            f"round {seed.round_index}: table salt_id {table.salt_id} != local salt_id {seed.salt_id}"
        )
    if not isinstance(platform, PlatformBatch):
        platform = PlatformBatch.from_records(platform)
    y = table.lookup(group_id(hash_payloads(platform.payloads, seed.salt), table.params))
    hit = np.flatnonzero(y >= 0)
    return [(platform.user_ids[i], int(y[i])) for i in hit]


class DrawStore:
    """Per-user draw sequences keyed by round.

    ``user_ids`` fixes the record set up front, so users that have not yet
    received a draw still count against quotas.
    """

    def __init__(self, user_ids: Iterable = ()):
        self._draws: dict = {u: {} for u in user_ids}
        self.rounds: list[int] = []
        self._seen_rounds: set = set()

    def __len__(self):
        return len(self._draws)

    def __contains__(self, user_id):
        return user_id in self._draws

    @property
    def user_ids(self) -> list:
        return list(self._draws)

    def add_round(self, round_index: int, round_draws: Iterable[tuple]) -> None:
        if round_index in self._seen_rounds:
            raise DuplicateRoundError(f"round {round_index} already ingested")
        round_draws = list(round_draws)
        seen = set()
        for user_id, y in round_draws:
            if user_id in seen:
                raise DuplicateRoundError(f"user {user_id!r} has two draws in round {round_index}")
            seen.add(user_id)
        for user_id, y in round_draws:
            self._draws.setdefault(user_id, {})[round_index] = int(y)
        self.rounds.append(round_index)
        self._seen_rounds.add(round_index)

    def vector(self, user_id) -> list[tuple[int, int]]:
        """``(round_index, y)`` pairs in round order."""
        return sorted(self._draws[user_id].items())

    def counts(self, user_ids=None) -> np.ndarray:
        ids = self.user_ids if user_ids is None else user_ids
        return np.array([len(self._draws.get(u, ())) for u in ids], dtype=np.int64)

    def first_draws(self, user_ids: Sequence, n: int) -> np.ndarray:
        """Matrix of each user's first ``n`` draws in round order."""
        out = np.empty((len(user_ids), n), dtype=np.int64)
        short = {}
        for i, u in enumerate(user_ids):
            d = self._draws.get(u, {})
            if len(d) < n:
                short[u] = n - len(d)
                continue
            out[i] = [d[r] for r in sorted(d)[:n]]
        if short:
            raise QuotaNotMetError(
                f"{len(short)} users lack the required {n} draws (total shortfall {sum(short.values())})",
                shortfall=short,
            )
        return out

    def draw_probability(self, user_ids=None) -> float:
        """Empirical per-round probability that a user receives a draw."""
        if not self.rounds:
            raise ValueError("no rounds ingested yet")
        counts = self.counts(user_ids)
        return float(counts.sum()) / (len(counts) * len(self.rounds))


def accumulate(store: DrawStore, round_draws, round_index: int) -> DrawStore:
    store.add_round(round_index, round_draws)
    return store


def plan_rounds(store: DrawStore, quota: int, record_set=None, draw_probability: float | None = None) -> int:
    """Rough number of further rounds before everyone in ``record_set`` has ``quota`` draws.

    Only an estimate (expected waiting time for the worst-off user); callers
    loop until the quota is actually met.
    """
    if quota < 1:
        raise ValueError("quota must be >= 1")
    deficit = quota - int(store.counts(record_set).min(initial=quota))
    if deficit <= 0:
        return 0
    p = store.draw_probability(record_set) if draw_probability is None else draw_probability
    if p <= 0:
        raise ValueError("draw probability is zero; quota can never be met")
    return math.ceil(round(deficit / p, 9))


# -- draw store file ---------------------------------------------------------------


def append_store_csv(path, round_index: int, round_draws) -> None:
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(STORE_HEADER)
        for user_id, y in round_draws:
            writer.writerow([user_id, round_index, y])


def read_store_csv(path, user_ids: Iterable = (), rounds: Iterable[int] = ()) -> DrawStore:
    """Load a draw store; ``rounds`` lists ingested rounds, including ones that yielded no draws."""
    by_round: dict = {r: [] for r in rounds}
    if os.path.exists(path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is not None and header != STORE_HEADER:
                raise FileFormatError(f"{path}: expected header {','.join(STORE_HEADER)}")
            for row in reader:
                try:
                    user_id, r, y = row[0], int(row[1]), int(row[2])
                except (ValueError, IndexError):
                    raise FileFormatError(f"{path}: bad row {row!r}") from None
                by_round.setdefault(r, []).append((user_id, y))
    store = DrawStore(user_ids)
    for r in sorted(by_round):
        store.add_round(r, by_round[r])
    return store
