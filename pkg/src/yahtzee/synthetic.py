"""Synthetic registry/platform populations with known ground truth."""

from __future__ import annotations

import string

import numpy as np

from .classifier import ClassLabel
from .identity import CanonicalIdentity, PlatformRecord, RegistryRecord

_LETTERS = np.array(list(string.ascii_uppercase))


def _random_identities(n: int, rng: np.random.Generator, exclude=frozenset()) -> list[CanonicalIdentity]:
    out, seen = [], set(exclude)
    while len(out) < n:
        k = n - len(out)
        first = ["".join(r) for r in _LETTERS[rng.integers(0, 26, size=(k, 6))]]
        last = ["".join(r) for r in _LETTERS[rng.integers(0, 26, size=(k, 8))]]
        day = rng.integers(1, 29, size=k)
        month = rng.integers(1, 13, size=k)
        year = rng.integers(1920, 2000, size=k)
        for f, l, d, m, y in zip(first, last, day.tolist(), month.tolist(), year.tolist()):
            ident = CanonicalIdentity(f, l, d, m, y)
            if ident not in seen:
                seen.add(ident)
                out.append(ident)
    return out[:n]


def make_registry(n: int, turnout: float, rng: np.random.Generator) -> list[RegistryRecord]:
    """``n`` distinct identities, exactly ``round(turnout * n)`` of them voters."""
    identities = _random_identities(n, rng)
    voted = np.zeros(n, dtype=np.int64)
    voted[rng.permutation(n)[: round(turnout * n)]] = 1
    return [RegistryRecord(i, int(v)) for i, v in zip(identities, voted.tolist())]


def make_platform(registry, n: int, match_rate: float, rng: np.random.Generator, attribute=None):
    """Platform users, ``round(match_rate * n)`` of them copied from the registry.

    Returns ``(records, truth)`` where ``truth`` maps user_id to the ClassLabel
    the user really has. ``attribute(rng, k)`` may supply a per-user category.
    """
    n_matched = round(match_rate * n)
    picks = rng.choice(len(registry), size=n_matched, replace=False)
    fresh = _random_identities(n - n_matched, rng, exclude={r.identity for r in registry})
    rows = [(registry[i].identity, ClassLabel(registry[i].voted)) for i in picks.tolist()]
    rows += [(ident, ClassLabel.UNMATCHED) for ident in fresh]
    order = rng.permutation(n)
    attrs = attribute(rng, n) if attribute is not None else None
    records, truth = [], {}
    for k, idx in enumerate(order.tolist()):
        user_id = f"u{k:07d}"
        ident, label = rows[idx]
        extra = {"group": str(attrs[k])} if attrs is not None else {}
        records.append(PlatformRecord(user_id, ident, extra))
        truth[user_id] = label
    return records, truth


def with_duplicates(records: list, n_identities: int, rng: np.random.Generator) -> list:
    """Append one extra copy of ``n_identities`` randomly chosen records."""
    picks = rng.choice(len(records), size=n_identities, replace=False)
    return records + [records[i] for i in picks.tolist()]
