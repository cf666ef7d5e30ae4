"""Checking classifications against ground truth and summarising turnout."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .classifier import ClassLabel
from .exceptions import FileFormatError, MissingTruthError


@dataclass
class TruthTable:
    """3x3 counts indexed ``[true class, predicted class]`` in ClassLabel order."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (3, 3) or (self.counts < 0).any():
            raise ValueError("truth table must be a non-negative 3x3 matrix")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        names = [c.slug for c in ClassLabel]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["true_class"] + [f"pred_{n}" for n in names])
            for name, row in zip(names, self.counts.tolist()):
                writer.writerow([name] + row)


def _label_of(value) -> int:
    return int(value.label) if hasattr(value, "label") else int(value)


def build_truth_table(results, truth) -> TruthTable:
    """Tally predictions against truth.

    ``results`` and ``truth`` map user_id to a label (or a
    :class:`ClassificationResult`). Every user in ``results`` needs a truth label.
    """
    missing = [u for u in results if u not in truth]
    if missing:
        raise MissingTruthError(f"{len(missing)} classified users have no truth label, e.g. {missing[0]!r}")
    counts = np.zeros((3, 3), dtype=np.int64)
    for user_id, res in results.items():
        counts[_label_of(truth[user_id]), _label_of(res)] += 1
    return TruthTable(counts)


def conditional_probabilities(tt: TruthTable) -> dict:
    """``Pr(true = c | predicted = c)`` per class, NaN for never-predicted classes."""
    predicted = tt.counts.sum(axis=0)
    out = {}
    for c in ClassLabel:
        out[c] = float(tt.counts[c, c] / predicted[c]) if predicted[c] else math.nan
    return out


def null_accuracy_ci(n_predicted: int, p0: float = 0.95, level: float = 0.95) -> tuple[float, float]:
    """Equal-tail interval for the observed accuracy if the true accuracy were ``p0``."""
    if n_predicted < 1:
        raise ValueError("n_predicted must be >= 1")
    alpha = 1.0 - level
    lo, hi = stats.binom.ppf([alpha / 2, 1 - alpha / 2], n_predicted, p0)
    return float(lo) / n_predicted, float(hi) / n_predicted


def summary_rows(tt: TruthTable, p0: float = 0.95, level: float = 0.95) -> list[dict]:
    """One row per class: conditional probability and, for matched classes, the null interval.

    Mirrors the per-state layout of a validation table.
    """
    probs = conditional_probabilities(tt)
    predicted = tt.counts.sum(axis=0)
    rows = []
    for c in ClassLabel:
        lo = hi = math.nan
        if c is not ClassLabel.UNMATCHED and predicted[c] > 0:
            lo, hi = null_accuracy_ci(int(predicted[c]), p0, level)
        rows.append({"class": c.slug, "probability": probs[c], "ci_lo": lo, "ci_hi": hi,
                     "n_predicted": int(predicted[c])})
    return rows


def write_summary_csv(path, rows) -> None:
    def fmt(x):
        return "NA" if isinstance(x, float) and math.isnan(x) else f"{x:.3f}"

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["class", "probability", "ci_lo", "ci_hi"])
        for r in rows:
            writer.writerow([r["class"], fmt(r["probability"]), fmt(r["ci_lo"]), fmt(r["ci_hi"])])


def grouped_turnout_report(results, grouping_key) -> dict:
    """Turnout among users classified as matched, per attribute value.

    ``grouping_key`` maps user_id to a category (e.g. an age band). Users
    classified unmatched are left out entirely; keys with no matched users
    do not appear.
    """
    voters = defaultdict(int)
    matched = defaultdict(int)
    for user_id, res in results.items():
        label = _label_of(res)
        if label == ClassLabel.UNMATCHED:
            continue
        key = grouping_key[user_id]
        matched[key] += 1
        voters[key] += label == ClassLabel.VOTER
    return {
        key: {"matched_turnout": voters[key] / matched[key], "matched_count": matched[key]}
        for key in sorted(matched, key=str)
    }


def write_turnout_csv(path, report: dict, key_name: str = "key") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([key_name, "matched_turnout", "matched_count"])
        for key, row in report.items():
            writer.writerow([key, f"{row['matched_turnout']:.6f}", row["matched_count"]])


def read_truth_csv(path) -> dict:
    """``user_id,truth`` file with truth in ``abstainer|voter|unmatched``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["user_id", "truth"]:
            raise FileFormatError(f"{path}: expected header user_id,truth")
        try:
            return {row["user_id"]: ClassLabel.from_slug(row["truth"]) for row in reader}
        except ValueError as exc:
            raise FileFormatError(f"{path}: {exc}") from None
