"""Monte Carlo calibration of draw quotas.

Synthetic populations are drawn directly from the three per-hypothesis draw
laws (no hashing, no discarded groups), classified, and scored by conditional
accuracy ``Pr(true class = c | predicted class = c)``. :func:`calibrate` walks a
grid of draw counts to find the smallest stage-1 quota ``m1`` and extra quota
``m2`` that reach a target accuracy.

Random streams are keyed by ``(rng_seed, replicate, block)``, where a block is
``step`` consecutive draws. Longer simulations therefore extend shorter ones
exactly, and results do not depend on evaluation order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import check_group_size, check_turnout
from .classifier import (
    ClassLabel,
    PopulationParams,
    argmax_label,
    draw_histogram,
    log_likelihoods_from_counts,
    log_pmf_table,
    redo_class,
)
from .exceptions import LengthMismatchError, TargetUnreachableError
from .identity import hash_payloads


@dataclass(frozen=True)
class SimulationConfig:
    t: float
    mm: float
    n: int = 100_000
    g: int = 5
    target_accuracy: float = 0.95
    rng_seed: int = 0
    replicates: int = 3
    step: int = 5
    max_draws: int = 500

    def __post_init__(self):
        check_turnout(self.t, "t")
        check_group_size(self.g)
        if not 0.0 < self.mm <= 1.0:
            raise ValueError(f"match rate mm must lie in (0, 1], got {self.mm}")
        if self.n < 1000:
            raise ValueError(f"population size n must be >= 1000, got {self.n}")
        if not 0.0 < self.target_accuracy < 1.0:
            raise ValueError("target_accuracy must lie in (0, 1)")
        if self.replicates < 1 or self.step < 1 or self.max_draws < self.step:
            raise ValueError("need replicates >= 1, step >= 1 and max_draws >= step")

    @property
    def class_sizes(self) -> tuple[int, int, int]:
        # Python's round() is half-to-even; R's round() agrees on .5 cases
        n0 = round(self.mm * (1 - self.t) * self.n)
        n1 = round(self.mm * self.t * self.n)
        return n0, n1, self.n - n0 - n1

    @property
    def params(self) -> PopulationParams:
        return PopulationParams(self.t, self.g, self.mm)

    def truth(self) -> np.ndarray:
        return np.repeat([0, 1, 2], self.class_sizes)


def _block_draws(cfg: SimulationConfig, replicate: int, block: int) -> np.ndarray:
    rng = np.random.default_rng([cfg.rng_seed, replicate, block])
    n0, n1, n2 = cfg.class_sizes
    w = cfg.step
    return np.vstack(
        [
            rng.binomial(cfg.g - 1, cfg.t, size=(n0, w)),
            rng.binomial(cfg.g - 1, cfg.t, size=(n1, w)) + 1,
            rng.binomial(cfg.g, cfg.t, size=(n2, w)),
        ]
    ).astype(np.int8)


def simulate_population(cfg: SimulationConfig, m: int, replicate: int = 0):
    """Truth labels (0 abstainer, 1 voter, 2 unmatched) and an ``(n, m)`` draw matrix."""
    if m < 1:
        raise ValueError("m must be >= 1")
    blocks = [_block_draws(cfg, replicate, b) for b in range(math.ceil(m / cfg.step))]
    return cfg.truth(), np.hstack(blocks)[:, :m].astype(np.int64)


class _Replicate:
    """Running draw histograms for one simulated population."""

    def __init__(self, cfg: SimulationConfig, index: int):
        self.cfg = cfg
        self.index = index
        self.truth = cfg.truth()
        self._hist = np.zeros((cfg.n, cfg.g + 1), dtype=np.int64)  # draws in completed blocks
        self._done = 0  # completed blocks
        self._block = None

    def hist_at(self, m: int) -> np.ndarray:
        """Histogram of each record's first ``m`` draws; ``m`` must not decrease between calls."""
        step = self.cfg.step
        if m < self._done * step:
            raise ValueError("draw counts must be visited in ascending order")
        while (self._done + 1) * step <= m:
            block = self._block if self._block is not None else _block_draws(self.cfg, self.index, self._done)
            self._hist += draw_histogram(block, self.cfg.g)
            self._done += 1
            self._block = None
        partial = m - self._done * step
        if partial == 0:
            return self._hist.copy()
        if self._block is None:
            self._block = _block_draws(self.cfg, self.index, self._done)
        return self._hist + draw_histogram(self._block[:, :partial], self.cfg.g)


def _agreement(predictions, truth):
    """Per-class (correct, predicted) counts."""
    predictions, truth = np.asarray(predictions), np.asarray(truth)
    correct = np.bincount(predictions[predictions == truth], minlength=3)[:3]
    predicted = np.bincount(predictions, minlength=3)[:3]
    return correct, predicted


def _ratios(correct, predicted) -> dict:
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(predicted > 0, correct / np.maximum(predicted, 1), np.nan)
    return {
        "acc_abstainer": float(acc[ClassLabel.ABSTAINER]),
        "acc_voter": float(acc[ClassLabel.VOTER]),
        "acc_unmatched": float(acc[ClassLabel.UNMATCHED]),
    }


def evaluate_accuracy(predictions, truth) -> dict:
    """Conditional accuracy per predicted class; NaN where a class was never predicted."""
    if len(predictions) != len(truth):
        raise LengthMismatchError(f"{len(predictions)} predictions vs {len(truth)} truth labels")
    return _ratios(*_agreement(predictions, truth))


def _pooled_accuracy(label_sets, replicates) -> dict:
    correct = np.zeros(3, dtype=np.int64)
    predicted = np.zeros(3, dtype=np.int64)
    for labels, rep in zip(label_sets, replicates):
        c, p = _agreement(labels, rep.truth)
        correct += c
        predicted += p
    return _ratios(correct, predicted)


@dataclass
class AccuracyCurve:
    m: list = field(default_factory=list)
    acc_voter: list = field(default_factory=list)
    acc_abstainer: list = field(default_factory=list)

    def append(self, m, acc):
        self.m.append(int(m))
        self.acc_voter.append(acc["acc_voter"])
        self.acc_abstainer.append(acc["acc_abstainer"])

    def rows(self):
        return list(zip(self.m, self.acc_voter, self.acc_abstainer))

    def first_reaching(self, column: str, target: float):
        for m, acc in zip(self.m, getattr(self, column)):
            if acc >= target:
                return m
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["m", "acc_voter", "acc_abstainer"])
            for m, v, a in self.rows():
                writer.writerow([m, _fmt(v), _fmt(a)])


def _fmt(x) -> str:
    return "NA" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def accuracy_curve(cfg: SimulationConfig, m_values) -> AccuracyCurve:
    """Single-stage conditional accuracies of both matched classes at each draw count."""
    m_values = [int(m) for m in m_values]
    if not m_values or m_values[0] < 1 or any(b <= a for a, b in zip(m_values, m_values[1:])):
        raise ValueError("m_values must be a non-empty ascending list of positive integers")
    table = log_pmf_table(cfg.params)
    reps = [_Replicate(cfg, r) for r in range(cfg.replicates)]
    curve = AccuracyCurve()
    for m in m_values:
        labels = [argmax_label(log_likelihoods_from_counts(rep.hist_at(m), table)) for rep in reps]
        curve.append(m, _pooled_accuracy(labels, reps))
    return curve


@dataclass(frozen=True)
class CalibrationPlan:
    m1: int
    m2: int
    redo_class: ClassLabel | None
    achieved_accuracy_voter: float
    achieved_accuracy_abstainer: float
    achieved_accuracy_unmatched: float = float("nan")


def _less_and_more_common(t):
    more = redo_class(t)
    if more is None:
        return None, None
    less = ClassLabel.VOTER if more is ClassLabel.ABSTAINER else ClassLabel.ABSTAINER
    return less, more


def _acc_key(label: ClassLabel) -> str:
    return f"acc_{label.slug}"


def _two_stage_labels(rep: _Replicate, m1, m2, table, t):
    labels = argmax_label(log_likelihoods_from_counts(rep.hist_at(m1), table))
    more = redo_class(t)
    if m2 > 0 and more is not None:
        rows = labels == more
        labels[rows] = argmax_label(log_likelihoods_from_counts(rep.hist_at(m1 + m2)[rows], table))
    return labels


def run_two_stage(cfg: SimulationConfig, m1: int, m2: int, replicates=None) -> dict:
    """Pooled conditional accuracies of the (m1, m2) rule over the given replicate indices."""
    replicates = range(cfg.replicates) if replicates is None else replicates
    table = log_pmf_table(cfg.params)
    reps = [_Replicate(cfg, r) for r in replicates]
    labels = [_two_stage_labels(rep, m1, m2, table, cfg.t) for rep in reps]
    return _pooled_accuracy(labels, reps)


def calibrate(cfg: SimulationConfig, return_curve: bool = False):
    """Grid-search the smallest (m1, m2) meeting ``cfg.target_accuracy``.

    ``m1`` is the first grid point where the less common behaviour's accuracy
    reaches the target (both behaviours when ``t == 0.5``, since no record is
    then redrawn). ``m2`` is the smallest extra count after which records
    first labelled with the more common behaviour, reclassified on
    ``m1 + m2`` draws, bring that behaviour's accuracy to the target.
    Achieved accuracies are re-measured on fresh replicates.
    """
    target, step, cap = cfg.target_accuracy, cfg.step, cfg.max_draws
    table = log_pmf_table(cfg.params)
    reps = [_Replicate(cfg, r) for r in range(cfg.replicates)]
    less, more = _less_and_more_common(cfg.t)
    curve = AccuracyCurve()

    m1 = None
    stage1 = None
    for m in range(step, cap + 1, step):
        stage1 = [argmax_label(log_likelihoods_from_counts(rep.hist_at(m), table)) for rep in reps]
        acc = _pooled_accuracy(stage1, reps)
        curve.append(m, acc)
        needed = [less] if less is not None else [ClassLabel.VOTER, ClassLabel.ABSTAINER]
        if all(acc[_acc_key(c)] >= target for c in needed):
            m1 = m
            break
    if m1 is None:
        raise TargetUnreachableError(f"stage-1 accuracy below {target} up to {cap} draws")

    m2 = 0
    if more is not None:
        redo = [labels == more for labels in stage1]
        found = False
        for extra in range(0, cap - m1 + 1, step):
            labels = []
            for rep, base, rows in zip(reps, stage1, redo):
                lab = base.copy()
                if extra:
                    lab[rows] = argmax_label(log_likelihoods_from_counts(rep.hist_at(m1 + extra)[rows], table))
                labels.append(lab)
            if _pooled_accuracy(labels, reps)[_acc_key(more)] >= target:
                m2, found = extra, True
                break
        if not found:
            raise TargetUnreachableError(
                f"{more.slug} accuracy below {target} with m1={m1} and up to {cap} total draws"
            )

    fresh = range(cfg.replicates, 2 * cfg.replicates)
    achieved = run_two_stage(cfg, m1, m2, fresh)
    plan = CalibrationPlan(
        m1, m2, more, achieved["acc_voter"], achieved["acc_abstainer"], achieved["acc_unmatched"]
    )
    return (plan, curve) if return_curve else plan


def write_calibration_report(path, cfg: SimulationConfig, plan: CalibrationPlan, curve: AccuracyCurve) -> None:
    report = {
        "config": asdict(cfg),
        "plan": {
            "m1": plan.m1,
            "m2": plan.m2,
            "redo_class": plan.redo_class.slug if plan.redo_class is not None else None,
            "achieved_accuracy_voter": plan.achieved_accuracy_voter,
            "achieved_accuracy_abstainer": plan.achieved_accuracy_abstainer,
            "achieved_accuracy_unmatched": plan.achieved_accuracy_unmatched,
        },
        "curve": [{"m": m, "acc_voter": v, "acc_abstainer": a} for m, v, a in curve.rows()],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, allow_nan=True)
        fh.write("\n")


# -- match rate ------------------------------------------------------------------


def registry_hash_set(payloads, salt: bytes) -> set:
    """Seeded hashes of every registry identity, for aggregate match counting."""
    return set(hash_payloads(list(payloads), salt).tolist())


def estimate_match_rate(platform_sample, registry_hashes: set, salt: bytes) -> float:
    """Share of sampled platform identities whose seeded hash is in ``registry_hashes``.

    ``platform_sample`` holds serialized identities. Only the count is kept,
    never which records matched. ``salt`` must differ from every round salt.
    """
    payloads = list(platform_sample)
    if not payloads:
        raise ValueError("need at least one sampled record")
    hits = sum(1 for h in hash_payloads(payloads, salt).tolist() if h in registry_hashes)
    return hits / len(payloads)
