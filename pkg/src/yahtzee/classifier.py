"""Three-hypothesis maximum-likelihood classification of draw sequences.

A platform user's draw in one round is the voter count of the group it landed
in. Under each hypothesis the draw has a known binomial law:

* unmatched:          y ~ Binomial(g, p)
* matched voter:      y ~ 1 + Binomial(g - 1, p)   (the user is one of the voters)
* matched abstainer:  y ~ Binomial(g - 1, p)

Draws are independent across rounds, so each hypothesis' log-likelihood is a
sum over draws, and a user is assigned the hypothesis with the largest value.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_draws, check_group_size, check_turnout
from .exceptions import DomainError, EmptyDrawsError, FileFormatError


class ClassLabel(IntEnum):
    ABSTAINER = 0
    VOTER = 1
    UNMATCHED = 2

    @property
    def slug(self) -> str:
        return self.name.lower()

    @classmethod
    def from_slug(cls, slug: str) -> "ClassLabel":
        try:
            return cls[slug.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown class label {slug!r}") from None


# (trials, shift) of the binomial behind each hypothesis, indexed by ClassLabel
_LAWS = {
    ClassLabel.ABSTAINER: (-1, 0),
    ClassLabel.VOTER: (-1, 1),
    ClassLabel.UNMATCHED: (0, 0),
}


@dataclass(frozen=True)
class PopulationParams:
    p: float
    g: int = 5
    match_rate: float | None = None

    def __post_init__(self):
        check_turnout(self.p, "p")
        check_group_size(self.g)
        if self.match_rate is not None and not 0.0 < self.match_rate <= 1.0:
            raise ValueError(f"match_rate must lie in (0, 1], got {self.match_rate}")


def _law(hypothesis, g):
    extra_trials, shift = _LAWS[ClassLabel(hypothesis)]
    return g + extra_trials, shift


def draw_pmf(y: int, hypothesis, params: PopulationParams) -> float:
    """Probability of a single draw ``y`` under ``hypothesis``."""
    g, p = params.g, params.p
    if not 0 <= y <= g:
        raise DomainError(f"draw {y} outside [0, {g}]")
    n, shift = _law(hypothesis, g)
    k = y - shift
    if not 0 <= k <= n:
        return 0.0
    return math.comb(n, k) * p**k * (1.0 - p) ** (n - k)


def log_pmf_table(params: PopulationParams) -> np.ndarray:
    """``table[h, y]`` = ln Pr(y | h), with ``-inf`` for impossible draws."""
    g, p = params.g, params.p
    log_p, log_q = math.log(p), math.log1p(-p)
    table = np.full((3, g + 1), -np.inf)
    for h in ClassLabel:
        n, shift = _law(h, g)
        for k in range(n + 1):
            table[h, k + shift] = math.log(math.comb(n, k)) + k * log_p + (n - k) * log_q
    return table


def draw_histogram(X: np.ndarray, g: int) -> np.ndarray:
    """Per-row counts of each draw value, shape ``(n, g + 1)``."""
    counts = np.empty((X.shape[0], g + 1), dtype=np.int64)
    for y in range(g + 1):
        counts[:, y] = np.count_nonzero(X == y, axis=1)
    return counts


def log_likelihoods_from_counts(counts: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Log-likelihoods ``(n, 3)`` from draw histograms.

    Any observed draw with zero probability under a hypothesis sends that
    hypothesis to ``-inf`` regardless of the other draws.
    """
    finite = np.where(np.isfinite(table), table, 0.0)
    ll = counts @ finite.T
    impossible = (counts[:, None, :] > 0) & ~np.isfinite(table)[None, :, :]
    ll[impossible.any(axis=2)] = -np.inf
    return ll


def log_likelihood_matrix(X, params: PopulationParams) -> np.ndarray:
    X = check_draws(X, params.g)
    return log_likelihoods_from_counts(draw_histogram(X, params.g), log_pmf_table(params))


def log_likelihoods(draws, params: PopulationParams) -> tuple[float, float, float]:
    """``(ll_abstainer, ll_voter, ll_unmatched)`` for one draw sequence."""
    if len(draws) == 0:
        raise EmptyDrawsError("cannot score an empty draw sequence")
    row = log_likelihood_matrix(np.asarray(draws).reshape(1, -1), params)[0]
    return float(row[0]), float(row[1]), float(row[2])


def argmax_label(ll: np.ndarray) -> np.ndarray:
    # np.argmax keeps the first maximum: abstainer beats voter beats unmatched on ties
    return np.argmax(ll, axis=1)


def redo_class(p: float) -> ClassLabel | None:
    """Stage-1 label that gets extra draws: the more common behaviour."""
    if p < 0.5:
        return ClassLabel.ABSTAINER
    if p > 0.5:
        return ClassLabel.VOTER
    return None


@dataclass(frozen=True)
class ClassificationResult:
    user_id: object
    label: ClassLabel
    ll_abstainer: float
    ll_voter: float
    ll_unmatched: float
    n_draws_used: int
    stage: int


def classify(draws, params: PopulationParams, user_id=None) -> ClassificationResult:
    ll = log_likelihoods(draws, params)
    label = ClassLabel(int(argmax_label(np.array([ll]))[0]))
    return ClassificationResult(user_id, label, *ll, n_draws_used=len(draws), stage=1)


def two_stage_predict(stage1, params: PopulationParams, m2: int = 0, extended=None):
    """Run the two-stage rule on arrays.

    ``stage1`` holds every record's first m1 draws. ``extended(rows)`` must
    return the first m1 + m2 draws of the given row indices; it is only called
    for records whose stage-1 label is the more common behaviour.

    Returns ``(labels, ll, n_used, stage)`` arrays.
    """
    stage1 = check_draws(stage1, params.g)
    m1 = stage1.shape[1]
    ll = log_likelihood_matrix(stage1, params)
    labels = argmax_label(ll)
    n_used = np.full(len(labels), m1, dtype=np.int64)
    stage = np.ones(len(labels), dtype=np.int64)
    target = redo_class(params.p)
    if m2 > 0 and target is not None:
        rows = np.flatnonzero(labels == target)
        if len(rows):
            more = check_draws(extended(rows), params.g)
            if more.shape != (len(rows), m1 + m2):
                raise ValueError(f"extended draws have shape {more.shape}, expected {(len(rows), m1 + m2)}")
            ll[rows] = log_likelihood_matrix(more, params)
            labels[rows] = argmax_label(ll[rows])
            n_used[rows] = m1 + m2
            stage[rows] = 2
    return labels, ll, n_used, stage


def two_stage_classify(store, plan, params: PopulationParams) -> dict:
    """Classify every user in a draw store with the (m1, m2) rule.

    Raises :class:`QuotaNotMetError` if a user lacks m1 draws, or a redo-set
    user lacks m1 + m2.
    """
    user_ids = store.user_ids
    stage1 = store.first_draws(user_ids, plan.m1)
    labels, ll, n_used, stage = two_stage_predict(
        stage1,
        params,
        plan.m2,
        extended=lambda rows: store.first_draws([user_ids[i] for i in rows], plan.m1 + plan.m2),
    )
    return {
        u: ClassificationResult(u, ClassLabel(int(labels[i])), *map(float, ll[i]), int(n_used[i]), int(stage[i]))
        for i, u in enumerate(user_ids)
    }


class YahtzeeClassifier(ClassifierMixin, BaseEstimator):
    """Maximum-likelihood matched-voter / matched-abstainer / unmatched classifier.

    Parameters
    ----------
    turnout : float
        Registry turnout rate ``p``, strictly between 0 and 1.
    group_size : int, default=5
        Registry group size ``g``.
    m1 : int or None, default=None
        Stage-1 draw count. ``None`` uses every column of ``X`` in one stage.
    m2 : int, default=0
        Extra draws for records first labelled with the more common behaviour.
        Requires ``X`` to have at least ``m1 + m2`` columns.

    Nothing is learned from data: ``fit`` only validates inputs, since the
    likelihoods are fully determined by ``turnout`` and ``group_size``.
    """

    def __init__(self, turnout=0.5, group_size=5, m1=None, m2=0):
        self.turnout = turnout
        self.group_size = group_size
        self.m1 = m1
        self.m2 = m2

    def _params(self):
        return PopulationParams(check_turnout(self.turnout), check_group_size(self.group_size))

    def fit(self, X, y=None):
        params = self._params()
        X = check_draws(X, params.g)
        if self.m1 is not None and (self.m1 < 1 or self.m2 < 0):
            raise ValueError("need m1 >= 1 and m2 >= 0")
        self.params_ = params
        self.classes_ = np.array([c.value for c in ClassLabel])
        self.n_features_in_ = X.shape[1]
        return self

    def _check_width(self, X):
        need = (self.m1 + self.m2) if self.m1 is not None else 1
        if X.shape[1] < need:
            raise ValueError(f"X has {X.shape[1]} draw columns, need at least {need}")

    def log_likelihoods(self, X):
        """Single-stage log-likelihoods over all columns, shape ``(n, 3)``."""
        check_is_fitted(self)
        return log_likelihood_matrix(X, self.params_)

    def predict_stages(self, X):
        """``(labels, ll, n_used, stage)`` for each row."""
        check_is_fitted(self)
        X = check_draws(X, self.params_.g)
        self._check_width(X)
        if self.m1 is None:
            return two_stage_predict(X, self.params_)
        return two_stage_predict(
            X[:, : self.m1], self.params_, self.m2, extended=lambda rows: X[rows, : self.m1 + self.m2]
        )

    def predict(self, X):
        return self.predict_stages(X)[0]


# -- output file ---------------------------------------------------------------

RESULTS_HEADER = ["user_id", "label", "ll_abstainer", "ll_voter", "ll_unmatched", "n_draws_used", "stage"]


def write_results_csv(path, results) -> None:
    rows = results.values() if isinstance(results, dict) else results
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for r in rows:
            writer.writerow(
                [r.user_id, r.label.slug, repr(r.ll_abstainer), repr(r.ll_voter), repr(r.ll_unmatched),
                 r.n_draws_used, r.stage]
            )


def read_results_csv(path) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RESULTS_HEADER:
            raise FileFormatError(f"{path}: expected header {','.join(RESULTS_HEADER)}")
        for row in reader:
            try:
                out[row["user_id"]] = ClassificationResult(
                    row["user_id"],
                    ClassLabel.from_slug(row["label"]),
                    float(row["ll_abstainer"]),
                    float(row["ll_voter"]),
                    float(row["ll_unmatched"]),
                    int(row["n_draws_used"]),
                    int(row["stage"]),
                )
            except ValueError as exc:
                raise FileFormatError(f"{path}: line {reader.line_num}: {exc}") from None
    return out
