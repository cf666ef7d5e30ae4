"""Acceptance criteria, one test each.

Every test records a single PASS/FAIL line (printed in the "acceptance
criteria" section of the pytest summary) and then asserts the same condition.
"""

import hashlib
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from appendix_reference import reference_predictions, simulate_reference
from yahtzee.calibration import (
    SimulationConfig,
    accuracy_curve,
    calibrate,
    estimate_match_rate,
    registry_hash_set,
    run_two_stage,
)
from yahtzee.classifier import ClassLabel, PopulationParams, YahtzeeClassifier, draw_pmf, log_likelihoods
from yahtzee.identity import (
    CanonicalIdentity,
    PlatformRecord,
    RoundSeed,
    deduplicate,
    derive_salt,
    identity_hash,
)
from yahtzee.pipeline import run_protocol
from yahtzee.synthetic import _random_identities, make_platform, make_registry
from yahtzee.validation import build_truth_table, conditional_probabilities

A, V, U = ClassLabel.ABSTAINER, ClassLabel.VOTER, ClassLabel.UNMATCHED


def test_c1_appendix_reproduction(record_criterion):
    start = time.perf_counter()
    acc = run_two_stage(SimulationConfig(t=0.45, mm=0.3, n=100_000, g=5, rng_seed=1, replicates=1), 56, 27)
    elapsed = time.perf_counter() - start
    ok = 0.93 <= acc["acc_voter"] <= 0.97 and 0.93 <= acc["acc_abstainer"] <= 0.97 and elapsed < 60
    record_criterion("1 appendix reproduction", ok,
                     f"acc_voter={acc['acc_voter']:.4f} acc_abstainer={acc['acc_abstainer']:.4f} "
                     f"in [0.93, 0.97]; {elapsed:.1f}s < 60s")
    assert ok


def test_c2_accuracy_curve_structure(record_criterion):
    m_values = range(5, 101, 5)
    curves = {t: accuracy_curve(SimulationConfig(t=t, mm=0.3, n=100_000, rng_seed=seed), m_values)
              for seed, t in enumerate((0.30, 0.45, 0.55, 0.70), start=10)}
    details, ok = [], True
    for t, curve in curves.items():
        less, more = ("acc_voter", "acc_abstainer") if t < 0.5 else ("acc_abstainer", "acc_voter")
        m_less, m_more = curve.first_reaching(less, 0.95), curve.first_reaching(more, 0.95)
        passed = m_less is not None and (m_more is None or m_less < m_more)
        ok &= passed
        details.append(f"t={t}: less common at m={m_less}, more common at m={m_more}")
    low, high = curves[0.30], curves[0.70]
    gap = max(np.max(np.abs(np.subtract(low.acc_voter, high.acc_abstainer))),
              np.max(np.abs(np.subtract(low.acc_abstainer, high.acc_voter))))
    ok &= gap <= 0.015
    record_criterion("2 accuracy curve structure", ok, "; ".join(details) + f"; mirror gap {gap:.4f} <= 0.015")
    assert ok


def test_c3_quota_structure(record_criterion):
    plans = {t: calibrate(SimulationConfig(t=t, mm=0.3, target_accuracy=0.95)) for t in (0.50, 0.45, 0.30)}
    ok = plans[0.50].m2 == 0 and plans[0.45].m2 < plans[0.30].m2
    record_criterion("3 quota structure", ok,
                     ", ".join(f"t={t}: (m1={p.m1}, m2={p.m2})" for t, p in plans.items())
                     + "; m2(0.50)=0 and m2(0.45) < m2(0.30)")
    assert ok


@pytest.fixture(scope="module")
def end_to_end():
    start = time.perf_counter()
    rng = np.random.default_rng(4242)
    registry = make_registry(50_000, 0.45, rng)
    platform, truth = make_platform(registry, 20_000, 0.30, rng)

    # the platform learns N and p from the registry's aggregates and estimates the match rate
    registry_kept, _ = deduplicate(registry)
    n_reg = len(registry_kept)
    turnout = sum(r.voted for r in registry_kept) / n_reg
    salt = derive_salt(4242, "match-rate")
    hashes = registry_hash_set((r.identity.serialize() for r in registry_kept), salt)
    sample = rng.choice(len(platform), size=1000, replace=False)
    mm = estimate_match_rate([platform[i].identity.serialize() for i in sample.tolist()], hashes, salt)
    plan = calibrate(SimulationConfig(t=turnout, mm=mm, g=5))

    run = run_protocol(registry, platform, g=5, master_seed=4242, m1=plan.m1, m2=plan.m2)
    return {"run": run, "truth": truth, "plan": plan, "mm": mm, "n_registry": n_reg,
            "elapsed": time.perf_counter() - start}


def test_c4_end_to_end_pipeline(end_to_end, record_criterion):
    run, truth = end_to_end["run"], end_to_end["truth"]
    probs = conditional_probabilities(build_truth_table(run.results, truth))
    matched = [r.label for r in run.results.values() if r.label is not U]
    turnout = sum(label is V for label in matched) / len(matched)
    elapsed = end_to_end["elapsed"]
    ok = (probs[V] >= 0.93 and probs[A] >= 0.93 and probs[U] >= 0.98
          and abs(turnout - 0.45) <= 0.02 and elapsed < 600)
    plan = end_to_end["plan"]
    record_criterion("4 end-to-end pipeline", ok,
                     f"mm_hat={end_to_end['mm']:.3f} plan=(m1={plan.m1}, m2={plan.m2}), "
                     f"{run.plan.rounds_executed} rounds; Pr(V|V)={probs[V]:.4f} Pr(A|A)={probs[A]:.4f} (>=0.93) "
                     f"Pr(U|U)={probs[U]:.4f} (>=0.98); matched turnout {turnout:.4f} (0.45+-0.02); "
                     f"{elapsed:.0f}s < 600s")
    assert ok


def test_c5_occupancy_model(end_to_end, record_criterion):
    run = end_to_end["run"]
    oracle = stats.binom.pmf(5, end_to_end["n_registry"], 1 / (end_to_end["n_registry"] // 5))
    retained = float(np.mean(run.retained_fraction))
    counts = run.store.counts()
    draw_prob = float(np.mean(counts / len(run.store.rounds)))
    ok = abs(retained - 0.175) <= 0.01 and abs(draw_prob - 0.175) <= 0.01
    record_criterion("5 occupancy model", ok,
                     f"retained fraction {retained:.4f}, per-record draw probability {draw_prob:.4f} "
                     f"over {len(run.retained_fraction)} rounds (oracle {oracle:.4f}; 0.175+-0.01)")
    assert ok


def _exact_pmf(y, hypothesis, p, g):
    p = Fraction(p)
    n, k = {A: (g - 1, y), V: (g - 1, y - 1), U: (g, y)}[hypothesis]
    if not 0 <= k <= n:
        return Fraction(0)
    return math.comb(n, k) * p**k * (1 - p) ** (n - k)


def test_c6_likelihood_oracle(record_criterion):
    worst = 0.0
    for g in range(2, 9):
        for p in (0.1, 0.45, 0.5, 0.9):
            params = PopulationParams(p, g)
            for h in ClassLabel:
                for y in range(g + 1):
                    exact, got = _exact_pmf(y, h, p, g), draw_pmf(y, h, params)
                    err = float(abs(Fraction(got) - exact) / exact) if exact else (0.0 if got == 0 else math.inf)
                    worst = max(worst, err)
    cases = [(0.45, 56, 27, 1), (0.30, 40, 20, 2), (0.70, 40, 20, 3), (0.50, 30, 0, 4), (0.55, 10, 5, 5)]
    mismatches = 0
    for t, m, m2, seed in cases:
        _, y, yy = simulate_reference(t, 0.3, 1000, 5, m, m2, np.random.default_rng(seed))
        X = np.hstack([y, yy])
        got = YahtzeeClassifier(turnout=t, group_size=5, m1=m, m2=m2).fit(X).predict(X)
        mismatches += int(np.sum(got != reference_predictions(y, yy, 5, t, m2)))
    ok = worst < 1e-12 and mismatches == 0
    record_criterion("6 likelihood oracle", ok,
                     f"max pmf relative error {worst:.2e} < 1e-12; {mismatches} label mismatches "
                     f"vs reference transcription over {len(cases)} x 1000 records")
    assert ok


def _properties(rng, trials=400):
    failures = {}

    def fail(name):
        failures[name] = failures.get(name, 0) + 1

    for _ in range(trials):
        g = int(rng.integers(2, 9))
        p = float(rng.uniform(0.01, 0.99))
        v = rng.integers(0, g + 1, size=int(rng.integers(1, 60))).tolist()
        params = PopulationParams(p, g)
        ll = log_likelihoods(v, params)
        if log_likelihoods(rng.permutation(v).tolist(), params) != ll:
            fail("permutation")
        mirror = log_likelihoods([g - y for y in v], PopulationParams(1 - p, g))
        for a, b in ((ll[0], mirror[1]), (ll[1], mirror[0]), (ll[2], mirror[2])):
            if not (a == b or math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)):
                fail("symmetry")
        if (0 in v and ll[1] != -math.inf) or (g in v and ll[0] != -math.inf):
            fail("impossibility")
        interior = [min(max(y, 1), g - 1) for y in v]
        if not all(math.isfinite(x) for x in log_likelihoods(interior, params)):
            fail("non-identifiability")

    idents = _random_identities(300, rng)
    dupes = [idents[i] for i in rng.choice(300, size=30, replace=False).tolist()]
    records = [PlatformRecord(f"u{i}", ident) for i, ident in enumerate(idents + dupes)]
    kept, dropped = deduplicate(records)
    if len(kept) != 270 or dropped != 60 or {r.identity for r in kept} & set(dupes):
        fail("dedup")

    john = CanonicalIdentity("JOHN", "SMITH", 15, 1, 1970)
    for salt, value in ((b"round-0", 0xF014C16), (b"round-1", 0x310C4A5)):
        independent = int(hashlib.sha256(salt + john.serialize()).hexdigest()[-7:], 16)
        if not identity_hash(john, RoundSeed(0, salt)) == independent == value:
            fail("golden vectors")
    return failures


def test_c7_property_suites(record_criterion):
    failures = _properties(np.random.default_rng(7))
    ok = not failures
    record_criterion("7 property suites", ok,
                     "permutation, symmetry, impossibility, non-identifiability, dedup drop-all, golden vectors: "
                     + ("all hold" if ok else f"failures {failures}"))
    assert ok


def test_c8_match_rate_estimator(record_criterion):
    rng = np.random.default_rng(809)
    registry = make_registry(50_000, 0.45, rng)
    platform, _ = make_platform(registry, 20_000, 0.30, rng)
    salt = derive_salt(809, "match-rate")
    hashes = registry_hash_set((r.identity.serialize() for r in registry), salt)
    payloads = [r.identity.serialize() for r in platform]
    estimates = np.array([
        estimate_match_rate([payloads[i] for i in rng.choice(len(payloads), size=1000, replace=False).tolist()],
                            hashes, salt)
        for _ in range(200)
    ])
    # compare match counts, not floats: 0.33 - 0.30 > 0.03 in binary floating point
    hits = np.rint(estimates * 1000).astype(int)
    share = float(np.mean(np.abs(hits - 300) <= 30))
    ok = share >= 0.95
    record_criterion("8 match-rate estimator", ok,
                     f"{share:.1%} of 200 estimates within 0.03 of 0.30 (>= 95%); mean {estimates.mean():.4f}")
    assert ok
