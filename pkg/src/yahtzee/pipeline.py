"""Both parties' round loop run in one process, for simulation and testing.

The CLI runs the same steps as separate registry and platform commands over
files. Here the group table is passed in memory, but nothing beyond the table
crosses from the registry side to the platform side.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .classifier import PopulationParams, argmax_label, log_likelihood_matrix, redo_class, two_stage_classify
from .draws import DrawStore, PlatformBatch, RoundPlan, assign_draws
from .grouping import GroupParams, RegistryBatch, build_group_table
from .identity import RoundSeed, deduplicate

logger = logging.getLogger(__name__)


@dataclass
class ProtocolRun:
    results: dict
    store: DrawStore
    plan: RoundPlan
    turnout: float
    retained_fraction: list = field(default_factory=list)
    coverage: list = field(default_factory=list)


def _run_until(quota_met, state, max_rounds):
    while not quota_met():
        if state["round"] >= max_rounds:
            raise RuntimeError(f"quota not reached after {max_rounds} rounds")
        state["step"]()


def run_protocol(registry, platform, g: int, master_seed: int, m1: int, m2: int = 0,
                 max_rounds: int = 10_000) -> ProtocolRun:
    """Run rounds until every user has ``m1`` draws and the redo set ``m1 + m2``, then classify."""
    registry, _ = deduplicate(registry)
    platform, _ = deduplicate(platform)
    reg = RegistryBatch.from_records(registry)
    plat = PlatformBatch.from_records(platform)
    params = GroupParams(len(reg), g)
    pop = PopulationParams(reg.turnout, g)
    store = DrawStore(plat.user_ids)
    run = ProtocolRun({}, store, RoundPlan(m1, m2), pop.p)
    state = {"round": 0}

    def step():
        seed = RoundSeed.derive(master_seed, state["round"])
        table = build_group_table(reg, seed, params)
        draws = assign_draws(plat, table, seed, params)
        store.add_round(seed.round_index, draws)
        run.retained_fraction.append(len(table) / params.divisor)
        run.coverage.append(len(draws) / len(plat))
        state["round"] += 1

    state["step"] = step
    users = plat.user_ids
    _run_until(lambda: store.counts(users).min() >= m1, state, max_rounds)
    logger.info("stage 1 quota of %d met after %d rounds", m1, state["round"])

    more = redo_class(pop.p)
    if m2 > 0 and more is not None:
        labels = argmax_label(log_likelihood_matrix(store.first_draws(users, m1), pop))
        redo = [users[i] for i in np.flatnonzero(labels == more)]
        if redo:
            _run_until(lambda: store.counts(redo).min() >= m1 + m2, state, max_rounds)
        logger.info("stage 2 quota met for %d users after %d rounds", len(redo), state["round"])

    run.plan = RoundPlan(m1, m2, state["round"])
    run.results = two_stage_classify(store, run.plan, pop)
    return run
