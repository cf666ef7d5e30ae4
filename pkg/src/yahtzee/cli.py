"""Command-line entry point.

Registry commands read only the registry file and registry directory and write
aggregates into the shared directory. Platform commands read only the platform
file, the platform directory and the shared directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import calibration, classifier, draws, grouping, identity, validation
from .config import load_config
from .exceptions import (
    ConfigMismatchError,
    DuplicateRoundError,
    EmptyRegistryError,
    FileFormatError,
    YahtzeeError,
)

logger = logging.getLogger("yahtzee")


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path, what: str) -> dict:
    if not path.exists():
        raise FileFormatError(f"{path} not found; run {what} first")
    return json.loads(path.read_text(encoding="utf-8"))


def _require(value, name):
    if value is None:
        raise FileFormatError(f"config must set {name}")
    return value


# -- registry side ---------------------------------------------------------------


def cmd_registry_prepare(cfg, args) -> dict:
    records, report = identity.read_registry_csv(_require(cfg.registry_csv, "registry_csv"))
    if not records:
        raise EmptyRegistryError("no usable registry records after dropping")
    n = len(records)
    turnout = sum(r.voted for r in records) / n
    if cfg.n_registry is not None and cfg.n_registry != n:
        raise ConfigMismatchError(f"config n_registry={cfg.n_registry} but registry file yields {n}")
    if cfg.turnout_p is not None and not math.isclose(cfg.turnout_p, turnout, abs_tol=1e-9):
        raise ConfigMismatchError(f"config turnout_p={cfg.turnout_p} but registry file yields {turnout}")

    cfg.registry_dir.mkdir(parents=True, exist_ok=True)
    identity.write_registry_csv(cfg.registry_clean_path, records)
    summary = {"n_registry": n, "turnout_p": turnout, "g": cfg.g, "drops": report.as_dict()}
    _write_json(cfg.registry_summary_path, summary)
    hashes = sorted(calibration.registry_hash_set((r.identity.serialize() for r in records), cfg.estimation_salt_bytes))
    cfg.estimation_hashes_path.write_text("".join(f"{h}\n" for h in hashes), encoding="ascii")
    print(f"registry: {n} records kept, turnout {turnout:.6f}, dropped {report.duplicate} duplicate "
          f"and {report.unparseable} unparseable of {report.input_rows}")
    return summary


def _registry_params(cfg):
    summary = _read_json(cfg.registry_summary_path, "registry-prepare")
    return grouping.GroupParams(summary["n_registry"], cfg.g)


def cmd_registry_round(cfg, args) -> Path:
    params = _registry_params(cfg)
    records, _ = identity.read_registry_csv(cfg.registry_clean_path)
    if len(records) != params.n_registry:
        raise ConfigMismatchError("prepared registry changed since registry-prepare; rerun it")
    rounds = _round_list(args)
    batch = grouping.RegistryBatch.from_records(records)
    cfg.tables_dir.mkdir(parents=True, exist_ok=True)
    out = None
    for r in rounds:
        table = grouping.build_group_table(batch, identity.RoundSeed.derive(cfg.master_seed, r), params)
        out = cfg.table_path(r)
        grouping.write_table(out, table)
        stats = grouping.table_stats(table) if len(table) else {"retained_groups": 0}
        print(f"round {r}: {stats['retained_groups']} groups retained -> {out}")
    return out


def _round_list(args):
    if args.rounds is not None:
        start, _, stop = args.rounds.partition(":")
        return list(range(int(start), int(stop)))
    return [args.round]


# -- platform side ---------------------------------------------------------------


def cmd_platform_prepare(cfg, args) -> dict:
    records, report = identity.read_platform_csv(_require(cfg.platform_csv, "platform_csv"))
    cfg.platform_dir.mkdir(parents=True, exist_ok=True)
    identity.write_platform_csv(cfg.platform_clean_path, records)
    for path in (cfg.store_path, cfg.rounds_path):
        if path.exists():
            path.unlink()
    summary = {"n_platform": len(records), "drops": report.as_dict()}
    _write_json(cfg.platform_summary_path, summary)
    print(f"platform: {len(records)} users kept, dropped {report.duplicate} duplicate "
          f"and {report.unparseable} unparseable of {report.input_rows}")
    return summary


def _platform_records(cfg):
    if not cfg.platform_clean_path.exists():
        raise FileFormatError(f"{cfg.platform_clean_path} not found; run platform-prepare first")
    records, _ = identity.read_platform_csv(cfg.platform_clean_path)
    return records


def _shared_population(cfg):
    """(n_registry, turnout) from the registry's shared summary, checked against config."""
    summary = _read_json(cfg.registry_summary_path, "registry-prepare")
    n, p = summary["n_registry"], summary["turnout_p"]
    if cfg.n_registry is not None and cfg.n_registry != n:
        raise ConfigMismatchError(f"config n_registry={cfg.n_registry} but registry reports {n}")
    if cfg.turnout_p is not None and not math.isclose(cfg.turnout_p, p, abs_tol=1e-9):
        raise ConfigMismatchError(f"config turnout_p={cfg.turnout_p} but registry reports {p}")
    if summary.get("g", cfg.g) != cfg.g:
        raise ConfigMismatchError(f"config g={cfg.g} but registry used g={summary['g']}")
    return n, p


def _ingested_rounds(cfg) -> list[int]:
    if not cfg.rounds_path.exists():
        return []
    with open(cfg.rounds_path, newline="") as fh:
        return [int(row["round_index"]) for row in csv.DictReader(fh)]


def _load_store(cfg, records):
    return draws.read_store_csv(cfg.store_path, [r.user_id for r in records], _ingested_rounds(cfg))


def cmd_platform_ingest_round(cfg, args):
    n_registry, _ = _shared_population(cfg)
    params = grouping.GroupParams(n_registry, cfg.g)
    records = _platform_records(cfg)
    batch = draws.PlatformBatch.from_records(records)
    ingested = set(_ingested_rounds(cfg))
    paths = [Path(p) for p in args.table] if args.table else [cfg.table_path(r) for r in _round_list(args)]
    for path in paths:
        table = grouping.read_table(path)
        if table.round_index in ingested:
            raise DuplicateRoundError(f"round {table.round_index} already ingested")
        seed = identity.RoundSeed.derive(cfg.master_seed, table.round_index)
        round_draws = draws.assign_draws(batch, table, seed, params)
        draws.append_store_csv(cfg.store_path, table.round_index, round_draws)
        new = not cfg.rounds_path.exists()
        with open(cfg.rounds_path, "a", newline="") as fh:
            if new:
                fh.write("round_index,n_draws\n")
            fh.write(f"{table.round_index},{len(round_draws)}\n")
        ingested.add(table.round_index)
        print(f"round {table.round_index}: {len(round_draws)} draws, coverage {len(round_draws) / len(batch):.4f}")

    m1 = cfg.m1
    if m1 is None and cfg.calibration_path.exists():
        m1 = _read_json(cfg.calibration_path, "calibrate")["plan"]["m1"]
    if m1 is not None:
        store = _load_store(cfg, records)
        counts = store.counts()
        print(f"draws per user: min {counts.min()}, mean {counts.mean():.1f}; "
              f"{np.count_nonzero(counts < m1)} users below m1={m1}; "
              f"~{draws.plan_rounds(store, m1)} more rounds estimated")


def _match_rate(cfg):
    if cfg.match_rate is not None:
        return cfg.match_rate
    return _read_json(cfg.match_rate_path, "estimate-match-rate")["match_rate"]


def _sim_config(cfg, t=None, mm=None):
    if t is None:
        t = cfg.turnout_p if cfg.turnout_p is not None else _shared_population(cfg)[1]
    return calibration.SimulationConfig(
        t=t,
        mm=_match_rate(cfg) if mm is None else mm,
        n=cfg.sim_n,
        g=cfg.g,
        target_accuracy=cfg.target_accuracy,
        rng_seed=cfg.rng_seed,
        replicates=cfg.replicates,
        max_draws=cfg.max_draws,
    )


def cmd_calibrate(cfg, args):
    sim = _sim_config(cfg)
    plan, curve = calibration.calibrate(sim, return_curve=True)
    out = Path(args.output) if args.output else cfg.calibration_path
    out.parent.mkdir(parents=True, exist_ok=True)
    calibration.write_calibration_report(out, sim, plan, curve)
    curve.to_csv(out.with_name(out.stem + "_curve.csv"))
    redo = plan.redo_class.slug if plan.redo_class is not None else "none"
    print(f"m1={plan.m1} m2={plan.m2} redo={redo} acc_voter={plan.achieved_accuracy_voter:.4f} "
          f"acc_abstainer={plan.achieved_accuracy_abstainer:.4f} -> {out}")
    return plan


def _parse_m_values(text):
    if ":" in text:
        start, stop, step = (int(x) for x in text.split(":"))
        return list(range(start, stop + 1, step))
    return [int(x) for x in text.split(",")]


def cmd_simulate(cfg, args):
    sim = _sim_config(cfg, t=args.turnout, mm=args.match_rate)
    curve = calibration.accuracy_curve(sim, _parse_m_values(args.m_values))
    out = Path(args.output) if args.output else cfg.platform_dir / "accuracy_curve.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    curve.to_csv(out)
    print(f"accuracy curve for t={sim.t}, mm={sim.mm}: {len(curve.m)} points -> {out}")
    return curve


def _quotas(cfg):
    if cfg.m1 is not None:
        return cfg.m1, cfg.m2 or 0
    if cfg.calibration_path.exists():
        plan = _read_json(cfg.calibration_path, "calibrate")["plan"]
        return plan["m1"], plan["m2"]
    plan = calibration.calibrate(_sim_config(cfg))
    return plan.m1, plan.m2


def cmd_classify(cfg, args):
    _, p = _shared_population(cfg)
    m1, m2 = _quotas(cfg)
    records = _platform_records(cfg)
    store = _load_store(cfg, records)
    results = classifier.two_stage_classify(
        store, draws.RoundPlan(m1, m2, len(store.rounds)), classifier.PopulationParams(p, cfg.g)
    )
    out = Path(args.output) if args.output else cfg.classification_path
    classifier.write_results_csv(out, results)
    labels = np.array([int(r.label) for r in results.values()])
    counts = np.bincount(labels, minlength=3)
    print(f"classified {len(results)} users (m1={m1}, m2={m2}): "
          + ", ".join(f"{c.slug} {counts[c]}" for c in classifier.ClassLabel) + f" -> {out}")
    return results


def cmd_validate(cfg, args):
    results = classifier.read_results_csv(Path(args.results) if args.results else cfg.classification_path)
    truth = validation.read_truth_csv(args.truth)
    if args.sample:
        rng = np.random.default_rng(cfg.rng_seed)
        ids = sorted(results)
        keep = rng.choice(len(ids), size=min(args.sample, len(ids)), replace=False)
        results = {ids[i]: results[ids[i]] for i in sorted(keep.tolist())}
    tt = validation.build_truth_table(results, truth)
    out_dir = Path(args.output_dir) if args.output_dir else cfg.platform_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    tt.to_csv(out_dir / "truth_table.csv")
    rows = validation.summary_rows(tt, p0=cfg.target_accuracy)
    validation.write_summary_csv(out_dir / "validation_summary.csv", rows)
    for r in rows:
        print(f"Pr({r['class']} | classified {r['class']}) = {r['probability']:.3f} "
              f"[{r['ci_lo']:.3f}, {r['ci_hi']:.3f}] n={r['n_predicted']}")
    if args.group_by:
        attrs = {r.user_id: r.attributes.get(args.group_by) for r in _platform_records(cfg)}
        if any(v is None for v in attrs.values()):
            raise FileFormatError(f"platform file has no column {args.group_by!r}")
        report = validation.grouped_turnout_report(results, attrs)
        validation.write_turnout_csv(out_dir / f"turnout_by_{args.group_by}.csv", report, args.group_by)
    return rows


def cmd_estimate_match_rate(cfg, args):
    records = _platform_records(cfg)
    hashes_path = cfg.estimation_hashes_path
    if not hashes_path.exists():
        raise FileFormatError(f"{hashes_path} not found; run registry-prepare first")
    registry_hashes = {int(line) for line in hashes_path.read_text(encoding="ascii").split()}
    k = min(args.k or cfg.match_sample_size, len(records))
    rng = np.random.default_rng(cfg.rng_seed)
    sample = [records[i].identity.serialize() for i in rng.choice(len(records), size=k, replace=False).tolist()]
    rate = calibration.estimate_match_rate(sample, registry_hashes, cfg.estimation_salt_bytes)
    _write_json(cfg.match_rate_path, {"match_rate": rate, "k": k})
    print(f"estimated match rate {rate:.4f} from {k} sampled users -> {cfg.match_rate_path}")
    return rate


COMMANDS = {
    "registry-prepare": cmd_registry_prepare,
    "registry-round": cmd_registry_round,
    "platform-prepare": cmd_platform_prepare,
    "platform-ingest-round": cmd_platform_ingest_round,
    "classify": cmd_classify,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
    "estimate-match-rate": cmd_estimate_match_rate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yahtzee", description=__doc__.splitlines()[0])
    parser.add_argument("-c", "--config", required=True, help="protocol config file (key = value)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("registry-prepare", help="deduplicate the registry file and publish N, turnout and estimation hashes")

    def add_rounds(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--round", type=int, default=0, help="round index (default 0)")
        g.add_argument("--rounds", help="half-open range START:STOP")

    add_rounds(sub.add_parser("registry-round", help="write the group count table for one or more rounds"))
    sub.add_parser("platform-prepare", help="canonicalize and deduplicate the platform file")
    p = sub.add_parser("platform-ingest-round", help="turn group tables into per-user draws")
    add_rounds(p)
    p.add_argument("--table", action="append", help="table file(s); default: shared tables for --round/--rounds")

    p = sub.add_parser("classify", help="two-stage classification of every platform user")
    p.add_argument("--output")
    p = sub.add_parser("calibrate", help="choose (m1, m2) by simulation")
    p.add_argument("--output")
    p = sub.add_parser("simulate", help="accuracy-vs-draws curve")
    p.add_argument("--m-values", default="5:100:5", help="START:STOP:STEP or comma list")
    p.add_argument("--turnout", type=float)
    p.add_argument("--match-rate", type=float)
    p.add_argument("--output")
    p = sub.add_parser("validate", help="truth table and conditional probabilities")
    p.add_argument("--truth", required=True, help="CSV user_id,truth")
    p.add_argument("--results")
    p.add_argument("--sample", type=int, help="evaluate a random subset of this size")
    p.add_argument("--group-by", help="platform attribute column for a turnout-by-group table")
    p.add_argument("--output-dir")
    p = sub.add_parser("estimate-match-rate", help="aggregate match rate from a random platform sample")
    p.add_argument("--k", type=int)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        COMMANDS[args.command](cfg, args)
    except YahtzeeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return FileFormatError.exit_code
    except ValueError as exc:
        # parameter combinations rejected by the domain types, e.g. N too small for g
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
