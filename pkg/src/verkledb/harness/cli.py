"""``verkledb`` command line: workload generation, replay, verification, stats, plan solving, benchmarks."""

from __future__ import annotations

import argparse
import contextlib
import csv
import os
import shutil
import sys
import tempfile
from typing import Optional, Sequence

from ..errors import InvalidArgument, VerkleError
from ..nodes import INNER, LEAF, space_function
from ..specopt import optimize, pareto_sweep, split_budget, write_plans, format_plans
from ..trie import ARCHIVE, LIVE, VerkleDB
from . import stats as stats_mod
from .replay import DENSE_ONLY, FaultInjection, ReplayConfig, replay_to, verify
from .workload import WorkloadSpec, generate, read_workload, write_workload


@contextlib.contextmanager
def _output(path: Optional[str]):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _caps(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated capacities, got {text!r}") from None


def _db_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=(LIVE, ARCHIVE), default=LIVE)
    p.add_argument("--tau", type=int, default=128)
    p.add_argument("--delta-inner", type=_bool, default=True)
    p.add_argument("--delta-leaf", type=_bool, default=True)
    p.add_argument("--delta-size-guard", type=_bool, default=False)
    p.add_argument("--plan", help="plan file from optimize-spec")
    p.add_argument("--inner-caps", type=_caps, help="inner capacities, e.g. 9,15,21,256")
    p.add_argument("--leaf-caps", type=_caps, help="leaf capacities, e.g. 1,2,5,18,146,256")
    p.add_argument("--cache-capacity", type=int, default=65536)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--parallel-threshold", type=int, default=64)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--seed", default="verkledb", help="generator-derivation seed")
    p.add_argument("--backend", choices=("test", "ristretto255"), default="test")
    p.add_argument("--sync", type=_bool, default=False)


def _config(args) -> ReplayConfig:
    cfg = ReplayConfig(
        mode=args.mode, tau=args.tau, delta_inner=args.delta_inner, delta_leaf=args.delta_leaf,
        delta_size_guard=args.delta_size_guard, plan=args.plan, cache_capacity=args.cache_capacity,
        checkpoint_every=args.checkpoint_every, parallel_threshold=args.parallel_threshold,
        workers=args.workers, seed=args.seed.encode(), backend=args.backend, sync=args.sync,
    )
    if args.inner_caps:
        cfg.inner_capacities = args.inner_caps
    if args.leaf_caps:
        cfg.leaf_capacities = args.leaf_caps
    return cfg


def _db_path(path: Optional[str]) -> tuple[str, Optional[str]]:
    if path:
        if os.path.exists(path) and os.listdir(path):
            raise VerkleError(f"database directory {path} is not empty")
        return path, None
    tmp = tempfile.mkdtemp(prefix="verkledb-")
    return os.path.join(tmp, "db"), tmp


# -- subcommands ------------------------------------------------------------------------------

def cmd_gen_workload(args) -> int:
    spec = WorkloadSpec(
        blocks=args.blocks, updates_min=args.updates_min, updates_max=args.updates_max,
        stems=args.stems, small_leaf_fraction=args.small_leaf_fraction, tail_exponent=args.tail_exponent,
        key_skew=args.key_skew, account_fraction=args.account_fraction,
        delete_fraction=args.delete_fraction, seed=args.workload_seed,
    )
    with _output(args.out) as out:
        write_workload(generate(spec), out, spec)
    return 0


def cmd_replay(args) -> int:
    blocks = read_workload(args.workload)
    path, tmp = _db_path(args.db)
    cfg = _config(args)
    try:
        report = replay_to(path, blocks, cfg)
        with _output(args.out) as out:
            stats_mod.write_report_csv(report, out)
        if args.roots:
            with open(args.roots, "w", newline="") as f:
                stats_mod.write_blocks_csv(report.blocks, f)
    finally:
        if tmp:
            shutil.rmtree(tmp, ignore_errors=True)
    return 0


def cmd_verify(args) -> int:
    blocks = read_workload(args.workload)
    fault = FaultInjection(args.inject_flip, args.inject_seed) if args.inject_flip else None
    result = verify(blocks, _config(args), full_root_every=args.full_root_every,
                    probes_per_block=args.probes, fault=fault)
    with _output(args.out) as out:
        if result.ok:
            out.write(f"PASS blocks={result.blocks} lookups={result.lookups} "
                      f"historical={result.historical} roots={result.roots}\n")
        else:
            out.write(f"FAIL {result.divergence.describe()}\n")
    return 0 if result.ok else 1


def cmd_stats(args) -> int:
    db = VerkleDB.open(args.db)
    try:
        report = stats_mod.collect(db)
    finally:
        db.close(checkpoint=False)
    with _output(args.out) as out:
        if args.occupancy_only:
            stats_mod.write_occupancy_csv(report.occupancy, out)
        else:
            stats_mod.write_report_csv(report, out)
    return 0


def cmd_optimize_spec(args) -> int:
    with open(args.occupancy) as f:
        freqs = stats_mod.read_occupancy_csv(f.read())
    s_inner, s_leaf = space_function(INNER), space_function(LEAF)
    if args.sweep:
        with _output(args.out) as out:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(["kind", "k", "bytes", "capacities"])
            for kind, s in ((INNER, s_inner), (LEAF, s_leaf)):
                for k, cost, plan in pareto_sweep(256, range(1, args.sweep + 1), s, freqs[kind]):
                    w.writerow([kind, k, cost, " ".join(map(str, plan.capacities))])
        return 0
    if args.k is not None or args.inner_k or args.leaf_k:
        k_inner, k_leaf = args.inner_k or args.k, args.leaf_k or args.k
        if not (k_inner and k_leaf):
            raise InvalidArgument("give --k or both --inner-k and --leaf-k")
        plans = {INNER: optimize(256, k_inner, s_inner, freqs[INNER]),
                 LEAF: optimize(256, k_leaf, s_leaf, freqs[LEAF])}
    else:
        inner, leaf = split_budget(args.total_k, s_inner, freqs[INNER], s_leaf, freqs[LEAF])
        plans = {INNER: inner, LEAF: leaf}
    if args.out in (None, "-"):
        sys.stdout.write(format_plans(plans))
    else:
        write_plans(args.out, plans)
    return 0


BENCH_CONFIGS = [
    # name, mode, delta_inner, delta_leaf, specialized
    ("live-dense", LIVE, False, False, False),
    ("live-spec", LIVE, False, False, True),
    ("archive-none", ARCHIVE, False, False, False),
    ("archive-delta", ARCHIVE, True, True, False),
    ("archive-spec", ARCHIVE, False, False, True),
    ("archive-delta-spec", ARCHIVE, True, True, True),
]


def cmd_bench(args) -> int:
    blocks = read_workload(args.workload)
    base = _config(args)
    with _output(args.out) as out:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["config", "mode", "delta_inner", "delta_leaf", "specialized", "file_bytes",
                    "seconds", "weighted_ops_per_second", "root"])
        for name, mode, d_inner, d_leaf, specialized in BENCH_CONFIGS:
            cfg = ReplayConfig(**{**base.__dict__})
            cfg.mode, cfg.delta_inner, cfg.delta_leaf = mode, d_inner, d_leaf
            if not specialized:
                cfg.plan, cfg.inner_capacities, cfg.leaf_capacities = None, DENSE_ONLY, DENSE_ONLY
            tmp = tempfile.mkdtemp(prefix="verkledb-bench-")
            try:
                report = replay_to(os.path.join(tmp, "db"), blocks, cfg)
            finally:
                shutil.rmtree(tmp, ignore_errors=True)
            root = report.blocks[-1].root if report.blocks else ""
            w.writerow([name, mode, d_inner, d_leaf, specialized, report.total_bytes,
                        f"{report.seconds:.6f}", f"{report.throughput:.1f}", root])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="verkledb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-workload", help="write a synthetic block workload")
    defaults = WorkloadSpec()
    p.add_argument("--blocks", type=int, default=defaults.blocks)
    p.add_argument("--updates-min", type=int, default=defaults.updates_min)
    p.add_argument("--updates-max", type=int, default=defaults.updates_max)
    p.add_argument("--stems", type=int, default=defaults.stems)
    p.add_argument("--small-leaf-fraction", type=float, default=defaults.small_leaf_fraction)
    p.add_argument("--tail-exponent", type=float, default=defaults.tail_exponent)
    p.add_argument("--key-skew", type=float, default=defaults.key_skew)
    p.add_argument("--account-fraction", type=float, default=defaults.account_fraction)
    p.add_argument("--delete-fraction", type=float, default=defaults.delete_fraction)
    p.add_argument("--workload-seed", type=int, default=defaults.seed)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("replay", help="apply a workload and report statistics")
    p.add_argument("workload")
    p.add_argument("--db", help="database directory to create (default: temporary)")
    p.add_argument("--roots", help="write the per-block CSV (with roots) here")
    p.add_argument("--out")
    _db_options(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("verify", help="replay against the oracles")
    p.add_argument("workload")
    p.add_argument("--full-root-every", type=int, default=1)
    p.add_argument("--probes", type=int, default=64, help="historical probes per block")
    p.add_argument("--inject-flip", type=int, help="corrupt one stored value after this height")
    p.add_argument("--inject-seed", type=int, default=0)
    p.add_argument("--out")
    _db_options(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stats", help="histograms and size report of an existing database")
    p.add_argument("db")
    p.add_argument("--occupancy-only", action="store_true", help="emit only the optimize-spec input")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("optimize-spec", help="solve specialization plans from an occupancy CSV")
    p.add_argument("occupancy")
    p.add_argument("--total-k", type=int, default=10, help="budget shared by both node kinds")
    p.add_argument("--k", type=int, help="per-kind budget instead of a shared one")
    p.add_argument("--inner-k", type=int)
    p.add_argument("--leaf-k", type=int)
    p.add_argument("--sweep", type=int, help="emit the cost for k = 1..SWEEP per kind")
    p.add_argument("--out")
    p.set_defaults(func=cmd_optimize_spec)

    p = sub.add_parser("bench", help="replay under the size/throughput configurations")
    p.add_argument("workload")
    p.add_argument("--out")
    _db_options(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except VerkleError as exc:
        print(f"verkledb {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"verkledb {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
