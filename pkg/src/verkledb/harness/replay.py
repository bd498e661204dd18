"""Replay workloads into a database, and verify a replay against plain oracles."""

from __future__ import annotations

import random
import tempfile
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from ..nodes import DEFAULT_INNER_CAPACITIES, DEFAULT_LEAF_CAPACITIES, DEFAULT_TAU, INNER, LEAF, encode_node
from ..specopt import read_plans
from ..storage import StorageConfig
from ..trie import ARCHIVE, LIVE, DBConfig, VerkleDB
from .stats import BlockStat, StatsReport, collect
from .workload import Block, to_mutations

DENSE_ONLY = (256,)


@dataclass
class ReplayConfig:
    mode: str = LIVE
    tau: int = DEFAULT_TAU
    delta_inner: bool = True
    delta_leaf: bool = True
    delta_size_guard: bool = False
    plan: Optional[str] = None  # plan file; overrides the capacity tuples below
    inner_capacities: tuple = DEFAULT_INNER_CAPACITIES
    leaf_capacities: tuple = DEFAULT_LEAF_CAPACITIES
    cache_capacity: int = 65536
    checkpoint_every: int = 0
    parallel_threshold: int = 64
    workers: int = 4
    seed: bytes = b"verkledb"
    backend: str = "test"
    sync: bool = False

    def capacities(self) -> tuple[tuple, tuple]:
        if self.plan:
            plans = read_plans(self.plan)
            return plans[INNER].capacities, plans[LEAF].capacities
        return tuple(self.inner_capacities), tuple(self.leaf_capacities)

    def db_config(self, mode: Optional[str] = None) -> DBConfig:
        inner, leaf = self.capacities()
        return DBConfig(
            mode=mode or self.mode, backend=self.backend, seed=self.seed,
            inner_capacities=inner, leaf_capacities=leaf, tau=self.tau,
            delta_inner=self.delta_inner, delta_leaf=self.delta_leaf,
            delta_size_guard=self.delta_size_guard, cache_capacity=self.cache_capacity,
            parallel_threshold=self.parallel_threshold, workers=self.workers,
            checkpoint_every=self.checkpoint_every, storage=StorageConfig(sync=self.sync),
        )


def apply_workload_block(db: VerkleDB, block: Block) -> BlockStat:
    start = time.perf_counter()
    result = db.apply_block(to_mutations(block.ops, db.embedding), height=block.height)
    seconds = time.perf_counter() - start
    return BlockStat(block.height, len(block.ops), sum(op.weight for op in block.ops), seconds,
                     result.dirty, result.storage_writes, result.root.hex())


def replay(db: VerkleDB, blocks: Iterable[Block],
           on_block: Optional[Callable[[BlockStat], None]] = None) -> StatsReport:
    stats = []
    for block in blocks:
        stat = apply_workload_block(db, block)
        stats.append(stat)
        if on_block is not None:
            on_block(stat)
    return collect(db, stats)


def replay_to(path: str, blocks: Iterable[Block], config: ReplayConfig, mode: Optional[str] = None,
              on_block=None) -> StatsReport:
    db = VerkleDB.create(path, config.db_config(mode))
    try:
        report = replay(db, blocks, on_block)
    finally:
        db.close()
    return report


# -- verification ----------------------------------------------------------------------------

@dataclass
class Divergence:
    check: str
    height: int
    key: Optional[bytes]
    expected: Optional[bytes]
    got: Optional[bytes]

    def describe(self) -> str:
        key = self.key.hex() if self.key is not None else "-"
        exp = self.expected.hex() if isinstance(self.expected, bytes) else self.expected
        got = self.got.hex() if isinstance(self.got, bytes) else self.got
        return f"{self.check} diverged at height {self.height} key {key}: expected {exp}, got {got}"


@dataclass
class VerifyResult:
    blocks: int = 0
    lookups: int = 0
    historical: int = 0
    roots: int = 0
    divergence: Optional[Divergence] = None

    @property
    def ok(self) -> bool:
        return self.divergence is None


@dataclass
class FaultInjection:
    """Flip one persisted value byte of a key written by ``height``, after that block."""

    height: int
    seed: int = 0


def _inject(db: VerkleDB, candidates: list[tuple[bytes, bytes]], rng: random.Random) -> Optional[bytes]:
    if not candidates:
        return None
    key, value = rng.choice(candidates)
    db.nodes.flush_all()
    for node_id, _, node in db.iter_nodes():
        if node.kind == LEAF and node.stem == key[:31]:
            record = encode_node(node, db.layout.info_for_id(node_id), db.backend)
            offset = record.find(value)
            if offset < 0:
                return None
            db.storage.corrupt_record(node_id, offset + len(value) - 1)
            db.nodes.evict_all()
            return key
    return None


def verify(blocks: Iterable[Block], config: ReplayConfig, workdir: Optional[str] = None,
           full_root_every: int = 1, probes_per_block: int = 64, fault: Optional[FaultInjection] = None,
           seed: int = 0) -> VerifyResult:
    """Replay into a live and an archive database side by side and cross-check both.

    Checks, per block: live lookups of the touched keys (and state-wide at the
    end) against a dict oracle, incremental roots equal to a from-scratch
    recomputation and equal across modes, and historical lookups against
    per-key version histories.  Stops at the first divergence.
    """
    own = None
    if workdir is None:
        own = tempfile.TemporaryDirectory(prefix="verkledb-verify-")
        workdir = own.name
    rng = random.Random(seed)
    result = VerifyResult()
    live = VerkleDB.create(f"{workdir}/live", config.db_config(LIVE))
    arch = VerkleDB.create(f"{workdir}/archive", config.db_config(ARCHIVE))
    oracle: dict[bytes, Optional[bytes]] = {}
    history: dict[bytes, list[tuple[int, Optional[bytes]]]] = {}

    def fail(check, height, key, expected, got) -> VerifyResult:
        result.divergence = Divergence(check, height, key, expected, got)
        return result

    try:
        for block in blocks:
            mutations = to_mutations(block.ops, live.embedding)
            r_live = live.apply_block(mutations, height=block.height)
            r_arch = arch.apply_block(mutations, height=block.height)
            h = block.height
            result.blocks += 1
            touched = []
            for key, value in mutations:
                if oracle.get(key) != value:
                    history.setdefault(key, [(0, None)]).append((h, value))
                oracle[key] = value
                touched.append(key)
            if fault is not None and fault.height == h:
                present = sorted((k, oracle[k]) for k in set(touched) if oracle[k] is not None)
                _inject(live, present, random.Random(fault.seed))
            for key in touched:
                result.lookups += 1
                got = live.lookup(key)
                if got != oracle[key]:
                    return fail("live lookup", h, key, oracle[key], got)
            if r_live.root != r_arch.root:
                return fail("live/archive root", h, None, r_live.root, r_arch.root)
            if full_root_every and h % full_root_every == 0:
                result.roots += 1
                full = live.backend.serialize(live.full_recompute())
                if full != r_live.root:
                    return fail("incremental/full root", h, None, full, r_live.root)
            if history:
                keys = sorted(history)
                for _ in range(probes_per_block):
                    key = rng.choice(keys)
                    at = rng.randint(0, h)
                    expected = None
                    for hh, v in history[key]:
                        if hh > at:
                            break
                        expected = v
                    result.historical += 1
                    got = arch.lookup_at(key, at)
                    if got != expected:
                        return fail("archive lookup", at, key, expected, got)
        for key in sorted(oracle):
            result.lookups += 1
            got = live.lookup(key)
            if got != oracle[key]:
                return fail("live lookup", live.height, key, oracle[key], got)
        return result
    finally:
        live.close(checkpoint=False)
        arch.close(checkpoint=False)
        if own is not None:
            own.cleanup()
