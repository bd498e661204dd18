"""Verkle trie state database with live (in-place) and archive (copy-on-write) modes.

Block pipeline:

1. assemble: sort and deduplicate the block's mutations, then drop writes
   that would not change state (same value, or deleting an absent key);
2. structure: walk the trie breadth-first, level by level, with each node's
   sub-batch.  Write guards are taken hand-over-hand, so at most three
   consecutive levels are locked at once.  Every touched node records the
   child scalars / values it held at block start.  A bottom-up fix-up pass
   then deletes emptied inner nodes, collapses single-leaf chains, and
   shrinks over-sized specializations;
3. commit: fold the recorded changes into each dirty node's commitment
   with one MSM per node, children before parents, either sequentially or on
   a work-stealing pool.

Trie shape is canonical: the root is always an inner node (or absent when
the trie is empty), a leaf sits one level below the longest prefix it shares
with any other stem, and no reachable node is empty.
"""

from __future__ import annotations

import os
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from ..commitment import ORDER, Pedersen, encode_value, get_pedersen, stem_scalar
from ..commitment.groups import Element
from ..commitment.pedersen import LEAF_VERSION_MARKER
from ..errors import CorruptionError, GuardError, InvalidArgument, NotFound, StorageError
from ..nodemanager import NodeManager, WriteGuard
from ..nodes import (
    DEFAULT_INNER_CAPACITIES,
    DEFAULT_LEAF_CAPACITIES,
    DEFAULT_TAU,
    INNER,
    LEAF,
    NULL_ID,
    InnerNode,
    LeafNode,
    NodeId,
    NodeLayout,
    id_tag,
)
from ..storage import RootIndex, StorageConfig, StorageManager
from .batch import Mutation, SubBatch, UpdateBatch, assemble_batch, partition
from .embedding import Embedding
from .pool import WorkStealingPool

LIVE = "live"
ARCHIVE = "archive"


@dataclass
class DBConfig:
    mode: str = LIVE
    backend: str = "test"
    seed: bytes = b"verkledb"
    inner_capacities: tuple = DEFAULT_INNER_CAPACITIES
    leaf_capacities: tuple = DEFAULT_LEAF_CAPACITIES
    tau: int = DEFAULT_TAU
    delta_inner: bool = True
    delta_leaf: bool = True
    # write a delta only when its record is smaller than the full node it replaces
    delta_size_guard: bool = False
    cache_capacity: int = 65536
    parallel_threshold: int = 64
    workers: int = 4
    checkpoint_every: int = 0
    track_guards: bool = False
    storage: StorageConfig = field(default_factory=StorageConfig)

    # fields fixed at creation and stored in the manifest
    PERSISTENT = ("mode", "backend", "delta_inner", "delta_leaf", "delta_size_guard")

    def persistent_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.PERSISTENT}
        out["seed"] = self.seed.hex()
        return out


@dataclass
class BlockResult:
    height: int
    root_id: NodeId
    root: bytes
    mutations: int
    effective: int
    dirty: int
    created: int
    copies: int
    storage_writes: int
    max_writes_per_id: int
    max_copies_per_node: int
    parallel: bool
    seconds: float


class GuardTracker:
    """Records the depths of write guards held during the structural stage."""

    def __init__(self):
        self.held: Counter = Counter()
        self.max_span = 0
        self.violations = 0

    def acquire(self, depth: int) -> None:
        self.held[depth] += 1
        span = max(self.held) - min(self.held) + 1
        self.max_span = max(self.max_span, span)
        if span > 3:
            self.violations += 1

    def release(self, depth: int) -> None:
        self.held[depth] -= 1
        if not self.held[depth]:
            del self.held[depth]


class _Block:
    """Per-block bookkeeping for stages 2 and 3."""

    def __init__(self, root: NodeId):
        self.root = root
        self.dirty: set[NodeId] = set()
        self.fresh: set[NodeId] = set()
        self.parent: dict[NodeId, Optional[tuple[NodeId, int]]] = {}
        self.depth: dict[NodeId, int] = {}
        self.inner_order: list[NodeId] = []
        self.staged_free: list[NodeId] = []
        self.cow: Counter = Counter()
        self.created = 0


class VerkleDB:
    def __init__(self, path: str, config: DBConfig, storage: StorageManager, meta: Optional[dict] = None):
        self.path = path
        self.config = config
        self.storage = storage
        self.layout = storage.layout
        self.archive = config.mode == ARCHIVE
        self.pedersen: Pedersen = get_pedersen(config.backend, config.seed)
        self.backend = self.pedersen.backend
        self.nodes = NodeManager(storage, self.backend, config.cache_capacity)
        self.embedding = Embedding(self.pedersen)
        self.pool = WorkStealingPool(max(1, config.workers))
        self.tracker: Optional[GuardTracker] = GuardTracker() if config.track_guards else None
        self._failed: Optional[str] = None
        meta = meta or {}
        self.root_id: NodeId = meta.get("root_id", NULL_ID)
        self.height: int = meta.get("height", 0)
        root_hex = meta.get("root")
        self.root_commitment: Element = (
            self.backend.deserialize(bytes.fromhex(root_hex)) if root_hex else self.backend.identity()
        )
        self.roots: Optional[RootIndex] = None
        if self.archive:
            self.roots = RootIndex(os.path.join(path, "roots.dat"), self.height, config.storage.sync)
        self.last_checkpoint = self.height

    # -- lifecycle -------------------------------------------------------------------

    @classmethod
    def create(cls, path: str, config: Optional[DBConfig] = None) -> "VerkleDB":
        config = config or DBConfig()
        if config.mode not in (LIVE, ARCHIVE):
            raise InvalidArgument(f"mode must be {LIVE!r} or {ARCHIVE!r}")
        layout = NodeLayout(config.inner_capacities, config.leaf_capacities, config.tau)
        meta = {"config": config.persistent_dict(), "root_id": NULL_ID, "height": 0, "root": None}
        storage = StorageManager.create(path, layout, config.storage, meta)
        db = cls(path, config, storage, meta)
        return db

    @classmethod
    def open(cls, path: str, **overrides) -> "VerkleDB":
        """Reopen at the last checkpoint.  Runtime knobs may be overridden."""
        storage_cfg = overrides.pop("storage", None) or StorageConfig()
        storage = StorageManager.open(path, storage_cfg)
        meta = storage.meta
        persisted = dict(meta["config"])
        for key in DBConfig.PERSISTENT:
            if key in overrides and overrides[key] != persisted[key]:
                raise InvalidArgument(f"{key} is fixed at creation")
        layout = storage.layout
        config = DBConfig(
            mode=persisted["mode"], backend=persisted["backend"], seed=bytes.fromhex(persisted["seed"]),
            inner_capacities=layout.inner_capacities, leaf_capacities=layout.leaf_capacities,
            tau=layout.tau, delta_inner=persisted["delta_inner"], delta_leaf=persisted["delta_leaf"],
            delta_size_guard=persisted["delta_size_guard"], storage=storage_cfg,
        )
        for key, value in overrides.items():
            if not hasattr(config, key):
                raise InvalidArgument(f"unknown option {key}")
            setattr(config, key, value)
        return cls(path, config, storage, meta)

    def _meta(self) -> dict:
        return {
            "config": self.config.persistent_dict(),
            "root_id": self.root_id,
            "height": self.height,
            "root": self.backend.serialize(self.root_commitment).hex(),
        }

    def checkpoint(self) -> int:
        self._check_usable()
        self.nodes.flush_all()
        if self.roots is not None:
            self.roots.flush()
        generation = self.storage.checkpoint(self._meta())
        self.last_checkpoint = self.height
        return generation

    def close(self, checkpoint: bool = True) -> None:
        try:
            if checkpoint and self._failed is None:
                self.checkpoint()
        finally:
            self.storage.close()
            if self.roots is not None:
                self.roots.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close(checkpoint=exc[0] is None)

    def _check_usable(self) -> None:
        if self._failed is not None:
            raise StorageError(f"database unusable after failed flush ({self._failed}); reopen it")

    # -- reads ---------------------------------------------------------------------------

    def root_bytes(self) -> bytes:
        return self.backend.serialize(self.root_commitment)

    def lookup(self, key: bytes) -> Optional[bytes]:
        return self._lookup_from(self.root_id, key)

    def lookup_at(self, key: bytes, height: int) -> Optional[bytes]:
        if not self.archive:
            raise InvalidArgument("historical lookups need an archive database")
        if height > self.height or height < 0:
            raise InvalidArgument(f"height {height} outside [0, {self.height}]")
        if height == 0:
            return None
        return self._lookup_from(self.roots.get(height)[0], key)

    def root_at(self, height: int) -> tuple[NodeId, bytes]:
        if not self.archive:
            raise InvalidArgument("per-height roots need an archive database")
        if height == 0:
            return NULL_ID, self.backend.serialize(self.backend.identity())
        return self.roots.get(height)

    def _lookup_from(self, root_id: NodeId, key: bytes) -> Optional[bytes]:
        if len(key) != 32:
            raise InvalidArgument("keys are 32 bytes")
        if root_id == NULL_ID:
            return None
        g = self._read(root_id)
        depth = 0
        try:
            while True:
                node = g.node
                if node.kind == LEAF:
                    return node.values.get(key[31]) if node.stem == key[:31] else None
                child = node.children.get(key[depth])
                if child is None:
                    return None
                nxt = self._read(child)
                g.release()
                g = nxt
                depth += 1
        finally:
            g.release()

    def _read(self, node_id: NodeId):
        try:
            return self.nodes.get_read(node_id)
        except NotFound as exc:
            raise CorruptionError(f"dangling node id: {exc}") from None

    # -- block application ------------------------------------------------------------------

    def apply_block(self, mutations: Iterable[Mutation], height: Optional[int] = None) -> BlockResult:
        self._check_usable()
        if height is not None and height != self.height + 1:
            raise InvalidArgument(f"expected height {self.height + 1}, got {height}")
        start = time.perf_counter()
        batch = assemble_batch(mutations)
        effective = self._prefilter(batch)
        self.storage.reset_write_counts()
        writes_before = self.storage.writes
        blk = _Block(self.root_id)
        parallel = False
        self.nodes.begin_batch()
        try:
            if len(effective):
                self._structure(blk, effective)
                self._fixup(blk)
            root, parallel = self._commit(blk)
        except BaseException:
            self.nodes.abort_batch()
            raise
        try:
            self.nodes.end_batch()
            if not self.archive:
                for node_id in blk.staged_free:
                    self.storage.free(node_id)
        except BaseException as exc:
            self._failed = str(exc)
            raise
        # publish
        self.root_id = blk.root
        self.root_commitment = root
        self.height += 1
        root_bytes = self.backend.serialize(root)
        if self.roots is not None:
            self.roots.append(self.root_id, root_bytes)
        if self.config.checkpoint_every and self.height - self.last_checkpoint >= self.config.checkpoint_every:
            self.checkpoint()
        counts = self.storage.write_counts
        return BlockResult(
            height=self.height,
            root_id=self.root_id,
            root=root_bytes,
            mutations=len(batch),
            effective=len(effective),
            dirty=len(blk.dirty),
            created=blk.created,
            copies=sum(blk.cow.values()),
            storage_writes=self.storage.writes - writes_before,
            max_writes_per_id=max(counts.values()) if counts else 0,
            max_copies_per_node=max(blk.cow.values()) if blk.cow else 0,
            parallel=parallel,
            seconds=time.perf_counter() - start,
        )

    def _prefilter(self, batch: UpdateBatch) -> UpdateBatch:
        keys, values = [], []
        for key, value in batch:
            current = self.lookup(key)
            if current == value:
                continue
            keys.append(key)
            values.append(value)
        return UpdateBatch(tuple(keys), tuple(values))

    # guard helpers (stage 2)

    def _write(self, blk: _Block, node_id: NodeId, depth: int) -> WriteGuard:
        try:
            g = self.nodes.get_write(node_id)
        except NotFound as exc:
            raise CorruptionError(f"dangling node id: {exc}") from None
        if self.tracker:
            self.tracker.acquire(depth)
        return g

    def _release(self, g: WriteGuard, depth: int) -> None:
        g.release()
        if self.tracker:
            self.tracker.release(depth)

    def _create(self, blk: _Block, node, tag: int, depth: int) -> tuple[NodeId, WriteGuard]:
        node_id, g = self.nodes.create(node, tag)
        blk.fresh.add(node_id)
        blk.dirty.add(node_id)
        blk.depth[node_id] = depth
        blk.created += 1
        if self.tracker:
            self.tracker.acquire(depth)
        return node_id, g

    def _scalar(self, node) -> int:
        s = node.scalar
        if s is None:
            s = node.scalar = self.pedersen.to_scalar(node.commitment)
        return s

    def _new_inner(self) -> InnerNode:
        node = InnerNode(commitment=self.backend.identity())
        node.pending = {}
        return node

    def _remove(self, blk: _Block, node_id: NodeId) -> None:
        """Drop a node that became unreachable in this block."""
        blk.dirty.discard(node_id)
        if node_id in blk.fresh:
            self.nodes.delete(node_id, free=True)
            blk.fresh.discard(node_id)
        elif not self.archive:
            self.nodes.delete(node_id, free=False)
            blk.staged_free.append(node_id)
        # archive: the old version stays reachable from earlier roots

    def _retag(self, blk: _Block, g: WriteGuard, node_id: NodeId, tag: int) -> NodeId:
        new_id = self.nodes.retag(g, tag)
        blk.dirty.discard(node_id)
        blk.dirty.add(new_id)
        blk.depth[new_id] = blk.depth.pop(node_id, 0)
        if node_id in blk.parent:
            blk.parent[new_id] = blk.parent.pop(node_id)
        if node_id in blk.fresh:
            blk.fresh.discard(node_id)
            self.storage.free(node_id)
        else:
            blk.staged_free.append(node_id)
        blk.fresh.add(new_id)
        return new_id

    def _archive_target(self, node, old_id: NodeId, touched: set, occupancy: int, deletion: bool):
        """(tag, base, delta slots) for the new version of ``node``."""
        kind = node.kind
        enabled = self.config.delta_inner if kind == INNER else self.config.delta_leaf
        full_tag = self.layout.required_tag(kind, occupancy)
        if enabled and not deletion:
            if node.base:
                base, slots = node.base, node.delta | touched
            else:
                base, slots = old_id, set(touched)
            if len(slots) <= self.layout.tau:
                tag = self.layout.delta_tag(kind, len(slots))
                if (not self.config.delta_size_guard
                        or self.layout.info(tag).record_size < self.layout.info(full_tag).record_size):
                    return tag, base, slots
        return full_tag, NULL_ID, set()

    def _prepare(self, blk: _Block, g: WriteGuard, node_id: NodeId, touched: set, occupancy: int,
                 deletion: bool, depth: int) -> tuple[WriteGuard, NodeId]:
        """Make ``node_id`` writable for this block: copy it (archive) or re-specialize it (live)."""
        node = g.node
        if self.archive and node_id not in blk.fresh:
            tag, base, slots = self._archive_target(node, node_id, touched, occupancy, deletion)
            copy = node.copy()
            copy.base, copy.delta, copy.pending = base, slots, {}
            self._release(g, depth)
            new_id, ng = self._create(blk, copy, tag, depth)
            blk.cow[node_id] += 1
            return ng, new_id
        if node.pending is None:
            node.pending = {}
        g.mark_dirty()
        blk.dirty.add(node_id)
        blk.depth[node_id] = depth
        if self.archive and node.base:
            tag, base, slots = self._archive_target(node, node_id, touched, occupancy, deletion)
            node.base, node.delta = base, slots
        else:
            tag = self.layout.required_tag(node.kind, occupancy)
        if tag != id_tag(node_id):
            node_id = self._retag(blk, g, node_id, tag)
        return g, node_id

    def _structure(self, blk: _Block, batch: UpdateBatch) -> None:
        sub = batch.view()
        parts = partition(sub, 0)
        touched = {b for b, _ in parts}
        if blk.root == NULL_ID:
            root_id, g = self._create(blk, self._new_inner(), self.layout.required_tag(INNER, len(touched)), 0)
        else:
            g = self._write(blk, blk.root, 0)
            occ = g.node.occupancy + len(touched - g.node.children.keys())
            g, root_id = self._prepare(blk, g, blk.root, touched, occ, False, 0)
        blk.root = root_id
        blk.parent[root_id] = None
        blk.inner_order.append(root_id)
        frontier = [(root_id, g, 0, parts)]
        while frontier:
            nxt = []
            for node_id, g, depth, parts in frontier:
                node = g.node
                for byte, child_sub in parts:
                    self._visit(blk, node, node_id, depth, byte, child_sub, nxt)
                # children ids are recorded; only now let go of the parent
                self._release(g, depth)
            frontier = nxt

    def _link_inner(self, blk: _Block, node_id: NodeId, g, parent_id: NodeId, byte: int, depth: int,
                    parts, nxt: list) -> None:
        blk.parent[node_id] = (parent_id, byte)
        blk.inner_order.append(node_id)
        nxt.append((node_id, g, depth, parts))

    def _visit(self, blk: _Block, parent: InnerNode, parent_id: NodeId, depth: int, byte: int,
               sub: SubBatch, nxt: list) -> None:
        cdepth = depth + 1
        child_id = parent.children.get(byte)
        if child_id is None:
            parent.pending.setdefault(byte, 0)
            parent.children[byte] = self._build(blk, sub, cdepth, parent_id, byte, nxt)
            return
        g = self._write(blk, child_id, cdepth)
        child = g.node
        parent.pending.setdefault(byte, self._scalar(child))
        if child.kind == LEAF:
            if sub.single_stem() and sub.first_key()[:31] == child.stem:
                new_id = self._update_leaf(blk, g, child_id, sub, cdepth)
                if new_id == NULL_ID:
                    del parent.children[byte]
                else:
                    parent.children[byte] = new_id
                return
            # another stem arrives below this leaf: push the leaf one level down
            stem_byte = child.stem[cdepth]
            self._release(g, cdepth)
            inner = self._new_inner()
            inner.children[stem_byte] = child_id
            inner.pending[stem_byte] = 0
            parts = partition(sub, cdepth)
            occ = len({b for b, _ in parts} | {stem_byte})
            new_id, ng = self._create(blk, inner, self.layout.required_tag(INNER, occ), cdepth)
            parent.children[byte] = new_id
            self._link_inner(blk, new_id, ng, parent_id, byte, cdepth, parts, nxt)
            return
        parts = partition(sub, cdepth)
        touched = {b for b, _ in parts}
        occ = child.occupancy + len(touched - child.children.keys())
        g, new_id = self._prepare(blk, g, child_id, touched, occ, False, cdepth)
        parent.children[byte] = new_id
        self._link_inner(blk, new_id, g, parent_id, byte, cdepth, parts, nxt)

    def _build(self, blk: _Block, sub: SubBatch, depth: int, parent_id: NodeId, byte: int, nxt: list) -> NodeId:
        """Create the subtree for keys landing in an empty slot (all inserts)."""
        if sub.single_stem():
            stem = sub.first_key()[:31]
            values = {k[31]: v for k, v in sub.items()}
            leaf = LeafNode(stem, values)
            leaf.c1 = leaf.c2 = self.backend.identity()
            leaf.pending = dict.fromkeys(values)
            node_id, g = self._create(blk, leaf, self.layout.required_tag(LEAF, len(values)), depth)
            self._release(g, depth)
            return node_id
        parts = partition(sub, depth)
        node_id, g = self._create(blk, self._new_inner(), self.layout.required_tag(INNER, len(parts)), depth)
        self._link_inner(blk, node_id, g, parent_id, byte, depth, parts, nxt)
        return node_id

    def _update_leaf(self, blk: _Block, g: WriteGuard, leaf_id: NodeId, sub: SubBatch, depth: int) -> NodeId:
        leaf = g.node
        remaining = set(leaf.values)
        deletion = False
        touched = set()
        for key, value in sub.items():
            touched.add(key[31])
            if value is None:
                deletion = True
                remaining.discard(key[31])
            else:
                remaining.add(key[31])
        if not remaining:
            self._release(g, depth)
            self._remove(blk, leaf_id)
            return NULL_ID
        g, new_id = self._prepare(blk, g, leaf_id, touched, len(remaining), deletion, depth)
        node = g.node
        for key, value in sub.items():
            s = key[31]
            if s not in node.pending:
                node.pending[s] = node.values.get(s)
            if value is None:
                node.values.pop(s, None)
            else:
                node.values[s] = value
        self._release(g, depth)
        return new_id

    def _fixup(self, blk: _Block) -> None:
        """Deepest first: delete empty inner nodes, collapse single-leaf chains, shrink tags."""
        for node_id in reversed(blk.inner_order):
            if node_id not in blk.dirty:
                continue
            depth = blk.depth[node_id]
            link = blk.parent.get(node_id)
            pg = self._write(blk, link[0], depth - 1) if link else None
            g = self._write(blk, node_id, depth)
            node = g.node
            try:
                occ = node.occupancy
                if occ == 0:
                    self._release(g, depth)
                    g = None
                    self._remove(blk, node_id)
                    if pg is None:
                        blk.root = NULL_ID
                    else:
                        del pg.node.children[link[1]]
                    continue
                if pg is not None and occ == 1:
                    (only,) = node.children.values()
                    if self.layout.info(id_tag(only)).base_kind == LEAF:
                        self._release(g, depth)
                        g = None
                        self._remove(blk, node_id)
                        pg.node.children[link[1]] = only
                        continue
                if not (self.archive and node.base):
                    tag = self.layout.required_tag(INNER, occ)
                    if tag != id_tag(node_id):
                        new_id = self._retag(blk, g, node_id, tag)
                        if pg is None:
                            blk.root = new_id
                        else:
                            pg.node.children[link[1]] = new_id
            finally:
                if g is not None:
                    self._release(g, depth)
                if pg is not None:
                    self._release(pg, depth - 1)

    # stage 3

    def _commit(self, blk: _Block) -> tuple[Element, bool]:
        if blk.root == NULL_ID:
            return self.backend.identity(), False
        if blk.root not in blk.dirty:
            return self.nodes.peek(blk.root).commitment, False
        parent_of: dict[NodeId, Optional[NodeId]] = {}
        stack = [(blk.root, None)]
        while stack:
            node_id, parent = stack.pop()
            parent_of[node_id] = parent
            node = self.nodes.peek(node_id)
            if node.kind == INNER:
                for slot in node.pending:
                    child = node.children.get(slot)
                    if child is not None and child in blk.dirty:
                        stack.append((child, node_id))
        if len(parent_of) != len(blk.dirty):
            raise GuardError(f"{len(blk.dirty) - len(parent_of)} dirty nodes unreachable from the root")
        parallel = self.config.workers > 1 and len(parent_of) >= self.config.parallel_threshold
        if parallel:
            self.pool.run_tree(parent_of, self._commit_node)
        else:
            self._commit_sequential(blk.root, blk.dirty)
        return self.nodes.peek(blk.root).commitment, parallel

    def _commit_sequential(self, root: NodeId, dirty: set) -> None:
        # iterative post-order over the dirty tree
        stack = [(root, False)]
        while stack:
            node_id, expanded = stack.pop()
            if expanded:
                self._commit_node(node_id)
                continue
            stack.append((node_id, True))
            node = self.nodes.peek(node_id)
            if node.kind == INNER:
                for slot in sorted(node.pending, reverse=True):
                    child = node.children.get(slot)
                    if child is not None and child in dirty:
                        stack.append((child, False))

    def _commit_node(self, node_id: NodeId) -> None:
        g = self.nodes.get_write(node_id)
        try:
            node = g.node
            if node.kind == LEAF:
                self._commit_leaf(node)
            else:
                deltas = {}
                for slot, old in node.pending.items():
                    child = node.children.get(slot)
                    if child is None:
                        new = 0
                    else:
                        with self.nodes.get_read(child) as cg:
                            new = self._scalar(cg.node)
                    d = (new - old) % ORDER
                    if d:
                        deltas[slot] = d
                node.commitment = self.pedersen.apply_deltas(node.commitment, deltas)
            node.pending = None
            node.scalar = None
            g.mark_dirty()
        finally:
            g.release()

    def _commit_leaf(self, node: LeafNode) -> None:
        ped = self.pedersen
        if node.c1 is None:
            # first write since load: suffix commitments are not persisted
            node.c1, node.c2 = ped.leaf_suffix_commitments(node.values)
            node.commitment = ped.leaf_commitment(node.stem, node.c1, node.c2)
            return
        lo: dict[int, int] = {}
        hi: dict[int, int] = {}
        for suffix, old in node.pending.items():
            new = node.values.get(suffix)
            a = encode_value(old is not None, old)
            b = encode_value(new is not None, new)
            target = lo if suffix < 128 else hi
            pos = 2 * (suffix % 128)
            target[pos] = (b.low_mod - a.low_mod) % ORDER
            target[pos + 1] = (b.high - a.high) % ORDER
        ext: dict[int, int] = {}
        if lo:
            before = ped.to_scalar(node.c1)
            node.c1 = ped.apply_deltas(node.c1, lo)
            ext[2] = (ped.to_scalar(node.c1) - before) % ORDER
        if hi:
            before = ped.to_scalar(node.c2)
            node.c2 = ped.apply_deltas(node.c2, hi)
            ext[3] = (ped.to_scalar(node.c2) - before) % ORDER
        if node.commitment is None:
            node.commitment = ped.leaf_commitment(node.stem, node.c1, node.c2)
        else:
            node.commitment = ped.apply_deltas(node.commitment, {k: v for k, v in ext.items() if v})

    # -- inspection ---------------------------------------------------------------------------

    def iter_nodes(self, root_id: Optional[NodeId] = None) -> Iterator[tuple[NodeId, int, object]]:
        """Yield ``(id, depth, node)`` for every node reachable from ``root_id`` (default: tip)."""
        root_id = self.root_id if root_id is None else root_id
        if root_id == NULL_ID:
            return
        stack = [(root_id, 0)]
        while stack:
            node_id, depth = stack.pop()
            try:
                node = self.nodes.peek(node_id)
            except NotFound as exc:
                raise CorruptionError(f"dangling node id: {exc}") from None
            yield node_id, depth, node
            if node.kind == INNER:
                for slot in sorted(node.children, reverse=True):
                    stack.append((node.children[slot], depth + 1))

    def items(self, root_id: Optional[NodeId] = None) -> Iterator[tuple[bytes, bytes]]:
        for _, _, node in self.iter_nodes(root_id):
            if node.kind == LEAF:
                for suffix, value in node.values.items():
                    yield node.stem + bytes([suffix]), value

    def full_recompute(self, root_id: Optional[NodeId] = None) -> Element:
        """Root commitment recomputed from node contents only, with naive scalar multiplications."""
        root_id = self.root_id if root_id is None else root_id
        if root_id == NULL_ID:
            return self.backend.identity()
        ped = self.pedersen

        def walk(node_id: NodeId, depth: int) -> Element:
            node = self.nodes.peek(node_id)
            if node.kind == LEAF:
                v1 = [0] * 256
                v2 = [0] * 256
                for suffix, value in node.values.items():
                    h = encode_value(True, value)
                    target = v1 if suffix < 128 else v2
                    target[2 * (suffix % 128)] = h.low_mod
                    target[2 * (suffix % 128) + 1] = h.high
                c1, c2 = ped.naive_commit(v1), ped.naive_commit(v2)
                return ped.naive_commit([LEAF_VERSION_MARKER, stem_scalar(node.stem), ped.to_scalar(c1), ped.to_scalar(c2)])
            scalars = [0] * 256
            for slot, child in node.children.items():
                scalars[slot] = ped.to_scalar(walk(child, depth + 1))
            return ped.naive_commit(scalars)

        return walk(root_id, 0)

    def occupancy_histograms(self, root_id: Optional[NodeId] = None) -> dict[str, Counter]:
        hist = {INNER: Counter(), LEAF: Counter()}
        for _, _, node in self.iter_nodes(root_id):
            hist[node.kind][node.occupancy] += 1
        return hist
