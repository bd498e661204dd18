"""Bounded node cache handing out shared-read and exclusive-write guards.

Every cached node lives in exactly one :class:`Cell`; all guards for an id
refer to that cell, so at most one in-memory instance of a node exists.
A cell is pinned while any guard on it is outstanding (and, inside a batch,
while it holds unflushed changes) and is never evicted while pinned.

Batches group the writes of one block: dirty cells stay pinned until
:meth:`NodeManager.end_batch` persists each of them exactly once, and
:meth:`NodeManager.abort_batch` discards them instead.
"""

from __future__ import annotations

import threading
from collections import Counter
from typing import Optional

from .commitment.groups import GroupBackend
from .errors import GuardError, InvalidArgument, NotFound
from .nodes import DeltaRecord, Node, NodeId, decode_record, encode_node, id_tag, materialize
from .storage import StorageManager


class RWLock:
    """Many readers or one writer; waiting writers block new readers."""

    def __init__(self):
        self._cond = threading.Condition(threading.Lock())
        self._readers = 0
        self._writer: Optional[int] = None
        self._waiting_writers = 0

    def acquire_read(self) -> None:
        me = threading.get_ident()
        with self._cond:
            if self._writer == me:
                raise GuardError("read guard requested while holding the write guard")
            while self._writer is not None or self._waiting_writers:
                self._cond.wait()
            self._readers += 1

    def release_read(self) -> None:
        with self._cond:
            self._readers -= 1
            if not self._readers:
                self._cond.notify_all()

    def acquire_write(self) -> None:
        me = threading.get_ident()
        with self._cond:
            if self._writer == me:
                raise GuardError("write guard is not reentrant")
            self._waiting_writers += 1
            try:
                while self._writer is not None or self._readers:
                    self._cond.wait()
            finally:
                self._waiting_writers -= 1
            self._writer = me

    def release_write(self) -> None:
        with self._cond:
            self._writer = None
            self._cond.notify_all()

    @property
    def write_locked(self) -> bool:
        return self._writer is not None


class Cell:
    __slots__ = ("id", "node", "lock", "pins", "dirty", "ref", "batch_pinned")

    def __init__(self, node_id: NodeId, node: Node):
        self.id = node_id
        self.node = node
        self.lock = RWLock()
        self.pins = 0
        self.dirty = False
        self.ref = True
        self.batch_pinned = False


class ReadGuard:
    __slots__ = ("_mgr", "_cell", "_live")

    def __init__(self, mgr: "NodeManager", cell: Cell):
        self._mgr, self._cell, self._live = mgr, cell, True

    @property
    def node(self) -> Node:
        if not self._live:
            raise GuardError("guard already released")
        return self._cell.node

    @property
    def id(self) -> NodeId:
        return self._cell.id

    def release(self) -> None:
        if self._live:
            self._live = False
            self._cell.lock.release_read()
            self._mgr._unpin(self._cell, False)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.release()


class WriteGuard(ReadGuard):
    __slots__ = ()

    def mark_dirty(self) -> None:
        self._cell.dirty = True

    def replace(self, node: Node) -> None:
        """Swap the cell's node object (same id), marking it dirty."""
        self._cell.node = node
        self._cell.dirty = True

    def release(self) -> None:
        if self._live:
            self._live = False
            self._cell.lock.release_write()
            self._mgr._unpin(self._cell, True)


class NodeManager:
    def __init__(self, storage: StorageManager, backend: GroupBackend, capacity: int = 65536):
        if capacity < 1:
            raise InvalidArgument("cache capacity must be >= 1")
        self.storage = storage
        self.layout = storage.layout
        self.backend = backend
        self.capacity = capacity
        self._lock = threading.RLock()
        self._cells: dict[NodeId, Cell] = {}
        self._slots: list[Optional[Cell]] = []
        self._free_slots: list[int] = []
        self._slot_of: dict[int, int] = {}  # id(cell) -> slot
        self._hand = 0
        self._batch: Optional[dict[int, Cell]] = None  # id(cell) -> cell
        self._batch_allocs: list[Cell] = []
        self._access_depth = 0
        self._access_loads = 0
        # counters
        self.loads = 0
        self.evictions = 0
        self.writebacks = 0
        self.instances = 0
        self.overflows = 0
        self.access_loads = Counter()

    # -- cache bookkeeping ----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._cells)

    def __contains__(self, node_id: NodeId) -> bool:
        return node_id in self._cells

    def _insert(self, node_id: NodeId, node: Node) -> Cell:
        if len(self._cells) >= self.capacity:
            self._evict_one()
        cell = Cell(node_id, node)
        if self._free_slots:
            slot = self._free_slots.pop()
            self._slots[slot] = cell
        else:
            slot = len(self._slots)
            self._slots.append(cell)
            if len(self._cells) >= self.capacity:
                self.overflows += 1
        self._slot_of[id(cell)] = slot
        self._cells[node_id] = cell
        self.instances += 1
        return cell

    def _remove(self, cell: Cell) -> None:
        del self._cells[cell.id]
        slot = self._slot_of.pop(id(cell))
        self._slots[slot] = None
        self._free_slots.append(slot)
        if self._batch is not None:
            self._batch.pop(id(cell), None)

    def _evict_one(self) -> bool:
        """Clock sweep with second chance; pinned cells are skipped."""
        n = len(self._slots)
        for _ in range(2 * n):
            if self._hand >= n:
                self._hand = 0
            cell = self._slots[self._hand]
            self._hand += 1
            if cell is None or cell.pins or cell.batch_pinned:
                continue
            if cell.ref:
                cell.ref = False
                continue
            if cell.dirty:
                self._write_back(cell)
            self._remove(cell)
            self.evictions += 1
            return True
        return False

    def _write_back(self, cell: Cell) -> None:
        info = self.layout.info(id_tag(cell.id))
        self.storage.write(cell.id, encode_node(cell.node, info, self.backend))
        cell.dirty = False
        self.writebacks += 1

    def _load(self, node_id: NodeId) -> Node:
        info = self.layout.info(id_tag(node_id))
        data = self.storage.read(node_id)
        self.loads += 1
        self._access_loads += 1
        decoded = decode_record(info, data, self.backend, self.layout)
        if isinstance(decoded, DeltaRecord):
            base_cell = self._cell(decoded.base)
            return materialize(decoded, base_cell.node, decoded.base)
        return decoded

    def _cell(self, node_id: NodeId) -> Cell:
        cell = self._cells.get(node_id)
        if cell is None:
            if not node_id:
                raise NotFound("null node id")
            cell = self._insert(node_id, self._load(node_id))
        cell.ref = True
        return cell

    def _acquire(self, node_id: NodeId) -> Cell:
        with self._lock:
            outer = self._access_depth == 0
            if outer:
                self._access_loads = 0
            self._access_depth += 1
            try:
                cell = self._cell(node_id)
                cell.pins += 1
            finally:
                self._access_depth -= 1
                if outer:
                    self.access_loads[self._access_loads] += 1
            return cell

    def _unpin(self, cell: Cell, wrote: bool) -> None:
        with self._lock:
            cell.pins -= 1
            if wrote and cell.dirty and cell.id in self._cells and self._cells[cell.id] is cell:
                if self._batch is not None:
                    if not cell.batch_pinned:
                        cell.batch_pinned = True
                        self._batch[id(cell)] = cell
                elif not cell.pins:
                    self._write_back(cell)

    # -- guards --------------------------------------------------------------------------

    def get_read(self, node_id: NodeId) -> ReadGuard:
        cell = self._acquire(node_id)
        try:
            cell.lock.acquire_read()
        except BaseException:
            self._unpin(cell, False)
            raise
        return ReadGuard(self, cell)

    def get_write(self, node_id: NodeId) -> WriteGuard:
        cell = self._acquire(node_id)
        try:
            cell.lock.acquire_write()
        except BaseException:
            self._unpin(cell, False)
            raise
        return WriteGuard(self, cell)

    def peek(self, node_id: NodeId) -> Node:
        """Unguarded read for single-threaded inspection (stats, tests)."""
        with self._lock:
            return self._cell(node_id).node

    def create(self, node: Node, tag: int) -> tuple[NodeId, WriteGuard]:
        with self._lock:
            node_id = self.storage.allocate(tag)
            cell = self._insert(node_id, node)
            cell.pins += 1
            cell.dirty = True
            if self._batch is not None:
                self._batch_allocs.append(cell)
        cell.lock.acquire_write()
        return node_id, WriteGuard(self, cell)

    def retag(self, guard: WriteGuard, tag: int) -> NodeId:
        """Move the guarded node to a freshly allocated id of ``tag``; returns the new id.

        The old id is *not* freed here: the caller decides when (live mode
        frees it after the block's root is published).
        """
        cell = guard._cell
        with self._lock:
            new_id = self.storage.allocate(tag)
            del self._cells[cell.id]
            cell.id = new_id
            self._cells[new_id] = cell
            cell.dirty = True
            if self._batch is not None:
                self._batch_allocs.append(cell)
        return new_id

    def delete(self, node_id: NodeId, free: bool = True) -> None:
        with self._lock:
            cell = self._cells.get(node_id)
            if cell is not None:
                if cell.pins:
                    raise GuardError(f"cannot delete node with {cell.pins} outstanding guards")
                self._remove(cell)
            if free:
                self.storage.free(node_id)

    def drop(self, node_id: NodeId) -> None:
        """Forget a cached node without writing it back (test hook and abort path)."""
        with self._lock:
            cell = self._cells.get(node_id)
            if cell is not None:
                if cell.pins:
                    raise GuardError("cannot drop a guarded node")
                self._remove(cell)

    # -- batches ---------------------------------------------------------------------------

    def begin_batch(self) -> None:
        with self._lock:
            if self._batch is not None:
                raise GuardError("batch already open")
            self._batch = {}
            self._batch_allocs = []

    @property
    def in_batch(self) -> bool:
        return self._batch is not None

    def end_batch(self) -> int:
        """Persist every cell dirtied in the batch once; returns the number written."""
        with self._lock:
            cells = list(self._batch.values()) if self._batch is not None else []
            written = 0
            try:
                for cell in sorted(cells, key=lambda c: c.id):
                    if cell.dirty and self._cells.get(cell.id) is cell:
                        self._write_back(cell)
                        written += 1
            finally:
                for cell in cells:
                    cell.batch_pinned = False
                self._batch = None
                self._batch_allocs = []
            return written

    def abort_batch(self) -> None:
        """Discard all changes of the open batch and release its allocations."""
        with self._lock:
            if self._batch is None:
                return
            for cell in list(self._batch.values()):
                if self._cells.get(cell.id) is cell:
                    self._remove(cell)
            for cell in self._batch_allocs:
                if self._cells.get(cell.id) is cell:
                    self._remove(cell)
                if self.storage.is_allocated(cell.id):
                    self.storage.free(cell.id)
            self._batch = None
            self._batch_allocs = []

    # -- maintenance ---------------------------------------------------------------------------

    def flush_all(self) -> int:
        with self._lock:
            written = 0
            for cell in list(self._cells.values()):
                if cell.lock.write_locked:
                    raise GuardError("flush with outstanding write guards")
                if cell.dirty:
                    self._write_back(cell)
                    written += 1
            return written

    def evict_all(self) -> None:
        """Write back and drop every unpinned cell (cold-cache experiments)."""
        with self._lock:
            for cell in list(self._cells.values()):
                if cell.pins or cell.batch_pinned:
                    continue
                if cell.dirty:
                    self._write_back(cell)
                self._remove(cell)
            self._hand = 0

    def reset_counters(self) -> None:
        self.loads = self.evictions = self.writebacks = self.instances = self.overflows = 0
        self.access_loads.clear()

    def dirty_count(self) -> int:
        return sum(1 for c in self._cells.values() if c.dirty)
