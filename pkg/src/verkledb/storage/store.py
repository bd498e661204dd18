"""Fixed-size node records in one file per tag, with free lists and checkpoints.

On-disk directory::

    manifest              JSON, replaced atomically at each checkpoint
    nodes-<tag>.dat       record ``i`` of the tag lives at offset ``i * record_size``
    undo-<generation>.log prior bytes of checkpointed records overwritten since

Records that were live at the last checkpoint are overwritten in place by the
live store.  Before the first such overwrite in an epoch, the old bytes are
appended to the undo log, so a crash (or an aborted checkpoint) rolls the data
files back to exactly the state the manifest describes.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import os
import struct
import threading
import zlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from ..errors import CorruptionError, InvalidArgument, NotFound, StorageError
from ..nodes import NodeLayout, id_index, id_tag, make_id
from .buffer import FlushBuffer
from .files import PageCache, PositionalFile

FORMAT_VERSION = 1
MANIFEST = "manifest"
_UNDO_HEAD = struct.Struct("<QII")  # node id, length, crc32


@dataclass
class StorageConfig:
    flush_workers: int = 1  # 0 writes through synchronously
    flush_capacity: int = 4096
    page_cache_pages: int = 0  # 0 disables the page-cache proxy
    sync: bool = True
    track_writes: bool = False


@dataclass
class NodeFileStore:
    """Slot bookkeeping for one tag's file."""

    tag: int
    record_size: int
    next_index: int = 0
    free_heap: list = field(default_factory=list)
    free_set: set = field(default_factory=set)
    unwritten: set = field(default_factory=set)
    # state at the last checkpoint, for undo protection
    ckpt_next: int = 0
    ckpt_dead: frozenset = frozenset()
    logged: set = field(default_factory=set)

    def allocate(self) -> int:
        while self.free_heap:
            idx = heapq.heappop(self.free_heap)
            if idx in self.free_set:
                self.free_set.discard(idx)
                self.unwritten.add(idx)
                return idx
        idx = self.next_index
        self.next_index += 1
        self.unwritten.add(idx)
        return idx

    def is_allocated(self, idx: int) -> bool:
        return 0 <= idx < self.next_index and idx not in self.free_set

    def free(self, idx: int) -> None:
        if not self.is_allocated(idx):
            raise InvalidArgument(f"tag {self.tag}: index {idx} is not allocated")
        self.free_set.add(idx)
        heapq.heappush(self.free_heap, idx)
        self.unwritten.discard(idx)

    def protected(self, idx: int) -> bool:
        return idx < self.ckpt_next and idx not in self.ckpt_dead and idx not in self.logged

    def mark_checkpoint(self) -> None:
        self.ckpt_next = self.next_index
        self.ckpt_dead = frozenset(self.free_set | self.unwritten)
        self.logged = set()

    @property
    def used(self) -> int:
        return self.next_index - len(self.free_set)

    def to_dict(self) -> dict:
        return {
            "record_size": self.record_size,
            "next_index": self.next_index,
            "free": sorted(self.free_set),
            "unwritten": sorted(self.unwritten),
        }

    @classmethod
    def from_dict(cls, tag: int, data: dict) -> "NodeFileStore":
        store = cls(tag, data["record_size"], data["next_index"])
        store.free_set = set(data["free"])
        store.free_heap = sorted(store.free_set)
        store.unwritten = set(data["unwritten"])
        store.mark_checkpoint()
        return store


def _checksum(body: dict) -> str:
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


class StorageManager:
    """Multiplexes the per-tag stores behind one id-addressed interface."""

    def __init__(self, path: str, layout: NodeLayout, config: Optional[StorageConfig] = None,
                 _manifest: Optional[dict] = None):
        self.path = path
        self.layout = layout
        self.config = config or StorageConfig()
        self._lock = threading.RLock()
        self._files: dict[int, object] = {}
        self._closed = False
        self.fail_points: set[str] = set()
        self.reads = 0
        self.writes = 0
        self.bytes_written = 0
        self.write_counts: Counter = Counter()
        if _manifest is None:
            self.generation = 0
            self.meta: dict = {}
            self.stores = {t: NodeFileStore(t, info.record_size) for t, info in layout.tags.items()}
        else:
            self.generation = _manifest["generation"]
            self.meta = _manifest["meta"]
            self.stores = {}
            for t, info in layout.tags.items():
                data = _manifest["stores"].get(str(t))
                if data is None:
                    self.stores[t] = NodeFileStore(t, info.record_size)
                    self.stores[t].mark_checkpoint()
                else:
                    if data["record_size"] != info.record_size:
                        raise CorruptionError(f"tag {t}: record size mismatch with layout")
                    self.stores[t] = NodeFileStore.from_dict(t, data)
        self._undo_fd = -1
        self._undo_written = 0
        self._undo_synced = 0
        self._buffer = None
        if self.config.flush_workers > 0:
            self._buffer = FlushBuffer(self._sink, self.config.flush_workers, self.config.flush_capacity)

    # -- construction ----------------------------------------------------------

    @classmethod
    def create(cls, path: str, layout: NodeLayout, config: Optional[StorageConfig] = None,
               meta: Optional[dict] = None) -> "StorageManager":
        os.makedirs(path, exist_ok=True)
        if os.path.exists(os.path.join(path, MANIFEST)):
            raise InvalidArgument(f"{path} already holds a database")
        store = cls(path, layout, config)
        store.meta = dict(meta or {})
        store._publish()
        for s in store.stores.values():
            s.mark_checkpoint()
        return store

    @classmethod
    def read_manifest(cls, path: str) -> dict:
        try:
            with open(os.path.join(path, MANIFEST)) as fh:
                manifest = json.load(fh)
        except FileNotFoundError:
            raise NotFound(f"no manifest in {path}") from None
        except (OSError, ValueError) as exc:
            raise CorruptionError(f"unreadable manifest in {path}: {exc}") from exc
        body = {k: v for k, v in manifest.items() if k != "checksum"}
        if manifest.get("checksum") != _checksum(body):
            raise CorruptionError("manifest checksum mismatch")
        if manifest.get("format") != FORMAT_VERSION:
            raise CorruptionError(f"unsupported format version {manifest.get('format')}")
        return manifest

    @classmethod
    def open(cls, path: str, config: Optional[StorageConfig] = None) -> "StorageManager":
        manifest = cls.read_manifest(path)
        layout = NodeLayout.from_dict(manifest["layout"])
        store = cls(path, layout, config, _manifest=manifest)
        store._recover()
        return store

    def _data_path(self, tag: int) -> str:
        return os.path.join(self.path, f"nodes-{tag}.dat")

    def _undo_path(self, generation: int) -> str:
        return os.path.join(self.path, f"undo-{generation}.log")

    def _file(self, tag: int, create: bool = True):
        f = self._files.get(tag)
        if f is None:
            with self._lock:
                f = self._files.get(tag)
                if f is None:
                    p = self._data_path(tag)
                    if not create and not os.path.exists(p):
                        return None
                    f = PositionalFile(p)
                    if self.config.page_cache_pages:
                        f = PageCache(f, self.config.page_cache_pages)
                    self._files[tag] = f
        return f

    def _recover(self) -> None:
        """Undo post-checkpoint overwrites and trim files to the checkpointed length."""
        undo = self._undo_path(self.generation)
        if os.path.exists(undo):
            with open(undo, "rb") as fh:
                data = fh.read()
            pos = 0
            entries = []
            while pos + _UNDO_HEAD.size <= len(data):
                node_id, length, crc = _UNDO_HEAD.unpack_from(data, pos)
                body = data[pos + _UNDO_HEAD.size:pos + _UNDO_HEAD.size + length]
                if len(body) < length or zlib.crc32(body) != crc:
                    break  # torn tail: its data write never started
                entries.append((node_id, body))
                pos += _UNDO_HEAD.size + length
            for node_id, body in entries:
                tag = id_tag(node_id)
                self._file(tag).write_at(id_index(node_id) * self.stores[tag].record_size, body)
        for tag, store in self.stores.items():
            f = self._file(tag, create=False)
            if f is not None:
                f.truncate(store.next_index * store.record_size)
                f.sync()
        for name in os.listdir(self.path):
            if name.startswith("undo-") or name.endswith(".tmp"):
                os.remove(os.path.join(self.path, name))

    # -- slot operations ---------------------------------------------------------

    def _check_open(self) -> None:
        if self._closed:
            raise StorageError("store is closed")

    def _store(self, tag: int) -> NodeFileStore:
        store = self.stores.get(tag)
        if store is None:
            raise InvalidArgument(f"unknown tag {tag}")
        return store

    def allocate(self, tag: int) -> int:
        self._check_open()
        with self._lock:
            return make_id(tag, self._store(tag).allocate())

    def is_allocated(self, node_id: int) -> bool:
        store = self.stores.get(id_tag(node_id))
        return store is not None and store.is_allocated(id_index(node_id))

    def record_size(self, node_id: int) -> int:
        return self._store(id_tag(node_id)).record_size

    def write(self, node_id: int, record: bytes) -> None:
        self._check_open()
        tag, idx = id_tag(node_id), id_index(node_id)
        store = self._store(tag)
        if len(record) != store.record_size:
            raise InvalidArgument(f"record for tag {tag} must be {store.record_size} bytes, got {len(record)}")
        with self._lock:
            if not store.is_allocated(idx):
                raise InvalidArgument(f"write to unallocated id {tag}:{idx}")
            if store.protected(idx):
                self._log_undo(node_id, store)
            store.unwritten.discard(idx)
            self.writes += 1
            self.bytes_written += len(record)
            if self.config.track_writes:
                self.write_counts[node_id] += 1
            undo_mark = self._undo_written
        if self._buffer is not None:
            self._buffer.put(node_id, bytes(record))
        else:
            self._sink(node_id, record, undo_mark)

    def _sink(self, node_id: int, record: bytes, undo_mark: Optional[int] = None) -> None:
        if self.config.sync and self._undo_written > self._undo_synced:
            with self._lock:
                if self._undo_fd >= 0 and self._undo_written > self._undo_synced:
                    os.fsync(self._undo_fd)
                    self._undo_synced = self._undo_written
        tag = id_tag(node_id)
        self._file(tag).write_at(id_index(node_id) * self.stores[tag].record_size, record)

    def _log_undo(self, node_id: int, store: NodeFileStore) -> None:
        idx = id_index(node_id)
        old = self._file(store.tag).read_at(idx * store.record_size, store.record_size)
        if self._undo_fd < 0:
            self._undo_fd = os.open(self._undo_path(self.generation), os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
        os.write(self._undo_fd, _UNDO_HEAD.pack(node_id, len(old), zlib.crc32(old)) + old)
        self._undo_written += 1
        store.logged.add(idx)

    def read(self, node_id: int) -> bytes:
        self._check_open()
        tag, idx = id_tag(node_id), id_index(node_id)
        store = self._store(tag)
        if not store.is_allocated(idx) or idx in store.unwritten:
            raise NotFound(f"no record for id {tag}:{idx}")
        self.reads += 1
        if self._buffer is not None:
            data = self._buffer.get(node_id)
            if data is not None:
                return data
        return self._file(tag).read_at(idx * store.record_size, store.record_size)

    def free(self, node_id: int) -> None:
        self._check_open()
        tag, idx = id_tag(node_id), id_index(node_id)
        # a queued write of the old record still lands, so the slot's bytes do not depend on flush timing
        with self._lock:
            self._store(tag).free(idx)

    # -- durability -----------------------------------------------------------------

    def drain(self) -> None:
        if self._buffer is not None:
            self._buffer.drain()

    def flush(self) -> None:
        self.drain()
        for f in list(self._files.values()):
            f.flush()
            if self.config.sync:
                f.sync()

    def checkpoint(self, meta: dict) -> int:
        """Drain, flush, and atomically publish a new manifest.  Returns its generation."""
        self._check_open()
        self.flush()
        if "after-data-flush" in self.fail_points:
            raise StorageError("injected abort between data flush and manifest publish")
        with self._lock:
            old_generation = self.generation
            self.meta = dict(meta)
            self.generation += 1
            try:
                self._publish()
            except BaseException:
                self.generation = old_generation
                raise
            for s in self.stores.values():
                s.mark_checkpoint()
            if self._undo_fd >= 0:
                os.close(self._undo_fd)
                self._undo_fd = -1
            self._undo_written = self._undo_synced = 0
            try:
                os.remove(self._undo_path(old_generation))
            except FileNotFoundError:
                pass
        return self.generation

    def _publish(self) -> None:
        body = {
            "format": FORMAT_VERSION,
            "generation": self.generation,
            "layout": self.layout.to_dict(),
            "meta": self.meta,
            "stores": {str(t): s.to_dict() for t, s in self.stores.items() if s.next_index},
        }
        manifest = dict(body, checksum=_checksum(body))
        tmp = os.path.join(self.path, MANIFEST + ".tmp")
        with open(tmp, "w") as fh:
            json.dump(manifest, fh, sort_keys=True)
            fh.flush()
            if self.config.sync:
                os.fsync(fh.fileno())
        if "before-manifest-rename" in self.fail_points:
            raise StorageError("injected abort before manifest rename")
        os.replace(tmp, os.path.join(self.path, MANIFEST))
        if self.config.sync:
            dfd = os.open(self.path, os.O_RDONLY)
            try:
                os.fsync(dfd)
            finally:
                os.close(dfd)

    def close(self) -> None:
        if self._closed:
            return
        try:
            if self._buffer is not None:
                self._buffer.close()
            for f in self._files.values():
                f.close()
        finally:
            if self._undo_fd >= 0:
                os.close(self._undo_fd)
                self._undo_fd = -1
            self._closed = True

    # -- accounting -------------------------------------------------------------------

    def file_bytes(self) -> dict[int, int]:
        """On-disk size of every data file that exists, per tag."""
        self.drain()
        out = {}
        for tag in self.stores:
            f = self._file(tag, create=False)
            if f is not None:
                f.flush()
                out[tag] = f.size()
        return out

    def slot_counts(self) -> dict[int, tuple[int, int, int]]:
        """Per tag: (total, used, reusable) record slots."""
        return {t: (s.next_index, s.used, len(s.free_set)) for t, s in self.stores.items() if s.next_index}

    def reset_write_counts(self) -> None:
        self.write_counts.clear()

    def corrupt_record(self, node_id: int, offset: int, xor: int = 0x01) -> None:
        """Test hook: flip bits of one persisted byte, bypassing all bookkeeping."""
        self.drain()
        tag, idx = id_tag(node_id), id_index(node_id)
        f = self._file(tag)
        pos = idx * self.stores[tag].record_size + offset
        b = f.read_at(pos, 1)
        f.write_at(pos, bytes([b[0] ^ xor]))
