"""Cursor-independent file access and an optional write-back page cache."""

from __future__ import annotations

import os
import threading
from collections import OrderedDict

from ..errors import InvalidArgument, StorageError

PAGE_SIZE = 4096
_STRIPES = 64


class PositionalFile:
    """``pread``/``pwrite`` wrapper with striped range locks.

    Accesses to disjoint page ranges proceed in parallel; overlapping ones are
    serialized, so no reader ever observes a torn record.
    """

    def __init__(self, path: str, create: bool = True):
        self.path = path
        flags = os.O_RDWR | (os.O_CREAT if create else 0)
        try:
            self.fd = os.open(path, flags, 0o644)
        except OSError as exc:
            raise StorageError(f"cannot open {path}: {exc}") from exc
        self._stripes = [threading.Lock() for _ in range(_STRIPES)]
        self._count_lock = threading.Lock()
        self.reads = 0
        self.writes = 0

    def _locks(self, offset: int, length: int):
        first = offset // PAGE_SIZE
        last = (offset + max(length, 1) - 1) // PAGE_SIZE
        ids = sorted({p % _STRIPES for p in range(first, last + 1)})
        return [self._stripes[i] for i in ids]

    def read_at(self, offset: int, length: int) -> bytes:
        if offset < 0 or length < 0:
            raise InvalidArgument("negative offset or length")
        locks = self._locks(offset, length)
        for lk in locks:
            lk.acquire()
        try:
            data = os.pread(self.fd, length, offset)
        except OSError as exc:
            raise StorageError(f"read of {length} bytes at {self.path}+{offset} failed: {exc}") from exc
        finally:
            for lk in reversed(locks):
                lk.release()
        with self._count_lock:
            self.reads += 1
        if len(data) < length:
            data += bytes(length - len(data))
        return data

    def write_at(self, offset: int, data: bytes) -> None:
        if offset < 0:
            raise InvalidArgument("negative offset")
        locks = self._locks(offset, len(data))
        for lk in locks:
            lk.acquire()
        try:
            written = os.pwrite(self.fd, data, offset)
            if written != len(data):
                raise StorageError(f"short write at {self.path}+{offset}")
        except OSError as exc:
            raise StorageError(f"write of {len(data)} bytes at {self.path}+{offset} failed: {exc}") from exc
        finally:
            for lk in reversed(locks):
                lk.release()
        with self._count_lock:
            self.writes += 1

    def size(self) -> int:
        return os.fstat(self.fd).st_size

    def truncate(self, length: int) -> None:
        os.ftruncate(self.fd, length)

    def sync(self) -> None:
        try:
            os.fsync(self.fd)
        except OSError as exc:
            raise StorageError(f"fsync of {self.path} failed: {exc}") from exc

    def flush(self) -> None:
        pass

    def close(self) -> None:
        if self.fd >= 0:
            os.close(self.fd)
            self.fd = -1


class PageCache:
    """LRU cache of 4 KiB pages in front of a :class:`PositionalFile`.

    Dirty pages are written back on eviction and on :meth:`flush`.  Hits never
    touch the underlying file.
    """

    def __init__(self, inner: PositionalFile, capacity_pages: int = 256):
        if capacity_pages < 1:
            raise InvalidArgument("page cache needs at least one page")
        self.inner = inner
        self.path = inner.path
        self.capacity = capacity_pages
        self._pages: OrderedDict[int, bytearray] = OrderedDict()
        self._dirty: set[int] = set()
        self._lock = threading.Lock()
        self._length = inner.size()
        self.hits = 0
        self.misses = 0

    def _page(self, no: int) -> bytearray:
        page = self._pages.get(no)
        if page is not None:
            self._pages.move_to_end(no)
            self.hits += 1
            return page
        self.misses += 1
        if no * PAGE_SIZE < self._length:
            page = bytearray(self.inner.read_at(no * PAGE_SIZE, PAGE_SIZE))
        else:
            page = bytearray(PAGE_SIZE)
        self._pages[no] = page
        while len(self._pages) > self.capacity:
            old, data = self._pages.popitem(last=False)
            if old in self._dirty:
                self._write_back(old, data)
        return page

    def _write_back(self, no: int, data: bytearray) -> None:
        start = no * PAGE_SIZE
        end = min(start + PAGE_SIZE, self._length)
        if end > start:
            self.inner.write_at(start, bytes(data[: end - start]))
        self._dirty.discard(no)

    def read_at(self, offset: int, length: int) -> bytes:
        out = bytearray()
        with self._lock:
            pos = offset
            while pos < offset + length:
                no, off = divmod(pos, PAGE_SIZE)
                take = min(PAGE_SIZE - off, offset + length - pos)
                out += self._page(no)[off:off + take]
                pos += take
        return bytes(out)

    def write_at(self, offset: int, data: bytes) -> None:
        with self._lock:
            pos = 0
            self._length = max(self._length, offset + len(data))
            while pos < len(data):
                no, off = divmod(offset + pos, PAGE_SIZE)
                take = min(PAGE_SIZE - off, len(data) - pos)
                page = self._page(no)
                page[off:off + take] = data[pos:pos + take]
                self._dirty.add(no)
                pos += take

    def flush(self) -> None:
        with self._lock:
            for no in sorted(self._dirty):
                self._write_back(no, self._pages[no])

    def size(self) -> int:
        return self._length

    def truncate(self, length: int) -> None:
        with self._lock:
            self._pages.clear()
            self._dirty.clear()
            self._length = length
            self.inner.truncate(length)

    def sync(self) -> None:
        self.flush()
        self.inner.sync()

    def close(self) -> None:
        self.flush()
        self.inner.close()

    @property
    def reads(self) -> int:
        return self.inner.reads

    @property
    def writes(self) -> int:
        return self.inner.writes
