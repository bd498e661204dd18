"""Write-behind buffer drained by background threads."""

from __future__ import annotations

import threading
from collections import deque
from typing import Callable, Optional

from ..errors import StorageError

Sink = Callable[[int, bytes], None]


class FlushBuffer:
    """Bounded map ``id -> pending record`` with read-your-writes semantics.

    Ids are sharded over the workers, so all writes of one id are issued by a
    single thread in submission order.  A worker only removes an entry after
    it hit the sink *and* no newer version was queued meanwhile.
    """

    def __init__(self, sink: Sink, workers: int = 1, capacity: int = 4096):
        if workers < 1:
            raise ValueError("flush buffer needs at least one worker")
        self.sink = sink
        self.capacity = capacity
        self._pending: dict[int, tuple[int, bytes]] = {}
        self._seq = 0
        self._lock = threading.Lock()
        self._changed = threading.Condition(self._lock)
        self._queues = [deque() for _ in range(workers)]
        self._queued = [set() for _ in range(workers)]
        self._error: Optional[BaseException] = None
        self._closed = False
        self.drained_writes = 0
        self._threads = [
            threading.Thread(target=self._run, args=(i,), name=f"flush-{i}", daemon=True)
            for i in range(workers)
        ]
        for t in self._threads:
            t.start()

    def __len__(self) -> int:
        with self._lock:
            return len(self._pending)

    def put(self, node_id: int, data: bytes) -> None:
        with self._changed:
            self._raise_pending_error()
            while len(self._pending) >= self.capacity and node_id not in self._pending:
                self._changed.wait()
                self._raise_pending_error()
            self._seq += 1
            self._pending[node_id] = (self._seq, data)
            shard = node_id % len(self._queues)
            if node_id not in self._queued[shard]:
                self._queued[shard].add(node_id)
                self._queues[shard].append(node_id)
            self._changed.notify_all()

    def get(self, node_id: int) -> Optional[bytes]:
        with self._lock:
            entry = self._pending.get(node_id)
            return entry[1] if entry else None

    def drain(self) -> None:
        """Block until every buffered record reached the sink."""
        with self._changed:
            while self._pending and self._error is None:
                self._changed.wait()
            self._raise_pending_error()

    def _raise_pending_error(self) -> None:
        if self._error is not None:
            err = self._error
            raise StorageError(f"background flush failed: {err}") from err

    def _run(self, shard: int) -> None:
        queue, queued = self._queues[shard], self._queued[shard]
        while True:
            with self._changed:
                while not queue and not self._closed:
                    self._changed.wait()
                if not queue and self._closed:
                    return
                node_id = queue.popleft()
                queued.discard(node_id)
                entry = self._pending.get(node_id)
            if entry is None:
                continue
            seq, data = entry
            try:
                self.sink(node_id, data)
            except BaseException as exc:  # surfaced on the next foreground call
                with self._changed:
                    self._error = exc
                    self._changed.notify_all()
                return
            with self._changed:
                current = self._pending.get(node_id)
                if current is not None and current[0] == seq:
                    del self._pending[node_id]
                self.drained_writes += 1
                self._changed.notify_all()

    def close(self) -> None:
        try:
            self.drain()
        finally:
            with self._changed:
                self._closed = True
                self._changed.notify_all()
            for t in self._threads:
                t.join()
