"""Append-only per-height root index (``roots.dat``).

Entry ``h - 1`` holds the root id (u64) and 32-byte root commitment of block
``h``.  Height 0 is the empty genesis state and has no entry.
"""

from __future__ import annotations

import os
import threading

from ..errors import InvalidArgument, StorageError

ENTRY = 8 + 32


class RootIndex:
    def __init__(self, path: str, length: int = 0, sync: bool = True):
        self.path = path
        self.sync = sync
        self._lock = threading.Lock()
        self.fd = os.open(path, os.O_RDWR | os.O_CREAT, 0o644)
        have = os.fstat(self.fd).st_size // ENTRY
        if have < length:
            raise StorageError(f"root index holds {have} entries, manifest expects {length}")
        # entries past the checkpoint belong to blocks lost in a crash
        os.ftruncate(self.fd, length * ENTRY)
        self._entries: list[tuple[int, bytes]] = []
        data = os.pread(self.fd, length * ENTRY, 0)
        for i in range(length):
            chunk = data[i * ENTRY:(i + 1) * ENTRY]
            self._entries.append((int.from_bytes(chunk[:8], "little"), chunk[8:]))

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, root_id: int, commitment: bytes) -> int:
        if len(commitment) != 32:
            raise InvalidArgument("root commitment must be 32 bytes")
        with self._lock:
            os.pwrite(self.fd, root_id.to_bytes(8, "little") + commitment, len(self._entries) * ENTRY)
            self._entries.append((root_id, bytes(commitment)))
            return len(self._entries)

    def get(self, height: int) -> tuple[int, bytes]:
        if not 1 <= height <= len(self._entries):
            raise InvalidArgument(f"no root recorded for height {height}")
        return self._entries[height - 1]

    def truncate(self, length: int) -> None:
        with self._lock:
            del self._entries[length:]
            os.ftruncate(self.fd, length * ENTRY)

    def flush(self) -> None:
        if self.sync:
            os.fsync(self.fd)

    def close(self) -> None:
        if self.fd >= 0:
            os.close(self.fd)
            self.fd = -1
