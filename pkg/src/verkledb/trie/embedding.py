"""Simplified account-state embedding into tree keys.

A stem is derived from ``(address, tree_index)`` by committing to five
scalars on the first five generators ``G_0..G_4``::

    [2 + 256 * 64, address32[0:16], address32[16:32], tree_index[0:16], tree_index[16:32]]

(``address32`` is the 20-byte address left-padded to 32 bytes; halves are
little-endian) and keeping the first 31 bytes of the compressed commitment.

Sub-index assignment:

* account header stem (tree_index 0): 0 version, 1 balance, 2 nonce, 3 code size
* code chunk ``i``: position ``128 + i`` split into ``tree_index = pos // 256``, ``sub = pos % 256``
* storage slot ``s``: ``tree_index = 2**255 + s // 256``, ``sub = s % 256``
"""

from __future__ import annotations

import threading
from typing import Optional

from ..commitment import Pedersen
from ..errors import InvalidArgument

DOMAIN_MARKER = 2 + 256 * 64
VERSION_SUB = 0
BALANCE_SUB = 1
NONCE_SUB = 2
CODE_SIZE_SUB = 3
CODE_OFFSET = 128
STORAGE_OFFSET = 1 << 255
CHUNK_BYTES = 32


def _u256(value: int) -> bytes:
    if not 0 <= value < 1 << 256:
        raise InvalidArgument("value does not fit in 32 bytes")
    return value.to_bytes(32, "little")


class Embedding:
    """Memoizing ``(address, tree_index) -> stem`` map bound to one engine."""

    def __init__(self, pedersen: Pedersen, max_entries: int = 1 << 20):
        self.pedersen = pedersen
        self.max_entries = max_entries
        self._cache: dict[tuple[bytes, int], bytes] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def stem(self, address: bytes, tree_index: int) -> bytes:
        if len(address) != 20:
            raise InvalidArgument("addresses are 20 bytes")
        key = (bytes(address), tree_index)
        with self._lock:
            stem = self._cache.get(key)
            if stem is not None:
                self.hits += 1
                return stem
            self.misses += 1
        addr32 = bytes(12) + address
        idx = _u256(tree_index)
        scalars = [
            DOMAIN_MARKER,
            int.from_bytes(addr32[:16], "little"),
            int.from_bytes(addr32[16:], "little"),
            int.from_bytes(idx[:16], "little"),
            int.from_bytes(idx[16:], "little"),
        ]
        point = self.pedersen.msm(scalars, [0, 1, 2, 3, 4])
        stem = self.pedersen.serialize(point)[:31]
        with self._lock:
            if len(self._cache) >= self.max_entries:
                self._cache.clear()
            self._cache[key] = stem
        return stem

    def tree_key(self, address: bytes, tree_index: int, sub_index: int) -> bytes:
        if not 0 <= sub_index < 256:
            raise InvalidArgument("sub index must be a byte")
        return self.stem(address, tree_index) + bytes([sub_index])

    # -- account conveniences; each returns one (key, value) mutation ---------------

    def set_balance(self, address: bytes, balance: int):
        return self.tree_key(address, 0, BALANCE_SUB), _u256(balance)

    def set_nonce(self, address: bytes, nonce: int):
        return self.tree_key(address, 0, NONCE_SUB), _u256(nonce)

    def set_code_size(self, address: bytes, size: int):
        return self.tree_key(address, 0, CODE_SIZE_SUB), _u256(size)

    def code_chunk_key(self, address: bytes, chunk: int) -> bytes:
        pos = CODE_OFFSET + chunk
        return self.tree_key(address, pos // 256, pos % 256)

    def set_code_chunk(self, address: bytes, chunk: int, data: bytes):
        if len(data) > CHUNK_BYTES:
            raise InvalidArgument("code chunks hold at most 32 bytes")
        return self.code_chunk_key(address, chunk), data.ljust(CHUNK_BYTES, b"\0")

    def set_code(self, address: bytes, code: bytes) -> list:
        """One mutation per 32-byte chunk (the size header is :meth:`set_code_size`)."""
        out = []
        for i in range(0, len(code), CHUNK_BYTES):
            out.append(self.set_code_chunk(address, i // CHUNK_BYTES, code[i:i + CHUNK_BYTES]))
        return out

    def storage_slot_key(self, address: bytes, slot: int) -> bytes:
        if not 0 <= slot < 1 << 256:
            raise InvalidArgument("storage slot out of range")
        return self.tree_key(address, STORAGE_OFFSET + slot // 256, slot % 256)

    def set_storage_slot(self, address: bytes, slot: int, value: Optional[bytes]):
        if value is not None and len(value) != 32:
            raise InvalidArgument("storage values are 32 bytes")
        return self.storage_slot_key(address, slot), value
