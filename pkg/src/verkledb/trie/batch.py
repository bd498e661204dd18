"""Stage-1 batch assembly and stage-2 linear-scan partitioning."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from ..errors import InvalidArgument

KEY_BYTES = 32
Mutation = tuple[bytes, Optional[bytes]]  # (32-byte key, 32-byte value or None to delete)


def check_key(key: bytes) -> bytes:
    if len(key) != KEY_BYTES:
        raise InvalidArgument(f"keys must be {KEY_BYTES} bytes, got {len(key)}")
    return bytes(key)


def check_value(value: Optional[bytes]) -> Optional[bytes]:
    if value is not None and len(value) != 32:
        raise InvalidArgument(f"values must be 32 bytes, got {len(value)}")
    return None if value is None else bytes(value)


@dataclass(frozen=True)
class UpdateBatch:
    """Strictly increasing keys, one write per key."""

    keys: tuple[bytes, ...]
    values: tuple[Optional[bytes], ...]

    def __len__(self) -> int:
        return len(self.keys)

    def __iter__(self):
        return iter(zip(self.keys, self.values))

    def view(self) -> "SubBatch":
        return SubBatch(self, 0, len(self.keys))


def assemble_batch(mutations: Iterable[Mutation]) -> UpdateBatch:
    """Sort by key and keep the last write of every key."""
    last: dict[bytes, Optional[bytes]] = {}
    for key, value in mutations:
        last[check_key(key)] = check_value(value)
    keys = sorted(last)
    return UpdateBatch(tuple(keys), tuple(last[k] for k in keys))


@dataclass(frozen=True)
class SubBatch:
    """Contiguous slice ``[lo, hi)`` of a batch; no keys are copied."""

    batch: UpdateBatch
    lo: int
    hi: int

    def __len__(self) -> int:
        return self.hi - self.lo

    def keys(self) -> Sequence[bytes]:
        return self.batch.keys[self.lo:self.hi]

    def items(self):
        b = self.batch
        for i in range(self.lo, self.hi):
            yield b.keys[i], b.values[i]

    def first_key(self) -> bytes:
        return self.batch.keys[self.lo]

    def single_stem(self) -> bool:
        keys = self.batch.keys
        return keys[self.lo][:31] == keys[self.hi - 1][:31]


def partition(sub: SubBatch, depth: int) -> list[tuple[int, SubBatch]]:
    """Split by the key byte at ``depth`` in one scan; ordered by that byte."""
    keys = sub.batch.keys
    out = []
    start = sub.lo
    while start < sub.hi:
        byte = keys[start][depth]
        end = start + 1
        while end < sub.hi and keys[end][depth] == byte:
            end += 1
        out.append((byte, SubBatch(sub.batch, start, end)))
        start = end
    return out
