"""Plain in-memory reference model used as a differential oracle.

State is a dict ``key -> value``; the root commitment is recomputed from
scratch with naive scalar multiplications on every call to :meth:`root`.
Nothing here shares code with the incremental pipeline beyond the group
backend and generator list.
"""

from __future__ import annotations

from typing import Iterable, Optional

from ..commitment.groups import ORDER, GroupBackend


class ReferenceTrie:
    def __init__(self, backend: GroupBackend, generators):
        self.backend = backend
        self.g = list(generators)
        self.data: dict[bytes, bytes] = {}

    def apply(self, mutations: Iterable[tuple[bytes, Optional[bytes]]]) -> None:
        for key, value in mutations:
            if value is None:
                self.data.pop(bytes(key), None)
            else:
                self.data[bytes(key)] = bytes(value)

    def get(self, key: bytes) -> Optional[bytes]:
        return self.data.get(key)

    def _scalar(self, point) -> int:
        return int.from_bytes(self.backend.serialize(point), "little") % ORDER

    def _sum(self, terms) -> object:
        be = self.backend
        acc = be.identity()
        for s, gi in terms:
            if s:
                acc = be.add(acc, be.mul(self.g[gi], s))
        return acc

    def leaf_commitment(self, stem: bytes, values: dict[int, bytes]):
        lo, hi = [], []
        for suffix, v in values.items():
            low = int.from_bytes(v[:16], "little") + (1 << 128)
            high = int.from_bytes(v[16:], "little")
            target = lo if suffix < 128 else hi
            target.append((low, 2 * (suffix % 128)))
            target.append((high, 2 * (suffix % 128) + 1))
        c1, c2 = self._sum(lo), self._sum(hi)
        return self._sum([(1, 0), (int.from_bytes(stem, "little"), 1),
                          (self._scalar(c1), 2), (self._scalar(c2), 3)])

    def root(self):
        stems: dict[bytes, dict[int, bytes]] = {}
        for key, value in self.data.items():
            stems.setdefault(key[:31], {})[key[31]] = value
        ordered = sorted(stems)
        if not ordered:
            return self.backend.identity()
        return self._build(ordered, 0, len(ordered), 0, stems)

    def _build(self, ordered, lo, hi, depth, stems):
        if depth > 0 and hi - lo == 1:
            stem = ordered[lo]
            return self.leaf_commitment(stem, stems[stem])
        terms = []
        start = lo
        while start < hi:
            byte = ordered[start][depth]
            end = start + 1
            while end < hi and ordered[end][depth] == byte:
                end += 1
            child = self._build(ordered, start, end, depth + 1, stems)
            terms.append((self._scalar(child), byte))
            start = end
        return self._sum(terms)

    def root_bytes(self) -> bytes:
        return self.backend.serialize(self.root())
