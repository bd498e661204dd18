"""Node variants, 8-byte node identifiers, and fixed-size record codecs.

Record layouts (all integers little-endian, unused capacity zero-filled):

* ``Inner_c`` sparse (c < 256): commitment[32] | count u8 | c x (child_byte u8, child_id u64)
* ``Inner_256`` dense: commitment[32] | presence bitmap[32] | 256 x child_id u64
* ``Leaf_c`` sparse (c < 256): stem[31] | commitment[32] | count u8 | c x (suffix u8, value[32])
* ``Leaf_256`` dense: stem[31] | commitment[32] | presence bitmap[32] | 256 x value[32]
* delta record of class c: commitment[32] | count u16 | base_id u64 | c x (slot u8, payload[32])

The delta payload of an inner node is the child id (u64) padded to 32 bytes;
a zero id removes the child.  The leaf commitment persisted is ``C_ext``;
``C1``/``C2`` live in memory only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Union

from .commitment.groups import Element, GroupBackend
from .errors import CorruptionError, DecodeError, EncodeError, InvalidArgument

WIDTH = 256
TAG_BITS = 8
INDEX_BITS = 56
INDEX_MASK = (1 << INDEX_BITS) - 1
NULL_ID = 0

ID_BYTES = 8
COMMITMENT_BYTES = 32
STEM_BYTES = 31
VALUE_BYTES = 32
BITMAP_BYTES = WIDTH // 8
DELTA_ENTRY_BYTES = 1 + VALUE_BYTES

INNER = "inner"
LEAF = "leaf"
DELTA_INNER = "delta-inner"
DELTA_LEAF = "delta-leaf"
BASE_KINDS = (INNER, LEAF)

DEFAULT_INNER_CAPACITIES = (9, 15, 21, 256)
DEFAULT_LEAF_CAPACITIES = (1, 2, 5, 18, 146, 256)
DENSE_ONLY_CAPACITIES = (256,)
DEFAULT_TAU = 128
DELTA_SIZE_CLASSES = (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256)

NodeId = int


def make_id(tag: int, index: int) -> NodeId:
    if not 1 <= tag < (1 << TAG_BITS):
        raise InvalidArgument(f"tag {tag} out of range")
    if not 0 <= index <= INDEX_MASK:
        raise InvalidArgument(f"index {index} out of range")
    return (tag << INDEX_BITS) | index


def id_tag(node_id: NodeId) -> int:
    return node_id >> INDEX_BITS


def id_index(node_id: NodeId) -> int:
    return node_id & INDEX_MASK


def format_id(node_id: NodeId) -> str:
    if node_id == NULL_ID:
        return "null"
    return f"{id_tag(node_id)}:{id_index(node_id)}"


# -- sizes -----------------------------------------------------------------------

def inner_record_size(capacity: int) -> int:
    if capacity == WIDTH:
        return COMMITMENT_BYTES + BITMAP_BYTES + WIDTH * ID_BYTES
    return COMMITMENT_BYTES + 1 + capacity * (1 + ID_BYTES)


def leaf_record_size(capacity: int) -> int:
    if capacity == WIDTH:
        return STEM_BYTES + COMMITMENT_BYTES + BITMAP_BYTES + WIDTH * VALUE_BYTES
    return STEM_BYTES + COMMITMENT_BYTES + 1 + capacity * (1 + VALUE_BYTES)


def delta_size(m: int) -> int:
    """Bytes of the base reference plus ``m`` changed slots."""
    if m < 0:
        raise InvalidArgument("delta size must be non-negative")
    return ID_BYTES + m * DELTA_ENTRY_BYTES


DELTA_HEADER_BYTES = COMMITMENT_BYTES + 2


def delta_record_size(capacity: int) -> int:
    return DELTA_HEADER_BYTES + delta_size(capacity)


def record_size_for(kind: str, capacity: int) -> int:
    if kind == INNER:
        return inner_record_size(capacity)
    if kind == LEAF:
        return leaf_record_size(capacity)
    if kind in (DELTA_INNER, DELTA_LEAF):
        return delta_record_size(capacity)
    raise InvalidArgument(f"unknown node kind {kind!r}")


def space_function(kind: str) -> list[int]:
    """Record bytes of specialization ``i`` for ``i = 1..256`` (sparse below 256, dense at 256)."""
    return [record_size_for(kind, i) for i in range(1, WIDTH + 1)]


def sparse_dense_crossover(kind: str) -> int:
    """Smallest capacity whose sparse record is larger than the dense record."""
    dense = record_size_for(kind, WIDTH)
    for i in range(1, WIDTH):
        if record_size_for(kind, i) > dense:
            return i
    return WIDTH


def delta_classes(tau: int) -> tuple[int, ...]:
    if not 1 <= tau <= WIDTH:
        raise InvalidArgument("tau must lie in [1, 256]")
    return tuple(sorted({c for c in DELTA_SIZE_CLASSES if c <= tau} | {tau}))


# -- layout table ------------------------------------------------------------------

@dataclass(frozen=True)
class TagInfo:
    tag: int
    kind: str
    capacity: int
    record_size: int

    @property
    def dense(self) -> bool:
        return self.kind in BASE_KINDS and self.capacity == WIDTH

    @property
    def is_delta(self) -> bool:
        return self.kind in (DELTA_INNER, DELTA_LEAF)

    @property
    def base_kind(self) -> str:
        return INNER if self.kind in (INNER, DELTA_INNER) else LEAF


def _normalize_caps(caps: Iterable[int], what: str) -> tuple[int, ...]:
    out = tuple(sorted(set(int(c) for c in caps)))
    if not out or out[0] < 1 or out[-1] != WIDTH:
        raise InvalidArgument(f"{what} capacities must lie in [1, 256] and include 256")
    return out


class NodeLayout:
    """Tag assignment for one database: base specializations first, then delta classes."""

    def __init__(self, inner_capacities=DEFAULT_INNER_CAPACITIES,
                 leaf_capacities=DEFAULT_LEAF_CAPACITIES, tau: int = DEFAULT_TAU):
        self.inner_capacities = _normalize_caps(inner_capacities, "inner")
        self.leaf_capacities = _normalize_caps(leaf_capacities, "leaf")
        self.tau = tau
        self.delta_capacities = delta_classes(tau)
        self.tags: dict[int, TagInfo] = {}
        self._by_kind: dict[str, list[TagInfo]] = {k: [] for k in (INNER, LEAF, DELTA_INNER, DELTA_LEAF)}
        groups = [
            (INNER, self.inner_capacities),
            (LEAF, self.leaf_capacities),
            (DELTA_INNER, self.delta_capacities),
            (DELTA_LEAF, self.delta_capacities),
        ]
        tag = 1
        for kind, caps in groups:
            for cap in caps:
                if tag >= 1 << TAG_BITS:
                    raise InvalidArgument("too many specializations for an 8-bit tag")
                info = TagInfo(tag, kind, cap, record_size_for(kind, cap))
                self.tags[tag] = info
                self._by_kind[kind].append(info)
                tag += 1
        # occupancy -> tag lookup tables
        self._required = {}
        for kind in self._by_kind:
            table = [0] * (WIDTH + 1)
            infos = self._by_kind[kind]
            pos = 0
            for occ in range(1, infos[-1].capacity + 1):
                while infos[pos].capacity < occ:
                    pos += 1
                table[occ] = infos[pos].tag
            self._required[kind] = table

    def info(self, tag: int) -> TagInfo:
        try:
            return self.tags[tag]
        except KeyError:
            raise CorruptionError(f"unknown node tag {tag}") from None

    def info_for_id(self, node_id: NodeId) -> TagInfo:
        return self.info(id_tag(node_id))

    def kind_tags(self, kind: str) -> list[TagInfo]:
        return list(self._by_kind[kind])

    def required_tag(self, kind: str, occupancy: int) -> int:
        """Smallest specialization of ``kind`` whose capacity covers ``occupancy``."""
        if occupancy == 0:
            raise InvalidArgument("empty nodes are deleted, not stored")
        if not 1 <= occupancy <= WIDTH:
            raise InvalidArgument(f"occupancy {occupancy} out of range")
        return self._required[kind][occupancy]

    def delta_tag(self, kind: str, m: int) -> int:
        dkind = DELTA_INNER if kind == INNER else DELTA_LEAF
        if not 1 <= m <= self.tau:
            raise InvalidArgument(f"delta of {m} slots exceeds tau={self.tau}")
        return self._required[dkind][m]

    def to_dict(self) -> dict:
        return {
            "inner_capacities": list(self.inner_capacities),
            "leaf_capacities": list(self.leaf_capacities),
            "tau": self.tau,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NodeLayout":
        return cls(data["inner_capacities"], data["leaf_capacities"], data["tau"])

    def describe(self) -> list[str]:
        return [f"tag {t.tag:3d}  {t.kind:<11} cap {t.capacity:3d}  {t.record_size:5d} bytes"
                for t in self.tags.values()]


# -- in-memory nodes ---------------------------------------------------------------------

class InnerNode:
    """256-ary branch.  ``children`` maps child byte -> NodeId."""

    __slots__ = ("children", "commitment", "base", "delta", "pending", "scalar")
    kind = INNER

    def __init__(self, children: Optional[dict] = None, commitment: Element = None):
        self.children: dict[int, NodeId] = dict(children or {})
        self.commitment = commitment
        self.base: NodeId = NULL_ID  # base node when persisted as a delta
        self.delta: set[int] = set()
        self.pending: Optional[dict[int, int]] = None  # slot -> child scalar at block start
        self.scalar: Optional[int] = None

    @property
    def occupancy(self) -> int:
        return len(self.children)

    @property
    def slots(self) -> dict:
        return self.children

    def copy(self) -> "InnerNode":
        n = InnerNode(self.children, self.commitment)
        n.base, n.delta, n.scalar = self.base, set(self.delta), self.scalar
        return n

    def same_content(self, other) -> bool:
        return isinstance(other, InnerNode) and self.children == other.children

    def __repr__(self) -> str:
        return f"InnerNode({len(self.children)} children, base={format_id(self.base)})"


class LeafNode:
    """Extension node for one 31-byte stem holding up to 256 values."""

    __slots__ = ("stem", "values", "commitment", "c1", "c2", "base", "delta", "pending", "scalar")
    kind = LEAF

    def __init__(self, stem: bytes, values: Optional[dict] = None, commitment: Element = None):
        if len(stem) != STEM_BYTES:
            raise InvalidArgument("stem must be 31 bytes")
        self.stem = bytes(stem)
        self.values: dict[int, bytes] = dict(values or {})
        self.commitment = commitment
        self.c1 = None  # suffix commitments, memory only
        self.c2 = None
        self.base: NodeId = NULL_ID
        self.delta: set[int] = set()
        self.pending: Optional[dict[int, Optional[bytes]]] = None  # suffix -> value at block start
        self.scalar: Optional[int] = None

    @property
    def occupancy(self) -> int:
        return len(self.values)

    @property
    def slots(self) -> dict:
        return self.values

    def copy(self) -> "LeafNode":
        n = LeafNode(self.stem, self.values, self.commitment)
        n.c1, n.c2 = self.c1, self.c2
        n.base, n.delta, n.scalar = self.base, set(self.delta), self.scalar
        return n

    def same_content(self, other) -> bool:
        return isinstance(other, LeafNode) and self.stem == other.stem and self.values == other.values

    def __repr__(self) -> str:
        return f"LeafNode({self.stem[:4].hex()}.., {len(self.values)} values, base={format_id(self.base)})"


Node = Union[InnerNode, LeafNode]


@dataclass
class DeltaRecord:
    """Decoded on-disk delta: base reference plus changed slots (raw 32-byte payloads)."""

    kind: str
    base: NodeId
    commitment: Element
    entries: dict[int, bytes]


# -- codecs ---------------------------------------------------------------------------------

def _bitmap(slots: Iterable[int]) -> bytes:
    bits = 0
    for s in slots:
        bits |= 1 << s
    return bits.to_bytes(BITMAP_BYTES, "little")


def _bitmap_slots(data: bytes) -> list[int]:
    bits = int.from_bytes(data, "little")
    return [i for i in range(WIDTH) if bits >> i & 1]


def _check_slot(slot: int) -> None:
    if not 0 <= slot < WIDTH:
        raise EncodeError(f"slot {slot} out of range")


def encode_node(node: Node, info: TagInfo, backend: GroupBackend) -> bytes:
    """Fixed-size record for ``node`` under tag ``info``."""
    if node.commitment is None:
        raise EncodeError("node commitment not computed")
    commitment = backend.serialize(node.commitment)
    if info.is_delta:
        out = _encode_delta(node, info, commitment)
    elif info.kind == INNER:
        out = _encode_inner(node, info, commitment)
    else:
        out = _encode_leaf(node, info, commitment)
    assert len(out) == info.record_size
    return out


def _encode_inner(node: Node, info: TagInfo, commitment: bytes) -> bytes:
    if not isinstance(node, InnerNode):
        raise EncodeError(f"tag {info.tag} holds inner nodes")
    items = sorted(node.children.items())
    if len(items) > info.capacity:
        raise EncodeError(f"{len(items)} children exceed capacity {info.capacity}")
    if info.dense:
        ids = bytearray(WIDTH * ID_BYTES)
        for slot, child in items:
            _check_slot(slot)
            ids[slot * ID_BYTES:(slot + 1) * ID_BYTES] = child.to_bytes(ID_BYTES, "little")
        return commitment + _bitmap(s for s, _ in items) + bytes(ids)
    body = bytearray()
    for slot, child in items:
        _check_slot(slot)
        body.append(slot)
        body += child.to_bytes(ID_BYTES, "little")
    body += bytes((info.capacity - len(items)) * (1 + ID_BYTES))
    return commitment + bytes([len(items)]) + bytes(body)


def _encode_leaf(node: Node, info: TagInfo, commitment: bytes) -> bytes:
    if not isinstance(node, LeafNode):
        raise EncodeError(f"tag {info.tag} holds leaf nodes")
    items = sorted(node.values.items())
    if len(items) > info.capacity:
        raise EncodeError(f"{len(items)} values exceed capacity {info.capacity}")
    if info.dense:
        vals = bytearray(WIDTH * VALUE_BYTES)
        for slot, value in items:
            _check_slot(slot)
            vals[slot * VALUE_BYTES:(slot + 1) * VALUE_BYTES] = value
        return node.stem + commitment + _bitmap(s for s, _ in items) + bytes(vals)
    body = bytearray()
    for slot, value in items:
        _check_slot(slot)
        if len(value) != VALUE_BYTES:
            raise EncodeError("values must be 32 bytes")
        body.append(slot)
        body += value
    body += bytes((info.capacity - len(items)) * DELTA_ENTRY_BYTES)
    return node.stem + commitment + bytes([len(items)]) + bytes(body)


def delta_payload(node: Node, slot: int) -> bytes:
    if isinstance(node, InnerNode):
        return node.children.get(slot, NULL_ID).to_bytes(ID_BYTES, "little") + bytes(VALUE_BYTES - ID_BYTES)
    value = node.values.get(slot)
    if value is None:
        raise EncodeError(f"leaf delta cannot express removal of slot {slot}")
    return value


def _encode_delta(node: Node, info: TagInfo, commitment: bytes) -> bytes:
    if info.base_kind != node.kind:
        raise EncodeError(f"tag {info.tag} holds {info.base_kind} deltas")
    if node.base == NULL_ID:
        raise EncodeError("delta node without a base")
    slots = sorted(node.delta)
    if len(slots) > info.capacity:
        raise EncodeError(f"{len(slots)} delta slots exceed capacity {info.capacity}")
    body = bytearray()
    for slot in slots:
        _check_slot(slot)
        body.append(slot)
        body += delta_payload(node, slot)
    body += bytes((info.capacity - len(slots)) * DELTA_ENTRY_BYTES)
    head = commitment + len(slots).to_bytes(2, "little") + node.base.to_bytes(ID_BYTES, "little")
    return head + bytes(body)


def _decode_commitment(data: bytes, backend: GroupBackend) -> Element:
    try:
        return backend.deserialize(data)
    except DecodeError as exc:
        raise CorruptionError(f"bad commitment encoding: {exc}") from None


def _sparse_entries(data: bytes, count: int, capacity: int, width: int, tag: int) -> list[tuple[int, bytes]]:
    if count > capacity:
        raise CorruptionError(f"tag {tag}: count {count} exceeds capacity {capacity}")
    out = []
    prev = -1
    step = 1 + width
    for j in range(count):
        off = j * step
        slot = data[off]
        if slot <= prev:
            raise CorruptionError(f"tag {tag}: entries not strictly sorted")
        prev = slot
        out.append((slot, data[off + 1:off + step]))
    return out


def decode_record(info: TagInfo, data: bytes, backend: GroupBackend, layout: Optional[NodeLayout] = None):
    """Decode a record: base tags give a node, delta tags a :class:`DeltaRecord`."""
    if len(data) != info.record_size:
        raise DecodeError(f"tag {info.tag}: expected {info.record_size} bytes, got {len(data)}")
    data = bytes(data)
    if info.is_delta:
        commitment = _decode_commitment(data[:COMMITMENT_BYTES], backend)
        count = int.from_bytes(data[32:34], "little")
        base = int.from_bytes(data[34:42], "little")
        if base == NULL_ID:
            raise CorruptionError("delta record without base")
        if layout is not None and layout.info(id_tag(base)).is_delta:
            raise CorruptionError("delta record references another delta")
        entries = dict(_sparse_entries(data[42:], count, info.capacity, VALUE_BYTES, info.tag))
        return DeltaRecord(info.base_kind, base, commitment, entries)
    if info.kind == INNER:
        commitment = _decode_commitment(data[:COMMITMENT_BYTES], backend)
        node = InnerNode(commitment=commitment)
        if info.dense:
            ids = data[64:]
            for slot in _bitmap_slots(data[32:64]):
                node.children[slot] = int.from_bytes(ids[slot * 8:slot * 8 + 8], "little")
        else:
            for slot, raw in _sparse_entries(data[33:], data[32], info.capacity, ID_BYTES, info.tag):
                node.children[slot] = int.from_bytes(raw, "little")
        if any(c == NULL_ID for c in node.children.values()):
            raise CorruptionError(f"tag {info.tag}: null child id in occupied slot")
        return node
    stem = data[:STEM_BYTES]
    commitment = _decode_commitment(data[31:63], backend)
    node = LeafNode(stem, commitment=commitment)
    if info.dense:
        vals = data[95:]
        for slot in _bitmap_slots(data[63:95]):
            node.values[slot] = vals[slot * 32:slot * 32 + 32]
    else:
        node.values.update(_sparse_entries(data[64:], data[63], info.capacity, VALUE_BYTES, info.tag))
    return node


def materialize(record: DeltaRecord, base: Node, base_id: Optional[NodeId] = None) -> Node:
    """Full view of a delta: a copy of the base with the changed slots patched."""
    if record.kind != base.kind:
        raise CorruptionError(f"{record.kind} delta over a {base.kind} base")
    if base_id is not None and base_id != record.base:
        raise CorruptionError("delta base id mismatch")
    if isinstance(base, InnerNode):
        node = InnerNode(base.children, record.commitment)
        for slot, payload in record.entries.items():
            child = int.from_bytes(payload[:ID_BYTES], "little")
            if child == NULL_ID:
                node.children.pop(slot, None)
            else:
                node.children[slot] = child
    else:
        node = LeafNode(base.stem, base.values, record.commitment)
        node.values.update(record.entries)
    node.base = record.base
    node.delta = set(record.entries)
    return node
