import pytest
from hypothesis import given
from hypothesis import strategies as st

from verkledb.commitment import ModularGroup
from verkledb.errors import CorruptionError, DecodeError, EncodeError, InvalidArgument
from verkledb.nodes import (
    DELTA_INNER,
    DELTA_LEAF,
    INNER,
    LEAF,
    DeltaRecord,
    InnerNode,
    LeafNode,
    NodeLayout,
    decode_record,
    delta_classes,
    delta_record_size,
    delta_size,
    encode_node,
    format_id,
    id_index,
    id_tag,
    inner_record_size,
    leaf_record_size,
    make_id,
    materialize,
    record_size_for,
    sparse_dense_crossover,
)

BE = ModularGroup()


def test_record_sizes():
    assert inner_record_size(1) == 42
    assert inner_record_size(9) == 33 + 81
    assert inner_record_size(256) == 32 + 32 + 2048
    assert leaf_record_size(1) == 97
    assert leaf_record_size(256) == 31 + 32 + 32 + 8192
    assert delta_size(4) == 8 + 132
    assert delta_record_size(4) == 42 + 132
    assert record_size_for(DELTA_LEAF, 4) == delta_record_size(4)
    with pytest.raises(InvalidArgument):
        record_size_for("bogus", 1)


def test_crossovers():
    assert sparse_dense_crossover(INNER) == 232
    assert sparse_dense_crossover(LEAF) == 250


def test_delta_classes():
    assert delta_classes(128) == (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128)
    assert delta_classes(4) == (1, 2, 3, 4)
    assert delta_classes(100) == (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 100)
    with pytest.raises(InvalidArgument):
        delta_classes(0)


def test_id_packing():
    nid = make_id(7, 123456)
    assert (id_tag(nid), id_index(nid)) == (7, 123456)
    assert format_id(nid) == "7:123456"
    with pytest.raises(InvalidArgument):
        make_id(0, 1)
    with pytest.raises(InvalidArgument):
        make_id(256, 1)
    with pytest.raises(InvalidArgument):
        make_id(1, 1 << 56)


def test_layout_tag_order_and_lookup():
    layout = NodeLayout()
    kinds = [layout.info(t).kind for t in sorted(layout.tags)]
    assert kinds[:4] == [INNER] * 4
    assert kinds[4:10] == [LEAF] * 6
    assert set(kinds[10:]) == {DELTA_INNER, DELTA_LEAF}
    assert layout.info(layout.required_tag(INNER, 10)).capacity == 15
    assert layout.info(layout.required_tag(INNER, 22)).capacity == 256
    assert layout.info(layout.required_tag(LEAF, 3)).capacity == 5
    assert layout.info(layout.delta_tag(LEAF, 5)).capacity == 6
    with pytest.raises(InvalidArgument):
        layout.required_tag(INNER, 0)
    with pytest.raises(InvalidArgument):
        layout.delta_tag(INNER, 129)
    with pytest.raises(CorruptionError):
        layout.info(250)
    assert NodeLayout.from_dict(layout.to_dict()).tags == layout.tags


def test_layout_requires_full_capacity():
    with pytest.raises(InvalidArgument):
        NodeLayout(inner_capacities=(9, 15))


def _inner(children):
    return InnerNode(children, commitment=BE.hash_to_element(b"c"))


def _leaf(values):
    return LeafNode(bytes(range(31)), values, commitment=BE.hash_to_element(b"l"))


@pytest.mark.parametrize("cap", [9, 256])
def test_inner_round_trip(cap):
    layout = NodeLayout(inner_capacities=(9, 256))
    tag = next(t for t, i in layout.tags.items() if i.kind == INNER and i.capacity == cap)
    node = _inner({0: make_id(3, 1), 17: make_id(5, 9), 255: make_id(1, 2)})
    data = encode_node(node, layout.info(tag), BE)
    assert len(data) == layout.info(tag).record_size
    back = decode_record(layout.info(tag), data, BE, layout)
    assert back.children == node.children and back.commitment == node.commitment


@pytest.mark.parametrize("cap", [5, 256])
def test_leaf_round_trip(cap):
    layout = NodeLayout(leaf_capacities=(5, 256))
    tag = next(t for t, i in layout.tags.items() if i.kind == LEAF and i.capacity == cap)
    node = _leaf({0: b"a" * 32, 200: b"b" * 32})
    back = decode_record(layout.info(tag), encode_node(node, layout.info(tag), BE), BE, layout)
    assert back.stem == node.stem and back.values == node.values


def test_encode_errors():
    layout = NodeLayout()
    small = layout.info(layout.required_tag(LEAF, 1))
    with pytest.raises(EncodeError):
        encode_node(_leaf({1: b"x" * 32, 2: b"y" * 32}), small, BE)
    with pytest.raises(EncodeError):
        encode_node(_inner({1: make_id(1, 1)}), small, BE)
    with pytest.raises(EncodeError):
        encode_node(LeafNode(bytes(31), {1: b"x" * 32}), small, BE)  # no commitment yet


def test_decode_errors():
    layout = NodeLayout()
    info = layout.info(layout.required_tag(INNER, 2))
    data = bytearray(encode_node(_inner({1: make_id(1, 1), 2: make_id(1, 2)}), info, BE))
    with pytest.raises(DecodeError):
        decode_record(info, bytes(data[:-1]), BE)
    bad = bytearray(data)
    bad[33 + 9] = 0  # second slot byte now below the first
    with pytest.raises(CorruptionError):
        decode_record(info, bytes(bad), BE)
    bad = bytearray(data)
    bad[32] = 200  # count above capacity
    with pytest.raises(CorruptionError):
        decode_record(info, bytes(bad), BE)


def test_inner_delta_round_trip_and_materialize():
    layout = NodeLayout()
    base_id = make_id(layout.required_tag(INNER, 3), 0)
    base = _inner({1: make_id(5, 1), 2: make_id(5, 2), 3: make_id(5, 3)})
    node = base.copy()
    node.children[9] = make_id(5, 9)
    del node.children[2]
    node.base, node.delta = base_id, {2, 9}
    info = layout.info(layout.delta_tag(INNER, 2))
    rec = decode_record(info, encode_node(node, info, BE), BE, layout)
    assert isinstance(rec, DeltaRecord) and rec.base == base_id and set(rec.entries) == {2, 9}
    full = materialize(rec, base, base_id)
    assert full.children == node.children
    assert full.base == base_id and full.delta == {2, 9}


def test_leaf_delta_cannot_remove():
    layout = NodeLayout()
    node = _leaf({1: b"a" * 32})
    node.base, node.delta = make_id(5, 0), {1, 2}
    with pytest.raises(EncodeError):
        encode_node(node, layout.info(layout.delta_tag(LEAF, 2)), BE)


def test_delta_on_delta_is_corruption():
    layout = NodeLayout()
    delta_tag = layout.delta_tag(LEAF, 1)
    node = _leaf({1: b"a" * 32})
    node.base, node.delta = make_id(delta_tag, 0), {1}
    data = encode_node(node, layout.info(delta_tag), BE)
    with pytest.raises(CorruptionError):
        decode_record(layout.info(delta_tag), data, BE, layout)


def test_materialize_kind_mismatch():
    rec = DeltaRecord(LEAF, make_id(1, 0), 0, {})
    with pytest.raises(CorruptionError):
        materialize(rec, _inner({}))


@given(st.dictionaries(st.integers(0, 255), st.binary(min_size=32, max_size=32), min_size=1, max_size=40))
def test_leaf_codec_property(values):
    layout = NodeLayout()
    node = _leaf(values)
    info = layout.info(layout.required_tag(LEAF, len(values)))
    back = decode_record(info, encode_node(node, info, BE), BE, layout)
    assert back.values == values


@given(st.dictionaries(st.integers(0, 255), st.integers(1, (1 << 56) - 1), min_size=1, max_size=256))
def test_inner_codec_property(children):
    layout = NodeLayout()
    ids = {s: make_id(1, v) for s, v in children.items()}
    node = _inner(ids)
    info = layout.info(layout.required_tag(INNER, len(ids)))
    assert decode_record(info, encode_node(node, info, BE), BE, layout).children == ids
