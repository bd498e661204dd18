import threading
import time

import pytest

from verkledb.commitment import ModularGroup
from verkledb.errors import GuardError, InvalidArgument, NotFound
from verkledb.nodemanager import NodeManager
from verkledb.nodes import INNER, LEAF, InnerNode, LeafNode, NodeLayout, make_id
from verkledb.storage import StorageConfig, StorageManager

BE = ModularGroup()


@pytest.fixture
def mgr(tmp_path):
    storage = StorageManager.create(str(tmp_path / "s"), NodeLayout(), StorageConfig(flush_workers=0, sync=False))
    m = NodeManager(storage, BE, capacity=4)
    yield m
    storage.close()


def leaf(tag_fill: int) -> LeafNode:
    return LeafNode(bytes([tag_fill]) * 31, {0: bytes([tag_fill]) * 32}, commitment=BE.hash_to_element(bytes([tag_fill])))


def leaf_tag(m):
    return m.layout.required_tag(LEAF, 1)


def add(m, fill):
    node_id, g = m.create(leaf(fill), leaf_tag(m))
    g.release()
    return node_id


def test_create_persists_on_release(mgr):
    a = add(mgr, 1)
    mgr.drop(a)
    with mgr.get_read(a) as g:
        assert g.node.values[0] == bytes([1]) * 32
    assert mgr.loads == 1


def test_single_instance_per_id(mgr):
    a = add(mgr, 1)
    g1 = mgr.get_read(a)
    g2 = mgr.get_read(a)
    assert g1.node is g2.node
    g1.release()
    g2.release()
    with pytest.raises(GuardError):
        _ = g1.node


def test_eviction_respects_capacity_and_pins(mgr):
    ids = [add(mgr, i) for i in range(1, 5)]
    held = mgr.get_read(ids[0])
    for i in range(5, 12):
        add(mgr, i)
    assert len(mgr) <= mgr.capacity
    assert ids[0] in mgr  # pinned, never evicted
    assert mgr.evictions > 0
    held.release()


def test_pinned_overflow_is_counted(mgr):
    guards = []
    for i in range(1, 7):
        _, g = mgr.create(leaf(i), leaf_tag(mgr))
        guards.append(g)
    assert len(mgr) == 6 and mgr.overflows > 0
    for g in guards:
        g.release()


def test_write_guard_excludes_readers(mgr):
    a = add(mgr, 1)
    w = mgr.get_write(a)
    got = []

    def reader():
        with mgr.get_read(a) as g:
            got.append(g.node.values[0])

    t = threading.Thread(target=reader)
    t.start()
    time.sleep(0.05)
    assert not got  # blocked by the writer
    node = w.node.copy()
    node.values[0] = b"\x09" * 32
    w.replace(node)
    w.release()
    t.join(2)
    assert got == [b"\x09" * 32]


def test_guard_misuse(mgr):
    a = add(mgr, 1)
    w = mgr.get_write(a)
    with pytest.raises(GuardError):
        mgr.get_write(a)
    with pytest.raises(GuardError):
        mgr.get_read(a)
    with pytest.raises(GuardError):
        mgr.delete(a)
    w.release()
    with pytest.raises(NotFound):
        mgr.get_read(0)
    with pytest.raises(InvalidArgument):
        NodeManager(mgr.storage, BE, capacity=0)


def test_batch_writes_each_dirty_node_once(mgr):
    ids = [add(mgr, i) for i in range(1, 4)]
    mgr.storage.reset_write_counts()
    mgr.storage.config.track_writes = True
    mgr.begin_batch()
    for _ in range(3):
        for i in ids:
            with mgr.get_write(i) as g:
                g.mark_dirty()
    assert mgr.storage.write_counts == {}
    assert mgr.end_batch() == 3
    assert all(mgr.storage.write_counts[i] == 1 for i in ids)


def test_abort_batch_restores_persisted_state(mgr):
    a = add(mgr, 1)
    mgr.begin_batch()
    with mgr.get_write(a) as g:
        n = g.node.copy()
        n.values[0] = b"\x07" * 32
        g.replace(n)
    b, g = mgr.create(leaf(2), leaf_tag(mgr))
    g.release()
    with mgr.get_write(a) as g:
        moved = mgr.retag(g, mgr.layout.required_tag(LEAF, 2))
    mgr.abort_batch()
    assert not mgr.storage.is_allocated(b)
    assert not mgr.storage.is_allocated(moved)
    with mgr.get_read(a) as g:
        assert g.node.values[0] == b"\x01" * 32


def test_retag_keeps_old_id_allocated(mgr):
    a = add(mgr, 1)
    with mgr.get_write(a) as g:
        new = mgr.retag(g, mgr.layout.required_tag(LEAF, 2))
    assert new != a and mgr.storage.is_allocated(a)
    assert new in mgr and a not in mgr
    mgr.storage.free(a)


def test_delta_loads_its_base_once(mgr):
    layout = mgr.layout
    base = InnerNode({1: make_id(5, 1), 2: make_id(5, 2)}, commitment=BE.hash_to_element(b"b"))
    base_id, g = mgr.create(base, layout.required_tag(INNER, 2))
    g.release()
    node = base.copy()
    node.children[3] = make_id(5, 3)
    node.base, node.delta = base_id, {3}
    node.commitment = BE.hash_to_element(b"d")
    d_id, g = mgr.create(node, layout.delta_tag(INNER, 1))
    g.release()
    mgr.evict_all()
    mgr.reset_counters()
    with mgr.get_read(d_id) as g:
        assert set(g.node.children) == {1, 2, 3}
    assert mgr.loads == 2 and mgr.access_loads == {2: 1}
