import json
import os
import random
import threading
import zlib

import pytest

from verkledb.errors import CorruptionError, InvalidArgument, NotFound, StorageError
from verkledb.nodes import INNER, LEAF, NodeLayout, id_index, id_tag
from verkledb.storage import FlushBuffer, PageCache, PositionalFile, RootIndex, StorageConfig, StorageManager

LAYOUT = NodeLayout()
INNER_TAG = LAYOUT.required_tag(INNER, 1)
LEAF_TAG = LAYOUT.required_tag(LEAF, 1)


def rec(tag, fill):
    return bytes([fill]) * LAYOUT.info(tag).record_size


@pytest.fixture(params=[0, 2], ids=["sync-writes", "flush-buffer"])
def config(request):
    return StorageConfig(flush_workers=request.param, sync=False, track_writes=True)


def make(tmp_path, config, name="s"):
    return StorageManager.create(str(tmp_path / name), LAYOUT, config)


def test_allocate_write_read(tmp_path, config):
    s = make(tmp_path, config)
    a = s.allocate(INNER_TAG)
    b = s.allocate(INNER_TAG)
    assert id_tag(a) == INNER_TAG and (id_index(a), id_index(b)) == (0, 1)
    with pytest.raises(NotFound):
        s.read(a)  # allocated but never written
    s.write(a, rec(INNER_TAG, 1))
    assert s.read(a) == rec(INNER_TAG, 1)
    with pytest.raises(InvalidArgument):
        s.write(a, b"short")
    s.close()


def test_free_list_reuses_smallest_index(tmp_path, config):
    s = make(tmp_path, config)
    ids = [s.allocate(LEAF_TAG) for _ in range(5)]
    for i in ids:
        s.write(i, rec(LEAF_TAG, 7))
    s.free(ids[3])
    s.free(ids[1])
    assert s.allocate(LEAF_TAG) == ids[1]
    assert s.allocate(LEAF_TAG) == ids[3]
    assert id_index(s.allocate(LEAF_TAG)) == 5
    with pytest.raises(InvalidArgument):
        s.free(ids[0]) or s.free(ids[0])
    with pytest.raises(NotFound):
        s.read(ids[0])
    s.close()


def test_counts_reconcile_and_file_bytes(tmp_path, config):
    s = make(tmp_path, config)
    ids = [s.allocate(LEAF_TAG) for _ in range(6)] + [s.allocate(INNER_TAG) for _ in range(3)]
    for i in ids:
        s.write(i, rec(id_tag(i), 1))
    s.free(ids[0])
    s.free(ids[7])
    counts = s.slot_counts()
    for total, used, reusable in counts.values():
        assert total == used + reusable
    assert counts[LEAF_TAG] == (6, 5, 1)
    sizes = s.file_bytes()
    for tag, size in sizes.items():
        assert size == os.path.getsize(os.path.join(s.path, f"nodes-{tag}.dat"))
    assert sum(sizes.values()) == 6 * LAYOUT.info(LEAF_TAG).record_size + 3 * LAYOUT.info(INNER_TAG).record_size
    s.close()


def test_checkpoint_and_reopen(tmp_path, config):
    s = make(tmp_path, config)
    a = s.allocate(LEAF_TAG)
    s.write(a, rec(LEAF_TAG, 3))
    gen = s.checkpoint({"root": a})
    s.close()
    s2 = StorageManager.open(s.path, config)
    assert s2.generation == gen and s2.meta == {"root": a}
    assert s2.read(a) == rec(LEAF_TAG, 3)
    s2.close()


def test_crash_rolls_back_to_checkpoint(tmp_path, config):
    s = make(tmp_path, config)
    a, b = s.allocate(LEAF_TAG), s.allocate(LEAF_TAG)
    s.write(a, rec(LEAF_TAG, 1))
    s.write(b, rec(LEAF_TAG, 2))
    s.checkpoint({"h": 1})
    # post-checkpoint changes: overwrite, free+reuse, append
    s.write(a, rec(LEAF_TAG, 9))
    s.free(b)
    b2 = s.allocate(LEAF_TAG)
    assert b2 == b
    s.write(b2, rec(LEAF_TAG, 8))
    c = s.allocate(LEAF_TAG)
    s.write(c, rec(LEAF_TAG, 7))
    s.drain()
    s.close()  # no checkpoint: as if the process died here
    s2 = StorageManager.open(s.path, config)
    assert s2.meta == {"h": 1}
    assert s2.read(a) == rec(LEAF_TAG, 1)
    assert s2.read(b) == rec(LEAF_TAG, 2)
    assert not s2.is_allocated(c)
    assert s2.file_bytes()[LEAF_TAG] == 2 * LAYOUT.info(LEAF_TAG).record_size
    assert not [n for n in os.listdir(s.path) if n.startswith("undo-")]
    s2.close()


@pytest.mark.parametrize("point", ["after-data-flush", "before-manifest-rename"])
def test_injected_checkpoint_abort_keeps_previous(tmp_path, config, point):
    s = make(tmp_path, config)
    a = s.allocate(LEAF_TAG)
    s.write(a, rec(LEAF_TAG, 1))
    s.checkpoint({"h": 1})
    s.write(a, rec(LEAF_TAG, 2))
    s.fail_points.add(point)
    with pytest.raises(StorageError):
        s.checkpoint({"h": 2})
    s.close()
    s2 = StorageManager.open(s.path, config)
    assert s2.meta == {"h": 1}
    assert s2.read(a) == rec(LEAF_TAG, 1)
    assert not os.path.exists(os.path.join(s.path, "manifest.tmp"))
    s2.close()


def test_torn_undo_tail_is_ignored(tmp_path):
    cfg = StorageConfig(flush_workers=0, sync=False)
    s = make(tmp_path, cfg)
    a = s.allocate(LEAF_TAG)
    s.write(a, rec(LEAF_TAG, 1))
    s.checkpoint({})
    s.write(a, rec(LEAF_TAG, 2))
    s.close()
    undo = os.path.join(s.path, "undo-1.log")
    with open(undo, "ab") as fh:
        fh.write(b"\x01\x02\x03")  # torn header of a second entry
    s2 = StorageManager.open(s.path, cfg)
    assert s2.read(a) == rec(LEAF_TAG, 1)
    s2.close()


def test_manifest_checksum_detects_tampering(tmp_path, config):
    s = make(tmp_path, config)
    s.checkpoint({"h": 1})
    s.close()
    path = os.path.join(s.path, "manifest")
    data = json.load(open(path))
    data["meta"]["h"] = 2
    json.dump(data, open(path, "w"))
    with pytest.raises(CorruptionError):
        StorageManager.open(s.path, config)


def test_open_missing_and_create_twice(tmp_path, config):
    with pytest.raises(NotFound):
        StorageManager.open(str(tmp_path / "nothing"), config)
    s = make(tmp_path, config)
    s.close()
    with pytest.raises(InvalidArgument):
        make(tmp_path, config)


def test_track_writes(tmp_path, config):
    s = make(tmp_path, config)
    a = s.allocate(LEAF_TAG)
    s.write(a, rec(LEAF_TAG, 1))
    s.write(a, rec(LEAF_TAG, 2))
    assert s.write_counts[a] == 2
    s.reset_write_counts()
    assert not s.write_counts
    s.close()


def test_concurrent_writes_are_not_torn(tmp_path):
    s = make(tmp_path, StorageConfig(flush_workers=4, sync=False))
    size = LAYOUT.info(LEAF_TAG).record_size
    ids = [s.allocate(LEAF_TAG) for _ in range(16)]

    def record(node_id, version):
        body = node_id.to_bytes(8, "little") + version.to_bytes(4, "little")
        body = body.ljust(size - 4, bytes([version % 251]))
        return body + zlib.crc32(body).to_bytes(4, "little")

    def worker(seed):
        r = random.Random(seed)
        for v in range(200):
            i = r.choice(ids)
            s.write(i, record(i, v))

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    s.drain()
    for i in ids:
        try:
            data = s.read(i)
        except NotFound:
            continue
        assert zlib.crc32(data[:-4]) == int.from_bytes(data[-4:], "little")
        assert int.from_bytes(data[:8], "little") == i
    s.close()


def test_flush_buffer_read_your_writes_and_errors():
    sink_data = {}
    gate = threading.Event()

    def sink(i, d):
        gate.wait()
        sink_data[i] = d

    buf = FlushBuffer(sink, workers=2, capacity=8)
    buf.put(1, b"a")
    buf.put(1, b"b")
    assert buf.get(1) == b"b"
    gate.set()
    buf.drain()
    assert sink_data[1] == b"b" and buf.get(1) is None
    buf.close()

    def failing(i, d):
        raise OSError("disk full")

    bad = FlushBuffer(failing)
    bad.put(3, b"x")
    with pytest.raises(StorageError):
        bad.drain()


def test_page_cache_matches_plain_file(tmp_path):
    raw = PositionalFile(str(tmp_path / "a.dat"))
    cached = PageCache(PositionalFile(str(tmp_path / "b.dat")), capacity_pages=2)
    r = random.Random(1)
    for _ in range(300):
        off = r.randrange(20000)
        data = r.randbytes(r.randrange(1, 6000))
        raw.write_at(off, data)
        cached.write_at(off, data)
        probe = r.randrange(20000)
        assert cached.read_at(probe, 100) == raw.read_at(probe, 100)
    cached.flush()
    assert cached.size() == raw.size()
    assert cached.hits > 0
    raw.close()
    cached.close()
    assert open(tmp_path / "a.dat", "rb").read() == open(tmp_path / "b.dat", "rb").read()


def test_page_cache_store(tmp_path):
    cfg = StorageConfig(flush_workers=0, page_cache_pages=4, sync=False)
    s = make(tmp_path, cfg)
    ids = [s.allocate(LEAF_TAG) for _ in range(20)]
    for k, i in enumerate(ids):
        s.write(i, rec(LEAF_TAG, k))
    s.checkpoint({})
    s.close()
    s2 = StorageManager.open(s.path, cfg)
    assert [s2.read(i)[0] for i in ids] == list(range(20))
    s2.close()


def test_root_index(tmp_path):
    path = str(tmp_path / "roots.dat")
    idx = RootIndex(path, 0, sync=False)
    for h in range(1, 6):
        assert idx.append(h * 10, bytes([h]) * 32) == h
    assert idx.get(3) == (30, bytes([3]) * 32)
    with pytest.raises(InvalidArgument):
        idx.get(0)
    with pytest.raises(InvalidArgument):
        idx.get(6)
    idx.close()
    # reopening at a shorter checkpointed length drops the tail
    idx = RootIndex(path, 3, sync=False)
    assert len(idx) == 3 and os.path.getsize(path) == 3 * 40
    idx.close()
    with pytest.raises(StorageError):
        RootIndex(path, 9, sync=False)
