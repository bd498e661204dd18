import os
import shutil
import tempfile

from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import VersionedMap
from verkledb.commitment import get_pedersen
from verkledb.nodes import LEAF, NodeLayout, id_index
from verkledb.storage import StorageConfig, StorageManager
from verkledb.trie import ARCHIVE, LIVE, DBConfig, ReferenceTrie, VerkleDB

PED = get_pedersen("test", b"verkledb")

# few distinct prefixes so that stems collide on leading bytes and the trie gets depth
stems = st.builds(lambda a, b, rest: bytes([a, b]) + rest,
                  st.integers(0, 3), st.integers(0, 3), st.binary(min_size=29, max_size=29))
keys = st.builds(lambda s, x: s + bytes([x]), stems, st.integers(0, 255))
values = st.one_of(st.none(), st.binary(min_size=32, max_size=32))
blocks = st.lists(st.lists(st.tuples(keys, values), max_size=12), min_size=1, max_size=6)


def discard(db):
    db.close(checkpoint=False)
    shutil.rmtree(os.path.dirname(db.path), ignore_errors=True)


def fresh_db(mode, **kw):
    path = tempfile.mkdtemp(prefix="verkledb-prop-") + "/db"
    return VerkleDB.create(path, DBConfig(mode=mode, storage=StorageConfig(sync=False), **kw))


@settings(max_examples=30)
@given(blocks, st.sampled_from([LIVE, ARCHIVE]), st.integers(1, 8))
def test_roots_and_lookups_match_reference(bs, mode, tau):
    db = fresh_db(mode, tau=tau, workers=3, parallel_threshold=3)
    ref = ReferenceTrie(db.backend, db.pedersen.basis.generators)
    hist = VersionedMap()
    try:
        for h, muts in enumerate(bs, 1):
            db.apply_block(muts)
            ref.apply(muts)
            hist.apply(h, muts)
            assert db.root_bytes() == ref.root_bytes()
        assert dict(db.items()) == ref.data
        if mode == ARCHIVE:
            for h in range(len(bs) + 1):
                for k in hist.history:
                    assert db.lookup_at(k, h) == hist.value_at(k, h)
    finally:
        discard(db)


@settings(max_examples=25)
@given(st.lists(st.tuples(keys, st.binary(min_size=32, max_size=32)), min_size=1, max_size=20, unique_by=lambda t: t[0]),
       st.randoms())
def test_root_is_history_independent(muts, r):
    a = fresh_db(LIVE)
    b = fresh_db(LIVE)
    try:
        a.apply_block(muts)
        shuffled = list(muts)
        r.shuffle(shuffled)
        cut = r.randint(0, len(shuffled))
        b.apply_block(shuffled[:cut])
        b.apply_block(shuffled[cut:])
        assert a.root_bytes() == b.root_bytes()
    finally:
        discard(a)
        discard(b)


@settings(max_examples=40)
@given(st.lists(st.one_of(st.just("alloc"), st.integers(0, 30)), max_size=80))
def test_allocator_matches_set_model(ops):
    layout = NodeLayout()
    tag = layout.required_tag(LEAF, 1)
    workdir = tempfile.mkdtemp(prefix="verkledb-prop-")
    s = StorageManager.create(workdir + "/s", layout, StorageConfig(flush_workers=0, sync=False))
    live: set[int] = set()
    free: set[int] = set()
    top = 0
    try:
        for op in ops:
            if op == "alloc":
                nid = s.allocate(tag)
                idx = id_index(nid)
                expected = min(free) if free else top
                assert idx == expected
                free.discard(idx)
                top = max(top, idx + 1)
                live.add(nid)
            elif live:
                nid = sorted(live)[op % len(live)]
                s.free(nid)
                live.discard(nid)
                free.add(id_index(nid))
            total, used, reusable = s.slot_counts().get(tag, (0, 0, 0))
            assert (total, used, reusable) == (top, len(live), len(free))
    finally:
        s.close()
        shutil.rmtree(workdir, ignore_errors=True)


@settings(max_examples=200)
@given(st.dictionaries(st.integers(0, 255), st.integers(0, 2**252), max_size=8),
       st.dictionaries(st.integers(0, 255), st.integers(0, 2**252), max_size=8))
def test_apply_deltas_equals_recommit(a, b):
    be = PED.backend
    moved = PED.apply_deltas(PED.commit_sparse(a), b)
    summed = dict(a)
    for k, v in b.items():
        summed[k] = summed.get(k, 0) + v
    assert be.eq(moved, PED.commit_sparse(summed))
