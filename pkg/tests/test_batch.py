import random
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from verkledb.errors import InvalidArgument
from verkledb.trie import Embedding, WorkStealingPool, assemble_batch, partition
from verkledb.trie.embedding import BALANCE_SUB, CODE_SIZE_SUB, NONCE_SUB

keys = st.binary(min_size=32, max_size=32)
values = st.one_of(st.none(), st.binary(min_size=32, max_size=32))


@given(st.lists(st.tuples(keys, values), max_size=60))
def test_assemble_sorts_and_keeps_last_write(muts):
    batch = assemble_batch(muts)
    expected = {}
    for k, v in muts:
        expected[k] = v
    assert list(batch.keys) == sorted(expected)
    assert dict(iter(batch)) == expected


def test_assemble_rejects_bad_lengths():
    with pytest.raises(InvalidArgument):
        assemble_batch([(b"k" * 31, b"v" * 32)])
    with pytest.raises(InvalidArgument):
        assemble_batch([(b"k" * 32, b"v" * 3)])


@given(st.lists(keys, min_size=1, max_size=60), st.integers(0, 31))
def test_partition_is_ordered_and_complete(ks, depth):
    # a sub-batch at ``depth`` always shares its first ``depth`` bytes
    ks = [ks[0][:depth] + k[depth:] for k in ks]
    batch = assemble_batch([(k, None) for k in ks])
    parts = partition(batch.view(), depth)
    bytes_seen = [b for b, _ in parts]
    assert bytes_seen == sorted(set(bytes_seen))
    flat = [k for _, sub in parts for k in sub.keys()]
    assert flat == list(batch.keys)
    for b, sub in parts:
        assert all(k[depth] == b for k in sub.keys())


def test_single_stem():
    stem = bytes(31)
    batch = assemble_batch([(stem + b"\x01", None), (stem + b"\x09", None)])
    assert batch.view().single_stem()
    batch = assemble_batch([(stem + b"\x01", None), (b"\x01" * 32, None)])
    assert not batch.view().single_stem()


def test_embedding_header_fields_share_a_stem(ped):
    emb = Embedding(ped)
    addr = bytes(range(20))
    kb, _ = emb.set_balance(addr, 5)
    kn, _ = emb.set_nonce(addr, 1)
    kz, _ = emb.set_code_size(addr, 64)
    assert kb[:31] == kn[:31] == kz[:31]
    assert (kb[31], kn[31], kz[31]) == (BALANCE_SUB, NONCE_SUB, CODE_SIZE_SUB)
    assert emb.set_balance(addr, 5)[1] == (5).to_bytes(32, "little")


def test_code_chunks_get_consecutive_sub_indices(ped):
    emb = Embedding(ped)
    addr = b"\x11" * 20
    muts = emb.set_code(addr, bytes(range(256)) * 4 + b"\xaa")  # 1025 bytes -> 33 chunks
    assert len(muts) == 33
    subs = [k[31] for k, _ in muts]
    # chunks 0..127 live on tree index 0 at 128..255; chunk 128 on index 1 would be sub 0
    assert subs == list(range(128, 161))
    assert len({k[:31] for k, _ in muts}) == 1
    assert muts[-1][1] == b"\xaa" + bytes(31)


def test_storage_slots_below_256_share_a_stem(ped):
    emb = Embedding(ped)
    addr = b"\x22" * 20
    stems = {emb.storage_slot_key(addr, s)[:31] for s in range(0, 256, 17)}
    assert len(stems) == 1
    assert emb.storage_slot_key(addr, 256)[:31] not in stems
    assert emb.storage_slot_key(addr, 5)[:31] != emb.tree_key(addr, 0, 5)[:31]


def test_embedding_no_collisions_and_memo(ped):
    emb = Embedding(ped)
    r = random.Random(3)
    addrs = [r.randbytes(20) for _ in range(10_000)]
    stems = {emb.stem(a, 0) for a in addrs}
    assert len(stems) == len(set(addrs))
    before = emb.misses
    emb.stem(addrs[0], 0)
    assert emb.misses == before and emb.hits >= 1
    with pytest.raises(InvalidArgument):
        emb.stem(b"short", 0)
    with pytest.raises(InvalidArgument):
        emb.tree_key(addrs[0], 0, 256)


def _random_tree(r, n):
    parent = {0: None}
    for i in range(1, n):
        parent[i] = r.randrange(i)
    return parent


@pytest.mark.parametrize("workers", [1, 4])
def test_pool_runs_children_before_parents(workers):
    r = random.Random(workers)
    pool = WorkStealingPool(workers)
    for _ in range(20):
        parent = _random_tree(r, r.randint(1, 300))
        done = set()
        lock = threading.Lock()

        def fn(k):
            with lock:
                assert all(c in done for c, p in parent.items() if p == k)
                assert k not in done
                done.add(k)

        pool.run_tree(parent, fn)
        assert done == set(parent)


def test_pool_propagates_errors():
    pool = WorkStealingPool(3)

    def fn(k):
        if k == 5:
            raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        pool.run_tree({i: (None if i == 0 else 0) for i in range(20)}, fn)
    with pytest.raises(InvalidArgument):
        WorkStealingPool(0)
    pool.run_tree({}, fn)
