import pytest

from dedupsim.metadata import (FLAG_INTRA, FLAG_REF, FLAG_UNTOUCHED,
                               FrameTable, InvariantError, META_ADDR,
                               META_MASK, META_TYPE, MetadataCacheConfig,
                               MetadataStore)


def tiny_store(addr=64, type_=32, mask=32, stride=1):
    return MetadataStore(MetadataCacheConfig(addr_cache=addr, type_cache=type_,
                                             mask_cache=mask), stride=stride)


def test_cold_type_read_installs_a_32B_line_of_128_flags():
    store = tiny_store()
    acc = store.read(META_TYPE, 0)
    assert acc.miss and acc.value == FLAG_UNTOUCHED
    assert not store.read(META_TYPE, 64).miss    # same 32B line (2-bit entries)
    assert not store.read(META_TYPE, 127).miss
    assert store.read(META_TYPE, 128).miss       # next line


def test_addr_line_holds_eight_entries():
    store = tiny_store()
    assert store.read(META_ADDR, 0).miss
    assert not store.read(META_ADDR, 7).miss
    assert store.read(META_ADDR, 8).miss


def test_mask_line_holds_64_entries():
    store = tiny_store()
    assert store.read(META_MASK, 0).miss
    assert not store.read(META_MASK, 63).miss
    assert store.read(META_MASK, 64).miss


def test_partition_stride_packs_local_indices():
    store = tiny_store(stride=8)
    assert store.read(META_ADDR, 0).miss
    # blocks 0,8,...,56 share one local addr line in an 8-partition layout
    assert not store.read(META_ADDR, 56).miss
    assert store.read(META_ADDR, 64).miss


def test_write_allocates_and_marks_dirty():
    store = tiny_store(addr=32)  # one addr line only
    acc = store.write(META_ADDR, 0, 1234)
    assert acc.miss and not acc.writeback
    assert not store.write(META_ADDR, 3, 99).miss
    assert store.peek(META_ADDR, 3) == 99
    # capacity 1 line: touching another line evicts the dirty one
    acc = store.read(META_ADDR, 8)
    assert acc.miss and acc.writeback
    assert store.dirty_writebacks == 1
    # value survives the eviction (backing arrays are authoritative)
    assert store.peek(META_ADDR, 0) == 1234


def test_clean_eviction_emits_no_metadata_write():
    store = tiny_store(addr=32)
    store.read(META_ADDR, 0)
    acc = store.read(META_ADDR, 8)
    assert acc.miss and not acc.writeback


def test_lru_recency_on_hits():
    store = tiny_store(addr=64)  # two addr lines
    store.read(META_ADDR, 0)    # line 0
    store.read(META_ADDR, 8)    # line 1
    store.read(META_ADDR, 0)    # refresh line 0
    store.read(META_ADDR, 16)   # evicts line 1
    assert not store.read(META_ADDR, 0).miss
    assert store.read(META_ADDR, 8).miss


def test_hit_miss_counters():
    store = tiny_store()
    store.read(META_TYPE, 0)
    store.read(META_TYPE, 1)
    store.write(META_TYPE, 2, FLAG_REF)
    assert (store.misses, store.hits) == (1, 2)


def test_value_width_validation():
    store = tiny_store()
    with pytest.raises(ValueError):
        store.write(META_TYPE, 0, 4)
    with pytest.raises(ValueError):
        store.write(META_MASK, 0, 16)
    with pytest.raises(ValueError):
        store.write(META_ADDR, 0, 1 << 32)


def test_unbounded_budget_never_evicts():
    store = MetadataStore(MetadataCacheConfig(addr_cache=0, type_cache=0,
                                              mask_cache=0))
    for blk in range(0, 10_000, 8):
        store.read(META_ADDR, blk)
    assert store.dirty_writebacks == 0
    assert store.misses == 1250


def test_dump_lists_touched_blocks():
    store = tiny_store()
    store.write(META_TYPE, 5, FLAG_INTRA)
    store.write(META_ADDR, 5, 42)
    store.write(META_MASK, 5, 0b1111)
    assert store.dump() == {"5": {"flag": FLAG_INTRA, "mapping": 42, "mask": 15}}


# --- frame table -----------------------------------------------------------------

def test_alloc_prefers_home_frame():
    table = FrameTable(16)
    table.clear_home(5)
    assert table.alloc(5) == 5
    assert table.refcount(5) == 1


def test_alloc_lowest_free_frame():
    table = FrameTable(16)
    table.clear_home(9)
    table.clear_home(5)
    assert table.alloc(2) == 5  # home 2 not free: lowest free frame wins


def test_identity_mapping_when_every_block_unique():
    table = FrameTable(8)
    for blk in range(8):
        table.clear_home(blk)
        assert table.alloc(blk) == blk


def test_release_returns_frame_to_pool_only_when_ownerless():
    table = FrameTable(8)
    table.clear_home(1)
    frame = table.alloc(1)
    table.retain(frame)
    assert table.release_ref(frame) == 1
    assert not table.is_free(frame)
    assert table.release_ref(frame) == 0
    assert table.is_free(frame)


def test_home_still_in_use_keeps_frame_out_of_pool():
    table = FrameTable(8)
    table.clear_home(0)
    frame = table.alloc(0)  # frame 0
    # frame 3's home block still holds its original data
    table.retain(3)
    assert table.release_ref(3) == 0
    assert not table.is_free(3)
    assert table.is_free(frame) is False


def test_double_release_faults():
    table = FrameTable(8)
    table.clear_home(0)
    frame = table.alloc(0)
    table.release_ref(frame)
    with pytest.raises(InvariantError):
        table.release_ref(frame)


def test_double_clear_home_faults():
    table = FrameTable(8)
    table.clear_home(0)
    with pytest.raises(InvariantError):
        table.clear_home(0)


def test_retain_of_free_frame_faults():
    table = FrameTable(8)
    table.clear_home(0)
    with pytest.raises(InvariantError):
        table.retain(0)


def test_pool_exhaustion_faults():
    table = FrameTable(4)
    table.clear_home(0)
    table.alloc(0)
    with pytest.raises(InvariantError):
        table.alloc(0)


def test_partitioned_table_rejects_foreign_frames():
    table = FrameTable(16, partition=1, stride=4)
    table.clear_home(5)
    assert table.alloc(5) == 5
    with pytest.raises(InvariantError):
        table.clear_home(6)


def test_audit_checks_refcounts_against_scan():
    table = FrameTable(8)
    table.clear_home(2)
    frame = table.alloc(2)
    table.retain(frame)
    table.audit({frame: 2})
    with pytest.raises(AssertionError):
        table.audit({frame: 1})
