from dedupsim.controller import MODE_CMD, SimConfig, run_sim
from dedupsim.oracle import (ORACLE_INTER, ORACLE_INTRA, ORACLE_UNIQUE,
                             oracle_read_all, oracle_replay)
from dedupsim.sector_cache import CacheConfig
from dedupsim.trace import GenParams, Read, Write, generate_trace


def tiny_cache(assoc=1, sets=1):
    return CacheConfig(capacity_bytes=128 * assoc * sets, associativity=assoc)


def unbounded_cfg(cache):
    from dedupsim.metadata import MetadataCacheConfig
    return SimConfig(cache=cache, hash_entries=0,
                     meta=MetadataCacheConfig(addr_cache=0, type_cache=0,
                                              mask_cache=0))


def full(tag):
    return bytes((tag + i) & 0xFF for i in range(128))


def w(blk, payload):
    return Write(blk, 0b1111, payload)


def test_identical_writes_classified_inter():
    # assoc-1 cache: each write evicts the previous block
    trace = [w(0, full(1)), w(1, full(1)), w(2, full(9))]
    out = oracle_replay(trace, tiny_cache())
    assert [o.kind for o in out] == [ORACLE_UNIQUE, ORACLE_INTER]
    assert out[1].dup_of == 0


def test_uniform_write_classified_intra_regardless_of_history():
    trace = [w(0, full(3)), w(0, b"\x42" * 128), w(1, full(9))]
    out = oracle_replay(trace, tiny_cache())
    # blk 0's two writes coalesce in the L2; only the final uniform line
    # ever reaches the controller
    assert [o.kind for o in out] == [ORACLE_INTRA]


def test_read_misses_drive_evictions_in_replay():
    trace = [w(0, full(1)), Read(5, 0), Read(6, 0)]
    out = oracle_replay(trace, tiny_cache())
    assert [o.kind for o in out] == [ORACLE_UNIQUE]


def test_read_all_empty_trace():
    assert oracle_read_all([]) == {}


def test_read_all_single_write():
    trace = [Write(3, 0b0101, b"a" * 32 + b"c" * 32)]
    out = oracle_read_all(trace)
    assert out == {(3, 0): b"a" * 32, (3, 2): b"c" * 32}


def test_read_all_last_writer_wins_per_sector():
    trace = [Write(1, 0b0011, b"a" * 32 + b"b" * 32),
             Write(1, 0b0110, b"B" * 32 + b"c" * 32)]
    out = oracle_read_all(trace)
    assert out == {(1, 0): b"a" * 32, (1, 1): b"B" * 32, (1, 2): b"c" * 32}


def test_simulator_matches_oracle_on_large_random_trace():
    params = GenParams(seed=123, n_records=30_000, n_blocks=256,
                       readonly_set_size=32, write_fraction=0.5,
                       intra_prob=0.3, inter_pool_size=6,
                       mask_distribution=(0.15, 0.15, 0.2, 0.5))
    trace = generate_trace(params)
    cache = CacheConfig(capacity_bytes=128 * 4 * 8, associativity=4)
    sim = run_sim(trace, unbounded_cfg(cache), MODE_CMD,
                  record_classifications=True)
    expected = oracle_replay(trace, cache)
    assert len(sim.classifications) == len(expected) > 2000
    assert sim.classifications == [o.kind for o in expected]


def test_bounded_store_never_beats_oracle():
    params = GenParams(seed=5, n_records=5000, n_blocks=128,
                       readonly_set_size=0, write_fraction=0.8,
                       intra_prob=0.0, inter_pool_size=64)
    trace = generate_trace(params)
    cache = CacheConfig(capacity_bytes=128 * 4, associativity=4)
    oracle_inter = sum(o.kind == ORACLE_INTER
                       for o in oracle_replay(trace, cache))
    sim = run_sim(trace, SimConfig(cache=cache, hash_entries=8), MODE_CMD)
    assert sim.dedup_counts["inter_removed"] <= oracle_inter
    assert sim.dedup_counts["inter_removed"] > 0
