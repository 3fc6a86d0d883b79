"""Brute-force reference model for validating the simulator.

It shares only the trace module (records, background content) and the
sector-cache geometry; classification and content tracking are recomputed
here by direct byte comparison with unbounded tables, independent of the
dedup engine, metadata store, and controller.
"""

from dataclasses import dataclass

from .sector_cache import MISS, SectorCache
from .trace import SECTOR_BYTES, Write, mask_sectors

ORACLE_INTRA = "intra"
ORACLE_INTER = "inter"
ORACLE_UNIQUE = "unique"

_COUNT_CAP = (1 << 16) - 1
_ZERO = b"\x00" * SECTOR_BYTES


@dataclass(frozen=True)
class OracleWrite:
    kind: str
    dup_of: int | None  # writeback index of the first writer, for inter


class _BlockState:
    __slots__ = ("mask", "data", "counted")

    def __init__(self, mask, data, counted):
        self.mask = mask
        self.data = data
        self.counted = counted


def _sector_slice(mask, data, sector):
    pos = (mask & ((1 << sector) - 1)).bit_count()
    return data[pos * SECTOR_BYTES:(pos + 1) * SECTOR_BYTES]


def _merge(old_mask, old_data, new_mask, new_data):
    if old_mask & ~new_mask == 0:
        return old_mask | new_mask, new_data
    mask = old_mask | new_mask
    parts = []
    for s in mask_sectors(mask):
        if new_mask >> s & 1:
            parts.append(_sector_slice(new_mask, new_data, s))
        else:
            parts.append(_sector_slice(old_mask, old_data, s))
    return mask, b"".join(parts)


def _uniform(data):
    return data == data[:4] * (len(data) // 4)


def oracle_replay(records, cache_config):
    """Classify every writeback the trace produces: intra/inter/unique.

    The writeback stream is derived by replaying the trace through a sector
    cache of the same geometry (clean fills carry dummy bytes; only dirty
    data ever reaches a writeback). Content bookkeeping is exact and
    unbounded: a pool maps (mask, bytes) to its first writer and the number
    of blocks currently holding that content, mirroring the duplicate-count
    cap of 2^16-1.
    """
    cache = SectorCache(cache_config, fifo_enabled=False)
    state = {}   # blk -> _BlockState
    pool = {}    # (mask, data) -> [first_writeback_index, holders]
    out = []
    for rec in records:
        if isinstance(rec, Write):
            wbs = cache.write_sectors(rec.blk, rec.mask, rec.payload)
        else:
            kind, _, wbs = cache.lookup_sector(rec.blk, rec.sector)
            if kind == MISS:
                wbs = cache.fill_sector(rec.blk, rec.sector, _ZERO, clean=True)
        for wb in wbs:
            out.append(_classify(wb, state, pool, len(out)))
    return out


def _classify(wb, state, pool, index):
    old = state.get(wb.blk)
    if old is not None:
        if old.counted:
            entry = pool[(old.mask, old.data)]
            entry[1] -= 1
            if entry[1] == 0:
                del pool[(old.mask, old.data)]
        mask, data = _merge(old.mask, old.data, wb.dirty_mask, wb.payload)
    else:
        mask, data = wb.dirty_mask, wb.payload

    if _uniform(data):
        state[wb.blk] = _BlockState(mask, data, counted=False)
        return OracleWrite(ORACLE_INTRA, None)

    entry = pool.get((mask, data))
    if entry is not None and entry[1] < _COUNT_CAP:
        entry[1] += 1
        state[wb.blk] = _BlockState(mask, data, counted=True)
        return OracleWrite(ORACLE_INTER, entry[0])
    if entry is None:
        pool[(mask, data)] = [index, 1]
        state[wb.blk] = _BlockState(mask, data, counted=True)
    else:
        # saturated entry: this holder is stored but never counted
        state[wb.blk] = _BlockState(mask, data, counted=False)
    return OracleWrite(ORACLE_UNIQUE, None)


def oracle_read_all(records):
    """Last-written bytes for every sector the trace materializes.

    Pure per-sector last-writer-wins over the record stream; blocks the
    trace never writes keep background content (see trace.bg_sector).
    """
    out = {}
    for rec in records:
        if isinstance(rec, Write):
            for s in mask_sectors(rec.mask):
                out[(rec.blk, s)] = rec.sector_data(s)
    return out
