"""Set-associative L2 sector cache model.

Lines carry per-sector valid/dirty bits and data; replacement is LRU within
a set; eviction writes back only dirty sectors. When the clean-victim FIFO
is enabled, evicted clean valid sectors are parked in a small per-partition
insertion-ordered buffer and can be promoted back into the cache on a later
lookup. Clean sectors filled on behalf of the memory controller may carry a
probe key (the physical frame they came from) so duplicate blocks can find
any resident alias of their reference frame.
"""

from collections import OrderedDict, deque
from dataclasses import dataclass

from .trace import SECTOR_BYTES, SECTORS_PER_LINE, mask_sectors

HIT_CACHE = "cache"
HIT_FIFO = "fifo"
MISS = "miss"


@dataclass
class CacheConfig:
    capacity_bytes: int = 4 * 1024 * 1024
    line_bytes: int = 128
    sectors_per_line: int = 4
    associativity: int = 16
    n_partitions: int = 1
    fifo_entries_per_partition: int = 16

    def __post_init__(self):
        if self.line_bytes != 128 or self.sectors_per_line != 4:
            raise ValueError("cache geometry is fixed at 128B lines of four 32B sectors")
        if self.associativity < 1 or self.n_partitions < 1:
            raise ValueError("associativity and n_partitions must be >= 1")
        if self.fifo_entries_per_partition < 0:
            raise ValueError("fifo_entries_per_partition must be >= 0")
        span = self.line_bytes * self.associativity * self.n_partitions
        if self.capacity_bytes % span or self.capacity_bytes < span:
            raise ValueError("capacity must be a positive multiple of "
                             "line_bytes * associativity * n_partitions")

    @property
    def sets_per_partition(self):
        return self.capacity_bytes // (
            self.line_bytes * self.associativity * self.n_partitions)


@dataclass
class WritebackRequest:
    blk: int
    dirty_mask: int
    payload: bytes  # 32 bytes per dirty sector, ascending sector order


@dataclass
class FifoEntry:
    blk: int
    sector: int
    data: bytes
    probe_key: object = None


class _Line:
    __slots__ = ("valid", "dirty", "data", "keys")

    def __init__(self):
        self.valid = 0
        self.dirty = 0
        self.data = [None] * SECTORS_PER_LINE
        self.keys = [None] * SECTORS_PER_LINE


class SectorCache:
    def __init__(self, config, fifo_enabled=False):
        self.config = config
        self.fifo_enabled = fifo_enabled
        p, s = config.n_partitions, config.sets_per_partition
        self._sets = [[OrderedDict() for _ in range(s)] for _ in range(p)]
        self._fifos = [deque() for _ in range(p)]
        self._probe = {}  # (probe_key, sector) -> set of resident blks

    def _set_of(self, blk):
        p = blk % self.config.n_partitions
        s = (blk // self.config.n_partitions) % self.config.sets_per_partition
        return self._sets[p][s]

    # --- lookups -------------------------------------------------------------

    def lookup_sector(self, blk, sector):
        """Returns (kind, data, writebacks); kind is HIT_CACHE/HIT_FIFO/MISS.

        The cache is checked before the FIFO. A FIFO hit removes the entry
        and refills the sector into the cache as clean valid data, which may
        evict a victim (hence the writeback list).
        """
        sset = self._set_of(blk)
        line = sset.get(blk)
        if line is not None and line.valid >> sector & 1:
            sset.move_to_end(blk)
            return HIT_CACHE, line.data[sector], []
        fifo = self._fifos[blk % self.config.n_partitions]
        for entry in fifo:
            if entry.blk == blk and entry.sector == sector:
                fifo.remove(entry)
                wbs = self.fill_sector(blk, sector, entry.data,
                                       clean=True, probe_key=entry.probe_key)
                return HIT_FIFO, entry.data, wbs
        return MISS, None, []

    def probe_clean_sector(self, blk, sector):
        """Data iff the sector is resident, valid and clean; no LRU update."""
        line = self._set_of(blk).get(blk)
        if line is not None and (line.valid & ~line.dirty) >> sector & 1:
            return line.data[sector]
        return None

    def probe_clean_by_key(self, key, sector):
        """Clean resident data for a probe key under any logical alias."""
        if key is None:
            return None
        aliases = self._probe.get((key, sector))
        if not aliases:
            return None
        blk = next(iter(aliases))
        return self._set_of(blk).get(blk).data[sector]

    # --- mutation ------------------------------------------------------------

    def write_sectors(self, blk, mask, payload):
        for s in mask_sectors(mask):
            self._fifo_purge(blk, s)
        line, wbs = self._touch_line(blk)
        for i, s in enumerate(mask_sectors(mask)):
            self._set_sector(line, blk, s,
                             payload[i * SECTOR_BYTES:(i + 1) * SECTOR_BYTES],
                             dirty=True, key=None)
        return wbs

    def fill_sector(self, blk, sector, data, clean=True, probe_key=None):
        if len(data) != SECTOR_BYTES:
            raise ValueError("sector data must be 32 bytes")
        self._fifo_purge(blk, sector)
        line, wbs = self._touch_line(blk)
        self._set_sector(line, blk, sector, data, dirty=not clean,
                         key=probe_key if clean else None)
        return wbs

    def copy_into(self, blk, sector, data, probe_key=None):
        return self.fill_sector(blk, sector, data, clean=True, probe_key=probe_key)

    # --- internals -----------------------------------------------------------

    def _touch_line(self, blk):
        sset = self._set_of(blk)
        line = sset.get(blk)
        wbs = []
        if line is None:
            if len(sset) >= self.config.associativity:
                wbs = self._evict_lru(sset, blk % self.config.n_partitions)
            line = _Line()
            sset[blk] = line
        else:
            sset.move_to_end(blk)
        return line, wbs

    def _set_sector(self, line, blk, sector, data, dirty, key):
        self._drop_key(line, blk, sector)
        line.data[sector] = data
        line.valid |= 1 << sector
        if dirty:
            line.dirty |= 1 << sector
        else:
            line.dirty &= ~(1 << sector)
            if key is not None:
                line.keys[sector] = key
                self._probe.setdefault((key, sector), set()).add(blk)

    def _drop_key(self, line, blk, sector):
        key = line.keys[sector]
        if key is not None:
            line.keys[sector] = None
            aliases = self._probe.get((key, sector))
            if aliases is not None:
                aliases.discard(blk)
                if not aliases:
                    del self._probe[(key, sector)]

    def _evict_lru(self, sset, partition):
        victim_blk, line = sset.popitem(last=False)
        wbs = []
        if line.dirty:
            payload = b"".join(line.data[s] for s in mask_sectors(line.dirty))
            wbs.append(WritebackRequest(victim_blk, line.dirty, payload))
        fifo_cap = self.config.fifo_entries_per_partition
        for s in mask_sectors(line.valid):
            key = line.keys[s]
            self._drop_key(line, victim_blk, s)
            if not line.dirty >> s & 1 and self.fifo_enabled and fifo_cap > 0:
                fifo = self._fifos[partition]
                fifo.append(FifoEntry(victim_blk, s, line.data[s], key))
                while len(fifo) > fifo_cap:
                    fifo.popleft()
        return wbs

    def _fifo_purge(self, blk, sector):
        fifo = self._fifos[blk % self.config.n_partitions]
        for entry in fifo:
            if entry.blk == blk and entry.sector == sector:
                fifo.remove(entry)
                return

    # --- introspection (tests, invariant audits) ------------------------------

    def line_state(self, blk):
        line = self._set_of(blk).get(blk)
        return None if line is None else (line.valid, line.dirty)

    def sector_value(self, blk, sector):
        line = self._set_of(blk).get(blk)
        if line is None or not line.valid >> sector & 1:
            return None
        return line.data[sector]

    def fifo_contents(self, partition):
        return [(e.blk, e.sector) for e in self._fifos[partition]]

    def audit(self):
        """Structural invariants: dirty implies valid, key index consistency,
        cache/FIFO exclusion, FIFO capacity."""
        resident = set()
        keyed = {}
        for psets in self._sets:
            for sset in psets:
                for blk, line in sset.items():
                    assert line.dirty & ~line.valid == 0, "dirty sector without valid"
                    for s in range(SECTORS_PER_LINE):
                        if line.valid >> s & 1:
                            resident.add((blk, s))
                            assert len(line.data[s]) == SECTOR_BYTES
                        else:
                            assert line.keys[s] is None
                        key = line.keys[s]
                        if key is not None:
                            assert not line.dirty >> s & 1, "probe key on dirty sector"
                            keyed.setdefault((key, s), set()).add(blk)
        assert keyed == self._probe, "probe index out of sync"
        for p, fifo in enumerate(self._fifos):
            assert len(fifo) <= self.config.fifo_entries_per_partition
            seen = set()
            for e in fifo:
                assert (e.blk, e.sector) not in resident, "entry in cache and FIFO"
                assert (e.blk, e.sector) not in seen, "duplicate FIFO entry"
                seen.add((e.blk, e.sector))
                assert e.blk % self.config.n_partitions == p
