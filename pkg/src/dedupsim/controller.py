"""Memory-controller pipeline and the whole-simulation driver.

Trace writes land in the L2 and reach the controller only as eviction
writebacks; reads that miss both the cache and the FIFO are resolved here.
Four modes nest functionally:

  baseline   direct stores and loads, no metadata
  dedup      write path: uniform-word and duplicate detection at writeback
  dedup_car  adds the cache-assisted read path for duplicate blocks
  cmd        adds the clean-victim FIFO in front of DRAM reads

The write flow per writeback: read old metadata, release the old frame
association, merge with stored sectors when the new mask does not cover the
old one (one dedup-read transaction unless the old block is a replicated
word), then classify: uniform word -> mapping entry only; duplicate digest
-> map to the reference frame; otherwise store to a frame and fingerprint.
Fills triggered by a read are applied after the controller resolves the
data, so a fill's own eviction writebacks are processed once the read is
complete.
"""

from dataclasses import dataclass, field

from .dedup import (CanonicalBlock, DEFAULT_HASH_ENTRIES, HashStore, covered,
                    dedup_decrement, fingerprint, merge_blocks, uniform_word)
from .metadata import (FLAG_INTER, FLAG_INTRA, FLAG_REF, FLAG_UNTOUCHED,
                       FrameTable, META_ADDR, META_MASK, META_TYPE,
                       MetadataCacheConfig, MetadataStore)
from .report import COUNT_FIELDS, DEDUP_FIELDS, TrafficReport, compute_derived
from .sector_cache import (CacheConfig, HIT_CACHE, HIT_FIFO, SectorCache)
from .trace import (Read, SECTOR_BYTES, WORDS_PER_SECTOR, bg_sector,
                    mask_sectors, popcount, trace_digest, validate_trace)

MODE_BASELINE = "baseline"
MODE_DEDUP = "dedup"
MODE_DEDUP_CAR = "dedup_car"
MODE_CMD = "cmd"
MODES = (MODE_BASELINE, MODE_DEDUP, MODE_DEDUP_CAR, MODE_CMD)

CLS_INTRA = "intra"
CLS_INTER = "inter"
CLS_UNIQUE = "unique"

DEFAULT_CYCLES = {
    "dram_read": 200,
    "dram_write": 200,
    "metadata_cache_hit": 20,
    "fingerprint": 228,
    "l2_hit": 40,
    "fifo_hit": 40,
}
DEFAULT_ENERGY = {
    "dram_read": 10.0,
    "dram_write": 10.0,
    "metadata_cache_hit": 0.2,
    "fingerprint": 0.5,
    "l2_hit": 1.0,
    "fifo_hit": 1.0,
    "car_copy": 1.0,
}


class TraceViolationError(ValueError):
    pass


@dataclass
class CostModel:
    """Additive per-event cycle and energy weights (relative units)."""
    cycles: dict = field(default_factory=lambda: dict(DEFAULT_CYCLES))
    energy: dict = field(default_factory=lambda: dict(DEFAULT_ENERGY))

    def __post_init__(self):
        for table, want in ((self.cycles, DEFAULT_CYCLES), (self.energy, DEFAULT_ENERGY)):
            unknown = set(table) - set(want)
            if unknown:
                raise ValueError(f"unknown cost keys: {sorted(unknown)}")
            for key, default in want.items():
                table.setdefault(key, default)
                if table[key] < 0:
                    raise ValueError(f"cost {key} must be >= 0")


_CACHE_KEYS = ("capacity_bytes", "line_bytes", "sectors_per_line",
               "associativity", "n_partitions", "fifo_entries_per_partition")
_META_KEYS = ("addr_cache", "type_cache", "mask_cache")


@dataclass
class SimConfig:
    cache: CacheConfig = field(default_factory=CacheConfig)
    meta: MetadataCacheConfig = field(default_factory=MetadataCacheConfig)
    cost: CostModel = field(default_factory=CostModel)
    hash_entries: int = DEFAULT_HASH_ENTRIES  # 0 = unbounded
    n_blocks: int = 65536
    bg_seed: int = 0

    def __post_init__(self):
        if not 0 < self.n_blocks <= 1 << 32:
            raise ValueError("n_blocks must be in 1..2^32")
        if self.hash_entries < 0:
            raise ValueError("hash_entries must be >= 0")

    def to_dict(self):
        out = {k: getattr(self.cache, k) for k in _CACHE_KEYS}
        out.update({k: getattr(self.meta, k) for k in _META_KEYS})
        out.update({"hash_entries": self.hash_entries,
                    "n_blocks": self.n_blocks,
                    "bg_seed": self.bg_seed})
        out["cost_model"] = {"cycles": dict(self.cost.cycles),
                             "energy": dict(self.cost.energy)}
        return out

    @classmethod
    def from_dict(cls, data):
        known = set(_CACHE_KEYS) | set(_META_KEYS) | \
            {"hash_entries", "n_blocks", "bg_seed", "cost_model"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        cache = CacheConfig(**{k: data[k] for k in _CACHE_KEYS if k in data})
        meta = MetadataCacheConfig(**{k: data[k] for k in _META_KEYS if k in data})
        cm = data.get("cost_model", {})
        cost = CostModel(cycles=dict(cm.get("cycles", {})),
                         energy=dict(cm.get("energy", {})))
        return cls(cache=cache, meta=meta, cost=cost,
                   hash_entries=data.get("hash_entries", DEFAULT_HASH_ENTRIES),
                   n_blocks=data.get("n_blocks", 65536),
                   bg_seed=data.get("bg_seed", 0))


class Simulator:
    """Single-run state machine; one instance per (config, mode) run."""

    def __init__(self, config, mode, record_classifications=False, check_every=0):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.config = config
        self.mode = mode
        self.dedup_on = mode != MODE_BASELINE
        self.car_on = mode in (MODE_DEDUP_CAR, MODE_CMD)
        self.cache = SectorCache(config.cache, fifo_enabled=(mode == MODE_CMD))
        self._partitions = config.cache.n_partitions
        if self.dedup_on:
            self.meta = [MetadataStore(config.meta, stride=self._partitions)
                         for _ in range(self._partitions)]
            self.frames = [FrameTable(config.n_blocks, p, self._partitions)
                           for p in range(self._partitions)]
            self.stores = [HashStore(config.hash_entries or None)
                           for _ in range(self._partitions)]
        self._dram = {}  # frame -> {sector: 32B}; baseline keys by home frame
        self._ever_written = set()
        self.counts = {f: 0 for f in COUNT_FIELDS}
        self.dedup_counts = {f: 0 for f in DEDUP_FIELDS}
        self.meta_hits = 0
        self.fingerprints = 0
        self.dram_read_bytes = 0
        self.dram_write_bytes = 0
        self.classifications = [] if record_classifications else None
        self._check_every = check_every
        self._events = 0

    # --- event entry points ----------------------------------------------------

    def process(self, record):
        if isinstance(record, Read):
            self.read(record.blk, record.sector)
        else:
            self.write(record.blk, record.mask, record.payload)
        if self._check_every:
            self._events += 1
            if self._events % self._check_every == 0:
                self.check_invariants()

    def read(self, blk, sector):
        """Serve one sector read through L2, FIFO, then the controller."""
        self._check_blk(blk)
        kind, data, wbs = self.cache.lookup_sector(blk, sector)
        if kind == HIT_CACHE:
            self.counts["l2_hit"] += 1
            return data
        if kind == HIT_FIFO:
            self.counts["fifo_hit"] += 1
            self._drain(wbs)
            return data
        self.counts["l2_miss"] += 1
        data, key = self._mc_read(blk, sector)
        self._drain(self.cache.fill_sector(blk, sector, data, clean=True,
                                           probe_key=key))
        return data

    def write(self, blk, mask, payload):
        self._check_blk(blk)
        if mask == 0 or len(payload) != SECTOR_BYTES * popcount(mask):
            raise TraceViolationError(f"malformed write of blk {blk:#x}")
        self._drain(self.cache.write_sectors(blk, mask, payload))

    def _check_blk(self, blk):
        if not 0 <= blk < self.config.n_blocks:
            raise TraceViolationError(
                f"blk {blk:#x} outside address space of {self.config.n_blocks} blocks")

    def _drain(self, writebacks):
        for wb in writebacks:
            self._handle_writeback(wb)

    # --- read path ---------------------------------------------------------------

    def _mc_read(self, blk, sector):
        """Resolve a read miss; returns (data, probe_key). Counts traffic."""
        if not self.dedup_on:
            if blk in self._ever_written:
                sectors = self._dram.get(blk)
                if sectors is None or sector not in sectors:
                    raise TraceViolationError(
                        f"read of unmaterialized sector {sector} of blk {blk:#x}")
                self._count_read("data_read")
                return sectors[sector], None
            self._count_read("read_only")
            return bg_sector(self.config.bg_seed, blk, sector), None

        meta = self.meta[blk % self._partitions]
        flag = self._meta_read(meta, META_TYPE, blk)
        if flag == FLAG_UNTOUCHED:
            self._count_read("read_only")
            return bg_sector(self.config.bg_seed, blk, sector), None
        mapping = self._meta_read(meta, META_ADDR, blk)
        if flag == FLAG_INTRA:
            if not meta.peek(META_MASK, blk) >> sector & 1:
                raise TraceViolationError(
                    f"read of unmaterialized sector {sector} of blk {blk:#x}")
            return mapping.to_bytes(4, "big") * WORDS_PER_SECTOR, None
        frame = mapping
        if flag == FLAG_INTER and self.car_on:
            data = self.cache.probe_clean_by_key(frame, sector)
            if data is not None:
                self.counts["car_copy"] += 1
                return data, frame
        sectors = self._dram.get(frame)
        if sectors is None or sector not in sectors:
            raise TraceViolationError(
                f"read of unmaterialized sector {sector} of blk {blk:#x}")
        self._count_read("data_read")
        return sectors[sector], frame

    # --- write path ----------------------------------------------------------------

    def _handle_writeback(self, wb):
        if not self.dedup_on:
            self.counts["write"] += 1
            self.dram_write_bytes += SECTOR_BYTES * popcount(wb.dirty_mask)
            sectors = self._dram.setdefault(wb.blk, {})
            for i, s in enumerate(mask_sectors(wb.dirty_mask)):
                sectors[s] = wb.payload[i * SECTOR_BYTES:(i + 1) * SECTOR_BYTES]
            self._ever_written.add(wb.blk)
            return

        blk = wb.blk
        p = blk % self._partitions
        meta, ftab, store = self.meta[p], self.frames[p], self.stores[p]

        old_flag = self._meta_read(meta, META_TYPE, blk)
        old_mask = 0
        old_map = None
        if old_flag != FLAG_UNTOUCHED:
            old_mask = self._meta_read(meta, META_MASK, blk)
            old_map = self._meta_read(meta, META_ADDR, blk)

        # release the block's old association
        held = None
        if old_flag == FLAG_UNTOUCHED:
            ftab.clear_home(blk)
        elif old_flag == FLAG_INTER:
            dedup_decrement(store, ftab, old_map)
        elif old_flag == FLAG_REF:
            if ftab.refcount(old_map) > 1:
                # rewrite of a shared reference: surviving duplicates keep
                # the old frame; this block's new data relocates
                dedup_decrement(store, ftab, old_map)
            else:
                store.decrement_frame(old_map)
                held = old_map

        # coverage check, merge read if the stored mask is not superseded
        if covered(wb.dirty_mask, old_mask):
            block = CanonicalBlock(wb.dirty_mask | old_mask, wb.payload)
        else:
            if old_flag == FLAG_INTRA:
                word = old_map.to_bytes(4, "big")
                old_block = CanonicalBlock(
                    old_mask, word * (WORDS_PER_SECTOR * popcount(old_mask)))
            else:
                self._count_read("dedup_read", popcount(old_mask))
                old_block = CanonicalBlock(
                    old_mask, b"".join(self._dram[old_map][s]
                                       for s in mask_sectors(old_mask)))
            block = merge_blocks(old_block, wb.dirty_mask, wb.payload)

        word = uniform_word(block)
        if word is not None:
            cls = CLS_INTRA
            self.dedup_counts["intra_removed"] += 1
            if held is not None:
                self._release_held(ftab, held)
            self._write_meta(meta, blk, FLAG_INTRA,
                             int.from_bytes(word, "big"), block.mask)
        else:
            digest = fingerprint(block)
            self.fingerprints += 1
            ref = store.lookup(digest, self_frame=held)
            if ref is not None:
                cls = CLS_INTER
                self.dedup_counts["inter_removed"] += 1
                ftab.retain(ref)
                if held is not None:
                    self._release_held(ftab, held)
                self._write_meta(meta, blk, FLAG_INTER, ref, block.mask)
            else:
                cls = CLS_UNIQUE
                self.dedup_counts["unique_writes"] += 1
                frame = held if held is not None else ftab.alloc(blk)
                self._dram[frame] = {s: block.sector_data(s)
                                     for s in mask_sectors(block.mask)}
                self.counts["write"] += 1
                self.dram_write_bytes += SECTOR_BYTES * popcount(block.mask)
                if not store.contains(digest):
                    store.insert(digest, frame)
                self._write_meta(meta, blk, FLAG_REF, frame, block.mask)
        if self.classifications is not None:
            self.classifications.append(cls)

    def _release_held(self, ftab, frame):
        if ftab.release_ref(frame) != 0:
            raise AssertionError("held frame had unexpected extra references")

    # --- traffic bookkeeping ---------------------------------------------------------

    def _count_read(self, cls, sectors=1):
        self.counts[cls] += 1
        self.dram_read_bytes += SECTOR_BYTES * sectors

    def _meta_read(self, meta, kind, blk):
        acc = meta.read(kind, blk)
        self._note_meta(acc)
        return acc.value

    def _write_meta(self, meta, blk, flag, mapping, mask):
        for kind, value in ((META_TYPE, flag), (META_ADDR, mapping), (META_MASK, mask)):
            self._note_meta(meta.write(kind, blk, value))

    def _note_meta(self, acc):
        if acc.miss:
            self.counts["metadata_read"] += 1
            self.dram_read_bytes += 32
        else:
            self.meta_hits += 1
        if acc.writeback:
            self.counts["metadata_write"] += 1
            self.dram_write_bytes += 32

    # --- results ----------------------------------------------------------------------

    def estimated_cycles(self):
        c = self.config.cost.cycles
        reads = sum(self.counts[f] for f in
                    ("data_read", "read_only", "dedup_read", "metadata_read"))
        writes = self.counts["write"] + self.counts["metadata_write"]
        return (reads * c["dram_read"] + writes * c["dram_write"]
                + self.meta_hits * c["metadata_cache_hit"]
                + self.fingerprints * c["fingerprint"]
                + self.counts["l2_hit"] * c["l2_hit"]
                + self.counts["fifo_hit"] * c["fifo_hit"])

    def estimated_energy(self):
        e = self.config.cost.energy
        reads = sum(self.counts[f] for f in
                    ("data_read", "read_only", "dedup_read", "metadata_read"))
        writes = self.counts["write"] + self.counts["metadata_write"]
        return (reads * e["dram_read"] + writes * e["dram_write"]
                + self.meta_hits * e["metadata_cache_hit"]
                + self.fingerprints * e["fingerprint"]
                + self.counts["l2_hit"] * e["l2_hit"]
                + self.counts["fifo_hit"] * e["fifo_hit"]
                + self.counts["car_copy"] * e["car_copy"])

    def build_report(self, digest):
        derived = compute_derived(self.counts, self.dedup_counts,
                                  self.estimated_cycles(), self.estimated_energy())
        return TrafficReport(mode=self.mode, counts=dict(self.counts),
                             dedup=dict(self.dedup_counts), derived=derived,
                             config=self.config.to_dict(), trace_digest=digest)

    def metadata_dump(self):
        blocks = {}
        frames = {}
        if self.dedup_on:
            for meta in self.meta:
                blocks.update(meta.dump())
            for ftab in self.frames:
                frames.update(ftab.dump())
        return {"blocks": dict(sorted(blocks.items(), key=lambda kv: int(kv[0]))),
                "frames": dict(sorted(frames.items(), key=lambda kv: int(kv[0])))}

    # --- debug -----------------------------------------------------------------------

    def check_invariants(self):
        self.cache.audit()
        if not self.dedup_on:
            return
        for p in range(self._partitions):
            expected = {}
            for blk, flag, mapping, _ in self.meta[p].iter_blocks():
                if flag in (FLAG_INTER, FLAG_REF):
                    expected[mapping] = expected.get(mapping, 0) + 1
            self.frames[p].audit(expected)
            self.stores[p].audit(self.frames[p].refcount)


def run_sim(records, config=None, mode=MODE_CMD,
            record_classifications=False, check_every=0):
    """Replay a trace and return the finished Simulator."""
    config = config or SimConfig()
    violation = validate_trace(records)
    if violation is not None:
        raise TraceViolationError(
            f"record {violation.index}: {violation.reason}")
    sim = Simulator(config, mode, record_classifications=record_classifications,
                    check_every=check_every)
    for record in records:
        sim.process(record)
    return sim


def run(records, config=None, mode=MODE_CMD):
    """Replay a trace in one mode and return its TrafficReport."""
    sim = run_sim(records, config, mode)
    return sim.build_report(trace_digest(records))


def compare(records, config=None, modes=MODES):
    """Run several modes over the same trace; reports in mode order."""
    digest = trace_digest(records)
    reports = []
    for mode in modes:
        sim = run_sim(records, config, mode)
        reports.append(sim.build_report(digest))
    return reports
