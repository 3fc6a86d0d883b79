"""Per-block persistent metadata and the frame table.

Each block owns a 2-bit type flag, a 4-byte mapping entry (a frame address,
or the replicated word for uniform blocks), and a 4-bit mask of materialized
sectors. Hot entries live in small on-chip LRU caches fetched at 32-byte
granularity; cache misses and dirty line evictions are the metadata DRAM
traffic. The frame table tracks physical 128B frame refcounts and the
ordered free pool that deduplication feeds.
"""

import heapq
from collections import OrderedDict
from dataclasses import dataclass

FLAG_UNTOUCHED = 0b00  # default: read-only / never written back
FLAG_INTRA = 0b01      # one replicated 4-byte word, held in the mapping entry
FLAG_INTER = 0b10      # duplicate: maps to another block's frame
FLAG_REF = 0b11        # reference or non-duplicate: owns the mapped frame

META_ADDR = "addr"
META_TYPE = "type"
META_MASK = "mask"
META_LINE_BYTES = 32
ENTRIES_PER_LINE = {META_ADDR: 8, META_TYPE: 128, META_MASK: 64}
VALUE_BITS = {META_ADDR: 32, META_TYPE: 2, META_MASK: 4}


class InvariantError(RuntimeError):
    """Internal bookkeeping violated; indicates a simulator bug."""


@dataclass
class MetadataCacheConfig:
    """Per-partition byte budgets; 0 means unbounded. Lines are 32B, LRU."""
    addr_cache: int = 48 * 1024
    type_cache: int = 5 * 1024
    mask_cache: int = 10 * 1024

    def __post_init__(self):
        for name in ("addr_cache", "type_cache", "mask_cache"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def lines_for(self, kind):
        budget = {META_ADDR: self.addr_cache,
                  META_TYPE: self.type_cache,
                  META_MASK: self.mask_cache}[kind]
        return (budget // META_LINE_BYTES) or None


@dataclass
class MetaAccess:
    value: int
    miss: bool       # counted as one metadata DRAM read
    writeback: bool  # dirty victim line: one metadata DRAM write


class MetadataStore:
    """One partition's metadata arrays plus its on-chip caches.

    Values are kept exact in backing dicts; the caches model traffic only.
    ``stride`` is the partition count, so blocks of one partition get dense
    local indices and 32B lines are index-contiguous.
    """

    def __init__(self, config, stride=1):
        self._stride = stride
        self._flag = {}
        self._map = {}
        self._mask = {}
        self._caches = {k: OrderedDict() for k in ENTRIES_PER_LINE}  # line -> dirty
        self._capacity = {k: config.lines_for(k) for k in ENTRIES_PER_LINE}
        self.hits = 0
        self.misses = 0
        self.dirty_writebacks = 0

    def _line(self, kind, blk):
        return (blk // self._stride) // ENTRIES_PER_LINE[kind]

    def _touch(self, kind, blk, dirty):
        cache = self._caches[kind]
        line = self._line(kind, blk)
        miss = line not in cache
        wrote_back = False
        if miss:
            self.misses += 1
            cache[line] = False
            cap = self._capacity[kind]
            if cap is not None and len(cache) > cap:
                _, was_dirty = cache.popitem(last=False)
                if was_dirty:
                    self.dirty_writebacks += 1
                    wrote_back = True
        else:
            self.hits += 1
            cache.move_to_end(line)
        if dirty:
            cache[line] = True
        return miss, wrote_back

    def read(self, kind, blk):
        miss, wb = self._touch(kind, blk, dirty=False)
        return MetaAccess(self.peek(kind, blk), miss, wb)

    def write(self, kind, blk, value):
        if not 0 <= value < (1 << VALUE_BITS[kind]):
            raise ValueError(f"{kind} value {value} out of range")
        miss, wb = self._touch(kind, blk, dirty=True)
        self._backing(kind)[blk] = value
        return MetaAccess(value, miss, wb)

    def _backing(self, kind):
        return {META_ADDR: self._map, META_TYPE: self._flag, META_MASK: self._mask}[kind]

    def peek(self, kind, blk):
        """Authoritative value without modeling any traffic."""
        return self._backing(kind).get(blk, 0)

    def iter_blocks(self):
        for blk in sorted(set(self._flag) | set(self._map) | set(self._mask)):
            yield blk, self._flag.get(blk, 0), self._map.get(blk), self._mask.get(blk, 0)

    def dump(self):
        return {
            str(blk): {"flag": flag, "mapping": mapping, "mask": mask}
            for blk, flag, mapping, mask in self.iter_blocks()
        }


class FrameTable:
    """Refcounts, home-frame occupancy, and the free pool for one partition.

    Frame indices mirror block indices (identity home mapping). A frame is
    free exactly when no block maps to it and its home block's original
    (never written back) data no longer lives there.
    """

    def __init__(self, n_frames, partition=0, stride=1):
        self._n_frames = n_frames
        self._partition = partition
        self._stride = stride
        self._refs = {}
        self._home_cleared = set()
        self._free = set()
        self._heap = []

    def _check_frame(self, frame):
        if not 0 <= frame < self._n_frames or frame % self._stride != self._partition:
            raise InvariantError(f"frame {frame} outside this partition")

    def refcount(self, frame):
        return self._refs.get(frame, 0)

    def home_in_use(self, frame):
        return frame not in self._home_cleared

    def is_free(self, frame):
        return frame in self._free

    def clear_home(self, frame):
        """The home block stops storing its original data in this frame."""
        self._check_frame(frame)
        if frame in self._home_cleared:
            raise InvariantError(f"home of frame {frame} already cleared")
        self._home_cleared.add(frame)
        if self.refcount(frame) == 0:
            self._pool_add(frame)

    def retain(self, frame):
        self._check_frame(frame)
        if frame in self._free:
            raise InvariantError(f"retain of free frame {frame}")
        self._refs[frame] = self.refcount(frame) + 1

    def release_ref(self, frame):
        self._check_frame(frame)
        count = self.refcount(frame)
        if count <= 0:
            raise InvariantError(f"release of untracked frame {frame}")
        count -= 1
        if count:
            self._refs[frame] = count
        else:
            del self._refs[frame]
            if frame in self._home_cleared:
                self._pool_add(frame)
        return count

    def alloc(self, blk):
        """Allocate for ``blk``: its home frame when free, else the lowest
        free frame. The frame comes out refcounted by its new owner."""
        self._check_frame(blk)
        frame = None
        if blk in self._free:
            frame = blk
            self._free.discard(blk)
        else:
            while self._heap:
                cand = heapq.heappop(self._heap)
                if cand in self._free:
                    frame = cand
                    self._free.discard(cand)
                    break
            if frame is None:
                raise InvariantError("free pool exhausted")
        self._refs[frame] = 1
        return frame

    def _pool_add(self, frame):
        self._free.add(frame)
        heapq.heappush(self._heap, frame)

    def free_frames(self):
        return sorted(self._free)

    def dump(self):
        return {str(f): c for f, c in sorted(self._refs.items())}

    def audit(self, expected_refs=None):
        for frame in self._free:
            assert self.refcount(frame) == 0 and frame not in self._refs
            assert frame in self._home_cleared
        for frame, count in self._refs.items():
            assert count > 0
            assert frame not in self._free
        for frame in self._home_cleared:
            if self.refcount(frame) == 0:
                assert frame in self._free
        if expected_refs is not None:
            assert dict(self._refs) == {f: c for f, c in expected_refs.items() if c}, \
                "frame refcounts diverge from mapping scan"
