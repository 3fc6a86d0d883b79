"""Write-deduplication primitives.

A canonical block is the mask plus the concatenated bytes of its valid
sectors; the fingerprint digests both, so two blocks are duplicates only
when mask and valid bytes match exactly. The hash store is a bounded LRU
table of [digest, reference frame, duplicate count] entries; only entries
whose count is 1 may be evicted.
"""

import hashlib
from collections import OrderedDict
from dataclasses import dataclass

from .trace import SECTOR_BYTES, WORD_BYTES, mask_sectors, popcount

COUNT_MAX = (1 << 16) - 1
HASH_ENTRY_BYTES = 22  # 16B digest + 4B frame + 2B count
DEFAULT_HASH_ENTRIES = 2233  # per-partition default (48 KiB budget)


def entries_for_budget(budget_bytes):
    return budget_bytes // HASH_ENTRY_BYTES


@dataclass(frozen=True)
class CanonicalBlock:
    mask: int
    data: bytes  # 32 bytes per set mask bit, ascending sector order

    def sector_data(self, sector):
        pos = popcount(self.mask & ((1 << sector) - 1))
        return self.data[pos * SECTOR_BYTES:(pos + 1) * SECTOR_BYTES]


def covered(new_mask, old_mask):
    """True when the write mask supersedes every stored sector (no merge read)."""
    return old_mask & ~new_mask == 0


def merge_blocks(old, new_mask, new_payload):
    """Combine stored and written sectors; new bytes win on overlap."""
    mask = old.mask | new_mask
    parts = []
    new_pos = 0
    for s in mask_sectors(mask):
        if new_mask >> s & 1:
            parts.append(new_payload[new_pos * SECTOR_BYTES:(new_pos + 1) * SECTOR_BYTES])
        else:
            parts.append(old.sector_data(s))
        if new_mask >> s & 1:
            new_pos += 1
    return CanonicalBlock(mask, b"".join(parts))


def uniform_word(block):
    """The 4-byte word replicated across every valid word, else None."""
    word = block.data[:WORD_BYTES]
    if block.data == word * (len(block.data) // WORD_BYTES):
        return word
    return None


def fingerprint(block):
    """128-bit collision-free digest of (mask, valid-sector bytes)."""
    return hashlib.md5(bytes([block.mask]) + block.data).digest()


class _Entry:
    __slots__ = ("frame", "count")

    def __init__(self, frame):
        self.frame = frame
        self.count = 1


class HashStore:
    """Bounded LRU digest table; capacity None (or 0) means unbounded."""

    def __init__(self, capacity=DEFAULT_HASH_ENTRIES):
        self._capacity = capacity or None
        self._entries = OrderedDict()  # digest -> _Entry, LRU first
        self._frame_digest = {}  # frame -> digest holding it

    def __len__(self):
        return len(self._entries)

    def contains(self, digest):
        return digest in self._entries

    def count(self, digest):
        entry = self._entries.get(digest)
        return 0 if entry is None else entry.count

    def frame_of(self, digest):
        entry = self._entries.get(digest)
        return None if entry is None else entry.frame

    def lookup(self, digest, self_frame=None):
        """Reference frame if this digest is a usable duplicate, else None.

        A hit bumps the count and refreshes recency. A saturated count or a
        match against the writer's own frame is treated as non-duplicate.
        """
        entry = self._entries.get(digest)
        if entry is None or entry.count >= COUNT_MAX or entry.frame == self_frame:
            return None
        entry.count += 1
        self._entries.move_to_end(digest)
        return entry.frame

    def insert(self, digest, frame):
        """Insert with count 1; evicts the LRU count-1 entry when full.

        Returns False (rejected) when the store is full and every entry is
        shared by at least two blocks.
        """
        if digest in self._entries:
            raise ValueError("digest already present")
        if frame in self._frame_digest:
            raise ValueError("frame already fingerprinted")
        if self._capacity is not None and len(self._entries) >= self._capacity:
            victim = None
            for d, entry in self._entries.items():
                if entry.count == 1:
                    victim = d
                    break
            if victim is None:
                return False
            self._remove(victim)
        self._entries[digest] = _Entry(frame)
        self._frame_digest[frame] = digest
        return True

    def decrement_frame(self, frame):
        """Drop one holder from the entry referencing ``frame``, if any.

        The entry disappears when its count reaches zero. Frames whose entry
        was evicted earlier are a no-op.
        """
        digest = self._frame_digest.get(frame)
        if digest is None:
            return
        entry = self._entries[digest]
        entry.count -= 1
        if entry.count == 0:
            self._remove(digest)

    def _remove(self, digest):
        entry = self._entries.pop(digest)
        del self._frame_digest[entry.frame]

    def snapshot(self):
        """(digest, frame, count) triples in LRU-to-MRU order."""
        return [(d, e.frame, e.count) for d, e in self._entries.items()]

    def audit(self, refcount_of=None):
        for digest, entry in self._entries.items():
            assert 1 <= entry.count <= COUNT_MAX
            assert self._frame_digest.get(entry.frame) == digest
            if refcount_of is not None:
                assert refcount_of(entry.frame) == entry.count, \
                    "hash count diverged from frame refcount"
        assert len(self._frame_digest) == len(self._entries)


def dedup_decrement(store, frame_table, frame):
    """Unmap one block from a shared frame: hash count and refcount together.

    Returns the remaining frame refcount; the frame returns to the free pool
    when it reaches zero and its home block no longer stores there.
    """
    store.decrement_frame(frame)
    return frame_table.release_ref(frame)
