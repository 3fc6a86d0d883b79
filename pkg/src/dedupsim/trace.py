"""L2-level access traces: record model, text format, synthesis, validation.

A trace is the stream of accesses arriving at the L2 cache: sector reads
and masked line writes. A block is one 128-byte line made of four 32-byte
sectors; payload words are 4 bytes each.
"""

import hashlib
import random
import re
from dataclasses import dataclass
from functools import lru_cache

LINE_BYTES = 128
SECTORS_PER_LINE = 4
SECTOR_BYTES = 32
WORD_BYTES = 4
WORDS_PER_SECTOR = SECTOR_BYTES // WORD_BYTES
FULL_MASK = (1 << SECTORS_PER_LINE) - 1

_MASK64 = (1 << 64) - 1


def popcount(mask):
    return mask.bit_count()


def mask_sectors(mask):
    """Sector indices set in a 4-bit mask, ascending."""
    return [i for i in range(SECTORS_PER_LINE) if mask >> i & 1]


def mask_to_str(mask):
    """4-character mask string, leftmost character = sector 0."""
    return "".join("1" if mask >> i & 1 else "0" for i in range(SECTORS_PER_LINE))


def mask_from_str(text):
    if len(text) != SECTORS_PER_LINE or set(text) - {"0", "1"}:
        raise ValueError(f"malformed mask {text!r}")
    mask = 0
    for i, ch in enumerate(text):
        if ch == "1":
            mask |= 1 << i
    return mask


@dataclass(frozen=True)
class Read:
    blk: int
    sector: int


@dataclass(frozen=True)
class Write:
    blk: int
    mask: int
    payload: bytes  # 32 bytes per set mask bit, ascending sector order

    def sector_data(self, sector):
        """32-byte payload slice for a sector that is set in the mask."""
        pos = popcount(self.mask & ((1 << sector) - 1))
        return self.payload[pos * SECTOR_BYTES:(pos + 1) * SECTOR_BYTES]


class TraceParseError(ValueError):
    def __init__(self, line, col, message):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


def format_record(rec):
    if isinstance(rec, Read):
        return f"R {rec.blk:x} {rec.sector}"
    return f"W {rec.blk:x} {mask_to_str(rec.mask)} {rec.payload.hex()}"


def format_trace(records):
    return "".join(format_record(r) + "\n" for r in records)


def parse_trace(source):
    """Parse the canonical text trace format.

    ``source`` may be a string, an open text file, or an iterable of lines.
    Lines starting with '#' and blank lines are skipped. Raises
    TraceParseError with 1-based line/column on malformed input.
    """
    if isinstance(source, str):
        lines = source.splitlines()
    elif hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]

    records = []
    for lineno, raw in enumerate(lines, 1):
        tokens = [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", raw)]
        if not tokens or tokens[0][0].startswith("#"):
            continue
        kind, col = tokens[0]
        if kind == "R":
            if len(tokens) != 3:
                raise TraceParseError(lineno, col, "read takes 2 fields: blk sector")
            records.append(_parse_read(lineno, tokens))
        elif kind == "W":
            if len(tokens) != 4:
                raise TraceParseError(lineno, col, "write takes 3 fields: blk mask payload")
            records.append(_parse_write(lineno, tokens))
        else:
            raise TraceParseError(lineno, col, f"unknown record kind {kind!r}")
    return records


def _parse_blk(lineno, token):
    text, col = token
    try:
        return int(text, 16)
    except ValueError:
        raise TraceParseError(lineno, col, f"bad block address {text!r}") from None


def _parse_read(lineno, tokens):
    blk = _parse_blk(lineno, tokens[1])
    text, col = tokens[2]
    if text not in ("0", "1", "2", "3"):
        raise TraceParseError(lineno, col, f"sector out of range: {text!r}")
    return Read(blk, int(text))


def _parse_write(lineno, tokens):
    blk = _parse_blk(lineno, tokens[1])
    text, col = tokens[2]
    try:
        mask = mask_from_str(text)
    except ValueError as exc:
        raise TraceParseError(lineno, col, str(exc)) from None
    if mask == 0:
        raise TraceParseError(lineno, col, "write mask has no sectors set")
    text, col = tokens[3]
    if len(text) != 2 * SECTOR_BYTES * popcount(mask):
        raise TraceParseError(
            lineno, col,
            f"payload length mismatch: got {len(text)} hex chars, "
            f"want {2 * SECTOR_BYTES * popcount(mask)}")
    try:
        payload = bytes.fromhex(text)
    except ValueError:
        raise TraceParseError(lineno, col, "non-hex payload") from None
    return Write(blk, mask, payload)


@dataclass(frozen=True)
class TraceViolation:
    index: int
    reason: str


def validate_trace(records):
    """Check trace well-formedness; returns the first TraceViolation or None.

    Every read of a block that is written anywhere in the trace must target
    a sector inside the union of that block's earlier write masks. Reads of
    blocks the trace never writes are unrestricted (read-only data).
    """
    ever_written = {rec.blk for rec in records if isinstance(rec, Write)}
    seen = {}
    for i, rec in enumerate(records):
        if isinstance(rec, Write):
            seen[rec.blk] = seen.get(rec.blk, 0) | rec.mask
        elif rec.blk in ever_written:
            if not seen.get(rec.blk, 0) >> rec.sector & 1:
                return TraceViolation(
                    i, f"read of blk {rec.blk:#x} sector {rec.sector} "
                       f"outside prior write masks")
    return None


def trace_digest(records):
    """Stable hex fingerprint of a record sequence (report provenance)."""
    return hashlib.md5(format_trace(records).encode()).hexdigest()


# --- background DRAM content ------------------------------------------------
#
# Reads of never-written blocks return deterministic pseudo-random words so
# that the simulator and the reference model agree on read-only data without
# storing it. bg_word is a fixed function: three chained splitmix64
# finalizer rounds over (seed, blk, word_index), truncated to 32 bits,
# little-endian.

def _mix64(x):
    x &= _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return x ^ (x >> 31)


def bg_word(seed, blk, word_index):
    h = _mix64(_mix64(_mix64(seed ^ 0x9E3779B97F4A7C15) + blk) + word_index)
    return (h & 0xFFFFFFFF).to_bytes(4, "little")


@lru_cache(maxsize=8192)
def bg_sector(seed, blk, sector):
    base = sector * WORDS_PER_SECTOR
    return b"".join(bg_word(seed, blk, base + i) for i in range(WORDS_PER_SECTOR))


# --- synthetic trace generation ----------------------------------------------

@dataclass(frozen=True)
class GenParams:
    """Knobs for the synthetic workload generator.

    mask_distribution gives the probability of a write covering 1, 2, 3, or
    4 sectors. readonly_set_size blocks at the top of the address space are
    never written and are re-read cyclically readonly_rereads times (capped
    by the record budget left after writes).
    """
    seed: int = 0
    n_blocks: int = 256
    n_records: int = 1000
    write_fraction: float = 0.4
    intra_prob: float = 0.3
    inter_pool_size: int = 8
    readonly_set_size: int = 32
    readonly_rereads: int = 4
    mask_distribution: tuple = (0.05, 0.05, 0.1, 0.8)

    def validate(self):
        if self.n_blocks < 1:
            raise ValueError("n_blocks must be >= 1")
        if self.n_records < 0:
            raise ValueError("n_records must be >= 0")
        for name in ("write_fraction", "intra_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.inter_pool_size < 1:
            raise ValueError("inter_pool_size must be >= 1")
        if not 0 <= self.readonly_set_size <= self.n_blocks:
            raise ValueError("readonly_set_size out of range")
        if self.readonly_rereads < 0:
            raise ValueError("readonly_rereads must be >= 0")
        dist = self.mask_distribution
        if len(dist) != 4 or any(p < 0 for p in dist) or abs(sum(dist) - 1.0) > 1e-9:
            raise ValueError("mask_distribution must be 4 probabilities summing to 1")
        if round(self.n_records * self.write_fraction) > 0 and \
                self.n_blocks - self.readonly_set_size < 1:
            raise ValueError("no writable blocks left for the requested writes")


@lru_cache(maxsize=1024)
def _pool_line(seed, pool_id):
    """128 bytes of deterministic content for one shared-pool entry."""
    return b"".join(
        (_mix64(_mix64(_mix64(seed ^ 0x6A09E667F3BCC909) + pool_id) + w)
         & 0xFFFFFFFF).to_bytes(4, "little")
        for w in range(LINE_BYTES // WORD_BYTES))


def generate_trace(params):
    """Generate a well-formed trace; identical params give identical records."""
    params.validate()
    rng = random.Random(params.seed)
    writable = params.n_blocks - params.readonly_set_size
    ro_base = writable

    n_writes = min(params.n_records, round(params.n_records * params.write_fraction))
    ro_quota = min(params.readonly_set_size * params.readonly_rereads,
                   params.n_records - n_writes)
    quotas = [n_writes, params.n_records - n_writes - ro_quota, ro_quota]

    records = []
    written_pairs = []
    written_mask = {}
    ro_cursor = 0

    def emit_write():
        blk = rng.randrange(writable)
        k = rng.choices((1, 2, 3, 4), weights=params.mask_distribution)[0]
        sectors = sorted(rng.sample(range(SECTORS_PER_LINE), k))
        mask = 0
        for s in sectors:
            mask |= 1 << s
        if rng.random() < params.intra_prob:
            word = rng.getrandbits(32).to_bytes(4, "little")
            payload = word * (WORDS_PER_SECTOR * k)
        else:
            line = _pool_line(params.seed, rng.randrange(params.inter_pool_size))
            payload = b"".join(
                line[s * SECTOR_BYTES:(s + 1) * SECTOR_BYTES] for s in sectors)
        for s in sectors:
            if not written_mask.get(blk, 0) >> s & 1:
                written_pairs.append((blk, s))
        written_mask[blk] = written_mask.get(blk, 0) | mask
        records.append(Write(blk, mask, payload))

    def emit_readonly():
        nonlocal ro_cursor
        blk = ro_base + ro_cursor % params.readonly_set_size
        ro_cursor += 1
        records.append(Read(blk, blk % SECTORS_PER_LINE))

    for _ in range(params.n_records):
        kind = rng.choices((0, 1, 2), weights=[max(q, 0) for q in quotas])[0]
        if kind == 1 and not written_pairs:
            # nothing written yet: fall back to a category that stays legal
            if quotas[0] > 0:
                kind = 0
            elif quotas[2] > 0:
                kind = 2
            else:
                # no writes ever scheduled: every block stays read-only
                quotas[1] -= 1
                records.append(Read(rng.randrange(params.n_blocks),
                                    rng.randrange(SECTORS_PER_LINE)))
                continue
        quotas[kind] -= 1
        if kind == 0:
            emit_write()
        elif kind == 2:
            emit_readonly()
        else:
            blk, sector = written_pairs[rng.randrange(len(written_pairs))]
            records.append(Read(blk, sector))
    return records
