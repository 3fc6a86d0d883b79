"""Trace-driven simulator of a GPU L2 sector cache with a deduplicating
memory controller: write dedup, cache-assisted reads, a clean-victim FIFO,
and per-class off-chip traffic accounting."""

from .controller import (CostModel, MODE_BASELINE, MODE_CMD, MODE_DEDUP,
                         MODE_DEDUP_CAR, MODES, SimConfig, Simulator,
                         TraceViolationError, compare, run, run_sim)
from .dedup import (CanonicalBlock, HashStore, covered, dedup_decrement,
                    entries_for_budget, fingerprint, merge_blocks,
                    uniform_word)
from .metadata import (FLAG_INTER, FLAG_INTRA, FLAG_REF, FLAG_UNTOUCHED,
                       FrameTable, InvariantError, MetadataCacheConfig,
                       MetadataStore)
from .oracle import oracle_read_all, oracle_replay
from .report import TrafficReport, report_from_json, report_to_csv, report_to_json
from .sector_cache import CacheConfig, FifoEntry, SectorCache, WritebackRequest
from .trace import (GenParams, Read, TraceParseError, TraceViolation, Write,
                    bg_sector, bg_word, format_trace, generate_trace,
                    mask_from_str, mask_to_str, parse_trace, trace_digest,
                    validate_trace)

__version__ = "0.1.0"
