import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dedupsim.trace import (FULL_MASK, GenParams, Read, TraceParseError,
                            Write, bg_sector, bg_word, format_trace,
                            generate_trace, mask_from_str, mask_sectors,
                            mask_to_str, parse_trace, popcount, trace_digest,
                            validate_trace)


def test_mask_roundtrip():
    assert mask_from_str("1011") == 0b1101  # leftmost char is sector 0
    assert mask_to_str(0b1101) == "1011"
    assert mask_sectors(0b1101) == [0, 2, 3]
    for m in range(16):
        assert mask_from_str(mask_to_str(m)) == m


def test_parse_read():
    assert parse_trace("R 2a 1") == [Read(blk=0x2A, sector=1)]


def test_parse_write_full_line():
    payload = "ab" * 128
    recs = parse_trace(f"W 00 1111 {payload}")
    assert recs == [Write(blk=0, mask=FULL_MASK, payload=bytes.fromhex(payload))]
    assert popcount(recs[0].mask) == 4


def test_parse_write_two_sectors():
    payload = "cd" * 64  # popcount 2 -> 64 bytes -> 128 hex chars
    recs = parse_trace(f"W 05 0110 {payload}")
    assert recs[0].blk == 5
    assert recs[0].mask == 0b0110
    assert len(recs[0].payload) == 64


def test_parse_comments_and_blanks():
    text = "# header\n\nR 1 0\n  # indented comment\nR 2 3\n"
    assert parse_trace(text) == [Read(1, 0), Read(2, 3)]


@pytest.mark.parametrize("line,fragment", [
    ("X 1 0", "unknown record kind"),
    ("R 1", "read takes 2 fields"),
    ("R zz 0", "bad block address"),
    ("R 1 4", "sector out of range"),
    ("R 1 -1", "sector out of range"),
    ("W 1 10 " + "00" * 32, "malformed mask"),
    ("W 1 12a1 " + "00" * 32, "malformed mask"),
    ("W 1 0000 ", "write takes 3 fields"),
    ("W 1 0001 " + "00" * 16, "payload length mismatch"),
    ("W 1 0001 " + "zz" * 32, "non-hex payload"),
])
def test_parse_errors(line, fragment):
    with pytest.raises(TraceParseError) as exc:
        parse_trace(line)
    assert fragment in str(exc.value)
    assert exc.value.line == 1


def test_parse_error_location():
    with pytest.raises(TraceParseError) as exc:
        parse_trace("R 1 0\nW 2 0001 beef")
    assert exc.value.line == 2
    assert exc.value.col == 10  # payload token


_record = st.one_of(
    st.builds(Read, blk=st.integers(0, 1 << 20), sector=st.integers(0, 3)),
    st.integers(1, 15).flatmap(lambda m: st.builds(
        Write, blk=st.integers(0, 1 << 20), mask=st.just(m),
        payload=st.binary(min_size=32 * popcount(m), max_size=32 * popcount(m)))),
)


@given(st.lists(_record, max_size=40))
@settings(max_examples=80)
def test_format_parse_roundtrip(records):
    assert parse_trace(format_trace(records)) == records


def test_validate_accepts_read_inside_prior_mask():
    w = Write(1, 0b0001, b"\x11" * 32)
    assert validate_trace([w, Read(1, 0)]) is None


def test_validate_rejects_read_outside_prior_mask():
    w = Write(1, 0b0001, b"\x11" * 32)
    v = validate_trace([w, Read(1, 3)])
    assert v is not None and v.index == 1


def test_validate_never_written_block_is_unrestricted():
    assert validate_trace([Read(9, 2)]) is None


def test_validate_read_before_write_is_a_violation():
    v = validate_trace([Read(9, 2), Write(9, FULL_MASK, b"\x00" * 128)])
    assert v is not None and v.index == 0


def test_bg_word_is_deterministic_and_seed_sensitive():
    assert bg_word(0, 5, 3) == bg_word(0, 5, 3)
    assert bg_word(0, 5, 3) != bg_word(1, 5, 3)
    assert bg_word(0, 5, 3) != bg_word(0, 6, 3)
    assert len(bg_sector(0, 5, 2)) == 32


# --- generator ----------------------------------------------------------------

def test_generator_all_intra_when_forced():
    params = GenParams(seed=1, n_records=200, write_fraction=1.0,
                       intra_prob=1.0, readonly_set_size=0)
    for rec in generate_trace(params):
        assert isinstance(rec, Write)
        word = rec.payload[:4]
        assert rec.payload == word * (len(rec.payload) // 4)


def test_generator_single_pool_full_masks_identical():
    params = GenParams(seed=2, n_records=100, write_fraction=1.0,
                       intra_prob=0.0, inter_pool_size=1,
                       readonly_set_size=0, mask_distribution=(0, 0, 0, 1))
    payloads = {rec.payload for rec in generate_trace(params)}
    assert len(payloads) == 1


def test_generator_deterministic():
    params = GenParams(seed=7, n_records=10_000)
    a = format_trace(generate_trace(params))
    b = format_trace(generate_trace(params))
    assert a == b
    assert trace_digest(generate_trace(params)) == trace_digest(generate_trace(params))


@pytest.mark.parametrize("seed", range(6))
def test_generator_output_is_well_formed(seed):
    params = GenParams(seed=seed, n_records=1500, n_blocks=64,
                       readonly_set_size=12, write_fraction=0.35)
    assert validate_trace(generate_trace(params)) is None


def test_generator_readonly_blocks_never_written():
    params = GenParams(seed=3, n_records=2000, n_blocks=64,
                       readonly_set_size=16, readonly_rereads=8)
    records = generate_trace(params)
    written = {r.blk for r in records if isinstance(r, Write)}
    assert all(b < 48 for b in written)
    ro_reads = [r for r in records if isinstance(r, Read) and r.blk >= 48]
    assert ro_reads, "expected read-only traffic"


@pytest.mark.parametrize("kwargs", [
    dict(n_blocks=0),
    dict(write_fraction=1.5),
    dict(intra_prob=-0.1),
    dict(inter_pool_size=0),
    dict(readonly_set_size=300, n_blocks=200),
    dict(readonly_rereads=-1),
    dict(mask_distribution=(1, 1, 1, 1)),
    dict(mask_distribution=(0.5, 0.5)),
    dict(n_blocks=8, readonly_set_size=8, write_fraction=1.0),
])
def test_generator_invalid_params(kwargs):
    with pytest.raises(ValueError):
        generate_trace(GenParams(**kwargs))
