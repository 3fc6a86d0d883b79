"""Command-line interface: gen, run, compare, sweep, verify."""

import argparse
import json
import sys

from .controller import (MODE_CMD, MODES, SimConfig, TraceViolationError,
                         compare, run_sim)
from .oracle import oracle_read_all, oracle_replay
from .report import (compare_to_csv, compare_to_json, report_to_csv,
                     report_to_json)
from .trace import (GenParams, TraceParseError, bg_sector, format_trace,
                    generate_trace, parse_trace, trace_digest)

SWEEP_PARAMS = ("fifo_entries", "hash_entries", "addr_cache_bytes",
                "type_cache_bytes", "mask_cache_bytes")
_SWEEP_FIELD = {
    "fifo_entries": "fifo_entries_per_partition",
    "hash_entries": "hash_entries",
    "addr_cache_bytes": "addr_cache",
    "type_cache_bytes": "type_cache",
    "mask_cache_bytes": "mask_cache",
}
_OVERRIDE_FLAGS = (
    ("partitions", "n_partitions"),
    ("l2_bytes", "capacity_bytes"),
    ("assoc", "associativity"),
    ("fifo_entries", "fifo_entries_per_partition"),
    ("hash_entries", "hash_entries"),
    ("addr_cache_bytes", "addr_cache"),
    ("type_cache_bytes", "type_cache"),
    ("mask_cache_bytes", "mask_cache"),
    ("seed", "bg_seed"),
)

SWEEP_METRICS = ("offchip_total", "write", "data_read", "read_only",
                 "metadata_read", "metadata_write", "dedup_read", "car_copy",
                 "fifo_hit", "dedup_ratio", "extra_read_ratio")


def _add_config_flags(sub):
    sub.add_argument("--config", help="JSON config file (flags override it)")
    sub.add_argument("--partitions", type=int)
    sub.add_argument("--l2-bytes", type=int, dest="l2_bytes")
    sub.add_argument("--assoc", type=int)
    sub.add_argument("--fifo-entries", type=int, dest="fifo_entries")
    sub.add_argument("--hash-entries", type=int, dest="hash_entries")
    sub.add_argument("--addr-cache-bytes", type=int, dest="addr_cache_bytes")
    sub.add_argument("--type-cache-bytes", type=int, dest="type_cache_bytes")
    sub.add_argument("--mask-cache-bytes", type=int, dest="mask_cache_bytes")
    sub.add_argument("--seed", type=int, help="background-content seed")


def _add_report_flags(sub):
    sub.add_argument("--report", choices=("json", "csv"), default="json")
    sub.add_argument("--out", help="output file (default: stdout)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dedupsim",
        description="Trace-driven GPU L2 sector cache and deduplicating "
                    "memory controller simulator")
    subs = parser.add_subparsers(dest="command", required=True)

    gen = subs.add_parser("gen", help="synthesize a trace")
    gen.add_argument("--out", help="output file (default: stdout)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n-blocks", type=int, default=256)
    gen.add_argument("--n-records", type=int, default=1000)
    gen.add_argument("--write-fraction", type=float, default=0.4)
    gen.add_argument("--intra-prob", type=float, default=0.3)
    gen.add_argument("--inter-pool-size", type=int, default=8)
    gen.add_argument("--readonly-set-size", type=int, default=32)
    gen.add_argument("--readonly-rereads", type=int, default=4)
    gen.add_argument("--mask-dist", default="0.05,0.05,0.1,0.8",
                     help="popcount 1..4 probabilities, comma separated")

    one = subs.add_parser("run", help="run one mode over a trace")
    one.add_argument("--mode", choices=MODES, default=MODE_CMD)
    one.add_argument("--trace", required=True)
    one.add_argument("--dump-metadata", dest="dump_metadata",
                     help="write the final per-block/per-frame metadata as JSON")
    _add_config_flags(one)
    _add_report_flags(one)

    cmp_ = subs.add_parser("compare", help="run all four modes side by side")
    cmp_.add_argument("--trace", required=True)
    _add_config_flags(cmp_)
    _add_report_flags(cmp_)

    swp = subs.add_parser("sweep", help="vary one parameter, emit metric CSV")
    swp.add_argument("--param", choices=SWEEP_PARAMS, required=True)
    swp.add_argument("--values", required=True, help="comma-separated integers")
    swp.add_argument("--mode", choices=MODES, default=MODE_CMD)
    swp.add_argument("--trace", required=True)
    swp.add_argument("--out", help="output file (default: stdout)")
    _add_config_flags(swp)

    ver = subs.add_parser("verify", help="check simulator against the oracle")
    ver.add_argument("--trace", required=True)
    _add_config_flags(ver)

    return parser


def load_config(args):
    # CLI defaults model the full system: 4 MiB 16-way L2 over 8 partitions
    data = {"n_partitions": 8}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
        data.update(loaded)
    for flag, key in _OVERRIDE_FLAGS:
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value
    return SimConfig.from_dict(data)


def _load_trace(path):
    with open(path) as fh:
        return parse_trace(fh)


def _emit(text, out_path):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args):
    dist = tuple(float(x) for x in args.mask_dist.split(","))
    params = GenParams(seed=args.seed, n_blocks=args.n_blocks,
                       n_records=args.n_records,
                       write_fraction=args.write_fraction,
                       intra_prob=args.intra_prob,
                       inter_pool_size=args.inter_pool_size,
                       readonly_set_size=args.readonly_set_size,
                       readonly_rereads=args.readonly_rereads,
                       mask_distribution=dist)
    _emit(format_trace(generate_trace(params)), args.out)
    return 0


def cmd_run(args):
    config = load_config(args)
    records = _load_trace(args.trace)
    sim = run_sim(records, config, args.mode)
    report = sim.build_report(trace_digest(records))
    text = report_to_json(report) if args.report == "json" else report_to_csv(report)
    _emit(text, args.out)
    if args.dump_metadata:
        with open(args.dump_metadata, "w") as fh:
            json.dump(sim.metadata_dump(), fh, indent=2)
            fh.write("\n")
    return 0


def cmd_compare(args):
    config = load_config(args)
    records = _load_trace(args.trace)
    reports = compare(records, config)
    text = (compare_to_json(reports) if args.report == "json"
            else compare_to_csv(reports))
    _emit(text, args.out)
    return 0


def cmd_sweep(args):
    config_dict = load_config(args).to_dict()
    records = _load_trace(args.trace)
    values = [int(x) for x in args.values.split(",")]
    field = _SWEEP_FIELD[args.param]
    lines = ["param,value," + ",".join(SWEEP_METRICS)]
    for value in values:
        point = dict(config_dict)
        point[field] = value
        report = run_sim(records, SimConfig.from_dict(point),
                         args.mode).build_report(trace_digest(records))
        cells = [str(report.counts.get(m, report.derived.get(m)))
                 for m in SWEEP_METRICS]
        lines.append(f"{args.param},{value}," + ",".join(cells))
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def verify_trace(records, config):
    """Oracle equivalence check; returns None or the first divergence."""
    unbounded = dict(config.to_dict())
    unbounded.update({"hash_entries": 0, "addr_cache": 0,
                      "type_cache": 0, "mask_cache": 0})
    exact = SimConfig.from_dict(unbounded)
    sim = run_sim(records, exact, MODE_CMD, record_classifications=True)
    expected = oracle_replay(records, exact.cache)
    if len(sim.classifications) != len(expected):
        return (f"writeback count mismatch: simulator {len(sim.classifications)}, "
                f"oracle {len(expected)}")
    for i, (got, want) in enumerate(zip(sim.classifications, expected)):
        if got != want.kind:
            return f"writeback {i}: simulator {got}, oracle {want.kind}"

    contents = oracle_read_all(records)
    ro_blocks = sorted({r.blk for r in records} - {b for b, _ in contents})[:8]
    for mode in MODES:
        sim = run_sim(records, config, mode)
        for (blk, sector), want in contents.items():
            got = sim.read(blk, sector)
            if got != want:
                return (f"mode {mode}: blk {blk:#x} sector {sector} read back "
                        f"{got.hex()} want {want.hex()}")
        for blk in ro_blocks:
            want = bg_sector(config.bg_seed, blk, 0)
            if sim.read(blk, 0) != want:
                return f"mode {mode}: background content mismatch at blk {blk:#x}"
    return None


def cmd_verify(args):
    config = load_config(args)
    records = _load_trace(args.trace)
    divergence = verify_trace(records, config)
    if divergence is None:
        print("equivalent")
        return 0
    print(divergence, file=sys.stderr)
    return 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"gen": cmd_gen, "run": cmd_run, "compare": cmd_compare,
               "sweep": cmd_sweep, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except (TraceParseError, TraceViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
