"""Traffic report: counter layout, derived metrics, stable serialization."""

import json
from dataclasses import dataclass

COUNT_FIELDS = ("write", "data_read", "read_only", "metadata_read",
                "metadata_write", "dedup_read", "car_copy", "fifo_hit",
                "l2_hit", "l2_miss")
DRAM_CLASSES = ("write", "data_read", "read_only", "metadata_read",
                "metadata_write", "dedup_read")
DEDUP_FIELDS = ("intra_removed", "inter_removed", "unique_writes")
DERIVED_FIELDS = ("offchip_total", "dedup_ratio", "extra_read_ratio",
                  "est_cycles", "est_energy")
REDUCTION_FIELDS = DRAM_CLASSES + ("offchip_total",)


@dataclass
class TrafficReport:
    mode: str
    counts: dict
    dedup: dict
    derived: dict
    config: dict
    trace_digest: str

    def validate(self):
        missing = [f for f in COUNT_FIELDS if f not in self.counts]
        missing += [f for f in DEDUP_FIELDS if f not in self.dedup]
        missing += [f for f in DERIVED_FIELDS if f not in self.derived]
        if missing:
            raise ValueError(f"report missing fields: {missing}")
        total = sum(self.counts[f] for f in DRAM_CLASSES)
        if self.derived["offchip_total"] != total:
            raise ValueError("offchip_total does not equal the sum of DRAM classes")
        writes_seen = sum(self.dedup[f] for f in DEDUP_FIELDS)
        removed = self.dedup["intra_removed"] + self.dedup["inter_removed"]
        if self.derived["dedup_ratio"] != removed / max(1, writes_seen):
            raise ValueError("dedup_ratio inconsistent with dedup counters")
        if self.derived["extra_read_ratio"] != \
                self.counts["dedup_read"] / max(1, total):
            raise ValueError("extra_read_ratio inconsistent with counters")


def compute_derived(counts, dedup, est_cycles, est_energy):
    total = sum(counts[f] for f in DRAM_CLASSES)
    writes_seen = sum(dedup[f] for f in DEDUP_FIELDS)
    removed = dedup["intra_removed"] + dedup["inter_removed"]
    return {
        "offchip_total": total,
        "dedup_ratio": removed / max(1, writes_seen),
        "extra_read_ratio": counts["dedup_read"] / max(1, total),
        "est_cycles": est_cycles,
        "est_energy": est_energy,
    }


def _report_dict(report):
    return {
        "mode": report.mode,
        "counts": {f: report.counts[f] for f in COUNT_FIELDS},
        "dedup": {f: report.dedup[f] for f in DEDUP_FIELDS},
        "derived": {f: report.derived[f] for f in DERIVED_FIELDS},
        "config": report.config,
        "trace_digest": report.trace_digest,
    }


def report_to_json(report):
    report.validate()
    return json.dumps(_report_dict(report), indent=2) + "\n"


def report_from_json(text):
    data = json.loads(text)
    return TrafficReport(mode=data["mode"], counts=data["counts"],
                         dedup=data["dedup"], derived=data["derived"],
                         config=data["config"], trace_digest=data["trace_digest"])


def report_to_csv(report):
    """One row per (mode, field) over counts, dedup and derived fields."""
    report.validate()
    lines = ["mode,field,value"]
    for field in COUNT_FIELDS:
        lines.append(f"{report.mode},{field},{report.counts[field]}")
    for field in DEDUP_FIELDS:
        lines.append(f"{report.mode},{field},{report.dedup[field]}")
    for field in DERIVED_FIELDS:
        lines.append(f"{report.mode},{field},{report.derived[field]}")
    return "\n".join(lines) + "\n"


def reduction_pct(baseline, value):
    """Percent reduction vs baseline, 2 decimals; 0 baseline reports 0%."""
    if baseline == 0:
        return 0.0
    return round(100.0 * (baseline - value) / baseline, 2)


def _reductions(reports):
    base = reports[0]
    out = {}
    for rep in reports[1:]:
        row = {}
        for field in REDUCTION_FIELDS:
            b = base.counts[field] if field in base.counts else base.derived[field]
            v = rep.counts[field] if field in rep.counts else rep.derived[field]
            row[field] = reduction_pct(b, v)
        out[rep.mode] = row
    return out


def compare_to_json(reports):
    """Side-by-side emit; the first report is the reduction baseline."""
    for rep in reports:
        rep.validate()
    data = {
        "baseline_mode": reports[0].mode,
        "modes": {rep.mode: _report_dict(rep) for rep in reports},
        "reductions_vs_baseline": _reductions(reports),
    }
    return json.dumps(data, indent=2) + "\n"


def compare_to_csv(reports):
    for rep in reports:
        rep.validate()
    reductions = _reductions(reports)
    lines = ["mode,field,value,reduction_pct_vs_baseline"]
    for rep in reports:
        rows = reductions.get(rep.mode, {})
        for field in COUNT_FIELDS:
            pct = rows.get(field, "")
            lines.append(f"{rep.mode},{field},{rep.counts[field]},{pct}")
        lines.append(f"{rep.mode},offchip_total,{rep.derived['offchip_total']},"
                     f"{rows.get('offchip_total', '')}")
    return "\n".join(lines) + "\n"
