"""Database statistics: occupancy histograms, per-tag sizes and slot counts, as CSV."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, TextIO

from ..errors import InvalidArgument
from ..nodes import INNER, LEAF, WIDTH, space_function
from ..specopt import plan_cost
from ..trie import VerkleDB


@dataclass
class BlockStat:
    height: int
    ops: int
    weight: float
    seconds: float
    dirty: int
    writes: int
    root: str


@dataclass
class StatsReport:
    occupancy: dict[str, Counter] = field(default_factory=lambda: {INNER: Counter(), LEAF: Counter()})
    tag_bytes: dict[int, int] = field(default_factory=dict)
    tag_info: dict[int, tuple[str, int, int]] = field(default_factory=dict)  # kind, capacity, record size
    slots: dict[int, tuple[int, int, int]] = field(default_factory=dict)  # total, used, reusable
    blocks: list[BlockStat] = field(default_factory=list)
    loads: int = 0
    storage_writes: int = 0
    storage_reads: int = 0

    @property
    def total_bytes(self) -> int:
        return sum(self.tag_bytes.values())

    @property
    def weighted_ops(self) -> float:
        return sum(b.weight for b in self.blocks)

    @property
    def seconds(self) -> float:
        return sum(b.seconds for b in self.blocks)

    @property
    def throughput(self) -> float:
        """Weighted operations per second of block processing."""
        return self.weighted_ops / self.seconds if self.seconds else 0.0

    def counts(self) -> tuple[int, int, int]:
        total = sum(t for t, _, _ in self.slots.values())
        used = sum(u for _, u, _ in self.slots.values())
        reusable = sum(r for _, _, r in self.slots.values())
        return total, used, reusable


def collect(db: VerkleDB, blocks: Optional[list[BlockStat]] = None) -> StatsReport:
    db.nodes.flush_all()
    report = StatsReport(blocks=list(blocks or []))
    report.occupancy = db.occupancy_histograms()
    report.tag_bytes = db.storage.file_bytes()
    report.tag_info = {t: (i.kind, i.capacity, i.record_size) for t, i in db.layout.tags.items()}
    report.slots = db.storage.slot_counts()
    report.loads = db.nodes.loads
    report.storage_writes = db.storage.writes
    report.storage_reads = db.storage.reads
    return report


def predicted_bytes(occupancy: dict[str, Counter], capacities: dict[str, Iterable[int]]) -> int:
    """Sum over live nodes of the record size of the specialization they map to."""
    total = 0
    for kind in (INNER, LEAF):
        caps = sorted(capacities[kind])
        s = space_function(kind)
        f = [occupancy[kind].get(i, 0) for i in range(1, WIDTH + 1)]
        mapping = [next(c for c in caps if c >= i) for i in range(1, WIDTH + 1)]
        total += plan_cost(mapping, s, f)
    return total


# -- CSV -------------------------------------------------------------------------------

def write_occupancy_csv(occupancy: dict[str, Counter], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["kind", "occupancy", "count"])
    for kind in (INNER, LEAF):
        for occ in sorted(occupancy.get(kind, {})):
            w.writerow([kind, occ, occupancy[kind][occ]])


def read_occupancy_csv(text: str) -> dict[str, list[int]]:
    """Frequency vectors f[0..255] (index = occupancy - 1) per node kind."""
    freqs = {INNER: [0] * WIDTH, LEAF: [0] * WIDTH}
    rows = csv.DictReader(io.StringIO(text))
    for lineno, row in enumerate(rows, 2):
        try:
            kind, occ, count = row["kind"], int(row["occupancy"]), int(row["count"])
        except (KeyError, TypeError, ValueError):
            raise InvalidArgument(f"line {lineno}: expected kind,occupancy,count") from None
        if kind not in freqs or not 1 <= occ <= WIDTH or count < 0:
            raise InvalidArgument(f"line {lineno}: bad row {row}")
        freqs[kind][occ - 1] += count
    return freqs


def write_report_csv(report: StatsReport, out: TextIO) -> None:
    """Sections separated by blank lines, each with its own header row."""
    w = csv.writer(out, lineterminator="\n")
    write_occupancy_csv(report.occupancy, out)
    out.write("\n")
    w.writerow(["tag", "kind", "capacity", "record_bytes", "file_bytes", "total", "used", "reusable"])
    for tag in sorted(report.tag_info):
        kind, cap, size = report.tag_info[tag]
        total, used, reusable = report.slots.get(tag, (0, 0, 0))
        w.writerow([tag, kind, cap, size, report.tag_bytes.get(tag, 0), total, used, reusable])
    out.write("\n")
    total, used, reusable = report.counts()
    w.writerow(["metric", "value"])
    for name, value in [
        ("file_bytes", report.total_bytes),
        ("nodes_total", total),
        ("nodes_used", used),
        ("nodes_reusable", reusable),
        ("node_loads", report.loads),
        ("storage_reads", report.storage_reads),
        ("storage_writes", report.storage_writes),
        ("blocks", len(report.blocks)),
        ("weighted_ops", f"{report.weighted_ops:.1f}"),
        ("seconds", f"{report.seconds:.6f}"),
        ("weighted_ops_per_second", f"{report.throughput:.1f}"),
    ]:
        w.writerow([name, value])


def write_blocks_csv(blocks: list[BlockStat], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["height", "ops", "weight", "seconds", "dirty", "writes", "root"])
    for b in blocks:
        w.writerow([b.height, b.ops, f"{b.weight:.1f}", f"{b.seconds:.6f}", b.dirty, b.writes, b.root])


def share_at_most(hist: Counter, limit: int) -> float:
    total = sum(hist.values())
    return sum(c for occ, c in hist.items() if occ <= limit) / total if total else 0.0
