import io
import os
import subprocess
import sys

import pytest

from verkledb.errors import InvalidArgument
from verkledb.harness import (
    FaultInjection,
    ReplayConfig,
    WorkloadSpec,
    collect,
    generate,
    parse_workload,
    replay_to,
    verify,
    write_workload,
)
from verkledb.harness.cli import main
from verkledb.harness.stats import read_occupancy_csv, share_at_most, write_occupancy_csv
from verkledb.harness.workload import Op, format_op, parse_op
from verkledb.nodes import INNER, LEAF
from verkledb.specopt import read_plans
from verkledb.storage import StorageConfig
from verkledb.trie import ARCHIVE, LIVE, DBConfig, VerkleDB

SMALL = WorkloadSpec(blocks=12, stems=150, updates_min=5, updates_max=30, seed=3)


def text_of(spec):
    out = io.StringIO()
    write_workload(generate(spec), out, spec)
    return out.getvalue()


@pytest.fixture(scope="module")
def default_replay(tmp_path_factory):
    blocks = list(generate(WorkloadSpec()))
    path = str(tmp_path_factory.mktemp("replay") / "db")
    return blocks, path, replay_to(path, blocks, ReplayConfig())


def test_generation_is_deterministic():
    assert text_of(SMALL) == text_of(SMALL)
    other = WorkloadSpec(**{**SMALL.__dict__, "seed": 4})
    assert text_of(other) != text_of(SMALL)


def test_zero_blocks_is_header_only():
    text = text_of(WorkloadSpec(blocks=0))
    assert all(line.startswith("#") for line in text.splitlines())
    assert list(parse_workload(text.splitlines())) == []


def test_workload_round_trip():
    blocks = list(generate(SMALL))
    again = list(parse_workload(text_of(SMALL).splitlines()))
    assert again == blocks
    assert {op.kind for b in blocks for op in b.ops} >= {"raw", "b", "s"}


@pytest.mark.parametrize("op", [
    Op("raw", bytes(range(32)), 0, b"\x01" * 32),
    Op("raw", bytes(range(32)), 0, None),
    Op("b", b"\x02" * 20, 0, 123),
    Op("c", b"\x02" * 20, 7, b"\x03" * 32),
    Op("s", b"\x02" * 20, 300, None),
])
def test_op_text_round_trip(op):
    assert parse_op(format_op(op), 1) == op


@pytest.mark.parametrize("line,needle", [
    ("1 zz=00", "bad hex"),
    ("1 " + "00" * 32, "without '='"),
    ("2 " + "00" * 32 + "=" + "00" * 32, "expected height 1"),
    ("1 b:" + "00" * 20 + "=-4", "non-negative"),
    ("1 c:" + "00" * 20 + ":1=-", "cannot be deleted"),
    ("1 q:" + "00" * 20 + "=1", "unknown op"),
])
def test_parse_errors_carry_line_numbers(line, needle):
    with pytest.raises(InvalidArgument) as err:
        list(parse_workload(["# header", line]))
    assert str(err.value).startswith("line 2:") and needle in str(err.value)


def test_spec_validation():
    with pytest.raises(InvalidArgument):
        list(generate(WorkloadSpec(updates_min=5, updates_max=1)))
    with pytest.raises(InvalidArgument):
        list(generate(WorkloadSpec(delete_fraction=2.0)))


def test_occupancy_shape_matches_targets(default_replay):
    _, _, report = default_replay
    assert abs(share_at_most(report.occupancy[LEAF], 3) - 0.957) <= 0.03
    assert abs(share_at_most(report.occupancy[INNER], 11) - 0.876) <= 0.03


def test_report_reconciles_with_storage(default_replay):
    blocks, path, report = default_replay
    total, used, reusable = report.counts()
    assert total == used + reusable
    on_disk = sum(os.path.getsize(os.path.join(path, n)) for n in os.listdir(path) if n.startswith("nodes-"))
    assert report.total_bytes == on_disk
    assert len(report.blocks) == len(blocks)
    assert report.weighted_ops == sum(op.weight for b in blocks for op in b.ops)
    assert report.throughput > 0


def test_live_and_archive_roots_agree(tmp_path):
    blocks = list(generate(SMALL))
    roots = {LIVE: [], ARCHIVE: []}
    for mode, seen in roots.items():
        replay_to(str(tmp_path / mode), blocks, ReplayConfig(mode=mode), on_block=lambda s: seen.append(s.root))
    assert roots[LIVE] == roots[ARCHIVE] and len(roots[LIVE]) == len(blocks)


def _data_files(path):
    return {n: open(os.path.join(path, n), "rb").read() for n in sorted(os.listdir(path)) if n != "manifest"}


@pytest.mark.parametrize("mode", [LIVE, ARCHIVE])
def test_replay_is_byte_reproducible(tmp_path, mode):
    blocks = list(generate(SMALL))
    cfg = ReplayConfig(mode=mode, workers=4, parallel_threshold=2)
    replay_to(str(tmp_path / "a"), blocks, cfg)
    replay_to(str(tmp_path / "b"), blocks, cfg)
    assert _data_files(str(tmp_path / "a")) == _data_files(str(tmp_path / "b"))


def test_verify_passes_and_catches_flip(tmp_path):
    blocks = list(generate(SMALL))
    ok = verify(blocks, ReplayConfig(), str(tmp_path / "ok"), probes_per_block=16)
    assert ok.ok and ok.blocks == len(blocks) and ok.historical > 0
    bad = verify(blocks, ReplayConfig(), str(tmp_path / "bad"), fault=FaultInjection(height=5))
    assert not bad.ok
    d = bad.divergence
    assert d.check == "live lookup" and d.height == 5 and d.key is not None
    assert d.expected != d.got
    assert verify([], ReplayConfig(), str(tmp_path / "empty")).ok


def test_fresh_database_has_empty_histograms(tmp_path):
    db = VerkleDB.create(str(tmp_path / "db"), DBConfig(storage=StorageConfig(sync=False)))
    report = collect(db)
    assert sum(report.occupancy[INNER].values()) == sum(report.occupancy[LEAF].values()) == 0
    assert report.total_bytes == 0
    db.close()


def test_occupancy_csv_round_trip(default_replay):
    _, _, report = default_replay
    out = io.StringIO()
    write_occupancy_csv(report.occupancy, out)
    freqs = read_occupancy_csv(out.getvalue())
    for kind in (INNER, LEAF):
        assert len(freqs[kind]) == 256
        assert {i + 1: c for i, c in enumerate(freqs[kind]) if c} == dict(report.occupancy[kind])


def test_cli_pipeline(tmp_path, capsys):
    wl = str(tmp_path / "w.txt")
    assert main(["gen-workload", "--blocks", "8", "--stems", "120", "--updates-max", "20", "--out", wl]) == 0
    db = str(tmp_path / "db")
    assert main(["replay", wl, "--db", db, "--roots", str(tmp_path / "roots.csv"),
                 "--out", str(tmp_path / "rep.csv")]) == 0
    assert "weighted_ops_per_second" in open(tmp_path / "rep.csv").read()
    occ = str(tmp_path / "occ.csv")
    assert main(["stats", db, "--occupancy-only", "--out", occ]) == 0
    plan = str(tmp_path / "plan.txt")
    assert main(["optimize-spec", occ, "--total-k", "6", "--out", plan]) == 0
    plans = read_plans(plan)
    assert plans[INNER].k + plans[LEAF].k == 6
    assert main(["verify", wl, "--plan", plan, "--mode", "archive"]) == 0
    assert capsys.readouterr().out.startswith("PASS")
    assert main(["verify", wl, "--inject-flip", "3"]) == 1
    assert capsys.readouterr().out.startswith("FAIL")
    assert main(["optimize-spec", occ, "--sweep", "3", "--out", str(tmp_path / "sweep.csv")]) == 0
    assert main(["bench", wl, "--out", str(tmp_path / "bench.csv")]) == 0
    rows = open(tmp_path / "bench.csv").read().splitlines()
    assert len(rows) == 7 and len({r.split(",")[-1] for r in rows[1:]}) == 1  # same root everywhere


def test_cli_errors(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("# x\n1 nothex=00\n")
    assert main(["replay", str(bad)]) == 2
    assert "line 2:" in capsys.readouterr().err
    assert main(["stats", str(tmp_path / "missing")]) == 2


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "verkledb.harness.cli", "gen-workload", "--blocks", "0"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.startswith("# verkledb-workload 1")
