import csv
import io

import pytest

from avgsca.cli import main
from avgsca.io import read_traces


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_synth_then_cpa(tmp_path, capsys):
    path = tmp_path / "t.asca"
    code, _, _ = run(capsys, "synth", "--model", "sbox-hw", "--seed", 3, "-o", path)
    assert code == 0
    ts = read_traces(path)
    assert ts.samples.shape == (256, 128)
    code, out, _ = run(capsys, "cpa", "--model", "sbox-hw", "--true-key", "0x2b", "--byte", 0, path)
    assert code == 0
    (summary,) = rows(out)
    assert summary["recovered_key"] == "0x2b"
    assert summary["rank"] == "1"
    assert float(summary["max_rho"]) > 0.999999


def test_cpa_rho_table_and_window(tmp_path, capsys):
    path = tmp_path / "t.asca"
    run(capsys, "synth", "--traces", 64, "--kind", "non-averaged", "-o", path)
    rho = tmp_path / "rho.csv"
    code, out, _ = run(capsys, "cpa", "--window", "32:40", "--rho-csv", rho, path)
    assert code == 0
    table = rows(rho.read_text())
    assert len(table) == 256 * 8
    assert {int(r["sample"]) for r in table} == set(range(32, 40))


def test_downsample(tmp_path, capsys):
    src, dst = tmp_path / "a.asca", tmp_path / "b.asca"
    run(capsys, "synth", "--traces", 8, "--samples-per-cycle", 1, "-o", src)
    assert run(capsys, "downsample", "--k", 3, src, "-o", dst)[0] == 0
    ts = read_traces(dst)
    assert ts.samples.shape == (8, 21) and ts.frame_width_cycles == 3


def test_power_est_frame_count(tmp_path, capsys):
    vcd = tmp_path / "log.vcd"
    assert run(capsys, "gen-vcd", "--counters", 2, "--cycles", 500, "-o", vcd)[0] == 0
    code, out, _ = run(capsys, "power-est", "--frames", 100, vcd)
    assert code == 0
    table = rows(out)
    assert len(table) == 100
    assert [int(r["frame_index"]) for r in table] == list(range(100))
    assert int(table[1]["start"]) == 50


def test_power_est_library_file(tmp_path, capsys):
    vcd, lib = tmp_path / "log.vcd", tmp_path / "lib.txt"
    run(capsys, "gen-vcd", "--counters", 1, "--cycles", 10, "--width", 4, "-o", vcd)
    lib.write_text("top.clk = 1, 0, 0\n# counters\ntop.cnt* = 0, 0, 0.5\n")
    code, out, _ = run(capsys, "power-est", "--frames", 2, "--lib", lib, "--no-default", vcd)
    assert code == 0
    lib.write_text("top.clk = 1, 0, 0\n")
    code, _, err = run(capsys, "power-est", "--frames", 2, "--lib", lib, "--no-default", vcd)
    assert code == 1 and "no library entry" in err


def test_bench_frames(capsys):
    code, out, _ = run(capsys, "bench-frames", "--counters", 2, "--cycles", 2000, "--frames", "1,10", "--repeats", 1)
    assert code == 0
    table = rows(out)
    assert [r["n_frames"] for r in table] == ["1", "10"]
    assert float(table[0]["normalized"]) == 1.0


def test_exp_subcommands_small(capsys):
    code, out, _ = run(capsys, "exp1", "--repeats", 1, "--sanr", "10", "--seed", 1)
    assert code == 0
    table = rows(out)
    assert len(table) == 8 and {r["sr"] for r in table} == {"1.0"}
    code, out, _ = run(capsys, "exp2", "--repeats", 2, "--windows", "2,16", "--sanr", 100)
    assert code == 0 and [r["constructive_cycles"] for r in rows(out)] == ["2.0", "16.0"]
    code, out, _ = run(capsys, "scan", "--traces", 300, "--k", "1,50", "--keys", "0x2b")
    assert code == 0 and len(rows(out)) == 2


def test_errors_are_one_line(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("NO_COLOR", "1")
    bad = tmp_path / "bad.vcd"
    bad.write_text("$timescale 1ns $end\n$var wire 4 ! bus $end\n$enddefinitions $end\n")
    code, _, err = run(capsys, "power-est", bad)
    assert code == 1
    assert err.count("\n") == 1 and "line 2" in err and "\033" not in err
    code, _, err = run(capsys, "cpa", tmp_path / "missing.asca")
    assert code == 1 and "missing.asca" in err
    junk = tmp_path / "junk.asca"
    junk.write_bytes(b"ASCA" + b"\0" * 30)
    code, _, err = run(capsys, "cpa", junk)
    assert code == 1 and "offset" in err


@pytest.mark.parametrize("argv", [["bogus"], ["exp3", "--no-such-flag"], ["synth"], ["exp1", "--repeats", "0"]])
def test_usage_errors_exit_2(capsys, argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("n_repeats = 2\nmaster_seed = 5\n")
    a = run(capsys, "exp3", "--config", cfg, "--ratios", "0,1")[1]
    b = run(capsys, "exp3", "--repeats", 2, "--seed", 5, "--ratios", "0,1")[1]
    assert a == b
