import csv
import json
import subprocess
import sys

import pytest

from rtxd import cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_no_arguments_prints_usage(capsys):
    code, out, err = run([], capsys)
    assert code == 2
    assert "usage: rtxd" in err


def test_console_script_no_arguments():
    proc = subprocess.run([sys.executable, "-m", "rtxd.cli"], capture_output=True, text=True)
    assert proc.returncode == 2 and "usage" in proc.stderr


def test_preset_flags_map_to_config():
    cfg = cli.parse_config({}, {"preset": "fig3", "seed": 42, "format": "csv"})
    assert (cfg.command, cfg.preset_name, cfg.seed, cfg.output_format) == ("preset", "fig3", 42, "csv")
    assert cfg.workers == 1 and cfg.trials == 100_000 and cfg.termination == "run"
    assert cli.parse_config({}, {"preset": "fig2"}).command == "analytic"


def test_out_of_range_access_prob(tmp_path, capsys):
    code, _, err = run(["--config", write(tmp_path, "scheme: pdma\np_a: 1.5\n")], capsys)
    assert code != 0
    assert "access_prob out of range" in err and "'p_a'" in err


@pytest.mark.parametrize("text, key", [
    ("scheme: pdma\nbogus: 3\n", "bogus"),
    ("scheme: pdma\nlevels: ten\n", "levels"),
    ("scheme: pdma\nlevels: 2.5\n", "levels"),
    ("scheme: pdma\ninclude_empty: 1\n", "include_empty"),
    ("scheme: pdma\nworkers: 0\n", "workers"),
    ("scheme: pdma\nsweep: L\n", "values"),
    ("preset: fig3\nlevels: 4\n", "levels"),
    ("preset: fig99\n", "preset"),
    ("scheme: pdma\ndrop_prob: 1.0\n", "drop_prob"),
    ("scheme: teleport\n", "scheme"),
])
def test_bad_config_names_key(tmp_path, capsys, text, key):
    code, _, err = run(["--config", write(tmp_path, text)], capsys)
    assert code == 2
    assert f"'{key}'" in err


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(["--config", str(tmp_path / "absent.yaml")], capsys)
    assert code == 1 and "cannot read config" in err


def test_fig2_csv(tmp_path, capsys):
    out = tmp_path / "fig2.csv"
    code, stdout, _ = run(["--preset", "fig2", "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.reader(out.read_text().splitlines()))
    assert rows[0] == ["L", "psi_L_U", "psi_1_LU", "ratio"]
    assert len(rows) == 17
    assert [int(r[0]) for r in rows[1:]] == list(range(1, 17))
    assert all(float(r[3]) >= 1.0 for r in rows[1:])
    assert "wrote" in stdout


def test_fig2_to_stdout(capsys):
    code, out, err = run(["--preset", "fig2"], capsys)
    assert code == 0
    assert out.startswith("L,psi_L_U,psi_1_LU,ratio\n")
    assert "fig2" in err


def test_preset_twice_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["--preset", "fig3", "--seed", "42", "--trials", "150"]
    assert run(args + ["--out", str(a)], capsys)[0] == 0
    assert run(args + ["--out", str(b), "--workers", "2"], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    header = a.read_text().splitlines()[0]
    assert header == ",".join(cli.CSV_COLUMNS)
    assert len(a.read_text().splitlines()) == 1 + 30


def test_custom_pdma_summary_shows_bound(tmp_path, capsys):
    path = write(tmp_path, "scheme: pdma\nLambda: 10\nR: 4\nL: 20\n")
    code, out, err = run(["--config", path, "--trials", "500", "--out", str(tmp_path / "o.csv")], capsys)
    assert code == 0
    line = [l for l in out.splitlines() if l.strip().startswith("pdma")][0]
    assert "frame " in line and "(bound 10)" in line


def test_custom_sweep_and_flag_override(tmp_path, capsys):
    path = write(tmp_path, "scheme: rdma\nlevels: 4\nbudget: 10\nsweep: U\nvalues: [1, 2]\nseed: 1\ntrials: 50\n")
    out = tmp_path / "o.csv"
    code, _, _ = run(["--config", path, "--trials", "80", "--out", str(out)], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert [r["value"] for r in rows] == ["1.0", "2.0"]
    assert all(r["param"] == "U" and r["scheme"] == "rdma" for r in rows)


def test_json_echoes_config_and_reproduces(tmp_path, capsys):
    path = write(tmp_path, "scheme: pdma\nlevels: 6\ntrials: 200\nseed: 9\n")
    out = tmp_path / "o.json"
    assert run(["--config", path, "--format", "json", "--out", str(out)], capsys)[0] == 0
    doc = json.loads(out.read_text())
    c = doc["config"]
    assert c["command"] == "custom" and c["seed"] == 9 and c["trials"] == 200
    assert c["scenario"]["scheme"] == "pdma" and c["scenario"]["levels"] == 6
    assert c["scenario"]["population"] == 50 and c["scenario"]["design"] == "power"
    again = cli.parse_config(dict(c["scenario"], seed=c["seed"], trials=c["trials"]))
    rerun = tmp_path / "r.json"
    again.output_path, again.output_format = str(rerun), "json"
    assert cli.execute(again) == 0
    assert json.loads(rerun.read_text())["rows"] == doc["rows"]


def test_invalid_rdma_design_exit_1(tmp_path, capsys):
    path = write(tmp_path, "scheme: rdma\nlevels: 10\nmargin: 5.0\n")
    code, _, err = run(["--config", path, "--trials", "10"], capsys)
    assert code == 1
    assert "rdma" in err and "non-positive" in err


def test_io_failure_exit_1(tmp_path, capsys):
    code, _, err = run(["--preset", "fig2", "--out", str(tmp_path / "no" / "such" / "x.csv")], capsys)
    assert code == 1 and "error" in err


def test_atomic_write_leaves_no_temp(tmp_path):
    target = tmp_path / "t.csv"
    target.write_text("old\n")
    cli.write_atomic(str(target), "new\n")
    assert target.read_text() == "new\n"
    assert [p.name for p in tmp_path.iterdir()] == ["t.csv"]


def test_number_format_round_trips():
    for x in (0.1, 1 / 3, 1e-300, 12345.678, 2.0):
        assert float(cli.fmt_number(x)) == x
    assert cli.fmt_number(3) == "3"
    assert cli.fmt_number(float("nan")) == "nan"
