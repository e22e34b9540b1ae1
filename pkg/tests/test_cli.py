import csv
import json
import subprocess
import sys

import pytest

from movant.cli import main, parse_schemes, parse_sweep
from movant.config import SCHEMES
from movant.sim import HEADER, read_metrics

TINY = """\
n_iter: 2
batch_size: 2
n_short_iter: 3
realizations: 2
eval_samples: 4
trace_eval_samples: 3
"""


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY)
    return p


def test_parse_schemes():
    assert parse_schemes(None) == list(SCHEMES)
    assert parse_schemes("scsit-upa, proposed-gmm") == ["scsit-upa", "proposed-gmm"]
    with pytest.raises(ValueError):
        parse_schemes("proposed-gmm,bogus")
    with pytest.raises(ValueError):
        parse_schemes(",")


def test_parse_sweep():
    assert parse_sweep(None) is None
    assert parse_sweep("power=10,15,20") == ("power", [10.0, 15.0, 20.0])
    assert parse_sweep("X_R=0.5,1") == ("x_r", [0.5, 1.0])
    for bad in ("power", "colour=1", "power=a,b", "power=", "power=1,inf"):
        with pytest.raises(ValueError):
            parse_sweep(bad)


def test_run_writes_table_and_manifest(tiny_config, tmp_path, capsys):
    out = tmp_path / "res"
    code = main(["run", "--preset", "desk", "--config", str(tiny_config), "--seed", "5",
                 "--scheme", "scsit-upa,proposed-pmm", "--sweep", "power=10,20", "--out", str(out)])
    assert code == 0
    rows = read_metrics(out / "metrics.csv")
    assert [(r.scheme, r.sweep_value) for r in rows] == [
        ("scsit-upa", 10.0), ("proposed-pmm", 10.0), ("scsit-upa", 20.0), ("proposed-pmm", 20.0)]
    assert all(r.seed == 5 and r.realizations == 2 for r in rows)
    with open(out / "metrics.csv", newline="") as fh:
        assert next(csv.reader(fh)) == HEADER
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["n_iter"] == 2 and manifest["config"]["n_tx"] == 4
    assert manifest["sweep"] == {"axis": "power", "values": [10.0, 20.0]}
    assert len(manifest["per_realization"]) == 8
    assert "traces" not in manifest
    assert "scsit-upa" in capsys.readouterr().out


def test_run_is_byte_identical(tiny_config, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", "--preset", "desk", "--config", str(tiny_config), "--seed", "7",
                     "--scheme", "proposed-gmm", "--out", str(out)]) == 0
        outs.append(((out / "metrics.csv").read_bytes(), (out / "manifest.json").read_bytes()))
    assert outs[0] == outs[1]


def test_run_with_trace(tiny_config, tmp_path):
    out = tmp_path / "res"
    assert main(["run", "--preset", "desk", "--config", str(tiny_config), "--scheme",
                 "proposed-gmm", "--realizations", "1", "--trace", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    (tr,) = manifest["traces"]
    assert len(tr["trace"]["eval_sum_rate"]) == 3


def test_run_unwritable_output_fails_fast(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    # the paper preset would take hours; an immediate error shows nothing was computed
    code = main(["run", "--out", str(blocker / "out")])
    assert code == 2
    assert "not writable" in capsys.readouterr().err


@pytest.mark.parametrize("args", [["--scheme", "nope"], ["--sweep", "speed=1"]])
def test_run_bad_arguments(tiny_config, tmp_path, args, capsys):
    code = main(["run", "--preset", "desk", "--config", str(tiny_config),
                 "--out", str(tmp_path)] + args)
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_run_rejects_unknown_config_key(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("speed: 3\n")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_seed_must_be_unsigned_64_bit(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--seed", "-1", "--out", str(tmp_path)])
    with pytest.raises(SystemExit):
        main(["run", "--seed", str(2**64), "--out", str(tmp_path)])


def test_check_command(tmp_path, capsys):
    code = main(["check", "--suite", "rate_identity", "--suite", "distance_minorant",
                 "--out", str(tmp_path)])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2 and all(line.startswith("PASS") for line in lines)
    data = json.loads((tmp_path / "checks.json").read_text())
    assert [c["name"] for c in data["checks"]] == ["rate_identity", "distance_minorant"]


def test_trace_command(tiny_config, tmp_path):
    out = tmp_path / "tr"
    assert main(["trace", "--preset", "desk", "--config", str(tiny_config), "--seed", "3",
                 "--scheme", "proposed-gmm,proposed-pmm", "--samples", "2", "--out", str(out)]) == 0
    with open(out / "short_term_trace.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["algorithm"] for r in rows} == {"ga", "gp"}
    ga = [r for r in rows if r["algorithm"] == "ga" and r["sample"] == "0" and r["user"] == "0"]
    rates = [float(r["rate"]) for r in sorted(ga, key=lambda r: int(r["iteration"]))]
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    with open(out / "long_term_trace.csv", newline="") as fh:
        long_rows = list(csv.DictReader(fh))
    assert len(long_rows) == 2 * 3  # two schemes, initial point plus two iterations
    assert long_rows[0]["iteration"] == "0" and long_rows[0]["alpha"] == ""
    assert json.loads((out / "manifest.json").read_text())["command"] == "trace"


def test_console_script_entry_point():
    out = subprocess.run([sys.executable, "-m", "movant.cli", "--version"], capture_output=True,
                         text=True, check=True)
    assert out.stdout.startswith("movant ")
