import csv
import json

import pytest

from soilfusion.cli import main
from soilfusion.csvio import read_dataset


def _files(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def camp(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "camp"
    assert main(["generate", "--out", str(d), "--seed", "0"]) == 0
    return d


def test_generate_writes_four_files_and_echo(camp):
    assert sorted(_files(camp)) == ["gpr.csv", "hsi.csv", "manifest.json", "run_config.json", "tdr.csv"]
    echo = json.loads((camp / "run_config.json").read_text())
    assert echo["command"] == "generate" and echo["args"]["seed"] == 0


def test_generate_deterministic(camp, tmp_path):
    assert main(["generate", "--out", str(tmp_path / "again"), "--seed", "0"]) == 0
    assert _files(tmp_path / "again") == _files(camp)


def test_bad_path_fails_cleanly(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path / "no" / "such" / "dir")]) != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("soilfusion: error:") and "\n" not in err
    assert main(["eval", "--in", str(tmp_path / "missing"), "--out", str(tmp_path / "o"),
                 "--experiment", "baseline"]) != 0
    assert not (tmp_path / "o").exists()


def test_invalid_flag_no_output(camp, tmp_path, capsys):
    out = tmp_path / "x"
    assert main(["simulate", "--in", str(camp), "--out", str(out), "--experiment", "approach3"]) != 0
    assert main(["eval", "--in", str(camp), "--out", str(out), "--experiment", "baseline"]) != 0
    assert not out.exists()
    assert capsys.readouterr().err.count("soilfusion: error:") == 2


def test_correlate(camp, tmp_path):
    out = tmp_path / "corr"
    assert main(["correlate", "--in", str(camp), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "correlation.csv")))
    assert [r["plot"] for r in rows] == ["1", "2", "3", "4", "all"]
    assert float(rows[0]["r"]) > float(rows[2]["r"]) > abs(float(rows[3]["r"]))


def test_simulate_eval_and_echo_replay(camp, tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--in", str(camp), "--out", str(sim), "--experiment", "approach1",
                 "--sim-method", "linreg", "--seed", "2"]) == 0
    ds = read_dataset(sim / "dataset.csv")
    assert ds.has_dtheta_feature and len(ds) > 400
    assert any(n.startswith("timeseries_") for n in _files(sim))
    ev = tmp_path / "ev"
    assert main(["eval", "--in", str(sim), "--out", str(ev), "--experiment", "approach1",
                 "--sim-method", "linreg", "--trees", "20", "--seed", "2", "--save-model"]) == 0
    report = json.loads((ev / "report.json").read_text())
    assert report["experiment"] == "approach1" and 0 <= report["fi_gpr"] <= 1
    assert report["config"]["trees"] == 20

    for src, cmd in ((sim, "sim2"), (ev, "ev2")):
        assert main([json.loads((src / "run_config.json").read_text())["command"],
                     "--config", str(src / "run_config.json"), "--out", str(tmp_path / cmd)]) == 0
        assert _files(tmp_path / cmd) == _files(src)


def test_approach2_outputs(camp, tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--in", str(camp), "--out", str(sim), "--experiment", "approach2"]) == 0
    assert not read_dataset(sim / "dataset.csv").has_dtheta_feature
    assert (sim / "distribution_1.csv").is_file()
    ev = tmp_path / "ev"
    assert main(["eval", "--in", str(sim), "--out", str(ev), "--experiment", "approach2", "--trees", "10"]) == 0
    assert "fi_gpr" not in json.loads((ev / "report.json").read_text())
    # approach2 rows cannot feed approach1
    assert main(["eval", "--in", str(sim), "--out", str(tmp_path / "bad"), "--experiment", "approach1"]) != 0


def test_seed_env_fallback(camp, tmp_path, monkeypatch):
    monkeypatch.setenv("SOILFUSION_SEED", "7")
    assert main(["generate", "--out", str(tmp_path / "g")]) == 0
    assert json.loads((tmp_path / "g" / "run_config.json").read_text())["args"]["seed"] == 7
    assert main(["generate", "--out", str(tmp_path / "h"), "--seed", "7"]) == 0
    assert (tmp_path / "g" / "gpr.csv").read_bytes() == (tmp_path / "h" / "gpr.csv").read_bytes()
    monkeypatch.setenv("SOILFUSION_SEED", "abc")
    assert main(["generate", "--out", str(tmp_path / "i")]) != 0


def test_sweep_and_report_csv(camp, tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--in", str(camp), "--out", str(sim), "--experiment", "approach1"]) == 0
    ev = tmp_path / "ev"
    args = ["eval", "--in", str(sim), "--out", str(ev), "--experiment", "baseline", "--trees", "10",
            "--sweep", "3", "--jobs", "3"]
    assert main(args) == 0
    assert sorted(p.name for p in ev.glob("report_seed*.json")) == [f"report_seed{k}.json" for k in range(3)]
    assert main(args) == 0
    rows = list(csv.DictReader(open(ev / "report.csv")))
    assert len(rows) == 6 and rows[0]["r2"] == rows[3]["r2"]
