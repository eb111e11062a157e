import csv
import io
import json

import pytest

from tailproc.cli import CSV_COLUMNS, SUITES, ExperimentConfig, ConfigError, list_models, list_suites, main


def _run(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_catalogs(capsys):
    code, out, _ = _run(capsys, "list-models")
    assert code == 0
    for name in ("iid", "ma", "geometric", "deterministic", "empirical"):
        assert name in out
    assert list_models() == list_models()
    code, out, _ = _run(capsys, "list-suites")
    assert code == 0 and all(s in out for s in SUITES) and len(SUITES) == 7
    assert list_suites() == list_suites()


def test_extremal_index_suite(capsys):
    code, out, err = _run(capsys, "run", "--suite", "extremal-index", "--model", "geometric:rho=0.5,alpha=1",
                          "--n", "100000", "--seed", "7")
    assert code == 0, err
    rows = _rows(out)
    assert len(rows) == 6 and list(rows[0]) == list(CSV_COLUMNS)
    assert all(abs(float(r["side_a"]) - 0.5) < 0.01 and r["pass"] == "1" for r in rows)
    assert out.startswith("# tailproc ") and "# config {" in out


def test_parse_error(capsys):
    code, _, err = _run(capsys, "run", "--model", "geometric:rho")
    assert code == 2 and "malformed" in err
    with pytest.raises(SystemExit) as e:
        main(["run", "--suite", "nope"])
    assert e.value.code == 2


def test_config_file(tmp_path, capsys):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"suite": "extremal-index", "models": ["ma:alpha=1.5,coeffs=1;0.5"], "n": 5000}))
    code, out, _ = _run(capsys, "run", "--config", str(f), "--seed", "3")
    assert code == 0 and '"seed":3' in out and '"n":5000' in out
    f.write_text(json.dumps({"suite": "extremal-index", "bogus": 1}))
    code, _, err = _run(capsys, "run", "--config", str(f))
    assert code == 2 and "bogus" in err
    f.write_text("{not json")
    assert _run(capsys, "run", "--config", str(f))[0] == 2
    assert _run(capsys, "run", "--config", str(tmp_path / "missing.json"))[0] == 3


def test_io_error(tmp_path, capsys):
    code, _, _ = _run(capsys, "run", "--suite", "extremal-index", "--n", "1000",
                      "--out", str(tmp_path / "no" / "such" / "dir.csv"))
    assert code == 3


def test_outputs_and_determinism(tmp_path, capsys):
    args = ["run", "--suite", "q-identities", "--model", "ma:alpha=1.5,coeffs=1;0.5", "--n", "5000", "--seed", "1",
            "--lanes", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert _run(capsys, *args, "--out", str(a))[0] == 0
    assert _run(capsys, *args, "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    summary = json.loads(a.with_suffix(".json").read_text())
    assert summary["summary"]["failed"] == 0 and summary["config"]["lanes"] == 3
    code, out, _ = _run(capsys, *args, "--format", "json")
    assert json.loads(out)["rows"]


def test_lanes_from_environment(monkeypatch):
    monkeypatch.setenv("TAILPROC_LANES", "5")
    assert ExperimentConfig().resolved().lanes == 5


def test_skips_are_recorded(capsys):
    code, out, err = _run(capsys, "run", "--suite", "maxstable", "--model", "iid:alpha=1.5,p=0.5", "--n", "1000")
    assert code == 0 and "# skipped maxstable" in out and "1 skipped" in err


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"suite": "x"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"n": 5})
    assert ExperimentConfig.from_dict({"models": "iid:alpha=2"}).models == ["iid:alpha=2"]


@pytest.mark.slow
def test_all_suites_on_iid(capsys):
    code, out, err = _run(capsys, "run", "--suite", "all", "--model", "iid:alpha=1.5", "--n", "50000")
    assert code == 0, err
    assert {r["suite"] for r in _rows(out)} == set(SUITES)
