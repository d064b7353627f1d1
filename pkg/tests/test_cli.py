import csv
import json

import pytest

from cvarflp.cli import RECORD_FIELDS, RunConfig, UsageError, main, run_experiment
from cvarflp.frontier import Frontier
from cvarflp.instance import serialize_instance

from fixtures import toy


@pytest.fixture
def toy_file(tmp_path):
    inst, scen = toy(scenarios=((3, 4), (1, 1)))
    path = tmp_path / "toy.json"
    path.write_text(serialize_instance(inst, scen))
    return path


@pytest.fixture
def small_file(tmp_path):
    path = tmp_path / "small.json"
    assert main(["generate", "--nodes", "10", "--scenarios", "10", "--seed", "3", "--sites", "3",
                 "--out", str(path)]) == 0
    return path


def _record(out):
    with open(out / "record.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1 and tuple(rows[0]) == RECORD_FIELDS
    return rows[0]


def test_run_ma_on_toy(toy_file, tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--instance", str(toy_file), "--method", "e", "--model", "ma", "--alpha", "0.5",
                 "--out", str(out)]) == 0
    row = _record(out)
    assert int(row["n_ndp"]) <= 2 and row["status"] == "optimal"
    assert len(Frontier.load(out / "frontier.json")) == int(row["n_ndp"])
    assert (out / "cuts.log").read_text() == ""


def test_alpha_resolves_k(small_file, tmp_path):
    out = tmp_path / "mb"
    assert main(["run", "--instance", str(small_file), "--method", "e", "--model", "mb", "--alpha", "0.7",
                 "--out", str(out)]) == 0
    row = _record(out)
    assert row["k"] == "3" and float(row["alpha"]) == pytest.approx(0.7)
    log = (out / "cuts.log").read_text().splitlines()
    assert log[0].startswith("cuts ") and any(line.startswith("subset ") for line in log)


def test_bar_then_reevaluate(small_file, tmp_path):
    out = tmp_path / "bar"
    assert main(["run", "--instance", str(small_file), "--method", "e", "--model", "mb-bar", "--k", "3",
                 "--out", str(out)]) == 0
    assert "separator_calls_after_first 0" in (out / "cuts.log").read_text()
    re_path = tmp_path / "re.json"
    assert main(["reevaluate", "--instance", str(small_file), "--frontier", str(out / "frontier.json"),
                 "--k", "3", "--out", str(re_path)]) == 0
    before = {p["provenance"] for p in json.loads((out / "frontier.json").read_text())}
    after = {p["provenance"] for p in json.loads(re_path.read_text())}
    assert after == {"re-evaluated"} and before != after


def test_compare_and_plot(small_file, tmp_path, capsys):
    out = tmp_path / "ma"
    main(["run", "--instance", str(small_file), "--method", "e", "--model", "ma", "--k", "3", "--out", str(out)])
    fr = out / "frontier.json"
    capsys.readouterr()
    assert main(["compare", str(fr), "--reference", str(fr)]) == 0
    text = capsys.readouterr().out
    rows = list(csv.DictReader(text.splitlines()))
    assert float(rows[0]["gH_percent"]) == 0 and float(rows[0]["I_eps"]) == 1
    assert main(["plot-data", str(fr), str(tmp_path / "re.json")]) == 1
    capsys.readouterr()
    (tmp_path / "other").mkdir()
    other = tmp_path / "other" / "frontier.json"
    other.write_text(fr.read_text())
    assert main(["plot-data", str(fr), str(other)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "series,cost,risk"
    assert {line.split(",")[0] for line in lines[1:]} == {"ma", "other"}
    assert len(lines) == 1 + 2 * len(Frontier.load(fr))


def test_plot_empty_frontier(tmp_path, capsys, caplog):
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    assert main(["plot-data", str(empty)]) == 0
    assert capsys.readouterr().out == "series,cost,risk\n"
    assert "empty" in caplog.text


def test_compare_union_reference(small_file, tmp_path, capsys):
    paths = []
    for model in ("ma", "mb-bar"):
        out = tmp_path / model
        main(["run", "--instance", str(small_file), "--method", "e", "--model", model, "--k", "3",
              "--out", str(out)])
        paths.append(str(out / "frontier.json"))
    capsys.readouterr()
    assert main(["compare", *paths]) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [r["label"] for r in rows] == ["ma", "mb-bar"]
    bar = rows[1]
    assert float(bar["gH_percent"]) <= 1e-9


@pytest.mark.parametrize("argv", [
    ["run", "--nodes", "5", "--scenarios", "2", "--method", "bb", "--model", "mb-bar", "--k", "1", "--out", "x"],
    ["run", "--nodes", "5", "--scenarios", "2", "--method", "e", "--model", "ma", "--out", "x"],
    ["run", "--nodes", "5", "--scenarios", "2", "--method", "e", "--model", "ma", "--k", "1", "--alpha", "0.5",
     "--out", "x"],
    ["run", "--method", "e", "--model", "ma", "--k", "1", "--out", "x"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert "error" in capsys.readouterr().err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["run", "--method", "zz", "--model", "ma", "--out", "x"])
    assert exc.value.code == 2


def test_runtime_failure(tmp_path, capsys):
    assert main(["reevaluate", "--instance", str(tmp_path / "missing.json"), "--frontier", "f.json",
                 "--k", "1", "--out", str(tmp_path / "o.json")]) == 1


def test_generate_to_stdout(capsys):
    assert main(["generate", "--nodes", "6", "--scenarios", "3", "--seed", "1"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["scenarios"]) == 3 and len(doc["nodes"]) == 6
    assert main(["generate", "--nodes", "6", "--scenarios", "3", "--resample", "7"]) == 0
    assert len(json.loads(capsys.readouterr().out)["scenarios"]) == 7


def test_run_config_validation(tmp_path):
    cfg = RunConfig(None, 8, 3, "mat", "ma", None, 1, out=str(tmp_path / "m"), time_limit_per_point=1.0, seed=2)
    row = run_experiment(cfg)
    assert row["method"] == "mat" and row["instance"] == "gen-8-3-2"
    with pytest.raises(UsageError):
        RunConfig(None, 8, None, "e", "ma", None, 1).validate()
