import csv
import io
import json
import math

import pytest

from xbarsnn.cli import main
from xbarsnn.dataset import load_dataset
from xbarsnn.mapper import map_network
from xbarsnn.model import load_model
from xbarsnn.config import HardwareConfig, load_config


@pytest.fixture(scope="module")
def assets(tmp_path_factory):
    root = tmp_path_factory.mktemp("assets")
    assert main(["gen", "model", "--preset", "toy", "--count", "120", "--out", str(root / "toy")]) == 0
    assert main(["gen", "dataset", "--count", "24", "--seed", "5", "--out", str(root / "data")]) == 0
    assert main(["gen", "model", "--preset", "worked-example", "--input-dim", "8", "--out", str(root / "we")]) == 0
    assert main(["gen", "config", "--out", str(root / "hw.conf")]) == 0
    return root


def read_tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_eval_writes_all_reports(assets, tmp_path):
    out = tmp_path / "run"
    rc = main(["eval", "--model", str(assets / "toy"), "--dataset", str(assets / "data"), "--hw",
               str(assets / "hw.conf"), "--out", str(out)])
    assert rc == 0
    names = set(read_tree(out))
    assert {"accuracy.json", "cost_report.json", "cost_report.csv", "mapping.csv", "trace.csv", "manifest.json",
            "plot_layer_edp.csv", "plot_energy_fractions.csv", "plot_area_fractions.csv"} <= names
    acc = json.loads((out / "accuracy.json").read_text())
    assert 0.0 <= acc["accuracy"] <= 1.0 and acc["samples"] == 24
    cost = json.loads((out / "cost_report.json").read_text())
    assert cost["activity_source"] == "measured"
    assert cost["total_energy_J"] == math.fsum(cost["energy_J"].values())
    assert cost["total_area_m2"] == math.fsum(cost["area_m2"].values())
    assert cost["edp_Js"] == cost["total_energy_J"] * cost["total_latency_s"]


def test_ela_only_has_no_accuracy(assets, tmp_path):
    out = tmp_path / "ela"
    assert main(["eval", "--model", str(assets / "we"), "--ela-only", "--out", str(out)]) == 0
    assert "accuracy.json" not in read_tree(out)
    assert json.loads((out / "cost_report.json").read_text())["activity_source"] == "analytic"


def test_eval_is_deterministic_and_rerunnable(assets, tmp_path):
    args = ["eval", "--model", str(assets / "toy"), "--dataset", str(assets / "data"), "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert read_tree(tmp_path / "a") == read_tree(tmp_path / "b")
    assert main(["eval", "--manifest", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "c")]) == 0
    assert read_tree(tmp_path / "a") == read_tree(tmp_path / "c")


def test_inputs_are_not_mutated(assets, tmp_path):
    before = read_tree(assets / "toy")
    main(["eval", "--model", str(assets / "toy"), "--dataset", str(assets / "data"), "--out", str(tmp_path / "o")])
    assert read_tree(assets / "toy") == before


def test_sweep_over_crossbar_size(assets, tmp_path, monkeypatch):
    monkeypatch.setenv("XBARSNN_WORKERS", "2")
    out = tmp_path / "sweep"
    assert main(["sweep", "--model", str(assets / "we"), "--ela-only", "--sweep-x", "64,128,256",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO((out / "sweep.csv").read_text())))
    assert [r["point"] for r in rows] == ["0", "1", "2"]
    cycles = [int(r["tile_cycles"]) for r in rows]
    assert cycles[0] > cycles[1] > cycles[2]


def test_sweep_conv1_channels(assets, tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep", "--model", str(assets / "we"), "--ela-only", "--sweep-conv1", "64,8",
                 "--out", str(out)]) == 0
    wide, narrow = csv.DictReader(io.StringIO((out / "sweep.csv").read_text()))
    assert int(narrow["vmem_bytes"]) < int(wide["vmem_bytes"])
    assert float(narrow["neuron_area_m2"]) < float(wide["neuron_area_m2"])


def test_failing_sweep_point_is_recorded(assets, tmp_path, capsys):
    out = tmp_path / "sweep"
    # X = 48 is not a power of two: that point fails, the others still run
    assert main(["sweep", "--model", str(assets / "we"), "--ela-only", "--sweep-x", "64,48",
                 "--out", str(out)]) == 1
    rows = list(csv.DictReader(io.StringIO((out / "sweep.csv").read_text())))
    assert [r["status"] for r in rows] == ["ok", "error"] and rows[1]["error"]
    assert "1 of 2 sweep points failed" in capsys.readouterr().err


def test_empty_sweep_is_an_error(assets, tmp_path, capsys):
    rc = main(["sweep", "--model", str(assets / "we"), "--ela-only", "--out", str(tmp_path / "s")])
    assert rc == 2
    record = json.loads(capsys.readouterr().err.strip())
    assert record["message"] == "nothing to sweep"
    assert not (tmp_path / "s").exists()


def test_module_errors_exit_nonzero(assets, tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("[array]\nsize = 63\n")
    rc = main(["eval", "--model", str(assets / "we"), "--hw", str(bad), "--ela-only", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"


def test_gen_is_deterministic_and_loadable(assets, tmp_path):
    for name in ("a", "b"):
        assert main(["gen", "model", "--layers", "conv:4:3,pool:2,fc:3", "--input-dim", "8",
                     "--seed", "9", "--out", str(tmp_path / name)]) == 0
    assert read_tree(tmp_path / "a") == read_tree(tmp_path / "b")
    model = load_model(tmp_path / "a")
    assert [l.kind for l in model.layers] == ["conv", "avgpool", "linear"]
    we = load_model(assets / "we")
    assert map_network(we, HardwareConfig(), materialize=False).total_tiles == 4
    assert len(load_dataset(assets / "data")) == 24
    assert load_config(assets / "hw.conf") == HardwareConfig()


def test_dump_slice(assets, tmp_path, capsys):
    assert main(["dump-slice", "--model", str(assets / "toy"), "--layer", "1", "--out", str(tmp_path / "s.csv")]) == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].startswith("column,row,conductance_S")
    assert main(["dump-slice", "--model", str(assets / "toy"), "--layer", "2"]) == 2
    assert "no crossbars" in capsys.readouterr().err


def test_help_mentions_worker_variable(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    assert "XBARSNN_WORKERS" in capsys.readouterr().out
