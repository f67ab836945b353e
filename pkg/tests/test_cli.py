import csv
import json

import numpy as np
import pytest
import yaml

from nphmm import cli
from nphmm.serialize import read_observations, write_observations

TRUTH = {
    "type": "finite_hmm",
    "Q": [[0.8, 0.2], [0.3, 0.7]],
    "emissions": [
        {"kind": "exp_power_mixture", "weights": [1.0], "locations": [-1.5], "scales": [1.0], "p": 2},
        {"kind": "exp_power_mixture", "weights": [1.0], "locations": [1.5], "scales": [1.0], "p": 2},
    ],
}


def write_config(tmp_path, **extra):
    raw = {
        "seed": 11,
        "output_dir": str(tmp_path / "out"),
        "n": 200,
        "replicates": 2,
        "truth": TRUTH,
        "grid": {"K_max": 2, "M_max": 1},
        "penalty": {"c_pen": 0.1, "r": 2},
        "fit": {"max_iters": 20, "restarts": 1},
        "evaluate": {"n_mc": 3000, "burn_in": 100, "batches": 10},
        "forgetting": {"sequences": 3, "k_values": [1, 2, 4]},
    }
    raw.update(extra)
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(raw))
    return str(path)


def strip_metadata(path):
    doc = json.loads(open(path).read())
    doc.pop("metadata")
    return doc


def test_simulate_is_byte_identical_and_seeded(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["simulate", "--config", cfg]) == 0
    first = (tmp_path / "out/data/rep000.csv").read_bytes()
    assert cli.main(["simulate", "--config", cfg]) == 0
    assert (tmp_path / "out/data/rep000.csv").read_bytes() == first
    lines = first.decode().splitlines()
    assert lines[0] == "y" and len(lines) == 201
    assert (tmp_path / "out/data/rep001.csv").read_bytes() != first
    assert cli.main(["simulate", "--config", cfg, "--seed", "12"]) == 0
    assert (tmp_path / "out/data/rep000.csv").read_bytes() != first


def test_observation_round_trip(tmp_path):
    y = np.random.default_rng(0).standard_cauchy(100) * 1e-7
    write_observations(tmp_path / "y.csv", y)
    assert np.array_equal(read_observations(tmp_path / "y.csv"), y)
    (tmp_path / "bad.csv").write_text("x\n1.0\n")
    with pytest.raises(ValueError):
        read_observations(tmp_path / "bad.csv")
    (tmp_path / "bad2.csv").write_text("y\n1.0\nabc\n")
    with pytest.raises(ValueError):
        read_observations(tmp_path / "bad2.csv")


def test_select_outputs_agree_and_are_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    cli.main(["simulate", "--config", cfg])
    data = str(tmp_path / "out/data/rep000.csv")
    assert cli.main(["select", "--config", cfg, "--data", data]) == 0
    doc = strip_metadata(tmp_path / "out/select.json")
    rows = list(csv.DictReader(open(tmp_path / "out/select.csv")))
    assert len(rows) == len(doc["table"]) == 2
    top = max(rows, key=lambda r: float(r["score"]))
    assert (int(top["K"]), int(top["M"])) == (doc["chosen"]["K"], doc["chosen"]["M"])
    assert doc["config"]["truth"] == TRUTH
    csv_bytes = (tmp_path / "out/select.csv").read_bytes()
    assert cli.main(["select", "--config", cfg, "--data", data]) == 0
    assert strip_metadata(tmp_path / "out/select.json") == doc
    assert (tmp_path / "out/select.csv").read_bytes() == csv_bytes


def test_select_singleton_grid(tmp_path):
    cfg = write_config(tmp_path, grid={"K_max": 1, "M_max": 1})
    cli.main(["simulate", "--config", cfg])
    assert cli.main(["select", "--config", cfg, "--data", str(tmp_path / "out/data/rep000.csv")]) == 0
    doc = strip_metadata(tmp_path / "out/select.json")
    assert doc["chosen"] == {"K": 1, "M": 1} and len(doc["table"]) == 1


def test_fit_then_evaluate(tmp_path):
    cfg = write_config(tmp_path)
    cli.main(["simulate", "--config", cfg])
    assert cli.main(["fit", "--config", cfg, "--data", str(tmp_path / "out/data/rep000.csv"),
                     "-K", "2", "-M", "1"]) == 0
    fit = strip_metadata(tmp_path / "out/fit.json")
    assert np.all(np.diff(fit["trace"]) >= -1e-8)
    assert cli.main(["evaluate", "--config", cfg, "--params", str(tmp_path / "out/fit.json"),
                     "--forgetting"]) == 0
    ev = strip_metadata(tmp_path / "out/evaluate.json")
    assert ev["prediction_error"]["k_hat"] >= -3 * ev["prediction_error"]["std_error"]
    assert ev["forgetting"]["violations"] == []


def test_theory_scale_flag(tmp_path):
    cfg = cli.load_config(write_config(tmp_path), theory_scale_penalty=True)
    assert (cfg.penalty.c_pen, cfg.penalty.r) == (1.0, 15.0)


def test_rate_refuses_short_grid(tmp_path, capsys):
    cfg = write_config(tmp_path, n_grid=[200], replicates=5)
    assert cli.main(["rate", "--config", cfg]) == 2
    assert "n_grid" in capsys.readouterr().err
    cfg = write_config(tmp_path, n_grid=[200, 300, 400], replicates=2)
    assert cli.main(["rate", "--config", cfg]) == 2


def test_rate_rows(tmp_path):
    cfg = write_config(tmp_path, n_grid=[150, 200, 300], replicates=5,
                       fit={"max_iters": 10, "restarts": 1})
    assert cli.main(["rate", "--config", cfg]) == 0
    rows = list(csv.DictReader(open(tmp_path / "out/rate.csv")))
    assert len(rows) == 15
    assert list(rows[0]) == list(cli.RATE_COLUMNS)
    summary = strip_metadata(tmp_path / "out/rate_summary.json")
    assert len(summary["median_k_hat"]) == 3


@pytest.mark.parametrize("bad", [
    {"n": 3},                                     # empty grid
    {"replicates": 0},
    {"fit": {"restarts": 0}},
    {"constraints": {"c_sigma": 5.0}},           # sigma_minus above 1/e
    {"penalty": {"c_pen": -1}},
    {"evaluate": {"n_mc": 10, "burn_in": 10}},
    {"truth": {"type": "unknown"}},
    {"fit": {"not_a_field": 1}},
])
def test_invalid_configs_rejected_before_compute(tmp_path, bad, capsys):
    cfg = write_config(tmp_path, **bad)
    assert cli.main(["simulate", "--config", cfg]) == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_select_bad_data_file(tmp_path, capsys):
    cfg = write_config(tmp_path)
    (tmp_path / "empty.csv").write_text("y\n")
    assert cli.main(["select", "--config", cfg, "--data", str(tmp_path / "empty.csv")]) == 2
    assert cli.main(["select", "--config", cfg, "--data", str(tmp_path / "missing.csv")]) == 2
