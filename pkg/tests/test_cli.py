import json

import pytest
import yaml

from tensorslice.cli import EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_USAGE, main
from tensorslice.config import ConfigError, resolve

FAST = {
    "dataset": {"name": "spirals", "n_train": 400, "n_test": 300, "noise": 0.2},
    "model": {"arch": "mlp", "sizes": [2, 16, 16, 2]},
    "baseline": {"batch_size": 32, "learning_rate": 0.01, "epochs": 15},
    "compress": {"cr": 0.5, "exclude": [0, 4]},
    "local": {"epochs": 1},
    "global": {"epochs": 1},
}


@pytest.fixture()
def cfg_file(tmp_path):
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump(FAST))
    return p


@pytest.fixture()
def baseline(tmp_path, cfg_file):
    out = tmp_path / "nested" / "base"
    assert main(["train-baseline", "--config", str(cfg_file), "--out", str(out)]) == 0
    return out


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_train_baseline_creates_dir_and_is_deterministic(tmp_path, cfg_file, baseline):
    again = tmp_path / "again"
    assert main(["train-baseline", "--config", str(cfg_file), "--out", str(again)]) == 0
    a, b = _manifest(baseline), _manifest(again)
    assert a["outputs"]["model.tsm"] == b["outputs"]["model.tsm"]
    assert a["metrics"] == b["metrics"]
    assert a["seed"] == 0 and a["config"]["dataset"]["n_train"] == 400
    assert (baseline / "config.yaml").is_file()


def test_seed_flag_changes_model(tmp_path, cfg_file, baseline):
    other = tmp_path / "s1"
    assert main(["train-baseline", "--config", str(cfg_file), "--seed", "1", "--out", str(other)]) == 0
    assert _manifest(other)["outputs"]["model.tsm"] != _manifest(baseline)["outputs"]["model.tsm"]
    assert _manifest(other)["config"]["seed"] == 1


def test_eval_reproduces_training_metric(tmp_path, cfg_file, baseline):
    out = tmp_path / "eval"
    assert main(["eval", "--config", str(cfg_file), "--model", str(baseline / "model.tsm"), "--out", str(out)]) == 0
    assert _manifest(out)["metrics"]["test"] == _manifest(baseline)["metrics"]["test"]


def test_compress_hits_target_rate(tmp_path, cfg_file, baseline):
    out = tmp_path / "c"
    rc = main(["compress", "--config", str(cfg_file), "--model", str(baseline / "model.tsm"),
               "--cr", "0.5", "--out", str(out)])
    assert rc == 0
    m = _manifest(out)["metrics"]
    # one plan step (0.005 per layer) of slack above the target
    assert 0.5 <= m["achieved_cr"] <= 0.5 + 0.05
    assert (out / "plan.yaml").is_file()


def test_pipeline_commands_and_report(tmp_path, cfg_file, baseline):
    model = str(baseline / "model.tsm")
    dirs = []
    for cmd in ("profile", "distill", "finetune", "hybrid"):
        out = tmp_path / cmd
        assert main([cmd, "--config", str(cfg_file), "--model", model, "--out", str(out), "--workers", "2"]) == 0
        dirs.append(str(out))
    assert (tmp_path / "distill" / "schedule.csv").is_file()
    assert (tmp_path / "profile" / "profile.csv").read_text().startswith("layer,")
    rep = tmp_path / "rep"
    assert main(["report", "--out", str(rep), str(baseline), *dirs]) == 0
    rows = (rep / "report.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 5


def test_usage_errors():
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["eval", "--no-such-flag"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_config_errors_list_every_problem(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"seed": -1, "workers": 0, "typo": 1, "local": {"epochs": -2, "lr": 1},
                                   "compress": {"cr": 1.5}}))
    assert main(["train-baseline", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    err = capsys.readouterr().err
    for needle in ("seed", "workers", "typo", "local.lr", "epochs", "compress.cr"):
        assert needle in err
    with pytest.raises(ConfigError) as e:
        resolve({"seed": -1, "workers": 0})
    assert len(e.value.problems) == 2


def test_missing_model_is_config_error(tmp_path):
    assert main(["eval", "--model", str(tmp_path / "none.tsm"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_corrupt_model_is_data_error(tmp_path):
    junk = tmp_path / "junk.tsm"
    junk.write_bytes(b"TSLC garbage")
    assert main(["eval", "--model", str(junk), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_divergence_exit_code(tmp_path, cfg_file, baseline):
    doc = dict(FAST, local={"epochs": 30, "learning_rate": 1e6})
    p = tmp_path / "div.yaml"
    p.write_text(yaml.safe_dump(doc))
    rc = main(["distill", "--config", str(p), "--model", str(baseline / "model.tsm"), "--out", str(tmp_path / "d")])
    assert rc == EXIT_DIVERGED


def test_flags_override_document():
    cfg = resolve({"seed": 3, "workers": 2}, {"seed": 5, "workers": None})
    assert cfg.seed == 5 and cfg.workers == 2
    assert cfg.local.seed == 5
