import json

import pytest

from sersrecon.cli import run
from sersrecon.config import ConfigError, PipelineConfig, config_from_dict, config_to_dict, load_config

SMALL = {
    "n_pretrain_per_class": 12,
    "n_finetune_per_class": 12,
    "n_test_per_class": 4,
    "pretrain": {"max_epochs": 2},
    "finetune": {"max_epochs": 2},
    "plan": {"origin_mm": [5.5, -2.5], "n_cols": 8, "n_rows": 6},
}


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.json"
    p.write_text(json.dumps(SMALL))
    return p


def _tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_print_default_config_round_trips(capsys):
    assert run(["--print-default-config"]) == 0
    data = json.loads(capsys.readouterr().out)
    cfg = config_from_dict(data)
    assert cfg == PipelineConfig()
    assert data["plan"]["n_cols"] == 60 and data["plan"]["dwell_s"] == 0.35


def test_no_command_is_usage_error(capsys):
    assert run([]) == 2


def test_unknown_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["pipeline", "--bogus"])
    assert exc.value.code == 2


def test_missing_config_file(tmp_path, capsys):
    assert run(["pipeline", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2
    assert "nope.json" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize(
    "doc, path",
    [
        ({"plan": {"n_cols": "many"}}, "plan.n_cols"),
        ({"plan": {"n_cols": 0}}, "plan"),
        ({"plan": {"ncols": 3}}, "plan.ncols"),
        ({"layout": {"background_material": "mystery"}}, "layout"),
        ({"preprocess": {"n_features": 100}}, "network.input_length"),
        ({"finetune": {"optimizer": "rmsprop"}}, "finetune"),
    ],
)
def test_invalid_config_names_field(tmp_path, capsys, doc, path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(doc))
    assert run(["pipeline", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert err.startswith("config error: ")
    assert path in err
    with pytest.raises(ConfigError):
        load_config(p)


def test_invalid_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert run(["scan", "--config", str(p)]) == 2


def test_seed_override_changes_all_seeds():
    base = PipelineConfig().with_seed(3)
    assert base.seeds.scan == 3 * 16 + 5
    assert len({*(getattr(base.seeds, f) for f in ("pretrain_data", "pretrain_init", "finetune_data", "test_data", "head_init", "scan")), base.pretrain.seed, base.finetune.seed}) == 8


def test_config_dict_round_trip():
    cfg = config_from_dict(SMALL)
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_dry_run_prints_1800_positions(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(["scan", "--dry-run", "--out", str(tmp_path / "o")]) == 0
    captured = capsys.readouterr()
    lines = captured.out.splitlines()
    assert lines[0] == "index,row,col,x_mm,y_mm"
    assert len(lines) == 1 + 1800
    assert lines[1] == "0,0,0,-29.5,-14.5"
    assert "1800" in captured.err
    assert list(tmp_path.iterdir()) == []


def test_evaluate_without_prediction(tmp_path, capsys):
    assert run(["evaluate", "--out", str(tmp_path)]) == 2
    assert "labels.csv" in capsys.readouterr().err


def test_finetune_without_pretrained_model(tmp_path, capsys):
    assert run(["finetune", "--out", str(tmp_path)]) == 2
    assert "pretrained_model.json" in capsys.readouterr().err


def test_classify_without_scan(tmp_path, small_config, capsys):
    out = tmp_path / "o"
    assert run(["pretrain", "--config", str(small_config), "--out", str(out)]) == 0
    assert run(["finetune", "--config", str(small_config), "--out", str(out)]) == 0
    assert run(["classify", "--config", str(small_config), "--out", str(out)]) == 2
    assert "manifest.csv" in capsys.readouterr().err


def test_pipeline_writes_only_under_out(tmp_path, small_config, capsys, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    out = tmp_path / "o"
    assert run(["pipeline", "--config", str(small_config), "--out", str(out)]) == 0
    assert "IoU" in capsys.readouterr().out
    assert list(work.iterdir()) == []
    names = set(_tree(out))
    for f in ("metrics.json", "prediction.pgm", "truth.pgm", "labels.csv", "pretrained_model.json",
              "finetuned_model.json", "scan/manifest.csv", "scan/timing.json"):
        assert f in names
    metrics = json.loads((out / "metrics.json").read_text())
    assert 0.0 <= metrics["iou"] <= 1.0


def test_pipeline_is_deterministic(tmp_path, small_config, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["pipeline", "--config", str(small_config), "--out", str(a)]) == 0
    assert run(["pipeline", "--config", str(small_config), "--out", str(b)]) == 0
    assert _tree(a) == _tree(b)


def test_staged_equals_monolithic(tmp_path, small_config, capsys):
    mono, staged = tmp_path / "mono", tmp_path / "staged"
    assert run(["pipeline", "--config", str(small_config), "--out", str(mono)]) == 0
    for stage in ("pretrain", "finetune", "scan", "classify", "evaluate"):
        assert run([stage, "--config", str(small_config), "--out", str(staged)]) == 0, stage
    assert _tree(mono) == _tree(staged)


def test_seed_flag_changes_scan(tmp_path, small_config, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["scan", "--config", str(small_config), "--out", str(a)]) == 0
    assert run(["scan", "--config", str(small_config), "--seed", "9", "--out", str(b)]) == 0
    assert (a / "scan" / "r0_c0.csv").read_bytes() != (b / "scan" / "r0_c0.csv").read_bytes()
