import json
import xml.etree.ElementTree as ET

import pytest

import builders as B
from cograsp.ce_model import CEModel, CEModelConfig, save_model
from cograsp.cli import EXIT_INVALID, EXIT_OK, main
from cograsp.scenario import save_scenario

TINY_MODEL = {"embed_dim": 4, "head_hidden": 6, "gru_hidden": 3, "conv_channels": [2, 3], "raster_size": 16}


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "scenarios").mkdir()
    save_scenario(B.open_translation(), d / "scenarios" / "a.json")
    save_scenario(B.goal_by_wall(), d / "scenarios" / "b.json")
    save_model(CEModel(CEModelConfig(**TINY_MODEL), 0), d / "tiny.json")
    return d


@pytest.mark.parametrize("argv", [
    ["label", "--scenarios", "nope/"],
    ["train", "--dataset", "missing.jsonl"],
    ["eval", "--dataset", "missing.jsonl"],
    ["rank", "--scenario", "missing.json"],
    ["plan", "--scenario", "missing.json", "--pair", "0", "1"],
    ["render", "--scenario", "missing.json"],
])
def test_missing_input_exits_2(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_INVALID


def test_bad_arguments_exit_2(work):
    assert main(["rank"]) == EXIT_INVALID  # required option missing
    assert main(["frobnicate"]) == EXIT_INVALID
    assert main(["rank", "--scenario", str(work / "scenarios" / "a.json"), "--model", str(work / "tiny.json"),
                 "--top-k", "0"]) == EXIT_INVALID


def test_config_file_unknown_key_and_bad_json(work, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"top_k": 2, "colour": "red"}))
    assert main(["rank", "--scenario", str(work / "scenarios" / "a.json"), "--config", str(cfg)]) == EXIT_INVALID
    cfg.write_text("{not json")
    assert main(["rank", "--scenario", str(work / "scenarios" / "a.json"), "--config", str(cfg)]) == EXIT_INVALID


def test_config_file_values_and_flag_precedence(work, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"top_k": 2, "model": str(work / "tiny.json")}))
    out = tmp_path / "r.json"
    sc = str(work / "scenarios" / "a.json")
    assert main(["rank", "--scenario", sc, "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert len(json.loads(out.read_text())) == 2
    assert main(["rank", "--scenario", sc, "--config", str(cfg), "--top-k", "3", "--out", str(out)]) == EXIT_OK
    assert len(json.loads(out.read_text())) == 3


def test_rank_emits_five_ordered_rows(work, capsys):
    assert main(["rank", "--scenario", str(work / "scenarios" / "a.json"), "--model", str(work / "tiny.json")]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 5
    aff = [r["affinity"] for r in rows]
    assert aff == sorted(aff, reverse=True)
    for r in rows:
        assert r["center"] != r["context"] and 0 < r["probability"] < 1


def test_label_train_eval_pipeline(work, tmp_path):
    ds, stats = tmp_path / "ds.jsonl.gz", tmp_path / "stats.json"
    assert main(["label", "--scenarios", str(work / "scenarios"), "--out", str(ds), "--stats", str(stats),
                 "--split", "1,0,0"]) == EXIT_OK
    st = json.loads(stats.read_text())
    assert st["scenarios"] == 2 and st["pairs"] == 9 + 9  # unordered pairs, each solved once
    model = tmp_path / "m" / "model.json"
    assert main(["train", "--dataset", str(ds), "--out", str(model), "--epochs", "2",
                 "--model", json.dumps(TINY_MODEL)]) == EXIT_OK
    assert (tmp_path / "m" / "history.csv").read_text().count("\n") == 3
    rep = tmp_path / "report.json"
    assert main(["eval", "--dataset", str(ds), "--model", str(model), "--split", "train", "--trials", "200",
                 "--out", str(rep)]) == EXIT_OK
    agg = json.loads(rep.read_text())["aggregate"]
    for key in ("top1", "top3", "top5", "random_top1", "random_top5"):
        assert 0.0 <= agg[key] <= 1.0


def test_train_rejects_unknown_model_key(work, tmp_path):
    ds = tmp_path / "ds.jsonl"
    assert main(["label", "--scenarios", str(work / "scenarios" / "a.json"), "--out", str(ds),
                 "--split", "1,0,0"]) == EXIT_OK
    assert main(["train", "--dataset", str(ds), "--out", str(tmp_path / "m.json"),
                 "--model", json.dumps({"depth": 3})]) == EXIT_INVALID


def test_corrupt_dataset_exits_2(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"format": "something else"}\n')
    assert main(["train", "--dataset", str(bad)]) == EXIT_INVALID


def test_plan_and_render(work, tmp_path):
    sc = str(work / "scenarios" / "a.json")
    traj = tmp_path / "t.json"
    assert main(["plan", "--scenario", sc, "--pair", "0", "3", "--out", str(traj)]) == EXIT_OK
    assert json.loads(traj.read_text())["pair"] == [0, 3]
    assert main(["plan", "--scenario", sc, "--pair", "2", "2", "--out", str(traj)]) == EXIT_INVALID
    svg = tmp_path / "s.svg"
    assert main(["render", "--scenario", sc, "--trajectory", str(traj), "--out", str(svg)]) == EXIT_OK
    root = ET.fromstring(svg.read_text())
    assert root.tag.endswith("svg")


def test_gen_scenarios_is_deterministic(tmp_path):
    argv = ["gen-scenarios", "--shapes", "triangle", "--sites", "1", "--count", "2", "--seed", "4"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(argv + ["--out", str(tmp_path / "b")]) == EXIT_OK
    fa = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert fa == ["triangle-0-o00.json", "triangle-0-o01.json"]
    for name in fa:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["gen-scenarios", "--shapes", "cube", "--out", str(tmp_path / "c")]) == EXIT_INVALID


def test_train_help_lists_defaults(capsys):
    assert main(["train", "--help"]) == EXIT_OK
    out = capsys.readouterr().out
    for value in ("44", "6.15e-2", "37", "83", "1.10", "2.61e-4", "1e-4", "0.3741"):
        assert value in out
    assert "(default: None)" not in out
