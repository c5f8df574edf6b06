import csv
import json
import re

import numpy as np
import pytest

from aura import experiments as ex
from aura.checkpoint import save_checkpoint
from aura.cli import main
from aura.config import RunConfig
from aura.model import AuraModel

MICRO = """\
[synth]
n_series = 200
[model]
d_model = 8
n_heads = 2
n_experts = 2
ffn_hidden = 8
text_embed_dim = 32
[train]
max_epochs = 2
batch_size = 16
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "micro.cfg"
    p.write_text(MICRO, encoding="utf-8")
    return p


def run(cfg, out, *args):
    return main([args[0], "--config", str(cfg), "--out", str(out), *args[1:]])


def _without_timestamp(path):
    doc = json.loads(path.read_text())
    doc.pop("timestamp", None)
    return doc


# ------------------------------------------------------------- exit codes

def test_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert "usage" in capsys.readouterr().err


def test_no_command_is_usage_error(capsys):
    assert main([]) == 2


def test_unknown_key_exits_one_naming_key(cfg, tmp_path, capsys):
    assert run(cfg, tmp_path / "o", "train", "--set", "train.sede=3") == 1
    assert "train.sede" in capsys.readouterr().err


def test_missing_checkpoint_exits_one(cfg, tmp_path, capsys):
    assert run(cfg, tmp_path / "o", "eval") == 1
    assert "model.ckpt" in capsys.readouterr().err


def test_corrupt_checkpoint_exits_one(cfg, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"AURA-CHECKPOINT 1\n[config]\nd_model=x\n[payload]\n")
    assert run(cfg, tmp_path / "o", "detect", "--checkpoint", str(bad)) == 1
    assert "bad.ckpt" in capsys.readouterr().err


def test_keys_lists_schema(capsys):
    assert main(["keys"]) == 0
    assert "train.seed" in capsys.readouterr().out


# --------------------------------------------------------------- pipeline

def test_train_eval_detect_gates_plot(cfg, tmp_path):
    out = tmp_path / "run"
    assert run(cfg, out, "train", "--set", "train.seed=7") == 0
    assert (out / "model.ckpt").is_file()
    report = json.loads((out / "train_report.json").read_text())
    assert report["seed"] == 7 and report["config"]["train.seed"] == 7
    assert len(report["train_losses"]) == report["stop_epoch"]

    assert run(cfg, out, "eval") == 0
    metrics = json.loads((out / "metrics.json").read_text())
    forecasts = json.loads((out / "forecasts.json").read_text())["samples"]
    assert metrics["all"]["n"] == len(forecasts) and len(forecasts[0]["forecast"]) == 18

    assert run(cfg, out, "detect", "--target-far", "0.05") == 0
    det = json.loads((out / "detection_report.json").read_text())
    with (out / "scores.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == len(det["scores"])
    assert det["threshold"]["target_far"] == 0.05 and det["calibration_far"] <= 0.05

    assert run(cfg, out, "gates") == 0
    gates = json.loads((out / "gates.json").read_text())
    assert len(gates["pairs"]) == len(forecasts)
    assert (out / "gates.svg").read_text().startswith("<svg")

    assert main(["plot", str(out / "forecasts.json"), str(out / "detection_report.json"),
                 str(out / "gates.json"), "--max-samples", "3"]) == 0
    svg = (out / "forecasts.svg").read_text()
    assert svg.count('class="forecast"') == 3 and svg.count('class="truth"') == 3
    assert (out / "detection_report.svg").read_text().count('class="threshold"') == 1
    assert (out / "gates.svg").is_file()


def test_plot_one_sample_has_one_line_each(tmp_path):
    rep = tmp_path / "one.json"
    rep.write_text(json.dumps({"samples": [{"id": "a", "label": "normal", "history": [1, 2, 3],
                                            "target": [4, 5], "forecast": [4.5, 5.5]}]}))
    assert main(["plot", str(rep)]) == 0
    svg = (tmp_path / "one.svg").read_text()
    assert len(re.findall(r'<polyline class="forecast"', svg)) == 1
    assert len(re.findall(r'<polyline class="truth"', svg)) == 1


def test_plot_rejects_unknown_report(tmp_path):
    rep = tmp_path / "x.json"
    rep.write_text("{}")
    assert main(["plot", str(rep)]) == 1
    assert main(["plot"]) == 2


def test_artifacts_are_reproducible(cfg, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        for cmd in ("train", "eval", "detect"):
            assert run(cfg, out, cmd) == 0
    a, b = outs
    ra, rb = _without_timestamp(a / "train_report.json"), _without_timestamp(b / "train_report.json")
    ra["config"].pop("output.dir")
    rb["config"].pop("output.dir")
    assert ra == rb
    for name in ("metrics.json", "forecasts.json", "detection_report.json", "scores.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert (a / "model.ckpt").read_bytes() == (b / "model.ckpt").read_bytes()


def test_untrained_gates_centre_near_half(cfg, tmp_path):
    out = tmp_path / "g"
    rc = RunConfig.load(cfg, [f"output.dir={out}"], env={})
    prep = ex.prepare(rc)
    save_checkpoint(AuraModel(rc.model_config(prep.exo_dim), seed=0), out / "model.ckpt")
    assert run(cfg, out, "gates", "--split", "val") == 0
    stats = json.loads((out / "gates.json").read_text())
    assert len(stats["pairs"]) == len(prep.val)
    for stage in ("alpha_hist", "alpha_fut"):
        assert abs(stats[stage]["mean"] - 0.5) < 0.15


def test_ablate_rows_in_documented_order(cfg, tmp_path):
    out = tmp_path / "abl"
    assert run(cfg, out, "ablate", "--set", "train.max_epochs=1") == 0
    with (out / "ablation.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [r["variant"] for r in rows] == [name for name, _ in ex.ABLATION_VARIANTS]
    assert rows[0]["variant"] == "Aura" and rows[3]["flags"] == "no_exog"
    doc = json.loads((out / "ablation.json").read_text())
    assert len(doc["runs"]) == 8 and all(np.isfinite(r["mse"]) for r in doc["runs"])


def test_generate_writes_loadable_corpus(cfg, tmp_path):
    out = tmp_path / "gen"
    assert run(cfg, out, "generate", "--set", "synth.n_series=10") == 0
    assert run(cfg, tmp_path / "csvrun", "train", "--set", "data.source=csv", "--set", f"data.path={out / 'data.csv'}",
               "--set", f"data.sidecar={out / 'static.json'}", "--set", "data.train_frac=0.5",
               "--set", "data.val_frac=0.2") == 0
