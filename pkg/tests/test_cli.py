import json
import subprocess
import sys

import pytest

from flowclone import cli
from flowclone.dataset import load_pairs
from flowclone.pipeline import CloneModel

TINY = ["--dim", "6", "--steps", "2", "--batch", "8", "--epochs", "1", "--deterministic"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--out", str(out), "--functionalities", "3", "--variants", "4", "--seed", "1"]) == 0
    return out


@pytest.fixture(scope="module")
def trained(synth_dir, tmp_path_factory):
    run = tmp_path_factory.mktemp("run")
    code = cli.main(["train", "--input", str(synth_dir / "fragments.jsonl"), "--pairs", str(synth_dir / "train.tsv"),
                     "--valid", str(synth_dir / "valid.tsv"), "--out", str(run), *TINY])
    assert code == 0
    return run


def test_help_lists_commands(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    assert all(name in text for name in cli.COMMANDS)


def test_module_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "flowclone.cli", "train", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--epochs" in proc.stdout and "default: 10" in proc.stdout


def test_missing_required_options_reported_together(capsys):
    assert cli.main(["train"]) == 1
    err = capsys.readouterr().err
    assert "--input is required" in err and "--pairs is required" in err and "--out is required" in err


def test_bad_values_are_config_errors(capsys, tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path), "--variants", "zero"]) == 1
    assert "variants" in capsys.readouterr().err
    assert cli.main(["graph", "--input", "x", "--out", "y", "--format", "png"]) == 1
    assert cli.main(["frobnicate"]) == 1


def test_precedence_flag_env_config_default(tmp_path):
    conf = tmp_path / "c.yaml"
    conf.write_text("epochs: 3\nlr: 0.5\nseed: 9\n")
    args = cli.build_parser().parse_args(["train", "--input", "i", "--pairs", "p", "--out", "o",
                                          "--config", str(conf), "--epochs", "7"])
    cfg = cli.resolve(args, {"FLOWCLONE_LR": "0.25", "FLOWCLONE_EPOCHS": "5"})
    assert cfg["epochs"] == 7 and cfg["lr"] == 0.25 and cfg["seed"] == 9 and cfg["dim"] == 100


def test_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "c.json"
    conf.write_text(json.dumps({"epochs": 2, "learning_speed": 3}))
    assert cli.main(["synth", "--out", str(tmp_path), "--config", str(conf)]) == 1
    err = capsys.readouterr().err
    assert "learning_speed" in err and "epochs" in err


def test_synth_outputs(synth_dir):
    names = {p.name for p in synth_dir.iterdir()}
    assert {"fragments.jsonl", "pairs.tsv", "train.tsv", "valid.tsv", "test.tsv", "manifest.json"} <= names
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["fragments"] == 12 and len(load_pairs(synth_dir / "pairs.tsv")) == 66


def test_graph_command(tmp_path, capsys):
    src = tmp_path / "src"
    src.mkdir()
    (src / "ok.java").write_text("int f(int a) { while (a > 0) { a--; } return a; }")
    assert cli.main(["graph", "--input", str(src), "--out", str(tmp_path / "g")]) == 0
    rec = json.loads((tmp_path / "g" / "ok.json").read_text())
    assert rec["fragment_id"] == "ok"
    assert "WhileExec=1" in capsys.readouterr().out
    (src / "bad.java").write_text("int f( {")
    assert cli.main(["graph", "--input", str(src), "--out", str(tmp_path / "g2"), "--format", "dot"]) == 2
    assert (tmp_path / "g2" / "ok.dot").exists()


def test_train_outputs(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"config.json", "model.json", "train_log.jsonl"} <= names
    log = [json.loads(line) for line in (trained / "train_log.jsonl").read_text().splitlines()]
    assert len(log) == 1 and "valid_F1" in log[0]
    assert CloneModel.load(trained / "model.json").threshold is not None


def test_tune_eval_predict_attention(synth_dir, trained, tmp_path, capsys):
    frags, test = str(synth_dir / "fragments.jsonl"), str(synth_dir / "test.tsv")
    ckpt = str(trained / "model.json")
    tuned = tmp_path / "tuned.json"
    assert cli.main(["tune", "--input", frags, "--pairs", str(synth_dir / "valid.tsv"),
                     "--checkpoint", ckpt, "--out", str(tuned)]) == 0
    sigma = json.loads(capsys.readouterr().out)["sigma"]
    assert CloneModel.load(tuned).threshold == sigma

    assert cli.main(["eval", "--input", frags, "--pairs", test, "--checkpoint", str(tuned),
                     "--out", str(tmp_path / "ev")]) == 0
    assert "F1" in capsys.readouterr().out
    report = json.loads((tmp_path / "ev" / "report.json").read_text())
    assert report["sigma"] == sigma and (tmp_path / "ev" / "sweep.csv").exists()

    assert cli.main(["predict", "--input", frags, "--pairs", test, "--checkpoint", ckpt,
                     "--out", str(tmp_path / "pred.tsv"), "--threshold", "0.0"]) == 0
    rows = (tmp_path / "pred.tsv").read_text().splitlines()
    assert rows[0] == "id1\tid2\tscore\tverdict" and len(rows) == 1 + len(load_pairs(test))

    assert cli.main(["attention", "--input", frags, "--pairs", test, "--checkpoint", ckpt,
                     "--out", str(tmp_path / "att.jsonl"), "--k", "3"]) == 0
    recs = [json.loads(line) for line in (tmp_path / "att.jsonl").read_text().splitlines()]
    assert len(recs) == 3 * len(load_pairs(test))


def test_wrong_model_kind(synth_dir, trained, tmp_path, capsys):
    args = ["--input", str(synth_dir / "fragments.jsonl"), "--pairs", str(synth_dir / "test.tsv"),
            "--checkpoint", str(trained / "model.json")]
    assert cli.main(["eval", *args, "--model", "ggnn"]) == 2
    assert "ModelKindMismatch" in capsys.readouterr().err
    run = tmp_path / "g"
    assert cli.main(["train", "--input", str(synth_dir / "fragments.jsonl"), "--pairs", str(synth_dir / "train.tsv"),
                     "--out", str(run), "--model", "ggnn", "--seed", "1", *TINY]) == 0
    assert {"train.tsv", "valid.tsv", "test.tsv"} <= {p.name for p in run.iterdir()}
    assert cli.main(["attention", "--input", str(synth_dir / "fragments.jsonl"), "--pairs",
                     str(synth_dir / "test.tsv"), "--checkpoint", str(run / "model.json"),
                     "--out", str(tmp_path / "a.jsonl")]) == 2


def test_missing_files_exit_with_data_code(tmp_path, capsys):
    assert cli.main(["eval", "--input", str(tmp_path / "none"), "--pairs", "p", "--checkpoint", "c"]) == 2
    assert "error:" in capsys.readouterr().err
