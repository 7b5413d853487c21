import json
import shutil
import subprocess

import pytest

from tapa.cli import dispatch
from tapa.config import shipped_text
from tapa.train import load_checkpoint


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("lex")
    assert dispatch(["make-synthetic", "--kind", "lexical", "--split-sizes", "120,40,40",
                     "--seed", "5", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def small_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.cfg"
    path.write_text(shipped_text("synthetic") + "epochs = 2\nlda_iterations = 20\n")
    return path


def test_make_synthetic_byte_identical(tmp_path):
    for run in ("a", "b"):
        assert dispatch(["make-synthetic", "--kind", "lexical", "--size", "2000", "--seed", "7",
                         "--out", str(tmp_path / run)]) == 0
    a = (tmp_path / "a" / "lexical.tsv").read_bytes()
    assert a == (tmp_path / "b" / "lexical.tsv").read_bytes()
    assert len(a.splitlines()) == 2001


def test_make_synthetic_topical_reports_baseline(tmp_path):
    assert dispatch(["make-synthetic", "--kind", "topical", "--size", "1000", "--seed", "7",
                     "--out", str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["bow_baseline_f1"] >= 0.8


def test_make_synthetic_bad_kind(tmp_path, capsys):
    assert dispatch(["make-synthetic", "--kind", "poetry", "--out", str(tmp_path)]) == 1
    assert "usage" in capsys.readouterr().err


def test_train_without_config_is_usage_error(data, tmp_path, capsys):
    assert dispatch(["train", "--data", str(data), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "usage: tapa train" in err and "--config" in err


def test_unknown_flag(capsys):
    assert dispatch(["train", "--frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_no_command(capsys):
    assert dispatch([]) == 1


def test_missing_data_is_data_error(tmp_path, small_cfg):
    assert dispatch(["train", "--config", str(small_cfg), "--data", str(tmp_path / "none"),
                     "--out", str(tmp_path / "o")]) == 2


def test_bad_config_is_usage_error(tmp_path, data):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("num_topics = lots\n")
    assert dispatch(["train", "--config", str(cfg), "--data", str(data),
                     "--out", str(tmp_path / "o")]) == 1


def test_malformed_data_is_data_error(tmp_path, small_cfg):
    (tmp_path / "train.tsv").write_text("id\tquestion1\tquestion2\tlabel\nx\tonly two\n")
    assert dispatch(["train", "--config", str(small_cfg), "--data", str(tmp_path),
                     "--out", str(tmp_path / "o")]) == 2


def test_train_eval_round_trip(data, small_cfg, tmp_path, capsys):
    run = tmp_path / "run"
    assert dispatch(["train", "--config", str(small_cfg), "--data", str(data), "--out", str(run),
                     "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    for name in ("checkpoint.bin", "config.cfg", "vocab.txt", "topics.lda", "history.tsv",
                 "manifest.json"):
        assert (run / name).is_file()
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["command"] == "train" and "numpy" in manifest["versions"]
    assert len(load_checkpoint(run / "checkpoint.bin")) > 5

    ev = tmp_path / "eval"
    assert dispatch(["eval", "--model", str(run), "--data", str(data), "--out", str(ev),
                     "--json", "--dump-affinity", str(ev / "aff")]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["f1"] == pytest.approx(report["test_f1"])
    grids = sorted((ev / "aff").glob("*.emb.tsv"))
    assert len(grids) == 40


def test_eval_missing_model(tmp_path, data):
    assert dispatch(["eval", "--model", str(tmp_path), "--data", str(data),
                     "--out", str(tmp_path / "o")]) == 2


def test_lda_fit_and_infer(data, tmp_path):
    assert dispatch(["lda-fit", "--config", "synthetic", "--data", str(data),
                     "--out", str(tmp_path)]) == 0
    assert dispatch(["lda-infer", "--model", str(tmp_path / "topics.lda"),
                     "--data", str(data / "test.tsv"), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "doc_topics.tsv").read_text().splitlines()
    assert len(rows) == 80
    assert abs(sum(float(v) for v in rows[0].split("\t")[2].split()) - 1) < 1e-9


def test_ablate_writes_four_rows(data, small_cfg, tmp_path):
    assert dispatch(["ablate", "--config", str(small_cfg), "--data", str(data),
                     "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "ablation.tsv").read_text().strip().splitlines()
    assert [l.split("\t")[0] for l in lines[1:]] == ["full", "-topics", "-contextual", "late fusion"]


def test_search(data, small_cfg, tmp_path):
    assert dispatch(["search", "--config", str(small_cfg), "--data", str(data),
                     "--out", str(tmp_path), "--trials", "2"]) == 0
    assert (tmp_path / "best.cfg").is_file()
    assert len((tmp_path / "trials.tsv").read_text().splitlines()) == 3


def test_gradcheck_exit_code(capsys):
    assert dispatch(["gradcheck", "--config", "semeval", "--toy"]) == 0
    assert "max relative error" in capsys.readouterr().out


@pytest.mark.skipif(shutil.which("tapa") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["tapa", "train"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr and "Traceback" not in proc.stderr
