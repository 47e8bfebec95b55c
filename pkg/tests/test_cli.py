import json
import subprocess
import sys

import pytest

from para_rank.cli import main
from para_rank.synthetic import make_planted_corpus


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return str(path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    bench = make_planted_corpus()
    files = {
        "corpus": write_jsonl(d / "corpus.jsonl", bench.corpus_records),
        "qa": write_jsonl(d / "qa.jsonl", bench.test_qa),
        "emb": str(d / "emb.txt"),
        "index": str(d / "index.bin"),
        "model": str(d / "model.ckpt"),
    }
    (d / "emb.txt").write_text(bench.embeddings_text)
    assert main(["index", "--corpus", files["corpus"], "--out", files["index"]]) == 0
    train_args = ["--layers", "1", "--hidden", "8", "--epochs", "2", "--seed", "3"]
    assert main(["train", "--corpus", files["corpus"], "--qa", files["qa"], "--emb", files["emb"], "--out", files["model"], *train_args]) == 0
    files["dir"] = d
    files["bench"] = bench
    return files


def pipeline_args(ws):
    return ["--corpus", ws["corpus"], "--index", ws["index"], "--model", ws["model"]]


def test_ask_prints_answer_and_trace(workspace, capsys):
    q = workspace["bench"].test_qa[0]
    assert main(["ask", q["question"], *pipeline_args(workspace)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == q["answers"][0]
    assert 1 <= len(lines) - 1 <= 5 and lines[1].lstrip().startswith("#1 ")


def test_ask_json(workspace, capsys):
    assert main(["ask", "qqq zzz", "--json", *pipeline_args(workspace)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["answer"] is None and out["reason"] == "no documents matched"


def test_eval_json(workspace, capsys):
    assert main(["eval", "--qa", workspace["qa"], "--m", "3", *pipeline_args(workspace)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["m"] == 3 and len(report["records"]) == 20
    assert 0.0 <= report["exact_match"] <= 1.0


def test_config_file_and_override(workspace, capsys):
    cfg = workspace["dir"] / "cfg.toml"
    cfg.write_text(
        f'corpus = "{workspace["corpus"]}"\nindex = "{workspace["index"]}"\nmodel = "{workspace["model"]}"\nn_docs = 4\n'
    )
    assert main(["eval", "--qa", workspace["qa"], "--config", str(cfg), "--n-docs", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["n_docs"] == 2


def test_gridsearch(workspace, capsys):
    assert main(["gridsearch", "--qa", workspace["qa"], *pipeline_args(workspace)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert len(out["grid"]) == 64 and out["best"]["exact_match"] == out["grid"][0]["exact_match"]


def test_reader_answers_file(workspace, capsys):
    q = workspace["bench"].test_qa[0]
    pos = q["positive"]
    answers = write_jsonl(
        workspace["dir"] / "reader.jsonl",
        [{"question_id": q["id"], "doc_id": pos["doc_id"], "para_index": pos["para_index"], "answer": q["answers"][0], "score": 3.0}],
    )
    qa = write_jsonl(workspace["dir"] / "one.jsonl", [q])
    assert main(["eval", "--qa", qa, "--reader-answers", answers, *pipeline_args(workspace)]) == 0
    assert json.loads(capsys.readouterr().out)["exact_match"] == 1.0


def test_missing_settings_is_usage_error(workspace, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["ask", "what", "--corpus", workspace["corpus"]])
    assert exc.value.code == 2
    assert "--index" in capsys.readouterr().err


def test_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--bogus"])
    assert exc.value.code == 2


def test_invalid_hyperparameter_is_usage_error(workspace):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--corpus", workspace["corpus"], "--qa", workspace["qa"], "--emb", workspace["emb"],
              "--out", str(workspace["dir"] / "x.ckpt"), "--dropout", "1.5"])
    assert exc.value.code == 2


def test_data_errors_exit_3(workspace, capsys):
    bad = workspace["dir"] / "bad.ckpt"
    bad.write_bytes(b"garbage!" * 4)
    args = ["ask", "what", "--corpus", workspace["corpus"], "--index", workspace["index"], "--model", str(bad)]
    assert main(args) == 3
    assert "not a para-rank checkpoint" in capsys.readouterr().err
    assert main(["index", "--corpus", str(workspace["dir"] / "missing.jsonl"), "--out", "x"]) == 3


def test_entry_point_runs_as_module(workspace):
    proc = subprocess.run(
        [sys.executable, "-m", "para_rank.cli", "ask", "qqq", *pipeline_args(workspace)],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert "no documents matched" in proc.stdout


def test_numeric_error_exit_4(workspace, monkeypatch, capsys):
    from para_rank import cli
    from para_rank.errors import NumericError

    def blow_up(*args, **kwargs):
        raise NumericError("non-finite loss at epoch 1, example 0")

    monkeypatch.setattr(cli, "train", blow_up)
    args = ["train", "--corpus", workspace["corpus"], "--qa", workspace["qa"], "--emb", workspace["emb"],
            "--out", str(workspace["dir"] / "y.ckpt"), "--layers", "1", "--hidden", "2"]
    assert main(args) == 4
    assert "non-finite" in capsys.readouterr().err
