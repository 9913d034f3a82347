import json
import time
from pathlib import Path

import pytest

from descadapt.cli import main
from descadapt.config import ConfigError, load_config
from descadapt.desc_understanding import DEFAULT_INSTRUCTION, build_prompt
from descadapt.gen_client import prompt_hash
from descadapt.pipeline import DEFAULT_BANK
from descadapt.taxonomy import parse_attributes
from descadapt.toy import write_toy_workspace
from test_taxonomy import ARGUANA_ANNOTATION


def _arguana_description():
    bank = json.loads(DEFAULT_BANK.read_text())
    return next(e["description"] for e in bank if e["name"] == "arguana")


def test_understand_reference_annotation_with_echo(tmp_path, capsys):
    desc = tmp_path / "desc.txt"
    desc.write_text(_arguana_description())
    out = tmp_path / "attrs.json"
    assert main(["understand", "--description", str(desc), "--out", str(out), "--client", "echo"]) == 0
    assert json.loads(out.read_text()) == parse_attributes(ARGUANA_ANNOTATION).to_json()


def test_understand_missing_file(tmp_path, capsys):
    missing = tmp_path / "nope.txt"
    assert main(["understand", "--description", str(missing), "--out", str(tmp_path / "a.json"), "--client", "echo"]) == 1
    assert str(missing) in capsys.readouterr().err


def test_understand_instruction_only(tmp_path, capsys):
    desc = tmp_path / "desc.txt"
    desc.write_text("Find recipes for a dish name.")
    code = main(["understand", "--description", str(desc), "--out", str(tmp_path / "a.json"), "--examples", "0", "--client", "mock", "--mock-dir", str(tmp_path)])
    assert code == 2
    expected = build_prompt("Find recipes for a dish name.").rendered
    assert expected == DEFAULT_INSTRUCTION + "\n\nPassage: Find recipes for a dish name.\nAttributes:"
    assert prompt_hash(expected) in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    assert main_exit(["no-such-command"]) == 1
    assert main_exit(["eval", "--run", "x"]) == 1


def main_exit(argv):
    with pytest.raises(SystemExit) as err:
        main(argv)
    return err.value.code


@pytest.fixture
def hand_eval(tmp_path):
    run = tmp_path / "a.run"
    run.write_text("q Q0 d1 1 3.0 a\nq Q0 d2 2 2.0 a\nq Q0 d3 3 1.0 a\n")
    qrels = tmp_path / "qrels.tsv"
    qrels.write_text("q\t0\td1\t1\nq\t0\td3\t1\n")
    return run, qrels


def test_eval_hand_run(hand_eval, capsys, tmp_path):
    run, qrels = hand_eval
    out = tmp_path / "report.tsv"
    assert main(["eval", "--run", str(run), "--qrels", str(qrels), "--metrics", "ndcg@3", "recall@2", "mrr", "--out", str(out)]) == 0
    assert capsys.readouterr().out == "metric\tvalue\nndcg@3\t0.9197\nrecall@2\t0.5000\nmrr\t1.0000\n"
    assert out.read_text().startswith("metric\tvalue")


def test_eval_compare_identical(hand_eval, capsys, tmp_path):
    run, qrels = hand_eval
    per_query = tmp_path / "pq.tsv"
    plot = tmp_path / "cmp.png"
    code = main(["eval", "--run", str(run), "--qrels", str(qrels), "--compare", str(run), "--metrics", "ndcg@3", "--per-query", str(per_query), "--plot", str(plot)])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "metric\trun\tcompare\tt\tp\tp_bonferroni"
    assert lines[1].split("\t")[4:] == ["1", "1"]
    assert per_query.read_text().splitlines()[-1].startswith("mean\t0.91")
    assert plot.stat().st_size > 0


def test_eval_malformed_qrels(hand_eval, capsys):
    run, qrels = hand_eval
    qrels.write_text("q\t0\td1\t1\nq\t0\td3\n")
    assert main(["eval", "--run", str(run), "--qrels", str(qrels)]) == 1
    assert ":2" in capsys.readouterr().err


@pytest.fixture(scope="module")
def toy_config(tmp_path_factory):
    return write_toy_workspace(tmp_path_factory.mktemp("toy"), "smoke")


def test_toy_config_shape(toy_config):
    cfg = load_config(toy_config)
    assert (cfg.build.N, cfg.build.k, cfg.k_prime) == (50, 5, 2)
    assert sum(1 for _ in open(cfg.collection)) == 200
    assert cfg.client_mode == "mock" and cfg.has_eval


def test_env_overrides_config(toy_config, monkeypatch):
    monkeypatch.setenv("DESCADAPT_BUILD_N", "7")
    monkeypatch.setenv("DESCADAPT_TRAIN_PEAK_LR", "0.5")
    cfg = load_config(toy_config)
    assert cfg.build.N == 7 and cfg.train.peak_lr == 0.5


def test_bad_config_values(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[paths]\ncollection = w.jsonl\ndescription = d.txt\noutput = out\n[build]\nk = zero\n")
    with pytest.raises(ConfigError, match="build.k"):
        load_config(path)
    path.write_text("[paths]\ncollection = w.jsonl\n")
    with pytest.raises(ConfigError, match="description"):
        load_config(path)


def _snapshot(out_dir):
    return {str(p.relative_to(out_dir)): p.read_bytes() for p in sorted(Path(out_dir).rglob("*")) if p.is_file()}


def test_pipeline_smoke_resume_and_determinism(toy_config, tmp_path, capsys, monkeypatch):
    start = time.perf_counter()
    assert main(["pipeline", str(toy_config)]) == 0
    elapsed = time.perf_counter() - start
    assert elapsed < 60
    out = load_config(toy_config).output
    for name in ("attributes.json", "seeds.jsonl", "corpus.jsonl", "provenance.jsonl", "queries.jsonl", "labels.jsonl", "student.bin", "adapted.bin", "train_log.tsv", "loss.png", "metrics.tsv", "metrics.png"):
        assert (out / name).stat().st_size > 0, name
    assert sum(1 for _ in open(out / "corpus.jsonl")) == 50
    assert sum(1 for _ in open(out / "queries.jsonl")) == 100
    first = _snapshot(out)
    capsys.readouterr()

    (out / "adapted.bin").unlink()
    assert main(["pipeline", str(toy_config), "--resume"]) == 0
    status = dict(line.split("\t") for line in capsys.readouterr().out.splitlines() if "\t" in line)
    assert [s for s, v in status.items() if v == "ran"] == ["train"]
    assert _snapshot(out) == first

    # a fresh output directory reproduces every file byte for byte
    monkeypatch.setenv("DESCADAPT_PATHS_OUTPUT", str(tmp_path / "again"))
    assert main(["pipeline", str(toy_config)]) == 0
    assert _snapshot(tmp_path / "again") == first


def test_pipeline_stage_failure_names_stage(toy_config, tmp_path, capsys, monkeypatch):
    empty = tmp_path / "empty_mocks"
    empty.mkdir()
    monkeypatch.setenv("DESCADAPT_CLIENT_MOCK_DIR", str(empty))
    monkeypatch.setenv("DESCADAPT_PATHS_OUTPUT", str(tmp_path / "out"))
    assert main(["pipeline", str(toy_config)]) == 2
    assert "stage understand failed" in capsys.readouterr().err


def test_pipeline_missing_input(toy_config, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DESCADAPT_PATHS_COLLECTION", str(tmp_path / "missing.jsonl"))
    assert main(["pipeline", str(toy_config)]) == 1
    assert "missing.jsonl" in capsys.readouterr().err


def test_search_bm25(toy_config, tmp_path, capsys):
    ws = Path(toy_config).parent
    run = tmp_path / "bm25.run"
    assert main(["search", "--corpus", str(ws / "eval/docs.jsonl"), "--queries", str(ws / "eval/queries.jsonl"), "--out", str(run), "--top-k", "5"]) == 0
    lines = run.read_text().splitlines()
    assert len(lines) <= 20 * 5
    assert lines[0].split()[1] == "Q0" and lines[0].split()[3] == "1"


def test_reconstruct_small(tmp_path, capsys):
    code = main(["reconstruct", "--out-dir", str(tmp_path), "--N", "50,100", "--k", "10", "--num-seeds", "1", "--repeats", "1"])
    assert code == 0
    rows = (tmp_path / "reconstruction.tsv").read_text().splitlines()
    assert rows[0] == "param\tvalue\tmean_accuracy\tstd" and len(rows) == 5
    assert (tmp_path / "reconstruction.png").stat().st_size > 0
