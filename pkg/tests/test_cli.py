import json

import pytest

from casehash import two_class_fixture, write_sparse_text
from casehash.cli import main

FAST_CONFIG = """
# small everything so tests stay quick
k_w = 8
k_v = 8
r = 8
l = 2
hidden = 8
epochs = 2
batch_size = 32
"""


@pytest.fixture
def data_file(tmp_path):
    cases = two_class_fixture(n=80, seed=6)
    p = tmp_path / "cases.txt"
    write_sparse_text(cases, p)
    return str(p)


@pytest.fixture
def config_file(tmp_path):
    p = tmp_path / "fast.cfg"
    p.write_text(FAST_CONFIG)
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestTrainCommand:
    def test_writes_checkpoint_and_logs(self, tmp_path, data_file, config_file, capsys):
        out = str(tmp_path / "m.chn")
        code, stdout, stderr = run(
            capsys, "train", "--data", data_file, "--config", config_file,
            "--out", out, "--seed", "3")
        assert code == 0
        summary = json.loads(stdout)
        assert summary["checkpoint"] == out
        assert summary["epochs_run"] == 2
        assert (tmp_path / "m.chn").exists()
        assert (tmp_path / "m.chn.log.csv").read_text().startswith("epoch,")
        assert len((tmp_path / "m.chn.log.jsonl").read_text().splitlines()) == 2

    def test_config_echoed_to_stderr(self, tmp_path, data_file, config_file, capsys):
        code, _, stderr = run(
            capsys, "train", "--data", data_file, "--config", config_file,
            "--out", str(tmp_path / "m.chn"))
        assert code == 0
        assert "# r=8" in stderr
        assert "# epochs=2" in stderr

    def test_flag_overrides_config(self, tmp_path, data_file, config_file, capsys):
        code, _, stderr = run(
            capsys, "train", "--data", data_file, "--config", config_file,
            "--bits", "12", "--out", str(tmp_path / "m.chn"))
        assert code == 0
        assert "# r=12" in stderr


class TestEvalCommand:
    def test_with_checkpoint(self, tmp_path, data_file, config_file, capsys):
        model = str(tmp_path / "m.chn")
        run(capsys, "train", "--data", data_file, "--config", config_file,
            "--out", model)
        code, stdout, _ = run(
            capsys, "eval", "--data", data_file, "--config", config_file,
            "--model", model, "--top-n", "5")
        assert code == 0
        report = json.loads(stdout)
        assert len(report["folds"]) == 1
        assert 0.0 <= report["mean"]["accuracy"] <= 1.0

    def test_kfold_without_checkpoint(self, data_file, config_file, capsys):
        code, stdout, _ = run(
            capsys, "eval", "--data", data_file, "--config", config_file,
            "--folds", "2")
        assert code == 0
        report = json.loads(stdout)
        assert len(report["folds"]) == 2

    def test_lsh_coder(self, data_file, capsys):
        code, stdout, _ = run(
            capsys, "eval", "--data", data_file, "--hash", "lsh", "--bits", "8")
        assert code == 0
        assert json.loads(stdout)["mean"]["accuracy"] >= 0.0


class TestStreamCommand:
    def test_jsonl_per_case(self, data_file, config_file, capsys):
        code, stdout, stderr = run(
            capsys, "stream", "--data", data_file, "--config", config_file,
            "--train-frac", "0.5", "--top-n", "3")
        assert code == 0
        lines = stdout.strip().splitlines()
        assert len(lines) == 40
        first = json.loads(lines[0])
        assert {"id", "predicted", "true", "correct", "retained"} <= set(first)
        summary = json.loads(stderr.strip().splitlines()[-1])
        assert summary["streamed"] == 40

    def test_no_update_freezes(self, data_file, capsys):
        code, stdout, stderr = run(
            capsys, "stream", "--data", data_file, "--hash", "lsh", "--bits", "8",
            "--train-frac", "0.5", "--no-update")
        assert code == 0
        summary = json.loads(stderr.strip().splitlines()[-1])
        assert summary["final_cases"] == 40  # nothing retained
        assert all(not json.loads(l)["retained"] for l in stdout.strip().splitlines())


class TestBenchCommand:
    def test_reports_ratio(self, data_file, capsys):
        code, stdout, _ = run(
            capsys, "bench", "--data", data_file, "--hash", "lsh", "--bits", "8",
            "--queries", "10", "--top-n", "3")
        assert code == 0
        res = json.loads(stdout)
        assert res["n_queries"] == 10
        assert "ratio_mean" in res


class TestIndexAndQuery:
    def test_round_trip(self, tmp_path, data_file, capsys):
        idx_path = str(tmp_path / "c.idx")
        code, stdout, _ = run(
            capsys, "index", "--data", data_file, "--hash", "lsh", "--bits", "8",
            "--out", idx_path)
        assert code == 0
        assert json.loads(stdout)["n_cases"] == 80

        queries = two_class_fixture(n=5, seed=7, id_start=500)
        qp = tmp_path / "q.txt"
        write_sparse_text(queries, qp)
        code, stdout, _ = run(
            capsys, "query", "--index", idx_path, "--data", str(qp),
            "--hash", "lsh", "--bits", "8", "--top-n", "4")
        assert code == 0
        lines = [json.loads(l) for l in stdout.strip().splitlines()]
        assert len(lines) == 5
        assert all(len(l["neighbors"]) <= 4 for l in lines)

    def test_index_requires_coder(self, data_file, capsys):
        code, _, err = run(capsys, "index", "--data", data_file)
        assert code == 2
        assert "model" in err


class TestCsvInput:
    def test_csv_with_schema(self, tmp_path, capsys):
        csv = tmp_path / "d.csv"
        rows = ["num,cat,y"]
        for i in range(30):
            rows.append(f"{i},{'ab'[i % 2]},{i % 2}")
        csv.write_text("\n".join(rows) + "\n")
        schema = tmp_path / "d.schema"
        schema.write_text("num=numeric\ncat=categorical\ny=label\n")
        code, stdout, _ = run(
            capsys, "eval", "--data", str(csv), "--schema", str(schema),
            "--hash", "lsh", "--bits", "4", "--top-n", "3")
        assert code == 0
        assert "mean" in json.loads(stdout)


class TestExitCodes:
    def test_unknown_config_key(self, tmp_path, data_file, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("bogus_key=1\n")
        code, _, err = run(capsys, "train", "--data", data_file,
                           "--config", str(cfg))
        assert code == 2
        assert "bogus_key" in err

    def test_bad_config_value(self, tmp_path, data_file, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("r=banana\n")
        code, _, _ = run(capsys, "train", "--data", data_file,
                         "--config", str(cfg))
        assert code == 2

    def test_missing_data_file(self, capsys):
        code, _, _ = run(capsys, "train", "--data", "/nonexistent/x.txt")
        assert code == 3

    def test_malformed_data(self, tmp_path, capsys):
        p = tmp_path / "bad.txt"
        p.write_text("0 not-a-pair\n")
        code, _, _ = run(capsys, "train", "--data", str(p))
        assert code == 3

    def test_missing_data_flag(self, capsys):
        code, _, err = run(capsys, "train")
        assert code == 2
        assert "--data" in err

    def test_missing_config_file(self, data_file, capsys):
        code, _, _ = run(capsys, "train", "--data", data_file,
                         "--config", "/nonexistent/c.cfg")
        assert code == 2
