import csv
import io
import json
import math

import pytest

from itergauss.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestTheory:
    def test_values(self, capsys):
        code, out, _ = run(capsys, "theory", "--dim", "10,128")
        assert code == 0
        vals = {(r["dim"], r["quantity"]): float(r["value"]) for r in rows_of(out)}
        assert vals[("10", "gaussianization-required-layers")] == pytest.approx(1 / -math.log(5 / 6))
        assert vals[("128", "coupling-required-layers")] == pytest.approx(1.4427, abs=1e-4)

    def test_json(self, capsys):
        code, out, _ = run(capsys, "theory", "--dim", "4", "--format", "json")
        assert code == 0 and all(r["dim"] == 4 for r in json.loads(out))

    @pytest.mark.parametrize("argv", [["--dim", "0"], ["--ratio", "1.5"], ["--loss", "-1"]])
    def test_bad_input_is_usage_error(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            main(["theory", *argv])
        assert exc.value.code == 2

    def test_missing_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestConfig:
    def test_file_then_flag_precedence(self, capsys, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# defaults\ndim = 6\nformat = json\n")
        _, out, _ = run(capsys, "theory", "--config", str(cfg))
        assert {r["dim"] for r in json.loads(out)} == {6}
        _, out, _ = run(capsys, "theory", "--config", str(cfg), "--dim", "9")
        assert {r["dim"] for r in json.loads(out)} == {9}

    def test_unknown_key(self, capsys, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("dims = 6\n")
        with pytest.raises(SystemExit) as exc:
            main(["theory", "--config", str(cfg)])
        assert exc.value.code == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_missing_file(self, capsys, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["theory", "--config", str(tmp_path / "none.cfg")])
        assert exc.value.code == 2


GAUSS = ["simulate-gaussian", "--dims", "4,6", "--cases", "1,5", "--rotations", "2",
         "--layers-factor", "3", "--n-alpha", "2", "--n-random", "2"]


class TestSimulate:
    def test_byte_identical_across_jobs(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main([*GAUSS, "--jobs", "1", "--out", str(a)]) == 0
        assert main([*GAUSS, "--jobs", "2", "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        rows = rows_of(a.read_text())
        assert {r["experiment"] for r in rows} == {"gaussian"}

    def test_summary_only(self, capsys):
        _, out, _ = run(capsys, *GAUSS, "--jobs", "1", "--summary-only")
        assert {r["layer"] for r in rows_of(out)} == {"-1"}

    def test_plot_deterministic(self, capsys, tmp_path):
        data = tmp_path / "g.csv"
        main([*GAUSS, "--jobs", "1", "--out", str(data)])
        s1, s2 = tmp_path / "1.svg", tmp_path / "2.svg"
        assert main(["plot", "--input", str(data), "--out", str(s1)]) == 0
        assert main(["plot", "--input", str(data), "--out", str(s2)]) == 0
        assert s1.read_bytes() == s2.read_bytes()
        assert "<svg" in s1.read_text()

    def test_bad_dims(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate-gaussian", "--dims", "1"])
        assert exc.value.code == 2


def test_train_toy_small(capsys, tmp_path):
    code, out, _ = run(capsys, "train-toy", "--dims", "4", "--cases", "2", "--seeds", "0",
                       "--core", "2", "--samples", "2000", "--layers", "2", "--bins", "16",
                       "--eval-samples", "1000", "--jobs", "1", "--summary-only",
                       "--model-dir", str(tmp_path / "m"))
    assert code == 0
    (row,) = rows_of(out)
    assert row["experiment"] == "toy" and row["dim"] == "4"
    assert len(list((tmp_path / "m").iterdir())) == 1


def test_train_toy_holdout_conflict(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train-toy", "--holdout", "0.2", "--eval-samples", "100"])
    assert exc.value.code == 2


def test_train_toy_failure_exit_code(capsys):
    code, _, err = run(capsys, "train-toy", "--dims", "4", "--cases", "1", "--seeds", "0",
                       "--core", "2", "--samples", "5", "--layers", "1", "--eval-samples", "0",
                       "--jobs", "1")
    assert code == 1 and "FAILED" in err


def test_spurious_small(capsys, tmp_path):
    svg = tmp_path / "s.svg"
    code, out, _ = run(capsys, "spurious", "--samples", "1000", "--dim", "32", "--steps", "10",
                       "--svg", str(svg))
    assert code == 0
    doc = json.loads(out)
    assert doc["w2_final"] < doc["w2_initial"]
    assert doc["w2_final_mean_square"] == pytest.approx(doc["w2_final"] ** 2)
    assert svg.exists()
