import json

import pytest

from approxrv import cli
from approxrv.tableio import import_table


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestFitCommand:
    def test_dyadic_fit_writes_16_entry_table(self, tmp_path, capsys):
        out = tmp_path / "lin.arvt"
        code, stdout, _ = run(
            capsys, "fit", "--dist", "gaussian", "--kind", "dyadic",
            "--degree", "1", "--intervals", "15", "--out", str(out),
        )
        assert code == 0
        table = import_table(out)
        assert table.coeffs.shape == (2, 16)
        assert "L2 error" in stdout

    def test_constant_fit_1024_values(self, tmp_path, capsys):
        out = tmp_path / "c.arvt"
        code, stdout, _ = run(
            capsys, "fit", "--dist", "gaussian", "--kind", "constant",
            "--q", "10", "--construction", "l1", "--out", str(out),
        )
        assert code == 0
        assert import_table(out).values.shape == (1024,)

    def test_ncchi2_fit_paired_halves(self, tmp_path, capsys):
        out = tmp_path / "n.arvt"
        code, stdout, _ = run(
            capsys, "fit", "--dist", "ncchi2", "--nu", "1", "--knots", "6",
            "--intervals", "8", "--degree", "1", "--out", str(out),
        )
        assert code == 0
        table = import_table(out)
        assert len(table.lower) == len(table.upper) == 6
        assert table.n_intervals == 8

    def test_bad_config_exits_2(self, tmp_path, capsys):
        code, _, err = run(
            capsys, "fit", "--dist", "gaussian", "--kind", "constant",
            "--q", "99", "--out", str(tmp_path / "x.arvt"),
        )
        assert code == 2
        assert "error" in err


class TestSampleCommand:
    def test_seeded_sampling_is_reproducible(self, tmp_path, capsys):
        table = tmp_path / "t.arvt"
        run(capsys, "fit", "--dist", "gaussian", "--kind", "dyadic", "--out", str(table))
        code, out1, _ = run(capsys, "sample", "--table", str(table), "--n", "6", "--seed", "9")
        code2, out2, _ = run(capsys, "sample", "--table", str(table), "--n", "6", "--seed", "9")
        assert code == code2 == 0
        assert out1 == out2
        assert len(out1.strip().splitlines()) == 6

    def test_coupled_output(self, tmp_path, capsys):
        table = tmp_path / "t.arvt"
        run(capsys, "fit", "--dist", "gaussian", "--kind", "dyadic", "--out", str(table))
        code, out, _ = run(capsys, "sample", "--table", str(table), "--n", "3",
                           "--seed", "1", "--coupled")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "exact,approx"
        e, a = map(float, lines[1].split(","))
        assert abs(e - a) < 0.1

    def test_missing_table_exits_4(self, capsys, tmp_path):
        code, _, err = run(capsys, "sample", "--table", str(tmp_path / "nope.arvt"), "--n", "2")
        assert code == 4


class TestErrorCommand:
    def test_error_rows(self, tmp_path, capsys):
        table = tmp_path / "t.arvt"
        run(capsys, "fit", "--dist", "gaussian", "--kind", "dyadic", "--out", str(table))
        code, out, _ = run(capsys, "error", "--table", str(table), "--p", "2", "4")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("p,error")
        assert len(lines) == 3


class TestMlmcCommand:
    def test_experiment_run(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "# tiny smoke experiment\n"
            "process = gbm\n"
            "scheme = euler_maruyama\n"
            "mu = 0.05\nsigma = 0.2\nx0 = 1.0\nt_end = 1.0\n"
            "levels = 0:2\n"
            "sources = exact, linear:15\n"
            "epsilon = 0.05\n"
            "pilot = 500\n"
            "seed = 3\n"
        )
        out_dir = tmp_path / "results"
        code, stdout, _ = run(capsys, "mlmc", "--config", str(cfg), "--out-dir", str(out_dir))
        assert code == 0
        levels = (out_dir / "levels.csv").read_text().splitlines()
        assert levels[0] == "level,source,estimator,statistic,value"
        assert any("four_way" in line for line in levels)
        assert (out_dir / "allocation.csv").exists()
        summary = json.loads((out_dir / "experiment.json").read_text())
        assert "linear:15" in summary["sources"]
        assert summary["sources"]["linear:15"]["nested_cost"] > 0

    def test_malformed_config_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("process gbm\n")
        code, _, err = run(capsys, "mlmc", "--config", str(cfg))
        assert code == 2

    def test_missing_config_exits_2(self, tmp_path, capsys):
        code, _, _ = run(capsys, "mlmc", "--config", str(tmp_path / "none.cfg"))
        assert code == 2


class TestBenchCommand:
    def test_small_bench(self, tmp_path, capsys):
        code, out, _ = run(capsys, "bench", "--batch", "20000", "--reps", "3",
                           "--out", str(tmp_path / "bench.json"))
        assert code == 0
        assert "read_write" in out
        report = json.loads((tmp_path / "bench.json").read_text())
        assert report["machine"]["kernel_backend"] in ("compiled", "python")
        names = {r["name"] for r in report["rows"]}
        assert {"read_write", "gaussian_exact", "linear_k15"} <= names
        # Reading plus writing bounds every sampler from below (allow a
        # little headroom for timing noise on the baseline itself).
        rows = report["rows"]
        base = min(r["ns_per_sample"] for r in rows
                   if r["name"] == "read_write" and r["batch_size"] == 20000)
        for r in rows:
            if r["batch_size"] == 20000 and r["name"] not in ("read_write",):
                assert r["ns_per_sample"] >= 0.75 * base


class TestReproduceCommand:
    def test_fig2b(self, tmp_path, capsys):
        code, out, _ = run(capsys, "reproduce", "fig2b", "--out-dir", str(tmp_path))
        assert code == 0
        assert (tmp_path / "fig2b.csv").exists()
        manifest = json.loads((tmp_path / "fig2b_manifest.json").read_text())
        assert manifest["verdicts"]["linear_k15_plateau"]["pass"]
        assert "machine" in manifest

    def test_unknown_id_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["reproduce", "nonsense"])
        assert exc.value.code == 2

    def test_threads_flag_validated(self, capsys):
        code, _, _ = run(capsys, "--threads", "0", "reproduce", "fig2b")
        assert code == 2
