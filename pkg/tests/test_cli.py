import csv
import json

import numpy as np
import pytest

from robustpanel.cli import main
from robustpanel.panel import write_panel_csv
from robustpanel.simulation import SimSpec, contaminate, generate_panel
from robustpanel.wle import WleConfig


@pytest.fixture
def clean_csv(tmp_path):
    spec = SimSpec(dgp="re", n_individuals=30, n_periods=4, seed=42)
    panel = generate_panel(spec, 0)
    path = tmp_path / "panel.csv"
    write_panel_csv(panel, path)
    return path, panel


@pytest.fixture
def contaminated_csv(tmp_path):
    spec = SimSpec(dgp="re", n_individuals=60, n_periods=4, seed=43)
    panel = generate_panel(spec, 0)
    rng = np.random.default_rng(44)
    dirty, _ = contaminate(
        panel, "random_leverage", 12, rng, beta_true=(2.4, -1.2)
    )
    path = tmp_path / "dirty.csv"
    write_panel_csv(dirty, path)
    return path


class TestFitCommand:
    def test_identity_raf_matches_classical(self, clean_csv, capsys):
        path, _ = clean_csv
        code = main([
            "fit", "--data", str(path), "--estimators", "pols,wpols",
            "--raf", "identity", "--format", "json",
        ])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        pols = {r["term"]: r["estimate"] for r in rows if r["estimator"] == "pols"}
        wpols = {r["term"]: r["estimate"] for r in rows if r["estimator"] == "wpols"}
        for term in pols:
            assert abs(pols[term] - wpols[term]) < 1e-10

    def test_round_trip_matches_library_exactly(self, clean_csv, capsys):
        path, panel = clean_csv
        code = main(["fit", "--data", str(path), "--estimators", "wfe",
                     "--seed", "3", "--format", "json"])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        from robustpanel.robust import fit_wfe

        direct = fit_wfe(panel, WleConfig(seed=3))
        by_term = {r["term"]: r for r in rows}
        for term, est in zip(direct.term_names(), direct.beta):
            assert by_term[term]["estimate"] == est  # bit-for-bit via repr floats

    def test_duplicate_cell_exits_two(self, tmp_path, capsys):
        path = tmp_path / "dup.csv"
        path.write_text(
            "id,time,y,x1\na,1,1.0,1.0\na,1,2.0,2.0\nb,1,1.0,1.0\nb,2,1.0,1.0\n"
        )
        code = main(["fit", "--data", str(path)])
        assert code == 2
        err = capsys.readouterr().err
        assert "'a'" in err and "1" in err

    def test_unknown_estimator_exits_two(self, clean_csv):
        path, _ = clean_csv
        assert main(["fit", "--data", str(path), "--estimators", "lasso"]) == 2

    def test_estimation_error_exits_three(self, tmp_path, capsys):
        # constant regressor: collinear with the intercept
        path = tmp_path / "flat.csv"
        rows = ["id,time,y,x1"]
        rows += [f"{i},{t},{i + t}.0,1.0" for i in range(3) for t in range(2)]
        path.write_text("\n".join(rows) + "\n")
        code = main(["fit", "--data", str(path), "--estimators", "pols"])
        assert code == 3

    def test_contaminated_fixture_wfe_recovers(self, contaminated_csv, capsys):
        code = main([
            "fit", "--data", str(contaminated_csv), "--estimators", "fe,wfe",
            "--seed", "5", "--format", "json",
        ])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        wfe = {r["term"]: r for r in rows if r["estimator"] == "wfe"}
        fe = {r["term"]: r for r in rows if r["estimator"] == "fe"}
        truth = {"x1": 2.4, "x2": -1.2}
        for term, true_val in truth.items():
            assert abs(wfe[term]["estimate"] - true_val) <= 3 * wfe[term]["std_error"]
        gaps_fe = [abs(fe[t]["estimate"] - v) / fe[t]["std_error"] for t, v in truth.items()]
        assert max(gaps_fe) > 3  # the unweighted fit is pulled off the truth

    def test_text_report_contains_weight_summary(self, clean_csv, capsys):
        path, _ = clean_csv
        assert main(["fit", "--data", str(path), "--estimators", "wpols"]) == 0
        out = capsys.readouterr().out
        assert "weights: min" in out
        assert "== wpols ==" in out

    def test_report_uses_actual_column_names(self, tmp_path, capsys):
        path = tmp_path / "data.csv"
        path.write_text(
            "firm,year,sales,cost\n1,1,1.0,2.0\n1,2,3.0,4.0\n"
            "2,1,5.0,1.0\n2,2,9.0,5.0\n3,1,0.0,0.5\n3,2,1.0,1.5\n"
        )
        code = main([
            "fit", "--data", str(path), "--id", "firm", "--time", "year",
            "--y", "sales", "--estimators", "pols", "--format", "json",
        ])
        assert code == 0
        rows = json.loads(capsys.readouterr().out)
        assert {r["term"] for r in rows} == {"const", "cost"}

    def test_dump_weights_rows(self, clean_csv, tmp_path):
        path, panel = clean_csv
        wpath = tmp_path / "w.csv"
        code = main([
            "fit", "--data", str(path), "--estimators", "wpols,wbe",
            "--dump-weights", str(wpath), "--format", "csv", "--out",
            str(tmp_path / "report.csv"),
        ])
        assert code == 0
        with wpath.open() as fh:
            rows = list(csv.DictReader(fh))
        n_rows = panel.n_rows
        assert sum(r["estimator"] == "wpols" for r in rows) == n_rows
        assert sum(r["estimator"] == "wbe" for r in rows) == panel.n_individuals
        for r in rows:
            assert 0.0 <= float(r["weight"]) <= 1.0

    def test_output_file_written(self, clean_csv, tmp_path):
        path, _ = clean_csv
        out = tmp_path / "report.json"
        assert main(["fit", "--data", str(path), "--estimators", "pols",
                     "--format", "json", "--out", str(out)]) == 0
        assert json.loads(out.read_text())


class TestSimulateCommand:
    def test_single_cell_one_row_per_estimator(self, tmp_path, capsys):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text(
            "[tiny]\nn = 12\nt = 2\nreplications = 1\nseed = 2\nestimators = pols,fe\n"
        )
        out = tmp_path / "res.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 3  # header + 2 estimators

    def test_malformed_key_exits_two(self, tmp_path, capsys):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("[tiny]\nn = 12\nt = 2\nwat = 1\n")
        code = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o.csv")])
        assert code == 2
        assert "wat" in capsys.readouterr().err

    def test_missing_config_exits_two(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path / "o.csv")]) == 2

    def test_jobs_flag_deterministic(self, tmp_path, capsys):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text(
            "[cell]\nn = 15\nt = 2\nreplications = 4\nseed = 3\n"
            "estimators = pols,wpols\nbootstrap = 5\n"
        )
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["simulate", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(out2), "--jobs", "2"]) == 0
        assert out1.read_text() == out2.read_text()


class TestDeriveBandwidthCommand:
    def test_round_trip(self, capsys):
        assert main(["derive-bandwidth", "--target-weight", "0.2",
                     "--ref-distance", "3.0"]) == 0
        out = capsys.readouterr().out
        c = float(out.splitlines()[0].split("=")[1])
        from robustpanel.wle import single_outlier_weight

        assert single_outlier_weight(c, 3.0) == pytest.approx(0.2, abs=1e-6)
        assert "3 sigma: 0.200" in out

    def test_zero_target_exits_two(self, capsys):
        assert main(["derive-bandwidth", "--target-weight", "0",
                     "--ref-distance", "3.0"]) == 2

    def test_near_unit_target_reachable(self, capsys):
        assert main(["derive-bandwidth", "--target-weight", "0.999999",
                     "--ref-distance", "3.0"]) == 0
        out = capsys.readouterr().out
        assert float(out.splitlines()[0].split("=")[1]) > 1.0


def test_console_entry_point_runs():
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "robustpanel.cli", "fit", "--data", "/nonexistent.csv"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
