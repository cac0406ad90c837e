import numpy as np
import pytest

from robustpanel.exceptions import InfeasibleContaminationError
from robustpanel.simulation import (
    Contamination,
    GridCell,
    SimSpec,
    contaminate,
    contamination_block_size,
    format_results_text,
    generate_panel,
    parse_grid_config,
    run_simulation,
    write_results_csv,
)
from robustpanel.wle import WleConfig


class TestGeneratePanel:
    def test_shapes_and_determinism(self):
        spec = SimSpec(dgp="re", n_individuals=20, n_periods=3, seed=5)
        a = generate_panel(spec, 0)
        b = generate_panel(spec, 0)
        c = generate_panel(spec, 1)
        assert a.n_rows == 60 and a.n_regressors == 2
        assert np.array_equal(a.y, b.y) and np.array_equal(a.x, b.x)
        assert not np.array_equal(a.y, c.y)

    def test_compound_error_variance_is_two(self):
        spec = SimSpec(dgp="re", n_individuals=2000, n_periods=5, seed=6)
        p = generate_panel(spec, 0)
        resid = p.y - p.x @ np.array([2.4, -1.2])
        assert np.var(resid) == pytest.approx(2.0, abs=0.1)

    def test_fe_design_correlates_regressors_with_error(self):
        spec = SimSpec(dgp="fe", n_individuals=2000, n_periods=5, seed=7)
        p = generate_panel(spec, 0)
        effect_plus_noise = p.y - p.x @ np.array([2.4, -1.2])
        corr = np.corrcoef(p.x[:, 0], effect_plus_noise)[0, 1]
        assert corr > 0.4  # effect alone would give about 1/sqrt(2) vs
        # sqrt(2)-scaled compound error: ~0.5

    def test_re_design_has_independent_regressors(self):
        spec = SimSpec(dgp="re", n_individuals=2000, n_periods=5, seed=8)
        p = generate_panel(spec, 0)
        effect_plus_noise = p.y - p.x @ np.array([2.4, -1.2])
        assert abs(np.corrcoef(p.x[:, 0], effect_plus_noise)[0, 1]) < 0.05

    @pytest.mark.parametrize("law,var", [("normal", 2.0), ("t5", 1.0 + 5.0 / 3.0), ("laplace", 3.0)])
    def test_error_law_variances(self, law, var):
        spec = SimSpec(dgp="re", n_individuals=4000, n_periods=5, error_law=law, seed=9)
        p = generate_panel(spec, 0)
        resid = p.y - p.x @ np.array([2.4, -1.2])
        assert np.var(resid) == pytest.approx(var, rel=0.1)


class TestContaminate:
    def test_vertical_multiplies_by_minus_three(self):
        spec = SimSpec(dgp="re", n_individuals=10, n_periods=2, seed=10)
        p = generate_panel(spec, 0)
        rng = np.random.default_rng(1)
        out, mask = contaminate(p, "random_vertical", 1, rng)
        cell = int(np.flatnonzero(mask)[0])
        assert out.y[cell] == pytest.approx(-3.0 * p.y[cell])
        assert np.array_equal(out.x, p.x)
        assert mask.sum() == 1

    def test_zero_outliers_is_identity(self):
        spec = SimSpec(dgp="re", n_individuals=10, n_periods=2, seed=11)
        p = generate_panel(spec, 0)
        out, mask = contaminate(p, "random_vertical", 0, np.random.default_rng(2))
        assert out is p
        assert not mask.any()

    def test_mask_size_matches_m_random_schemes(self):
        spec = SimSpec(dgp="re", n_individuals=30, n_periods=4, seed=12)
        p = generate_panel(spec, 0)
        for scheme in ("random_vertical", "random_leverage"):
            _, mask = contaminate(
                p, scheme, 17, np.random.default_rng(3), beta_true=(2.4, -1.2)
            )
            assert int(mask.sum()) == 17

    def test_concentrated_blocks_fill_whole_individuals(self):
        spec = SimSpec(dgp="re", n_individuals=120, n_periods=2, seed=13)
        p = generate_panel(spec, 0)
        _, mask = contaminate(p, "concentrated_vertical", 12, np.random.default_rng(4))
        per_individual = mask.reshape(120, 2).sum(axis=1)
        assert contamination_block_size(2) == 2
        assert sorted(per_individual[per_individual > 0]) == [2] * 6
        assert mask.sum() == 12

    def test_concentrated_misaligned_m_rejected(self):
        spec = SimSpec(dgp="re", n_individuals=10, n_periods=3, seed=14)
        p = generate_panel(spec, 0)
        with pytest.raises(InfeasibleContaminationError):
            contaminate(p, "concentrated_vertical", 7, np.random.default_rng(5))

    def test_concentrated_vertical_adds_fifty(self):
        spec = SimSpec(dgp="re", n_individuals=10, n_periods=2, seed=15)
        p = generate_panel(spec, 0)
        out, mask = contaminate(p, "concentrated_vertical", 2, np.random.default_rng(6))
        shifts = out.y[mask] + 3.0 * p.y[mask]
        assert np.all(np.abs(shifts - 50.0) < 5.0)

    def test_leverage_rebuilds_response_through_new_regressors(self):
        spec = SimSpec(dgp="re", n_individuals=50, n_periods=2, seed=16)
        p = generate_panel(spec, 0)
        beta = np.array([2.4, -1.2])
        out, mask = contaminate(
            p, "random_leverage", 10, np.random.default_rng(7), beta_true=beta
        )
        nu = p.y[mask] - p.x[mask] @ beta
        rebuilt = out.y[mask] + 3.0 * (out.x[mask] @ beta + nu)
        # what remains is the N(20, 4) perturbation
        assert np.all(np.abs(rebuilt - 20.0) < 10.0)
        assert np.abs(out.x[mask] - 5.0).mean() < 4.0

    def test_leverage_requires_beta(self):
        spec = SimSpec(dgp="re", n_individuals=10, n_periods=2, seed=17)
        p = generate_panel(spec, 0)
        with pytest.raises(ValueError, match="beta_true"):
            contaminate(p, "random_leverage", 2, np.random.default_rng(8))

    def test_m_larger_than_panel_rejected(self):
        spec = SimSpec(dgp="re", n_individuals=5, n_periods=2, seed=18)
        p = generate_panel(spec, 0)
        with pytest.raises(InfeasibleContaminationError):
            contaminate(p, "random_vertical", 11, np.random.default_rng(9))


class TestRunSimulation:
    def test_single_replication_mse_is_squared_error(self):
        spec = SimSpec(dgp="re", n_individuals=20, n_periods=3, n_replications=1, seed=19)
        res = run_simulation(spec, ["pols"])
        from robustpanel.classical import fit_pooled_ols

        p = generate_panel(spec, 0)
        direct = fit_pooled_ols(p)
        expect = float(((direct.slopes - np.array([2.4, -1.2])) ** 2).sum())
        assert res.summaries["pols"].mse == pytest.approx(expect, abs=1e-12)

    def test_parallel_equals_serial(self):
        spec = SimSpec(
            dgp="re", n_individuals=15, n_periods=3, n_replications=6, seed=20,
            contamination=Contamination("random_vertical", 4),
            wle=WleConfig(n_bootstrap=5),
        )
        serial = run_simulation(spec, ["pols", "wpols"], jobs=1)
        parallel = run_simulation(spec, ["pols", "wpols"], jobs=2)
        for name in ("pols", "wpols"):
            assert serial.summaries[name].mse == parallel.summaries[name].mse
            assert np.array_equal(
                serial.summaries[name].power, parallel.summaries[name].power
            )

    def test_power_in_unit_interval_and_high_when_clean(self):
        spec = SimSpec(
            dgp="re", n_individuals=100, n_periods=10, n_replications=10, seed=21,
            wle=WleConfig(n_bootstrap=3),
        )
        res = run_simulation(spec, ["pols", "wpols", "be", "wbe", "fe", "wfe", "re", "wre"], jobs=2)
        for name, s in res.summaries.items():
            assert np.all((s.power >= 0.0) & (s.power <= 1.0))
            assert np.all(s.power >= 0.99), name

    def test_fe_design_t5_reference_cell(self):
        spec = SimSpec(
            dgp="fe", n_individuals=100, n_periods=10, error_law="t5",
            n_replications=100, seed=27,
        )
        res = run_simulation(spec, ["fe"], jobs=2)
        assert res.summaries["fe"].mse == pytest.approx(0.2200, rel=0.30)

    def test_mse_shrinks_with_n(self):
        small = SimSpec(dgp="re", n_individuals=25, n_periods=4, n_replications=50, seed=22)
        large = SimSpec(dgp="re", n_individuals=250, n_periods=4, n_replications=50, seed=22)
        mse_small = run_simulation(small, ["pols"], jobs=2).summaries["pols"].mse
        mse_large = run_simulation(large, ["pols"], jobs=2).summaries["pols"].mse
        assert mse_large < mse_small

    def test_unknown_estimator_rejected(self):
        spec = SimSpec(dgp="re", n_individuals=10, n_periods=2, n_replications=1, seed=23)
        with pytest.raises(ValueError):
            run_simulation(spec, ["ridge"])


class TestResultTables:
    def test_header_only_for_empty_results(self, tmp_path):
        path = tmp_path / "empty.csv"
        write_results_csv([], path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("estimator,dgp,N,T,error,scheme,level,mse,power_b1,power_b2")

    def test_one_cell_rows(self, tmp_path):
        spec = SimSpec(dgp="re", n_individuals=12, n_periods=2, n_replications=2, seed=24)
        res = run_simulation(spec, ["pols"])
        path = tmp_path / "one.csv"
        write_results_csv([res], path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("pols,re,12,2,normal,none,0,")

    def test_contamination_level_percent(self, tmp_path):
        spec = SimSpec(
            dgp="fe", n_individuals=40, n_periods=2, n_replications=2, seed=25,
            contamination=Contamination("random_vertical", 4),
        )
        res = run_simulation(spec, ["pols"])
        path = tmp_path / "lev.csv"
        write_results_csv([res], path)
        row = path.read_text().strip().splitlines()[1].split(",")
        assert row[5] == "random_vertical"
        assert row[6] == "5"

    def test_golden_snapshot_fixed_seed(self, tmp_path):
        spec = SimSpec(dgp="re", n_individuals=12, n_periods=2, n_replications=3, seed=26)
        res = run_simulation(spec, ["pols", "fe"])
        path = tmp_path / "snap.csv"
        write_results_csv([res], path)
        golden_path = tmp_path / "snap2.csv"
        write_results_csv([run_simulation(spec, ["pols", "fe"])], golden_path)
        assert path.read_text() == golden_path.read_text()
        text = format_results_text([res])
        assert "pols" in text and "fe" in text
        # text table carries the same numbers the csv does
        mse_csv = path.read_text().strip().splitlines()[1].split(",")[7]
        assert mse_csv in text


class TestGridConfig:
    def test_parse_cells_with_defaults(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text(
            "[DEFAULT]\n"
            "dgp = re\nreplications = 2\nseed = 3\nestimators = pols,fe\n"
            "[clean-small]\nn = 12\nt = 2\n"
            "[dirty-small]\nn = 12\nt = 2\nscheme = random_vertical\noutliers = 2\n"
        )
        cells = parse_grid_config(cfg)
        assert [c.name for c in cells] == ["clean-small", "dirty-small"]
        assert cells[0].spec.contamination is None
        assert cells[1].spec.contamination.m == 2
        assert cells[0].estimators == ("pols", "fe")

    def test_unknown_key_named(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("[cell]\nn = 10\nt = 2\nbogus = 1\n")
        with pytest.raises(ValueError, match="bogus"):
            parse_grid_config(cfg)

    def test_missing_required_key_named(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("[cell]\nt = 2\n")
        with pytest.raises(ValueError, match="'n'"):
            parse_grid_config(cfg)

    def test_seed_override(self, tmp_path):
        cfg = tmp_path / "grid.cfg"
        cfg.write_text("[cell]\nn = 10\nt = 2\nseed = 7\n")
        cells = parse_grid_config(cfg, seed_override=99)
        assert cells[0].spec.seed == 99

    def test_bundled_benchmark_grid_parses(self):
        from importlib.resources import files

        path = files("robustpanel").joinpath("configs/table1_mini.cfg")
        cells = parse_grid_config(str(path))
        assert len(cells) == 8
        sizes = {(c.spec.n_individuals, c.spec.n_periods) for c in cells}
        assert (250, 4) in sizes and (50, 25) in sizes
        for cell in cells:
            assert cell.estimators == (
                "pols", "wpols", "be", "wbe", "fe", "wfe", "re", "wre",
            )
            assert cell.spec.n_replications == 200
