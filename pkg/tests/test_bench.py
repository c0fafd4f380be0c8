import json

import numpy as np
import pytest

from convmgp.bench import (
    ExperimentConfig,
    gen_gp_draws,
    gen_groups,
    gen_sines,
    gp_draw_cov,
    group_mean,
    load_config,
    load_csv,
    mse,
    run_experiment,
    sine_mean,
    spec_from_jsonable,
    spec_to_jsonable,
    _fit_requested_structure,
    _fit_single,
)
from convmgp.exceptions import EmptyFile, LengthMismatch, ParseError
from convmgp.prediction import predict_grid
from convmgp.structures import make_arrowhead_spec, make_pairwise_spec

from conftest import rand_se_kernel


class TestGenerators:
    def test_sine_means_at_anchor_points(self):
        assert sine_mean(0, 0.0) == pytest.approx(0.0)
        assert sine_mean(1, 0.0) == pytest.approx(-3.0)
        assert sine_mean(2, 10.0) == pytest.approx(5.0)

    def test_sines_noise_free_hits_means_exactly(self):
        data = gen_sines(seed=1, p=20, noise=0.0)
        assert data.n_outputs == 3
        for i in range(3):
            np.testing.assert_array_equal(data.values[i], sine_mean(i, data.inputs[i]))
        assert data.inputs[0][0] == 0.0 and data.inputs[0][-1] == 10.0

    def test_sines_deterministic_per_seed(self):
        a, b = gen_sines(3), gen_sines(3)
        for ya, yb in zip(a.values, b.values):
            np.testing.assert_array_equal(ya, yb)

    def test_group_function_values(self):
        assert group_mean(4, 0.5) == pytest.approx(0.5)  # 2 x^2 at 0.5
        assert group_mean(0, 0.0) == pytest.approx(0.0)  # pole-free at origin
        assert group_mean(6, 1.0) == pytest.approx(1.0)  # cube, function value only

    def test_groups_shape_and_noise_structure(self):
        data = gen_groups(seed=0)
        assert data.n_outputs == 8
        assert data.sizes == (7,) * 8
        assert float(data.inputs[0].max()) == pytest.approx(0.8)
        quiet = gen_groups(seed=0, noise_first_group=0.0, noise_rest=0.0)
        for i in range(8):
            np.testing.assert_allclose(quiet.values[i], group_mean(i, quiet.inputs[i]))

    def test_gp_draw_settings(self):
        s20 = gen_gp_draws(0, "n20")
        assert s20.train.n_outputs == 20
        assert s20.train.sizes == (8,) * 20
        assert s20.test.sizes == (7,) * 20
        s50 = gen_gp_draws(0, "n50")
        assert s50.train.n_outputs == 50
        with pytest.raises(ValueError):
            gen_gp_draws(0, "n99")

    def test_gp_split_disjoint_and_covering(self):
        s = gen_gp_draws(5, "n20")
        train, test = set(s.train_idx), set(s.test_idx)
        assert train.isdisjoint(test)
        assert train | test == set(range(15))

    def test_gp_draw_sample_covariance_matches_kernel(self):
        x = np.array([0.4, 1.1])
        cov = gp_draw_cov(4.0, 1.0, x)
        lower = np.linalg.cholesky(cov + 1e-12 * np.eye(2))
        rng = np.random.default_rng(11)
        draws = lower @ rng.standard_normal((2, 2000))
        sample = np.cov(draws)
        assert sample[0, 1] == pytest.approx(cov[0, 1], rel=0.05)
        assert sample[0, 0] == pytest.approx(cov[0, 0], rel=0.05)


class TestMse:
    def test_identical(self):
        assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_unit_offsets(self):
        assert mse([0.0, 0.0], [1.0, 1.0]) == 1.0
        assert mse([0.0, 2.0], [1.0, 1.0]) == 1.0

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            mse([1.0], [1.0, 2.0])
        with pytest.raises(LengthMismatch):
            mse([], [])


class TestLoadCsv:
    def test_roundtrip_single_output(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("output_id,x,y\nrate,0.5,1.25\n")
        data = load_csv(path)
        assert data.n_outputs == 1
        assert data.labels == ("rate",)
        assert data.inputs[0][0] == 0.5 and data.values[0][0] == 1.25

    def test_interleaved_outputs_group_by_first_appearance(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text(
            "output_id,x,y\nb,0,1\na,0,10\nb,1,2\na,1,20\n"
        )
        data = load_csv(path)
        assert data.labels == ("b", "a")
        np.testing.assert_array_equal(data.values[0], [1.0, 2.0])
        np.testing.assert_array_equal(data.values[1], [10.0, 20.0])

    def test_missing_column_names_it(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("output_id,t,y\na,0,1\n")
        with pytest.raises(ParseError, match="'x'"):
            load_csv(path)

    def test_bad_float_reports_line(self, tmp_path):
        path = tmp_path / "bad2.csv"
        path.write_text("output_id,x,y\na,0,1\na,oops,2\n")
        with pytest.raises(ParseError, match="line 3"):
            load_csv(path)

    def test_empty_variants(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        with pytest.raises(EmptyFile):
            load_csv(empty)
        header_only = tmp_path / "header.csv"
        header_only.write_text("output_id,x,y\n")
        with pytest.raises(EmptyFile):
            load_csv(header_only)

    def test_standardize(self, tmp_path):
        path = tmp_path / "std.csv"
        rows = ["output_id,x,y"] + [f"a,{i},{v}" for i, v in enumerate((2.0, 4.0, 6.0))]
        path.write_text("\n".join(rows) + "\n")
        data = load_csv(path, standardize=True)
        assert float(data.values[0].mean()) == pytest.approx(0.0, abs=1e-12)
        assert float(data.values[0].std()) == pytest.approx(1.0, rel=1e-12)


class TestSpecSerialization:
    def test_roundtrip_arrowhead(self, rng):
        spec = make_arrowhead_spec(3, target=1)
        kernels = {k: rand_se_kernel(rng, with_shift=True) for k in spec.kernels}
        from convmgp.structures import MgpSpec

        spec = MgpSpec(topology=spec.topology, kernels=kernels, noise=(0.1, 0.2, 0.3))
        back = spec_from_jsonable(json.loads(json.dumps(spec_to_jsonable(spec))))
        assert back.topology.kind == spec.topology.kind
        assert back.kernels == spec.kernels
        assert back.noise == spec.noise

    def test_roundtrip_spectral_pairwise(self):
        spec = make_pairwise_spec("a", family="spectral")
        back = spec_from_jsonable(spec_to_jsonable(spec))
        assert back == spec


class TestConfig:
    def test_load_with_overrides(self, tmp_path):
        path = tmp_path / "cfg"
        path.write_text(
            "# comment\nexperiment = table1_sines\nseed = 3\nlam = 0.5\n"
            "cv_grid = 0.1, 1, 10\nstandardize = true\n"
        )
        cfg = load_config(path, out_dir=str(tmp_path))
        assert cfg.experiment == "table1_sines"
        assert cfg.seed == 3
        assert cfg.lam == 0.5
        assert cfg.cv_grid == (0.1, 1.0, 10.0)
        assert cfg.standardize is True
        assert cfg.out_dir == str(tmp_path)

    def test_unknown_key_rejected_with_line(self, tmp_path):
        path = tmp_path / "cfg"
        path.write_text("experiment = custom\nwibble = 3\n")
        with pytest.raises(ParseError, match="line 2"):
            load_config(path)

    def test_invalid_experiment_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(experiment="not_a_thing")


class TestRunExperiment:
    def test_independent_structure_equals_separate_single_fits(self, tmp_path):
        csv_path = tmp_path / "d.csv"
        rng = np.random.default_rng(0)
        rows = ["output_id,x,y"]
        for label in ("a", "b"):
            for x in np.linspace(0, 5, 8):
                rows.append(f"{label},{x},{np.sin(x) + 0.1 * rng.standard_normal():.6f}")
        csv_path.write_text("\n".join(rows) + "\n")
        cfg = ExperimentConfig(
            experiment="custom",
            structure="independent",
            data_csv=str(csv_path),
            restarts=2,
            max_iters=100,
            out_dir="",
        )
        from convmgp.bench import load_csv as _load

        data = _load(csv_path)
        fits = _fit_requested_structure(cfg, data, cfg.seed)
        xq = np.linspace(0, 5, 11)
        for i in range(2):
            direct = _fit_single(data, i, cfg, cfg.seed)
            np.testing.assert_array_equal(
                predict_grid(fits[i], xq, 0)[0], predict_grid(direct, xq, 0)[0]
            )

    def test_table2_writes_report_artifacts(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="table2_shrinkage",
            seed=0,
            restarts=2,
            max_iters=150,
            out_dir=str(tmp_path),
        )
        report = run_experiment(cfg)
        assert (tmp_path / "report.json").exists()
        assert (tmp_path / "params.json").exists()
        assert (tmp_path / "timings.json").exists()
        payload = json.loads((tmp_path / "report.json").read_text())
        assert payload["schema"] == 1
        assert payload["rows"][0]["pairs"].keys() == {"y1_y2", "y1_y3"}
        for label in ("y1", "y2", "y3"):
            csv_file = tmp_path / f"predictions_{label}.csv"
            assert csv_file.exists()
            header = csv_file.read_text().splitlines()[0]
            assert header == "x,mean,variance"
        assert set(report.predictions) == {"y1", "y2", "y3"}

    def test_gp_groups_smoke(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="gp_groups_20",
            seed=0,
            restarts=1,
            max_iters=60,
            out_dir=str(tmp_path),
        )
        report = run_experiment(cfg)
        row = report.payload["rows"][0]
        assert row["n_outputs"] == 20
        assert row["n_submodels_fitted"] == 19
        assert row["mse_y1"]["pairwise"] >= 0.0

    def test_lowdim_with_model_subset(self, tmp_path):
        cfg = ExperimentConfig(
            experiment="lowdim_groups",
            seed=0,
            restarts=1,
            max_iters=60,
            replications=1,
            models=("gp", "mgp_sub"),
            out_dir=str(tmp_path),
        )
        report = run_experiment(cfg)
        med = report.payload["mse_y1_median"]
        assert set(med) == {"gp", "mgp_sub"}
        assert all(v >= 0.0 for v in med.values())
