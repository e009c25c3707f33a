import csv
import json
import os

import numpy as np
import pytest

from lsbp.cli import main
from lsbp.io import (
    ConfigError,
    IngestError,
    chain_column_names,
    dataset_x,
    load_dataset,
    read_chain_csv,
    resolve_config,
    run,
    run_synth,
    export_grid,
    write_chain_csv,
    write_dataset,
)
from lsbp.gibbs import run_chain
from lsbp.model import ModelConfig
from lsbp.synthetic import generate_synthetic, two_component_spec


def write_csv(path, rows, header=("x", "y")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


@pytest.fixture
def toy_csv(tmp_path):
    path = tmp_path / "toy.csv"
    rng = np.random.default_rng(0)
    rows = [(repr(float(x)), repr(float(y)))
            for x, y in zip(rng.uniform(0, 10, 40), rng.normal(size=40))]
    write_csv(path, rows)
    return str(path)


def synthetic_data_block():
    return {"synthetic": two_component_spec(n=120, seed=5).to_dict()}


class TestLoadDataset:
    def test_three_row_toy_shapes(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, [("1.0", "0.1"), ("2.0", "0.4"), ("3.5", "-0.2")])
        data = load_dataset(str(path), "x", "y")
        assert data.n == 3
        assert data.Lambda.shape == (3, 2)
        assert data.Psi.shape == (3, 6)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, [("1.0", "2.0")], header=("a", "b"))
        with pytest.raises(IngestError, match="missing column 'x'"):
            load_dataset(str(path), "x", "b")

    def test_bad_cell_cites_row(self, tmp_path):
        path = tmp_path / "t.csv"
        rows = [(str(i), str(i * 0.5)) for i in range(1, 10)]
        rows[6] = ("7", "oops")  # data row 7
        write_csv(path, rows)
        with pytest.raises(IngestError, match="row 7"):
            load_dataset(str(path), "x", "y")

    def test_too_few_rows(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(path, [("1.0", "2.0")])
        with pytest.raises(IngestError, match="at least 2"):
            load_dataset(str(path), "x", "y")

    def test_write_then_reload_is_bit_exact(self, toy_csv, tmp_path):
        data = load_dataset(toy_csv, "x", "y")
        back = tmp_path / "back.csv"
        write_dataset(str(back), data)
        again = load_dataset(str(back), "x", "y")
        np.testing.assert_array_equal(data.y, again.y)
        np.testing.assert_array_equal(data.Lambda, again.Lambda)
        np.testing.assert_array_equal(data.Psi, again.Psi)
        assert data.transform.to_dict() == again.transform.to_dict()

    def test_dataset_x_round_trip(self, toy_csv):
        data = load_dataset(toy_csv, "x", "y")
        x = dataset_x(data)
        np.testing.assert_allclose(sorted(x), sorted(np.genfromtxt(
            toy_csv, delimiter=",", names=True)["x"]), atol=1e-12)


class TestResolveConfig:
    def test_paper_preset_defaults(self):
        cfg = resolve_config({"engine": "ecm", "output_dir": "o",
                              "data": synthetic_data_block()}, preset="paper")
        assert cfg["model"]["H"] == 5
        assert cfg["model"]["a_sigma"] == 0.1
        assert cfg["model"]["b_sigma"] == 0.1
        assert cfg["model"]["alpha_prior_scale"] == 1.0
        assert cfg["model"]["beta_prior_scale"] == 1.0
        assert cfg["model"]["mu_beta"] is None  # resolved to zeros downstream
        assert cfg["basis"]["num_basis"] == 5
        assert cfg["gibbs"] == {"iterations": 30_000, "burn_in": 5_000, "thin": 1}

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            resolve_config({"engine": "ecm", "output_dir": "o",
                            "data": synthetic_data_block(), "warp": 9})
        with pytest.raises(ConfigError, match="unknown keys"):
            resolve_config({"engine": "ecm", "output_dir": "o",
                            "data": synthetic_data_block(),
                            "gibbs": {"iterations": 5, "bogus": 1}})

    def test_required_fields(self):
        with pytest.raises(ConfigError):
            resolve_config({"engine": "ecm", "data": synthetic_data_block()})
        with pytest.raises(ConfigError):
            resolve_config({"engine": "ecm", "output_dir": "o"})
        with pytest.raises(ConfigError):
            resolve_config({"engine": "warp", "output_dir": "o",
                            "data": synthetic_data_block()})


class TestChainCsv:
    def test_round_trip(self, tmp_path):
        sim = generate_synthetic(two_component_spec(n=60, seed=1))
        config = ModelConfig.standard(H=3, P=2, R=6, a_sigma=2.0, b_sigma=2.0)
        chain = run_chain(sim.dataset, config, iterations=30, burn_in=10, seed=2)
        path = tmp_path / "params.csv"
        write_chain_csv(str(path), chain)
        alpha, beta, sigma2 = read_chain_csv(str(path), H=3, P=2, R=6)
        np.testing.assert_array_equal(alpha, chain.alpha)
        np.testing.assert_array_equal(beta, chain.beta)
        np.testing.assert_array_equal(sigma2, chain.sigma2)

    def test_column_naming(self):
        names = chain_column_names(H=2, P=2, R=3)
        assert names[:4] == ["draw", "alpha_1_1", "alpha_1_2", "alpha_1_3"]
        assert "beta_2_1" in names and names[-1] == "sigma2_2"


class TestRun:
    def _cfg(self, tmp_path, engine="ecm", **overrides):
        cfg = {
            "engine": engine,
            "seed": 11,
            "threads": 1,
            "output_dir": str(tmp_path / "out"),
            "data": synthetic_data_block(),
            "model": {"H": 3},
            "ecm": {"n_restarts": 2, "max_iter": 200},
            "cavi": {"n_restarts": 2, "max_iter": 200, "n_q_samples": 80},
            "gibbs": {"iterations": 120, "burn_in": 20, "thin": 2},
            "grid": {"nx": 8, "ny": 40},
        }
        cfg.update(overrides)
        return cfg

    @pytest.mark.parametrize("engine", ["ecm", "cavi", "gibbs"])
    def test_artifacts_exist(self, tmp_path, engine):
        manifest = run(self._cfg(tmp_path, engine=engine))
        out = tmp_path / "out"
        assert (out / "density_grid.csv").exists()
        assert (out / "cdf_curves.csv").exists()
        assert (out / "manifest.json").exists()
        assert (out / ("params.csv" if engine == "gibbs" else "state.json")).exists()
        assert manifest["engine"] == engine
        assert manifest["timings"]["total_seconds"] > 0

    @pytest.mark.parametrize("engine,block", [
        ("ecm", {"ecm": {"n_restarts": 2, "max_iter": 300}}),
        ("cavi", {"cavi": {"n_restarts": 2, "max_iter": 300, "n_q_samples": 500}}),
        ("gibbs", {"gibbs": {"iterations": 1500, "burn_in": 500, "thin": 1}}),
    ])
    def test_emitted_grids_normalize(self, tmp_path, engine, block):
        # the default response window must carry essentially all conditional
        # mass at a realistic sample size, where redundant components are
        # properly shrunk away
        cfg = {
            "engine": engine, "seed": 11, "output_dir": str(tmp_path / "out"),
            "data": {"synthetic": two_component_spec(n=1000, seed=5).to_dict()},
            "grid": {"nx": 15, "ny": 200}, **block,
        }
        run(cfg)
        raw = np.genfromtxt(tmp_path / "out" / "density_grid.csv",
                            delimiter=",", names=True)
        mean = raw["mean"].reshape(15, 200)
        y = raw["y"].reshape(15, 200)[0]
        integrals = np.trapezoid(mean, y, axis=1)
        assert np.all(mean >= 0.0)
        assert np.max(np.abs(integrals - 1.0)) < 1e-3

    def test_manifest_alone_suffices_to_reproduce(self, tmp_path):
        manifest = run(self._cfg(tmp_path))
        cfg2 = manifest["config"]
        cfg2["output_dir"] = str(tmp_path / "again")
        run(cfg2)
        a = (tmp_path / "out" / "density_grid.csv").read_bytes()
        b = (tmp_path / "again" / "density_grid.csv").read_bytes()
        assert a == b

    def test_failure_removes_partial_outputs(self, tmp_path):
        cfg = self._cfg(tmp_path)
        cfg["data"] = {"path": str(tmp_path / "missing.csv"),
                       "x_column": "x", "y_column": "y"}
        with pytest.raises(Exception):
            run(cfg)
        out = tmp_path / "out"
        assert not (out / "density_grid.csv").exists()
        assert not (out / "manifest.json").exists()

    def test_export_grid_matches_rerun(self, tmp_path):
        run(self._cfg(tmp_path, engine="gibbs"))
        export_grid({"run_dir": str(tmp_path / "out"),
                     "output_dir": str(tmp_path / "regrid"),
                     "grid": {"nx": 5, "ny": 20}})
        raw = np.genfromtxt(tmp_path / "regrid" / "density_grid.csv",
                            delimiter=",", names=True)
        assert raw.shape[0] == 5 * 20


class TestCli:
    def test_fit_round_trip_determinism(self, tmp_path):
        data_cfg = tmp_path / "synth.json"
        with open(data_cfg, "w") as fh:
            json.dump({"synthetic": two_component_spec(n=100, seed=2).to_dict(),
                       "output_path": str(tmp_path / "d.csv")}, fh)
        assert main(["synth", "--config", str(data_cfg)]) == 0

        fit_cfg = {
            "engine": "ecm",
            "seed": 3,
            "threads": 1,
            "output_dir": str(tmp_path / "r1"),
            "data": {"path": str(tmp_path / "d.csv"), "x_column": "x", "y_column": "y"},
            "model": {"H": 3},
            "ecm": {"n_restarts": 2, "max_iter": 150},
            "grid": {"nx": 6, "ny": 25},
        }
        cfg_path = tmp_path / "fit.json"
        with open(cfg_path, "w") as fh:
            json.dump(fit_cfg, fh)
        assert main(["fit", "--config", str(cfg_path)]) == 0
        fit_cfg["output_dir"] = str(tmp_path / "r2")
        with open(cfg_path, "w") as fh:
            json.dump(fit_cfg, fh)
        assert main(["fit", "--config", str(cfg_path)]) == 0
        for name in ("density_grid.csv", "cdf_curves.csv", "state.json"):
            assert (tmp_path / "r1" / name).read_bytes() == \
                (tmp_path / "r2" / name).read_bytes()

    def test_engine_override_flag(self, tmp_path):
        cfg = {
            "engine": "ecm",
            "seed": 1,
            "output_dir": str(tmp_path / "o"),
            "data": synthetic_data_block(),
            "model": {"H": 2},
            "cavi": {"n_restarts": 1, "max_iter": 100, "n_q_samples": 50},
            "grid": {"nx": 4, "ny": 15},
        }
        path = tmp_path / "c.json"
        with open(path, "w") as fh:
            json.dump(cfg, fh)
        assert main(["fit", "--config", str(path), "--engine", "cavi"]) == 0
        with open(tmp_path / "o" / "manifest.json") as fh:
            assert json.load(fh)["engine"] == "cavi"

    def test_prior_check_subcommand(self, tmp_path):
        cfg = {"engine": "prior-check", "seed": 4,
               "output_dir": str(tmp_path / "pc"),
               "prior_check": {"n_measures": 2000, "H_values": [2, 5]}}
        path = tmp_path / "pc.json"
        with open(path, "w") as fh:
            json.dump(cfg, fh)
        assert main(["prior-check", "--config", str(path)]) == 0
        with open(tmp_path / "pc" / "prior_check.json") as fh:
            report = json.load(fh)
        assert report["all_ok"]

    def test_bad_config_fails_cleanly(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        with open(path, "w") as fh:
            json.dump({"engine": "nope"}, fh)
        assert main(["fit", "--config", str(path)]) == 1
        assert "error:" in capsys.readouterr().err
