import json

import pytest

from fracpinn.config import ConfigError, RunConfig, apply_overrides, config_from_dict, load_config


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig()
        assert cfg.grid.dt == 0.5 and cfg.grid.T == 300.0 and cfg.grid.n_steps == 600
        assert cfg.model.alpha_min == 0.5 and cfg.model.beta_max == 1.0
        assert cfg.truth_params().to_dict() == {"beta": 0.25, "sigma": 0.13, "gamma_r": 0.052, "mu": 0.005,
                                                 "alpha": 1.0}
        assert cfg.network.hidden == (64, 64, 64) and cfg.network.head == "softmax"

    def test_empty_document_is_default(self):
        assert config_from_dict({}) == RunConfig()

    def test_round_trip(self):
        cfg = RunConfig()
        assert config_from_dict(json.loads(cfg.canonical_json())) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="bogus"):
            config_from_dict({"bogus": 1})
        with pytest.raises(ConfigError, match="train.adam"):
            config_from_dict({"train": {"adam": {"lr": 0.1}}})

    def test_types_checked(self):
        with pytest.raises(ConfigError):
            config_from_dict({"seed": "zero"})
        with pytest.raises(ConfigError):
            config_from_dict({"seed": True})
        with pytest.raises(ConfigError):
            config_from_dict({"grid": {"dt": None}})
        with pytest.raises(ConfigError):
            config_from_dict({"solver": {"scheme": "rk45"}})

    def test_grid_must_divide(self):
        with pytest.raises(ConfigError):
            config_from_dict({"grid": {"dt": 0.7, "T": 10.0}}).grid.n_steps

    def test_lambda_cons_default_follows_head(self):
        assert RunConfig().train_config().lambdas.lambda_cons == 0.0
        soft = config_from_dict({"network": {"head": "softplus"}})
        assert soft.train_config().lambdas.lambda_cons == 1.0

    def test_train_config_mapping(self):
        cfg = config_from_dict({"seed": 4, "train": {"adam": {"lr0": 0.01}, "init_rates": {"gamma": 0.05}},
                                "model": {"rate_bounds": None}})
        tc = cfg.train_config()
        assert tc.seed == 4 and tc.adam.lr0 == 0.01 and tc.init_rates == {"gamma_r": 0.05}
        assert tc.rate_bounds is None

    def test_default_rate_box(self):
        tc = RunConfig().train_config()
        assert tc.rate_bounds["gamma_r"] == (0.036, 0.071)

    def test_digest_tracks_content(self):
        a, b = RunConfig(), config_from_dict({"seed": 1})
        assert a.digest() == RunConfig().digest()
        assert a.digest() != b.digest()


class TestOverrides:
    def test_dotted(self):
        data = apply_overrides({}, ["truth.alpha=0.9", "train.adam.lr0=0.01", "network.head=softplus"])
        cfg = config_from_dict(data)
        assert cfg.truth.alpha == 0.9 and cfg.train.adam.lr0 == 0.01 and cfg.network.head == "softplus"

    def test_json_values(self):
        cfg = config_from_dict(apply_overrides({}, ["analysis.alpha_grid=[0.9,1.0]", "noise.clip_to_simplex=true"]))
        assert cfg.analysis.alpha_grid == (0.9, 1.0) and cfg.noise.clip_to_simplex is True

    @pytest.mark.parametrize("item", ["truth.kappa=1", "nope=2", "truth.alpha.x=1", "truth", "grid.dt.x.y=1"])
    def test_cannot_add_keys(self, item):
        with pytest.raises(ConfigError):
            apply_overrides({}, [item])

    def test_load_config(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"seed": 3, "grid": {"dt": 1.0}}))
        cfg = load_config(path, ["grid.T=50"])
        assert cfg.seed == 3 and cfg.grid.n_steps == 50

    def test_missing_file_names_path(self, tmp_path):
        missing = tmp_path / "absent.json"
        with pytest.raises(ConfigError, match="absent.json"):
            load_config(missing)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(path)
