import copy
import json

import numpy as np
import pytest

from drlqr.config import (
    config_from_dict,
    load_preset,
    parse_config,
    parse_lambda_grid,
    preset_path,
)
from drlqr.errors import ConfigError
from drlqr.model import GaussianDisturbance, MixtureDisturbance, quadrotor


@pytest.fixture
def scalar_dict():
    return json.loads(preset_path("scalar").read_text())


def violations(data):
    with pytest.raises(ConfigError) as info:
        config_from_dict(data)
    return info.value.violations


class TestPresets:
    def test_quadrotor_matrices(self):
        cfg = load_preset("quadrotor")
        ref = quadrotor(0.1)
        for a, b in ((cfg.system.A, ref.A), (cfg.system.B, ref.B), (cfg.system.E, ref.E)):
            assert np.array_equal(a, b)
        assert cfg.cost.alpha == 0.99 and cfg.cost.lam == 6.0
        np.testing.assert_allclose(cfg.samples.atoms.mean(axis=0), [1.7974, 0.5405], atol=1e-12)
        assert cfg.learning.M == 900 and cfg.learning.epsilon == 1e-6
        assert isinstance(cfg.eval.disturbance, GaussianDisturbance)
        assert cfg.hinf_lambda == 0.25
        assert len(cfg.lambda_grid) == 20

    def test_mixture_preset(self):
        cfg = load_preset("quadrotor_mixture")
        assert isinstance(cfg.eval.disturbance, MixtureDisturbance)
        np.testing.assert_allclose(cfg.eval.disturbance.mean, [0.95, 0.5])

    def test_scalar_preset(self):
        cfg = load_preset("scalar")
        assert cfg.system.dims == (1, 1, 1)
        assert cfg.hinf_lambda == 10.0


class TestValidation:
    def test_missing_lambda(self, scalar_dict):
        del scalar_dict["cost"]["lambda"]
        errs = violations(scalar_dict)
        assert any(e.startswith("cost.lambda") for e in errs)

    def test_non_psd_q(self, scalar_dict):
        scalar_dict["cost"]["Q"] = [[-1.0]]
        errs = violations(scalar_dict)
        assert any("cost.Q" in e and "Assumption 1" in e for e in errs)

    def test_reports_every_problem(self, scalar_dict):
        scalar_dict["cost"]["alpha"] = 1.5
        scalar_dict["cost"]["R"] = [[0.0]]
        scalar_dict["learning"]["M"] = 5
        errs = violations(scalar_dict)
        assert len(errs) == 3
        assert any("(q+1)(q+2)/2 = 10" in e for e in errs)

    def test_shape_mismatch(self, scalar_dict):
        scalar_dict["samples"]["atoms"] = [[0.1, 0.2]]
        assert any(e.startswith("samples.atoms") for e in violations(scalar_dict))

    def test_unknown_key(self, scalar_dict):
        scalar_dict["cost"]["gamma"] = 1.0
        assert any("gamma" in e for e in violations(scalar_dict))

    def test_unknown_generator(self, scalar_dict):
        scalar_dict["eval"]["disturbance"] = {"type": "laplace"}
        assert any("laplace" in e for e in violations(scalar_dict))

    def test_steady_index_beyond_horizon(self, scalar_dict):
        scalar_dict["eval"]["steady_time_index"] = 500
        assert any("steady_time_index" in e for e in violations(scalar_dict))

    def test_generated_samples(self, scalar_dict):
        scalar_dict["samples"] = {
            "generator": {"type": "gaussian", "mean": [0.0], "var": [1.0]}, "N": 7, "seed": 3, "decimals": 2,
        }
        cfg = config_from_dict(scalar_dict)
        assert cfg.samples.N == 7
        assert np.array_equal(cfg.samples.atoms, np.round(cfg.samples.atoms, 2))
        assert np.array_equal(config_from_dict(copy.deepcopy(scalar_dict)).samples.atoms, cfg.samples.atoms)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_config(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{ not json")
        with pytest.raises(ConfigError, match="invalid JSON"):
            parse_config(path)

    def test_with_seed(self):
        cfg = load_preset("scalar").with_seed(9)
        assert cfg.learning.seed == 9 and cfg.eval.seed == 9
        assert load_preset("scalar").learning.seed == 0


class TestLambdaGrid:
    def test_range(self):
        assert parse_lambda_grid("1:3:3") == (1.0, 2.0, 3.0)

    def test_single(self):
        assert parse_lambda_grid("6") == (6.0,)

    @pytest.mark.parametrize("text", ["a:b:c", "1:2", "1:2:0", ""])
    def test_malformed(self, text):
        with pytest.raises(ConfigError):
            parse_lambda_grid(text)
