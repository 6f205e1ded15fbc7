import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from aircomp.config import ExperimentConfig, build_model, channel_for, parse_config, power_vector
from aircomp.errors import ConfigError, InstabilityError


def test_defaults():
    cfg = parse_config()
    assert (cfg.alpha, cfg.K, cfg.sigma_z2, cfg.power) == (0.9, 10, 1.0, 10.0)
    assert cfg.n_channel_realizations == 1000 and cfg.seed == 0 and cfg.rounds == 50
    assert_allclose(build_model(cfg).V_x, np.eye(10), atol=1e-10)


def test_empty_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{}")
    assert parse_config(p) == parse_config()


def test_unstable_alpha():
    with pytest.raises(InstabilityError):
        parse_config(None, {"alpha": 1.2})


def test_s2_channel():
    cfg = parse_config(None, {"channel": {"h": "s2"}, "K": 8})
    assert_allclose(channel_for(cfg), np.linspace(0.1, 1.9, 8))


def test_s1_and_explicit_channel():
    assert channel_for(parse_config(None, {"channel": {"h": "s1"}, "K": 3})).tolist() == [1.0, 1.0, 1.0]
    cfg = parse_config(None, {"channel": {"h": [0.5, 2.0]}, "K": 2})
    assert channel_for(cfg).tolist() == [0.5, 2.0]


def test_rayleigh_channel_per_index():
    cfg = parse_config()
    assert not np.array_equal(channel_for(cfg, 5, 0), channel_for(cfg, 5, 1))
    assert np.array_equal(channel_for(cfg, 5, 3), channel_for(cfg, 5, 3))


def test_unknown_keys_listed():
    with pytest.raises(ConfigError, match="bar, foo"):
        parse_config(None, {"foo": 1, "bar": 2})


@pytest.mark.parametrize("override, field", [
    ({"K": 0}, "K"),
    ({"l": -1}, "l"),
    ({"sigma_z2": 0}, "sigma_z2"),
    ({"power": -1.0}, "power"),
    ({"power_bound": "x"}, "power_bound"),
    ({"init": "custom"}, "b_init"),
    ({"l_values": []}, "l_values"),
    ({"channel": {"h": [1.0]}, "K": 2}, "channel.h"),
    ({"rounds": 0}, "rounds"),
])
def test_invalid_fields_named(override, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(None, override)


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(p)
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")


def test_alpha_shorthand_and_explicit_A():
    cfg = parse_config(None, {"A": {"alpha": 0.5}, "K": 3})
    assert cfg.alpha == 0.5 and cfg.alpha_values == (0.5,)
    A = [[0.5, 0.2], [0.1, 0.4]]
    m = build_model(parse_config(None, {"A": A, "K": 2}))
    assert_allclose(m.V_x, np.eye(2), atol=1e-10)
    with pytest.raises(InstabilityError):
        parse_config(None, {"A": [[1.5, 0], [0, 0.1]], "K": 2})


def test_explicit_noise():
    cfg = parse_config(None, {"K": 2, "alpha": 0.5, "V_w": [[1.0, 0.0], [0.0, 2.0]]})
    assert_allclose(build_model(cfg).V_x, np.diag([4 / 3, 8 / 3]), atol=1e-10)


def test_single_values_narrow_sweep():
    cfg = parse_config(None, {"K": 5, "alpha": 0.99})
    assert cfg.K_values == (5,) and cfg.alpha_values == (0.99,)


def test_power_vector():
    assert power_vector(parse_config(None, {"K": 3})).tolist() == [10.0] * 3
    assert power_vector(parse_config(None, {"K": 2, "power": [1.0, 2.0]})).tolist() == [1.0, 2.0]


def test_round_trip(tmp_path):
    cfg = parse_config(None, {"K": 4, "l_values": [3, 1]})
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert parse_config(p) == cfg
    assert cfg.l_values == (1, 3)


def test_replace_validates():
    with pytest.raises(ConfigError):
        ExperimentConfig().replace(K=0)
