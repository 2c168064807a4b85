import pytest

from turbidostat.config import ConfigError, RunConfig, load_config, parse_config


def test_empty_is_defaults():
    assert parse_config("") == RunConfig()


def test_round_trip_text():
    cfg = parse_config("[growth]\nmu = 0.02\n[bench]\nseeds = 4, 5\n[mpc]\nwarm_start = false\n")
    assert cfg.growth.mu == 0.02 and cfg.bench.seeds == (4, 5) and cfg.mpc.warm_start is False
    assert parse_config(cfg.to_text()) == cfg


def test_comments_and_units_in_defaults():
    text = RunConfig().to_text()
    assert "# 1/min" in text and "[dqn]" in text


def test_temperature_anchor():
    cfg = parse_config("[growth]\ntemp_low_c = 32\ntemp_low_factor = 0.8\n")
    assert cfg.growth.temp_growth_factors == {32.0: 0.8, 37.0: 1.0}


def test_mpc_model_follows_growth():
    cfg = parse_config("[growth]\nmu = 0.02\n")
    assert cfg.mpc_for().model.mu == 0.02
    assert cfg.mpc_for().model.process_noise_sd == 0.0


@pytest.mark.parametrize("text,match", [
    ("[growth]\nfoo = 1\n", "unknown key 'foo'"),
    ("[nope]\nmu = 1\n", "unknown section"),
    ("[growth]\nmu = fast\n", r"\[growth\] mu"),
    ("[growth]\nmu = -1\n", r"\[growth\]"),
    ("[growth]\nmu = 0.06\n", "uncontrollable"),
    ("[dqn]\ngamma = 1.5\n", r"\[dqn\]"),
    ("[dqn]\nnoisy = maybe\n", "true/false"),
    ("[mpc]\nswarm_size = 1\n", r"\[mpc\]"),
    ("[mpc]\nsearch_lower = 0.03\n", r"\[mpc\]"),
    ("[bench]\nseeds =\n", r"\[bench\]"),
    ("[pi]\nkp = -1\n", r"\[pi\]"),
    ("mu = 1\n", "config"),
])
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")
