"""Configuration parsing, validation and hashing."""

import pytest

from pspinamp.config import ConfigError, ExperimentConfig, example_config, load_config, parse_mixture


def write(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    return p


def test_parse_mixture():
    assert parse_mixture("2:1.0, 4:0.5") == [(2, 1.0), (4, 0.5)]
    assert parse_mixture("3:2;2:1") == [(3, 2.0), (2, 1.0)]
    for bad in ("", "2", "two:1", "2:x"):
        with pytest.raises(ConfigError):
            parse_mixture(bad)


def test_example_config_round_trips(tmp_path):
    cfg = load_config(write(tmp_path, example_config()), env={})
    assert cfg == ExperimentConfig(t_star=0.95)
    assert cfg.resolved_t_star == 0.95


def test_defaults():
    cfg = load_config(env={})
    assert (cfg.delta, cfg.resolved_t_star, cfg.n) == (0.02, 0.95, 2000)
    sph = load_config(overrides={"model.mode": "spherical", "amp.delta": "0.01"}, env={})
    assert sph.resolved_t_star == pytest.approx(0.99)


@pytest.mark.parametrize("text", ["[model]\nbogus = 1\n", "[nosuch]\nx = 1\n"])
def test_unknown_entries_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, text), env={})


@pytest.mark.parametrize(
    "key,value",
    [
        ("model.mode", "torus"),
        ("model.n", "1"),
        ("model.mixture", "1:1.0"),
        ("amp.delta", "1.5"),
        ("amp.t_star", "0.001"),
        ("grid.n_x", "2000"),
        ("amp.sensitivity", "guess"),
        ("model.n", "many"),
    ],
)
def test_invalid_values_rejected(key, value):
    with pytest.raises(ConfigError):
        load_config(overrides={key: value}, env={})


def test_override_needs_section():
    with pytest.raises(ConfigError):
        load_config(overrides={"delta": "0.1"}, env={})


def test_env_output_dir(tmp_path):
    cfg = load_config(env={"PSPINAMP_OUTPUT_DIR": str(tmp_path)})
    assert cfg.output_dir == str(tmp_path)


def test_content_hash():
    a = load_config(env={})
    b = load_config(overrides={"output.dir": "elsewhere"}, env={})
    c = load_config(overrides={"seeds.disorder": "5"}, env={})
    assert a.content_hash() == b.content_hash()
    assert a.content_hash() != c.content_hash()
    assert len(a.content_hash()) == 64


def test_hash_covers_gamma_file(tmp_path):
    g = tmp_path / "g.csv"
    g.write_text("t,gamma\n0.0,1.0\n")
    a = load_config(overrides={"variational.gamma_file": str(g)}, env={}).content_hash()
    g.write_text("t,gamma\n0.0,2.0\n")
    b = load_config(overrides={"variational.gamma_file": str(g)}, env={}).content_hash()
    assert a != b
