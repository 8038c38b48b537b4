import pytest
import tomli

from sebrw.config import ConfigError, ExperimentConfig, apply_overrides, config_from_dict, dump_toml, load_config


def test_defaults_validate():
    cfg = load_config(None)
    assert cfg.offspring_law().deterministic
    assert cfg.tail_spec("effective").x0 < 0
    assert cfg.cumulants().kappa == 3


def test_roundtrip_through_toml(tmp_path):
    cfg = ExperimentConfig()
    p = tmp_path / "c.toml"
    p.write_text(dump_toml(cfg))
    back = load_config(p)
    assert back == cfg and back.hash() == cfg.hash()


def test_hash_ignores_workers_and_output():
    a, b = ExperimentConfig(), ExperimentConfig(workers=4, out_dir="elsewhere")
    assert a.hash() == b.hash()
    assert ExperimentConfig(seed=1).hash() != a.hash()


@pytest.mark.parametrize("raw,field", [
    ({"asymptotics": {"n_list": []}}, "asymptotics.n_list"),
    ({"brw": {"n_list": []}}, "brw.n_list"),
    ({"tail": {"r": 1.5}}, "tail.r"),
    ({"tail": {"delta": 0.5}}, "tail.delta"),
    ({"offspring": {"pmf": {"1": 1.0}}}, "offspring.pmf"),
    ({"ldp": {"j_list": [4], "n_list": [2, 4]}}, "ldp.j_list"),
    ({"brw": {"n_list": [40]}}, "brw.n_list"),
    ({"brw": {"k_n": 9, "n_list": [10]}}, "brw.k_n"),
    ({"limit": {"samples": 10}}, "limit.samples"),
    ({"tail": {"nope": 1}}, "tail.nope"),
    ({"bogus": 1}, "bogus"),
    ({"seed": -1}, "seed"),
])
def test_field_level_errors(raw, field):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(raw)
    assert any(m.startswith(field) for m in exc.value.messages)


def test_overrides_precedence():
    cfg = apply_overrides(ExperimentConfig(), env={"SEBRW_SEED": "7", "SEBRW_WORKERS": "3"})
    assert (cfg.seed, cfg.workers) == (7, 3)
    cfg = apply_overrides(ExperimentConfig(), seed=9, workers=1, env={"SEBRW_SEED": "7", "SEBRW_WORKERS": "3"})
    assert (cfg.seed, cfg.workers) == (9, 1)


def test_shipped_default_config_matches_builtin():
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "configs" / "default.toml"
    with open(path, "rb") as fh:
        assert config_from_dict(tomli.load(fh)).hash() == ExperimentConfig().hash()
