import pytest
import yaml
from hypothesis import given, strategies as st

from besselharm.config import CONFIG_VERSION, STANDARD_ESTIMATES, ConfigError, load, parse


def test_defaults_fill_everything():
    cfg = parse("")
    assert cfg.version == CONFIG_VERSION
    assert cfg.dimension == 1 and cfg.lam == [0.5]
    assert cfg.estimates == list(STANDARD_ESTIMATES)
    assert len(STANDARD_ESTIMATES) == 20


def test_dimension_inferred_from_lambda():
    cfg = parse("lambda: [0.5, 1.3]\n")
    assert cfg.dimension == 2
    cfg = parse("dimension: 2\n")
    assert cfg.lam == [0.5, 0.5]


def test_roundtrip_is_identity():
    text = "lambda: [0.0, 1.3]\nsampler: {seed: 9, count: 50}\noperators: {riesz: {m: [0, 1]}}\n"
    cfg = parse(text)
    again = parse(cfg.dump())
    assert again.to_dict() == cfg.to_dict()
    assert again.dump() == cfg.dump()


@given(st.lists(st.sampled_from([0.0, 0.5, 1.3, 2.0]), min_size=1, max_size=3), st.integers(0, 2 ** 63),
       st.integers(1, 10 ** 5))
def test_roundtrip_property(lam, seed, count):
    cfg = parse(yaml.safe_dump({"lambda": lam, "sampler": {"seed": seed, "count": count}}))
    assert parse(cfg.dump()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("text", [
    "dimension: 0\n",
    "lambda: [-1.0]\n",
    "lambda: [0.5]\ndimension: 2\n",
    "bogus: 1\n",
    "sampler: {seeds: 3}\n",
    "operators: {riesz: {k: 1}}\n",
    "version: 7\n",
    "time_rule: {t_min: 2.0, t_max: 1.0}\n",
    "estimates: [heat.gr, nope]\n",
    "tolerances: {involution: -1}\n",
    "tolerances: {nope: 1e-3}\n",
    "eval: {target: plot}\n",
    "[1, 2]\n",
    "a: [unclosed\n",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "missing.yaml")


def test_unsigned_exponent_read_as_number():
    cfg = parse("time_rule: {t_min: 1e-4, t_max: 1e4}")
    assert cfg.time_rule.t_max == 1e4
    with pytest.raises(ConfigError):
        parse("grid: {zmax: wide}")
