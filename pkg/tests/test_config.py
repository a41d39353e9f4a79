import pytest

from fewshot_poisson.config import SolverConfig, load_config, parse_config_text, write_config
from fewshot_poisson.errors import ConfigError


def test_defaults():
    c = SolverConfig()
    assert (c.mu, c.m1, c.m2, c.m3, c.phi, c.clip_lo, c.clip_hi) == (1.5, 20, 40, 100, 10, 0.5, 1.0)
    assert (c.knn_k, c.tp_max, c.tau, c.lam) == (30, 100, 0.1, 1.0)
    assert (c.lp_alpha, c.lp_max_iter, c.lp_tol) == (0.99, 1000, 1e-6)


@pytest.mark.parametrize("changes", [
    {"m1": 0}, {"knn_k": 0}, {"mu": 0.0}, {"clip_lo": 1.0, "clip_hi": 0.5}, {"tau": 0.0},
    {"phi": -1.0}, {"lp_alpha": 1.0}, {"lp_alpha": 0.0}, {"lp_tol": 0.0},
])
def test_invalid_values(changes):
    with pytest.raises(ConfigError):
        SolverConfig(**changes)


def test_parse_text():
    text = "# solver\nmu = 2.5\n\nknn-k=7  # trailing comment\nlambda=0.3\n"
    assert parse_config_text(text) == {"mu": "2.5", "knn_k": "7", "lambda": "0.3"}
    with pytest.raises(ConfigError, match=":2"):
        parse_config_text("mu=1\nbroken\n")


def test_from_mapping_coerces_and_aliases():
    c = SolverConfig.from_mapping({"m1": "3", "lambda": "0.25", "normalize": "false"})
    assert c.m1 == 3 and c.lam == 0.25 and c.normalize is False
    with pytest.raises(ConfigError, match="unknown"):
        SolverConfig.from_mapping({"nope": 1})
    with pytest.raises(ConfigError, match="cannot parse"):
        SolverConfig.from_mapping({"m2": "2.5"})


def test_write_load_roundtrip(tmp_path):
    c = SolverConfig(mu=2.0, knn_k=12, lam=0.5, normalize=False, lp_tol=1e-8)
    write_config(c, tmp_path / "c.cfg")
    assert load_config(tmp_path / "c.cfg") == c
    assert "lambda=0.5" in (tmp_path / "c.cfg").read_text()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")
